#include "mshc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mshc/errors.hpp"

namespace mshc {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'S', 'H', 'C'};
constexpr std::uint32_t kVersion = 1;

#ifdef MSHC_REAL32
constexpr const char* kDtype = "f32";
#else
constexpr const char* kDtype = "f64";
#endif

template <typename T>
void append_pod(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_pod(const std::vector<char>& bytes, std::size_t& at,
           const std::string& path) {
  if (at + sizeof(T) > bytes.size()) {
    throw FormatError(path + ": truncated at byte " + std::to_string(at));
  }
  T v;
  std::memcpy(&v, bytes.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

std::map<std::string, CheckpointRecord> gather_records(ModelState& state) {
  std::map<std::string, CheckpointRecord> records;
  for (const Param& p : state.parameters()) {
    records[p.name] = {p.tensor.shape(), p.tensor.data()};
  }
  for (const NamedBuffer& b : state.buffers()) {
    records[b.name] = {{static_cast<i64>(b.data->size())}, *b.data};
  }
  return records;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelState& state,
                     const TrainerSnapshot* snapshot,
                     const std::map<std::string, CheckpointRecord>* extra) {
  json header;
  header["config"] = state.config.to_json();
  header["dtype"] = kDtype;
  header["seed"] = state.seed;
  if (snapshot) {
    header["trainer"] = {{"epochs_completed", snapshot->epochs_completed},
                         {"global_step", snapshot->global_step},
                         {"rng_state", snapshot->rng_state}};
  }

  auto records = gather_records(state);
  if (extra) {
    for (const auto& [name, rec] : *extra) records[name] = rec;
  }

  std::string out(kMagic, sizeof(kMagic));
  append_pod<std::uint32_t>(out, kVersion);
  const std::string header_text = header.dump();
  append_pod<std::uint64_t>(out, header_text.size());
  out += header_text;
  append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, rec] : records) {
    append_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    append_pod<std::uint8_t>(out, static_cast<std::uint8_t>(rec.shape.size()));
    for (i64 d : rec.shape) append_pod<std::uint64_t>(out, d);
    for (real v : rec.data) append_pod<real>(out, v);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FileError("short write on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());

  std::size_t at = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, expected \"MSHC\"");
  }
  at = 4;
  const auto version = read_pod<std::uint32_t>(bytes, at, path);
  if (version != kVersion) {
    throw FormatError(path + ": unsupported format version " +
                      std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(bytes, at, path);
  if (at + header_len > bytes.size()) {
    throw FormatError(path + ": truncated header");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + at, bytes.begin() + at + header_len);
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header JSON: " + e.what());
  }
  at += header_len;

  Checkpoint ckpt;
  try {
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != kDtype) {
      throw FormatError(path + ": checkpoint dtype " + dtype +
                        " does not match this build (" + kDtype + ")");
    }
    if (header.contains("trainer")) {
      ckpt.has_snapshot = true;
      const auto& t = header.at("trainer");
      ckpt.snapshot.epochs_completed = t.at("epochs_completed").get<int>();
      ckpt.snapshot.global_step = t.at("global_step").get<i64>();
      ckpt.snapshot.rng_state = t.at("rng_state").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }

  const auto count = read_pod<std::uint32_t>(bytes, at, path);
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto name_len = read_pod<std::uint32_t>(bytes, at, path);
    if (at + name_len > bytes.size()) {
      throw FormatError(path + ": truncated record name");
    }
    std::string name(bytes.data() + at, name_len);
    at += name_len;
    const auto ndim = read_pod<std::uint8_t>(bytes, at, path);
    CheckpointRecord rec;
    i64 numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto extent = read_pod<std::uint64_t>(bytes, at, path);
      rec.shape.push_back(static_cast<i64>(extent));
      numel *= static_cast<i64>(extent);
    }
    rec.data.resize(static_cast<std::size_t>(numel));
    for (i64 i = 0; i < numel; ++i) {
      rec.data[static_cast<std::size_t>(i)] = read_pod<real>(bytes, at, path);
    }
    ckpt.records[name] = std::move(rec);
  }
  if (at != bytes.size()) {
    throw FormatError(path + ": " + std::to_string(bytes.size() - at) +
                      " trailing bytes");
  }
  return ckpt;
}

ModelState restore_model(const Checkpoint& ckpt) {
  ModelState state = ModelState::init(ckpt.config, ckpt.seed);
  for (Param& p : state.parameters()) {
    auto it = ckpt.records.find(p.name);
    if (it == ckpt.records.end()) {
      throw FormatError("checkpoint: missing record \"" + p.name + "\"");
    }
    if (it->second.shape != p.tensor.shape()) {
      throw FormatError("checkpoint: record \"" + p.name + "\" has shape " +
                        shape_str(it->second.shape) + ", expected " +
                        shape_str(p.tensor.shape()));
    }
    p.tensor.mutable_data() = it->second.data;
  }
  for (NamedBuffer& b : state.buffers()) {
    auto it = ckpt.records.find(b.name);
    if (it == ckpt.records.end()) {
      throw FormatError("checkpoint: missing record \"" + b.name + "\"");
    }
    if (it->second.data.size() != b.data->size()) {
      throw FormatError("checkpoint: record \"" + b.name +
                        "\" has wrong length");
    }
    *b.data = it->second.data;
  }
  return state;
}

}  // namespace mshc
