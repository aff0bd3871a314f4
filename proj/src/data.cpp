#include "mshc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mshc/errors.hpp"
#include "mshc/rng.hpp"

namespace mshc {

using nlohmann::json;

namespace {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto len = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(len));
  in.read(buf.data(), len);
  if (!in) throw FileError("short read on " + path);
  return buf;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("short write on " + path);
}

// magic + one-line JSON header; returns the header and payload offset
std::pair<json, std::size_t> parse_container(const std::vector<char>& bytes,
                                             const char* magic,
                                             const std::string& path) {
  const std::size_t magic_len = std::strlen(magic);
  if (bytes.size() < magic_len ||
      std::memcmp(bytes.data(), magic, magic_len) != 0) {
    throw FormatError(path + ": bad magic, expected \"" +
                      std::string(magic, magic_len - 1) + "\"");
  }
  auto nl = std::find(bytes.begin() + magic_len, bytes.end(), '\n');
  if (nl == bytes.end()) {
    throw FormatError(path + ": unterminated JSON header");
  }
  const std::string header(bytes.begin() + magic_len, nl);
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw FormatError(path + ": header is not valid JSON: " + e.what());
  }
  return {h, static_cast<std::size_t>(nl - bytes.begin()) + 1};
}

void check_payload_size(const std::string& path, std::size_t offset,
                        std::size_t actual, std::size_t expected) {
  if (actual != expected) {
    throw FormatError(path + ": payload at offset " + std::to_string(offset) +
                      " has " + std::to_string(actual) + " bytes, expected " +
                      std::to_string(expected));
  }
}

float load_f32le(const char* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

std::uint16_t load_u16le(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace

// --- LabelMap ---

void LabelMap::validate() const {
  const i64 n = rows * cols;
  if (static_cast<i64>(grid.size()) != n ||
      static_cast<i64>(train_mask.size()) != n ||
      static_cast<i64>(test_mask.size()) != n) {
    throw DataError("label map: grid/mask extents disagree");
  }
  std::vector<i64> seen(num_classes + 1, 0);
  for (i64 i = 0; i < n; ++i) {
    if (grid[i] > num_classes) {
      throw DataError("label map: class id " + std::to_string(grid[i]) +
                      " exceeds P=" + std::to_string(num_classes));
    }
    if (train_mask[i] && test_mask[i]) {
      throw DataError("label map: train and test masks overlap at pixel " +
                      std::to_string(i));
    }
    if ((train_mask[i] || test_mask[i]) && grid[i] == 0) {
      throw DataError("label map: mask on unlabeled pixel " +
                      std::to_string(i));
    }
    ++seen[grid[i]];
  }
  for (int c = 1; c <= num_classes; ++c) {
    if (seen[c] == 0) {
      throw DataError("label map: class " + std::to_string(c) +
                      " has no labeled pixels");
    }
  }
}

std::vector<i64> LabelMap::pixels_where(
    const std::vector<std::uint8_t>& mask) const {
  std::vector<i64> out;
  for (i64 i = 0; i < static_cast<i64>(mask.size()); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

std::vector<i64> LabelMap::class_histogram() const {
  std::vector<i64> h(num_classes + 1, 0);
  for (std::uint16_t v : grid) ++h[v];
  return h;
}

// --- hsc1 / HSL1 ---

void save_cube_hsc1(const HsiCube& cube, const std::string& path) {
  json h;
  h["m"] = cube.rows;
  h["n"] = cube.cols;
  h["b"] = cube.bands;
  h["dtype"] = "f32";
  h["order"] = "bsq";
  h["class_names"] = cube.class_names;
  std::string out = "HSC1\n" + h.dump() + "\n";
  const std::size_t payload = out.size();
  out.resize(payload + cube.values.size() * 4);
  char* p = out.data() + payload;
  for (i64 b = 0; b < cube.bands; ++b) {
    for (i64 r = 0; r < cube.rows; ++r) {
      for (i64 c = 0; c < cube.cols; ++c) {
        const float v = static_cast<float>(cube.at(r, c, b));
        std::memcpy(p, &v, 4);
        p += 4;
      }
    }
  }
  write_file(path, out);
}

namespace {

HsiCube load_cube_hsc1(const std::string& path) {
  const auto bytes = read_file(path);
  auto [h, offset] = parse_container(bytes, "HSC1\n", path);
  HsiCube cube;
  try {
    cube.rows = h.at("m").get<i64>();
    cube.cols = h.at("n").get<i64>();
    cube.bands = h.at("b").get<i64>();
    if (h.at("dtype").get<std::string>() != "f32") {
      throw FormatError(path + ": unsupported dtype " +
                        h.at("dtype").get<std::string>());
    }
    if (h.at("order").get<std::string>() != "bsq") {
      throw FormatError(path + ": unsupported order " +
                        h.at("order").get<std::string>());
    }
    if (h.contains("class_names")) {
      cube.class_names = h.at("class_names").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }
  if (cube.rows < 1 || cube.cols < 1 || cube.bands < 1) {
    throw FormatError(path + ": non-positive extents in header");
  }
  const std::size_t count =
      static_cast<std::size_t>(cube.rows * cube.cols * cube.bands);
  check_payload_size(path, offset, bytes.size() - offset, count * 4);
  cube.values.resize(count);
  const char* p = bytes.data() + offset;
  for (i64 b = 0; b < cube.bands; ++b) {
    for (i64 r = 0; r < cube.rows; ++r) {
      for (i64 c = 0; c < cube.cols; ++c) {
        const float v = load_f32le(p);
        p += 4;
        if (!std::isfinite(v)) {
          throw DataError(path + ": non-finite value at band " +
                          std::to_string(b + 1) + ", pixel (" +
                          std::to_string(r) + ", " + std::to_string(c) + ")");
        }
        cube.values[(r * cube.cols + c) * cube.bands + b] =
            static_cast<real>(v);
      }
    }
  }
  cube.band_mask.assign(static_cast<std::size_t>(cube.bands), 1);
  cube.provenance = path;
  return cube;
}

std::string dump_hsl1(const json& header, const std::vector<std::uint16_t>& grid) {
  std::string out = "HSL1\n" + header.dump() + "\n";
  const std::size_t payload = out.size();
  out.resize(payload + grid.size() * 2);
  char* p = out.data() + payload;
  for (std::uint16_t v : grid) {
    std::memcpy(p, &v, 2);
    p += 2;
  }
  return out;
}

std::pair<json, std::vector<std::uint16_t>> load_hsl1(
    const std::string& path) {
  const auto bytes = read_file(path);
  auto [h, offset] = parse_container(bytes, "HSL1\n", path);
  i64 m = 0, n = 0;
  try {
    m = h.at("m").get<i64>();
    n = h.at("n").get<i64>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad header: " + e.what());
  }
  if (m < 1 || n < 1) throw FormatError(path + ": non-positive extents");
  const std::size_t count = static_cast<std::size_t>(m * n);
  check_payload_size(path, offset, bytes.size() - offset, count * 2);
  std::vector<std::uint16_t> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = load_u16le(bytes.data() + offset + i * 2);
  }
  return {h, grid};
}

}  // namespace

void save_labels_hsl1(const LabelMap& labels, const std::string& path) {
  json h;
  h["kind"] = "labels";
  h["m"] = labels.rows;
  h["n"] = labels.cols;
  h["p"] = labels.num_classes;
  h["class_names"] = labels.class_names;
  write_file(path, dump_hsl1(h, labels.grid));
}

void save_split_hsl1(const LabelMap& labels, const std::string& path) {
  json h;
  h["kind"] = "split";
  h["m"] = labels.rows;
  h["n"] = labels.cols;
  std::vector<std::uint16_t> grid(labels.grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (labels.train_mask[i]) grid[i] = 1;
    if (labels.test_mask[i]) grid[i] = 2;
  }
  write_file(path, dump_hsl1(h, grid));
}

LabelMap load_labels_and_split(const std::string& labels_path,
                               const std::string& split_path) {
  auto [lh, lgrid] = load_hsl1(labels_path);
  auto [sh, sgrid] = load_hsl1(split_path);
  LabelMap lm;
  try {
    if (lh.at("kind").get<std::string>() != "labels") {
      throw FormatError(labels_path + ": not a labels file");
    }
    if (sh.at("kind").get<std::string>() != "split") {
      throw FormatError(split_path + ": not a split file");
    }
    lm.rows = lh.at("m").get<i64>();
    lm.cols = lh.at("n").get<i64>();
    lm.num_classes = lh.at("p").get<int>();
    if (lh.contains("class_names")) {
      lm.class_names = lh.at("class_names").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw FormatError(labels_path + ": bad header: " + e.what());
  }
  if (sh.at("m").get<i64>() != lm.rows || sh.at("n").get<i64>() != lm.cols) {
    throw DataError("split extents do not match labels (" + labels_path +
                    " vs " + split_path + ")");
  }
  lm.grid = lgrid;
  lm.train_mask.assign(lm.grid.size(), 0);
  lm.test_mask.assign(lm.grid.size(), 0);
  for (std::size_t i = 0; i < sgrid.size(); ++i) {
    if (sgrid[i] == 1) lm.train_mask[i] = 1;
    if (sgrid[i] == 2) lm.test_mask[i] = 1;
    if (sgrid[i] > 2) {
      throw DataError(split_path + ": split value " +
                      std::to_string(sgrid[i]) + " at pixel " +
                      std::to_string(i));
    }
  }
  lm.validate();
  return lm;
}

// --- ENVI ---

namespace {

struct EnviHeader {
  i64 samples = 0, lines = 0, bands = 0;
  int data_type = 0;
  std::string interleave = "bsq";
  int byte_order = 0;
  i64 header_offset = 0;
};

EnviHeader parse_envi_header(const std::string& path) {
  const auto bytes = read_file(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string line;
  EnviHeader h;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(value);
    std::transform(key.begin(), key.end(), key.begin(), ::tolower);
    if (!value.empty() && value.front() == '{') {
      // consume a brace block (wavelength lists etc.)
      while (value.find('}') == std::string::npos && std::getline(in, line)) {
        value += line;
      }
      continue;
    }
    try {
      if (key == "samples") h.samples = std::stoll(value);
      else if (key == "lines") h.lines = std::stoll(value);
      else if (key == "bands") h.bands = std::stoll(value);
      else if (key == "data type") h.data_type = std::stoi(value);
      else if (key == "interleave") h.interleave = value;
      else if (key == "byte order") h.byte_order = std::stoi(value);
      else if (key == "header offset") h.header_offset = std::stoll(value);
    } catch (const std::exception&) {
      throw FormatError(path + ": cannot parse value for key \"" + key + "\"");
    }
  }
  if (h.samples < 1 || h.lines < 1 || h.bands < 1) {
    throw FormatError(path + ": missing samples/lines/bands");
  }
  std::transform(h.interleave.begin(), h.interleave.end(),
                 h.interleave.begin(), ::tolower);
  return h;
}

HsiCube load_cube_envi(const std::string& path) {
  std::string header_path, payload_path;
  if (path.size() > 4 && path.substr(path.size() - 4) == ".hdr") {
    header_path = path;
    payload_path = path.substr(0, path.size() - 4);
  } else {
    header_path = path + ".hdr";
    payload_path = path;
  }
  const EnviHeader h = parse_envi_header(header_path);
  if (h.interleave != "bsq") {
    throw FormatError(header_path + ": unsupported interleave \"" +
                      h.interleave + "\" (only bsq)");
  }
  if (h.byte_order != 0) {
    throw FormatError(header_path + ": unsupported byte order " +
                      std::to_string(h.byte_order) + " (only little-endian)");
  }
  if (h.data_type != 4 && h.data_type != 12) {
    throw FormatError(header_path + ": unsupported data type " +
                      std::to_string(h.data_type) + " (only 4=f32, 12=u16)");
  }
  const auto bytes = read_file(payload_path);
  const std::size_t value_size = h.data_type == 4 ? 4 : 2;
  const std::size_t count =
      static_cast<std::size_t>(h.samples * h.lines * h.bands);
  if (bytes.size() < static_cast<std::size_t>(h.header_offset)) {
    throw FormatError(payload_path + ": shorter than header offset");
  }
  check_payload_size(payload_path, h.header_offset,
                     bytes.size() - h.header_offset, count * value_size);

  HsiCube cube;
  cube.rows = h.lines;
  cube.cols = h.samples;
  cube.bands = h.bands;
  cube.values.resize(count);
  const char* p = bytes.data() + h.header_offset;
  for (i64 b = 0; b < cube.bands; ++b) {
    for (i64 r = 0; r < cube.rows; ++r) {
      for (i64 c = 0; c < cube.cols; ++c) {
        real v;
        if (h.data_type == 4) {
          const float f = load_f32le(p);
          if (!std::isfinite(f)) {
            throw DataError(payload_path + ": non-finite value at band " +
                            std::to_string(b + 1) + ", pixel (" +
                            std::to_string(r) + ", " + std::to_string(c) +
                            ")");
          }
          v = static_cast<real>(f);
        } else {
          v = static_cast<real>(load_u16le(p));
        }
        p += value_size;
        cube.values[(r * cube.cols + c) * cube.bands + b] = v;
      }
    }
  }
  cube.band_mask.assign(static_cast<std::size_t>(cube.bands), 1);
  cube.provenance = payload_path;
  return cube;
}

}  // namespace

HsiCube load_cube(const std::string& path, CubeFormat format) {
  switch (format) {
    case CubeFormat::Hsc1:
      return load_cube_hsc1(path);
    case CubeFormat::EnviBsq:
      return load_cube_envi(path);
  }
  throw ConfigError("load_cube: unknown format");
}

// --- transforms ---

HsiCube filter_bands(const HsiCube& cube, const std::vector<int>& remove) {
  const int original = static_cast<int>(cube.band_mask.size());
  std::set<int> removal;
  for (int idx : remove) {
    if (idx < 1 || idx > original) {
      throw ConfigError("filter_bands: band index " + std::to_string(idx) +
                        " outside 1.." + std::to_string(original));
    }
    if (!removal.insert(idx).second) {
      throw ConfigError("filter_bands: duplicate band index " +
                        std::to_string(idx));
    }
    if (!cube.band_mask[idx - 1]) {
      throw ConfigError("filter_bands: band " + std::to_string(idx) +
                        " was already removed");
    }
  }
  // original indices of the currently retained bands, in order
  std::vector<int> retained;
  for (int i = 0; i < original; ++i) {
    if (cube.band_mask[i]) retained.push_back(i + 1);
  }
  std::vector<int> keep_positions;
  for (int pos = 0; pos < static_cast<int>(retained.size()); ++pos) {
    if (!removal.count(retained[pos])) keep_positions.push_back(pos);
  }
  if (keep_positions.empty()) {
    throw ConfigError("filter_bands: removing every band is not allowed");
  }

  HsiCube out;
  out.rows = cube.rows;
  out.cols = cube.cols;
  out.bands = static_cast<i64>(keep_positions.size());
  out.band_mask = cube.band_mask;
  for (int idx : removal) out.band_mask[idx - 1] = 0;
  out.provenance = cube.provenance;
  out.class_names = cube.class_names;
  out.values.resize(static_cast<std::size_t>(out.pixel_count() * out.bands));
  for (i64 px = 0; px < cube.pixel_count(); ++px) {
    const real* src = cube.values.data() + px * cube.bands;
    real* dst = out.values.data() + px * out.bands;
    for (std::size_t t = 0; t < keep_positions.size(); ++t) {
      dst[t] = src[keep_positions[t]];
    }
  }
  return out;
}

NormalizeMode normalize_mode_from_string(const std::string& s) {
  if (s == "per_band_zscore") return NormalizeMode::PerBandZscore;
  if (s == "minmax01") return NormalizeMode::MinMax01;
  if (s == "none") return NormalizeMode::None;
  throw ConfigError("unknown normalize mode \"" + s + "\"");
}

std::string to_string(NormalizeMode m) {
  switch (m) {
    case NormalizeMode::PerBandZscore:
      return "per_band_zscore";
    case NormalizeMode::MinMax01:
      return "minmax01";
    case NormalizeMode::None:
      return "none";
  }
  return "?";
}

HsiCube normalize(const HsiCube& cube, NormalizeMode mode) {
  if (mode == NormalizeMode::None) return cube;
  HsiCube out = cube;
  const i64 n = cube.pixel_count();
  for (i64 b = 0; b < cube.bands; ++b) {
    if (mode == NormalizeMode::PerBandZscore) {
      real mean = 0;
      for (i64 px = 0; px < n; ++px) mean += cube.values[px * cube.bands + b];
      mean /= static_cast<real>(n);
      real var = 0;
      for (i64 px = 0; px < n; ++px) {
        const real d = cube.values[px * cube.bands + b] - mean;
        var += d * d;
      }
      var /= static_cast<real>(n);
      const real stdev = std::max(std::sqrt(var), real(1e-8));
      for (i64 px = 0; px < n; ++px) {
        out.values[px * cube.bands + b] =
            (cube.values[px * cube.bands + b] - mean) / stdev;
      }
    } else {
      real lo = cube.values[b], hi = cube.values[b];
      for (i64 px = 0; px < n; ++px) {
        lo = std::min(lo, cube.values[px * cube.bands + b]);
        hi = std::max(hi, cube.values[px * cube.bands + b]);
      }
      const real span = std::max(hi - lo, real(1e-12));
      for (i64 px = 0; px < n; ++px) {
        out.values[px * cube.bands + b] =
            (cube.values[px * cube.bands + b] - lo) / span;
      }
    }
  }
  return out;
}

// --- synthetic ---

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic: P must be >= 2");
  if (rows < 4 || cols < 4) throw ConfigError("synthetic: raster too small");
  if (bands < 1) throw ConfigError("synthetic: need at least one band");
  if (noise_sigma < 0) throw ConfigError("synthetic: negative noise sigma");
  if (train_fraction <= 0 || train_fraction >= 1) {
    throw ConfigError("synthetic: train fraction must be in (0, 1)");
  }
  if (!signatures.empty()) {
    if (static_cast<int>(signatures.size()) != num_classes) {
      throw ConfigError("synthetic: signature count != P");
    }
    for (const auto& s : signatures) {
      if (static_cast<i64>(s.size()) != bands) {
        throw ConfigError("synthetic: signature length != bands");
      }
    }
    for (std::size_t a = 0; a < signatures.size(); ++a) {
      for (std::size_t b = a + 1; b < signatures.size(); ++b) {
        if (signatures[a] == signatures[b]) {
          throw ConfigError("synthetic: signatures must be pairwise distinct");
        }
      }
    }
  }
}

std::pair<HsiCube, LabelMap> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // signatures: supplied, or rejection-sampled with pairwise distance >= 1
  std::vector<std::vector<real>> sigs = spec.signatures;
  if (sigs.empty()) {
    for (int c = 0; c < spec.num_classes; ++c) {
      bool ok = false;
      for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
        std::vector<real> s(spec.bands);
        for (auto& v : s) {
          v = static_cast<real>(
              static_cast<float>(rng.uniform(0.0, 2.0)));
        }
        ok = true;
        for (const auto& other : sigs) {
          real d2 = 0;
          for (i64 b = 0; b < spec.bands; ++b) {
            const real d = s[b] - other[b];
            d2 += d * d;
          }
          if (d2 < real(1)) {
            ok = false;
            break;
          }
        }
        if (ok) sigs.push_back(std::move(s));
      }
      if (!ok) {
        throw GenerationError(
            "synthetic: could not sample separated signatures (bands too "
            "few for P)");
      }
    }
  }

  const i64 n = spec.rows * spec.cols;
  std::vector<std::uint16_t> grid;
  const i64 min_class_pixels = 4;
  bool placed = false;
  for (int round = 0; round < 50 && !placed; ++round) {
    grid.assign(n, 1);  // background class
    for (int cls = 2; cls <= spec.num_classes; ++cls) {
      for (int blob = 0; blob < spec.blobs_per_class; ++blob) {
        const real cy = rng.uniform(0.0, static_cast<double>(spec.rows));
        const real cx = rng.uniform(0.0, static_cast<double>(spec.cols));
        const real ra = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
        const real rb = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
        const real theta = rng.uniform(0.0, M_PI);
        const real ct = std::cos(theta), st = std::sin(theta);
        for (i64 r = 0; r < spec.rows; ++r) {
          for (i64 c = 0; c < spec.cols; ++c) {
            const real dy = static_cast<real>(r) + real(0.5) - cy;
            const real dx = static_cast<real>(c) + real(0.5) - cx;
            const real u = (dx * ct + dy * st) / ra;
            const real v = (-dx * st + dy * ct) / rb;
            if (u * u + v * v <= real(1)) {
              grid[r * spec.cols + c] = static_cast<std::uint16_t>(cls);
            }
          }
        }
      }
    }
    std::vector<i64> counts(spec.num_classes + 1, 0);
    for (auto v : grid) ++counts[v];
    placed = true;
    for (int cls = 1; cls <= spec.num_classes; ++cls) {
      if (counts[cls] < min_class_pixels) placed = false;
    }
  }
  if (!placed) {
    throw GenerationError(
        "synthetic: blob placement failed to cover every class after 50 "
        "rounds");
  }

  HsiCube cube;
  cube.rows = spec.rows;
  cube.cols = spec.cols;
  cube.bands = spec.bands;
  cube.band_mask.assign(static_cast<std::size_t>(spec.bands), 1);
  cube.provenance = "synthetic(seed=" + std::to_string(spec.seed) + ")";
  cube.values.resize(static_cast<std::size_t>(n * spec.bands));
  for (i64 px = 0; px < n; ++px) {
    const auto& sig = sigs[grid[px] - 1];
    for (i64 b = 0; b < spec.bands; ++b) {
      const double v = static_cast<double>(sig[b]) +
                       static_cast<double>(spec.noise_sigma) * rng.normal();
      // values are f32-representable so hsc1 round trips are lossless
      cube.values[px * spec.bands + b] =
          static_cast<real>(static_cast<float>(v));
    }
  }

  LabelMap labels;
  labels.rows = spec.rows;
  labels.cols = spec.cols;
  labels.num_classes = spec.num_classes;
  labels.grid = grid;
  for (int c = 1; c <= spec.num_classes; ++c) {
    labels.class_names.push_back("class_" + std::to_string(c));
  }
  labels.train_mask.assign(n, 0);
  labels.test_mask.assign(n, 0);
  for (int cls = 1; cls <= spec.num_classes; ++cls) {
    std::vector<i64> members;
    for (i64 i = 0; i < n; ++i) {
      if (grid[i] == cls) members.push_back(i);
    }
    rng.shuffle(members);
    i64 n_train = static_cast<i64>(
        std::llround(static_cast<double>(spec.train_fraction) *
                     static_cast<double>(members.size())));
    n_train = std::max<i64>(1, std::min<i64>(n_train,
                                             static_cast<i64>(members.size()) -
                                                 1));
    for (std::size_t t = 0; t < members.size(); ++t) {
      if (static_cast<i64>(t) < n_train) {
        labels.train_mask[members[t]] = 1;
      } else {
        labels.test_mask[members[t]] = 1;
      }
    }
  }
  labels.validate();
  cube.class_names = labels.class_names;
  return {std::move(cube), std::move(labels)};
}

std::vector<int> parse_band_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        if (hi < lo) throw ConfigError("band range " + item + " is reversed");
        for (int v = lo; v <= hi; ++v) out.push_back(v);
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("cannot parse band list entry \"" + item + "\"");
    } catch (const std::out_of_range&) {
      throw ConfigError("band list entry \"" + item + "\" out of range");
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mshc
