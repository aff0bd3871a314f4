#include "mshc/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mshc/checkpoint.hpp"
#include "mshc/errors.hpp"
#include "mshc/gradcheck.hpp"
#include "mshc/graph.hpp"

namespace mshc::commands {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + context);
    }
  }
}

std::string format_double(double v, const char* fmt = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw FileError("short write on " + path);
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("output directory not set");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FileError("cannot create directory " + dir);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) {
    throw ConfigError(std::string(what) + " path not set");
  }
  if (!fs::exists(path)) {
    throw FileError(std::string(what) + " not found: " + path);
  }
}

EvalReport evaluate_state(ModelState& state, const HsiCube& cube,
                          const LabelMap& labels, std::vector<int>* pred_out) {
  const Tensor cube_t = cube.to_tensor();
  KnnGraph graph = build_knn_graph(graph_features(cube_t, state.config.knn),
                                   state.config.knn);
  ForwardResult r = forward_full(cube_t, graph, labels.grid, {}, state, false);
  std::vector<int> pred = predict_classes(r.logits);
  EvalReport report = oa_aa_kappa(confusion(pred, labels, labels.test_mask));
  if (pred_out) *pred_out = std::move(pred);
  return report;
}

}  // namespace

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override \"" + ov + "\" is not key.path=value");
    }
    const std::string path = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;  // bare strings
    json* at = &doc;
    std::istringstream keys(path);
    std::string key;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) parts.push_back(key);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      at = &(*at)[parts[i]];
    }
    (*at)[parts.back()] = value;
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

void write_manifest(const std::string& out_dir,
                    const std::vector<std::string>& artifact_names) {
  json m;
  m["artifacts"] = json::object();
  for (const std::string& name : artifact_names) {
    m["artifacts"][name] = fnv1a64_file((fs::path(out_dir) / name).string());
  }
  write_text((fs::path(out_dir) / "manifest.json").string(),
             m.dump(2) + "\n");
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"data", "model", "train", "out"}, "run config");
  RunConfig cfg;
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"cube", "labels", "split", "remove_bands"}, "data");
    cfg.cube_path = d.value("cube", "");
    cfg.labels_path = d.value("labels", "");
    cfg.split_path = d.value("split", "");
    if (d.contains("remove_bands")) {
      cfg.remove_bands = parse_band_list(d.at("remove_bands").get<std::string>());
    }
  }
  if (j.contains("model")) cfg.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("train")) cfg.train = TrainConfig::from_json(j.at("train"));
  cfg.out_dir = j.value("out", "");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path,
                          const std::vector<std::string>& overrides) {
  require_file(path, "config");
  std::ifstream f(path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  apply_overrides(doc, overrides);
  return from_json(doc);
}

PreparedData prepare_data(const RunConfig& cfg) {
  require_file(cfg.cube_path, "cube");
  require_file(cfg.labels_path, "labels");
  require_file(cfg.split_path, "split");
  PreparedData d;
  d.cube = load_cube(cfg.cube_path, CubeFormat::Hsc1);
  if (!cfg.remove_bands.empty()) {
    d.cube = filter_bands(d.cube, cfg.remove_bands);
  }
  d.cube = normalize(d.cube, cfg.model.normalize);
  d.labels = load_labels_and_split(cfg.labels_path, cfg.split_path);
  if (d.labels.rows != d.cube.rows || d.labels.cols != d.cube.cols) {
    throw DataError("cube and labels extents disagree");
  }
  return d;
}

int synth(const SynthArgs& args) {
  SyntheticSpec spec;
  spec.rows = args.rows;
  spec.cols = args.cols;
  spec.bands = args.bands;
  spec.num_classes = args.classes;
  spec.blobs_per_class = args.blobs_per_class;
  spec.noise_sigma = static_cast<real>(args.sigma);
  spec.train_fraction = static_cast<real>(args.train_fraction);
  spec.seed = args.seed;
  auto [cube, labels] = generate_synthetic(spec);

  ensure_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  save_cube_hsc1(cube, (dir / "cube.hsc1").string());
  save_labels_hsl1(labels, (dir / "labels.hsl1").string());
  save_split_hsl1(labels, (dir / "split.hsl1").string());
  write_manifest(args.out_dir, {"cube.hsc1", "labels.hsl1", "split.hsl1"});

  const auto hist = labels.class_histogram();
  std::cout << "synthetic cube " << cube.rows << "x" << cube.cols << "x"
            << cube.bands << ", P=" << labels.num_classes << "\n";
  for (int c = 1; c <= labels.num_classes; ++c) {
    std::cout << "  class " << c << ": " << hist[c] << " px\n";
  }
  return 0;
}

int train_run(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  RunConfig cfg = RunConfig::load(config_path, overrides);
  PreparedData data = prepare_data(cfg);
  if (cfg.model.bands > 0 && cfg.model.bands != data.cube.bands) {
    throw ConfigError("config bands=" + std::to_string(cfg.model.bands) +
                      " but cube has " + std::to_string(data.cube.bands));
  }
  cfg.model.bands = data.cube.bands;
  if (cfg.model.num_classes > 0 &&
      cfg.model.num_classes != data.labels.num_classes) {
    throw ConfigError("config num_classes=" +
                      std::to_string(cfg.model.num_classes) +
                      " but labels have " +
                      std::to_string(data.labels.num_classes));
  }
  cfg.model.num_classes = data.labels.num_classes;
  cfg.model.validate();

  ensure_dir(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  TrainResult result =
      train(data.cube, data.labels, cfg.model, cfg.train,
            (dir / "checkpoint.mshc").string());
  result.report.write_csv((dir / "train_report.csv").string());
  write_manifest(cfg.out_dir, {"checkpoint.mshc", "train_report.csv"});

  std::cout << "trained " << cfg.train.epochs << " epochs, "
            << result.report.step_loss.size() << " steps\n";
  std::cout << "final epoch loss "
            << format_double(result.report.epoch_loss.back()) << ", train OA "
            << format_double(result.report.epoch_train_oa.back()) << "\n";
  std::cout << "wall " << format_double(result.report.wall_seconds, "%.1f")
            << " s\n";
  return 0;
}

namespace {

HsiCube load_eval_cube(const std::string& path,
                       const std::string& remove_bands,
                       const ModelConfig& config) {
  require_file(path, "cube");
  HsiCube cube = load_cube(path, CubeFormat::Hsc1);
  if (!remove_bands.empty()) {
    cube = filter_bands(cube, parse_band_list(remove_bands));
  }
  if (cube.bands != config.bands) {
    throw MismatchError("cube has " + std::to_string(cube.bands) +
                        " bands, checkpoint expects " +
                        std::to_string(config.bands));
  }
  return normalize(cube, config.normalize);
}

}  // namespace

int eval_run(const EvalArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  ModelState state = restore_model(ckpt);
  HsiCube cube = load_eval_cube(args.cube, args.remove_bands, state.config);
  require_file(args.labels, "labels");
  require_file(args.split, "split");
  LabelMap labels = load_labels_and_split(args.labels, args.split);
  if (labels.rows != cube.rows || labels.cols != cube.cols) {
    throw MismatchError("labels extents do not match cube");
  }
  if (labels.num_classes != state.config.num_classes) {
    throw MismatchError("labels have " + std::to_string(labels.num_classes) +
                        " classes, checkpoint expects " +
                        std::to_string(state.config.num_classes));
  }

  ensure_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  std::vector<int> pred;
  EvalReport report = evaluate_state(state, cube, labels, &pred);
  write_text((dir / "eval_report.json").string(),
             report.to_json().dump(2) + "\n");
  export_map(pred, cube.rows, cube.cols,
             default_palette(labels.num_classes), (dir / "map.ppm").string());
  write_manifest(args.out_dir, {"eval_report.json", "map.ppm"});

  std::cout << "test OA " << format_double(report.oa) << ", AA "
            << format_double(report.aa) << ", kappa "
            << format_double(report.kappa) << "\n";
  return 0;
}

int predict_run(const PredictArgs& args) {
  require_file(args.checkpoint, "checkpoint");
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  ModelState state = restore_model(ckpt);
  HsiCube cube = load_eval_cube(args.cube, args.remove_bands, state.config);

  const Tensor cube_t = cube.to_tensor();
  KnnGraph graph = build_knn_graph(graph_features(cube_t, state.config.knn),
                                   state.config.knn);
  ForwardResult r = forward_full(cube_t, graph, {}, {}, state, false);
  const std::vector<int> pred = predict_classes(r.logits);

  ensure_dir(args.out_dir);
  const fs::path dir(args.out_dir);
  LabelMap out;
  out.rows = cube.rows;
  out.cols = cube.cols;
  out.num_classes = static_cast<int>(state.config.num_classes);
  out.grid.assign(pred.begin(), pred.end());
  for (int c = 1; c <= out.num_classes; ++c) {
    out.class_names.push_back("class_" + std::to_string(c));
  }
  out.train_mask.assign(out.grid.size(), 0);
  out.test_mask.assign(out.grid.size(), 0);
  save_labels_hsl1(out, (dir / "pred.hsl1").string());
  export_map(pred, cube.rows, cube.cols, default_palette(out.num_classes),
             (dir / "map.ppm").string());
  write_manifest(args.out_dir, {"pred.hsl1", "map.ppm"});
  std::cout << "predicted " << pred.size() << " pixels\n";
  return 0;
}

namespace {

// labels hold a 0-length vector when the stream set leaves labels unused
struct Variant {
  std::string name;
  bool g, c, n, s;
};

}  // namespace

int ablate(const std::string& config_path,
           const std::vector<std::string>& overrides, AblateResult* sink) {
  RunConfig cfg = RunConfig::load(config_path, overrides);
  PreparedData data = prepare_data(cfg);
  cfg.model.bands = data.cube.bands;
  cfg.model.num_classes = data.labels.num_classes;
  cfg.model.validate();
  ensure_dir(cfg.out_dir);

  const std::vector<Variant> variants = {
      {"without_c", true, false, true, true},
      {"without_g", false, true, true, true},
      {"without_n", true, true, false, true},
      {"without_s", true, true, true, false},
      {"full", true, true, true, true},
  };

  AblateResult result;
  for (const Variant& v : variants) {
    ModelConfig mc = cfg.model;
    mc.enable_g = v.g;
    mc.enable_c = v.c;
    mc.enable_n = v.n;
    mc.enable_s = v.s;
    mc.validate();
    std::cout << "variant " << v.name << ": fusion width "
              << mc.fusion_input_width() << "\n";
    TrainResult tr = train(data.cube, data.labels, mc, cfg.train);
    EvalReport report = evaluate_state(tr.state, data.cube, data.labels,
                                       nullptr);
    std::cout << "  OA " << format_double(report.oa) << ", AA "
              << format_double(report.aa) << ", kappa "
              << format_double(report.kappa) << "\n";
    result.variants.push_back(v.name);
    result.fusion_widths.push_back(mc.fusion_input_width());
    result.reports.push_back(std::move(report));
  }

  std::ostringstream csv;
  csv << "metric";
  for (const auto& name : result.variants) csv << ',' << name;
  csv << '\n';
  const auto row = [&](const char* metric, auto getter) {
    csv << metric;
    for (const EvalReport& r : result.reports) {
      csv << ',' << format_double(getter(r));
    }
    csv << '\n';
  };
  row("oa_percent", [](const EvalReport& r) { return 100.0 * r.oa; });
  row("aa_percent", [](const EvalReport& r) { return 100.0 * r.aa; });
  row("kappa_x100", [](const EvalReport& r) { return 100.0 * r.kappa; });
  write_text((fs::path(cfg.out_dir) / "ablate.csv").string(), csv.str());
  write_manifest(cfg.out_dir, {"ablate.csv"});

  if (sink) *sink = std::move(result);
  return 0;
}

int ksweep(const std::string& config_path,
           const std::vector<std::string>& overrides,
           const std::vector<int>& k_values) {
  RunConfig cfg = RunConfig::load(config_path, overrides);
  PreparedData data = prepare_data(cfg);
  cfg.model.bands = data.cube.bands;
  cfg.model.num_classes = data.labels.num_classes;
  cfg.model.validate();
  ensure_dir(cfg.out_dir);

  std::ostringstream csv;
  csv << "k,oa\n";
  for (int k : k_values) {
    ModelConfig mc = cfg.model;
    mc.knn.k = k;
    TrainResult tr = train(data.cube, data.labels, mc, cfg.train);
    EvalReport report = evaluate_state(tr.state, data.cube, data.labels,
                                       nullptr);
    std::cout << "K=" << k << ": OA " << format_double(report.oa) << "\n";
    csv << k << ',' << format_double(report.oa) << '\n';
  }
  write_text((fs::path(cfg.out_dir) / "ksweep.csv").string(), csv.str());
  write_manifest(cfg.out_dir, {"ksweep.csv"});
  return 0;
}

int gradcheck_run(int seeds, double tolerance) {
  const auto reports = gradcheck::run_suite(seeds, tolerance);
  bool all_pass = true;
  for (const auto& r : reports) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name
              << "  max rel err " << format_double(r.max_rel_err, "%.3e")
              << "\n";
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    throw NumericError("gradient check failed");
  }
  std::cout << "all " << reports.size() << " operations pass at "
            << format_double(tolerance, "%.0e") << "\n";
  return 0;
}

int convert(const ConvertArgs& args) {
  require_file(args.header, "header");
  require_file(args.payload, "payload");
  HsiCube cube = load_cube(args.header, CubeFormat::EnviBsq);
  std::cout << "loaded " << cube.rows << "x" << cube.cols << " with "
            << cube.bands << " bands\n";
  if (!args.remove_bands.empty()) {
    cube = filter_bands(cube, parse_band_list(args.remove_bands));
    std::cout << "kept " << cube.bands << " bands after filtering\n";
  }
  ensure_dir(args.out_dir);
  std::string name = args.name;
  if (name.empty()) {
    name = fs::path(args.payload).stem().string();
    if (name.empty()) name = "converted";
  }
  const std::string file = name + ".hsc1";
  save_cube_hsc1(cube, (fs::path(args.out_dir) / file).string());
  write_manifest(args.out_dir, {file});
  return 0;
}

}  // namespace mshc::commands
