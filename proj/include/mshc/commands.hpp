#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mshc/data.hpp"
#include "mshc/metrics.hpp"
#include "mshc/model.hpp"
#include "mshc/trainer.hpp"

namespace mshc::commands {

// One JSON document driving a run: data paths, model, training, output
// directory. CLI flags override keys by dotted path before parsing; unknown
// keys anywhere are rejected.
struct RunConfig {
  std::string cube_path;
  std::string labels_path;
  std::string split_path;
  std::vector<int> remove_bands;
  ModelConfig model;
  TrainConfig train;
  std::string out_dir;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides);
};

// Applies "a.b.c=value" assignments onto a JSON document.
void apply_overrides(nlohmann::json& doc,
                     const std::vector<std::string>& overrides);

std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_file(const std::string& path);
void write_manifest(const std::string& out_dir,
                    const std::vector<std::string>& artifact_names);

// Loads, band-filters and normalizes the cube and labels named by a config.
struct PreparedData {
  HsiCube cube;  // filtered + normalized
  LabelMap labels;
};
PreparedData prepare_data(const RunConfig& cfg);

struct SynthArgs {
  i64 rows = 32;
  i64 cols = 32;
  i64 bands = 8;
  int classes = 4;
  int blobs_per_class = 2;
  double sigma = 0.05;
  double train_fraction = 0.2;
  std::uint64_t seed = 7;
  std::string out_dir;
};

int synth(const SynthArgs& args);
int train_run(const std::string& config_path,
              const std::vector<std::string>& overrides);

struct EvalArgs {
  std::string checkpoint;
  std::string cube;
  std::string labels;
  std::string split;
  std::string remove_bands;  // band-list syntax, optional
  std::string out_dir;
};
int eval_run(const EvalArgs& args);

struct PredictArgs {
  std::string checkpoint;
  std::string cube;
  std::string remove_bands;
  std::string out_dir;
};
int predict_run(const PredictArgs& args);

// Five-variant leave-one-stream-out table; returns the per-variant reports
// through the optional sink (testing hook).
struct AblateResult {
  std::vector<std::string> variants;
  std::vector<i64> fusion_widths;
  std::vector<EvalReport> reports;
};
int ablate(const std::string& config_path,
           const std::vector<std::string>& overrides,
           AblateResult* sink = nullptr);

int ksweep(const std::string& config_path,
           const std::vector<std::string>& overrides,
           const std::vector<int>& k_values);

int gradcheck_run(int seeds, double tolerance);

struct ConvertArgs {
  std::string header;
  std::string payload;
  std::string remove_bands;
  std::string out_dir;
  std::string name;  // output stem, default from payload
};
int convert(const ConvertArgs& args);

}  // namespace mshc::commands
