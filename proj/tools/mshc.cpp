#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mshc/commands.hpp"
#include "mshc/errors.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitMismatch = 4;

int dispatch(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const mshc::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const mshc::MismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MSHCNet-style hyperspectral classification pipeline"};
  app.require_subcommand(1);

  using namespace mshc::commands;

  // synth
  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cube");
  synth_cmd->add_option("--m", synth_args.rows, "raster rows");
  synth_cmd->add_option("--n", synth_args.cols, "raster cols");
  synth_cmd->add_option("--b", synth_args.bands, "bands");
  synth_cmd->add_option("--p", synth_args.classes, "classes");
  synth_cmd->add_option("--blobs", synth_args.blobs_per_class,
                        "blobs per class");
  synth_cmd->add_option("--sigma", synth_args.sigma, "noise stddev");
  synth_cmd->add_option("--train-fraction", synth_args.train_fraction,
                        "train split fraction");
  synth_cmd->add_option("--seed", synth_args.seed, "rng seed");
  synth_cmd->add_option("--out", synth_args.out_dir, "output directory")
      ->required();

  // train / ablate / ksweep share the config+overrides interface
  std::string config_path;
  std::vector<std::string> overrides;
  auto* train_cmd = app.add_subcommand("train", "train from a config");
  train_cmd->add_option("config", config_path, "run config JSON")->required();
  train_cmd->add_option("--set", overrides,
                        "override config keys (a.b.c=value)");

  std::string ablate_config;
  std::vector<std::string> ablate_overrides;
  auto* ablate_cmd =
      app.add_subcommand("ablate", "leave-one-stream-out table");
  ablate_cmd->add_option("config", ablate_config, "run config JSON")
      ->required();
  ablate_cmd->add_option("--set", ablate_overrides,
                         "override config keys (a.b.c=value)");

  std::string ksweep_config;
  std::vector<std::string> ksweep_overrides;
  std::vector<int> k_values{5, 10, 15, 20, 25, 30};
  auto* ksweep_cmd = app.add_subcommand("ksweep", "accuracy vs neighbor count");
  ksweep_cmd->add_option("config", ksweep_config, "run config JSON")
      ->required();
  ksweep_cmd->add_option("--set", ksweep_overrides,
                         "override config keys (a.b.c=value)");
  ksweep_cmd->add_option("--k", k_values, "neighbor counts to sweep");

  // eval
  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "metrics on the test split");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model file")
      ->required();
  eval_cmd->add_option("--cube", eval_args.cube, "hsc1 cube")->required();
  eval_cmd->add_option("--labels", eval_args.labels, "HSL1 labels")
      ->required();
  eval_cmd->add_option("--split", eval_args.split, "HSL1 split")->required();
  eval_cmd->add_option("--remove-bands", eval_args.remove_bands,
                       "bands to drop before evaluation (1-based)");
  eval_cmd->add_option("--out", eval_args.out_dir, "output directory")
      ->required();

  // predict
  PredictArgs predict_args;
  auto* predict_cmd =
      app.add_subcommand("predict", "classify every pixel of a cube");
  predict_cmd
      ->add_option("--checkpoint", predict_args.checkpoint, "model file")
      ->required();
  predict_cmd->add_option("--cube", predict_args.cube, "hsc1 cube")
      ->required();
  predict_cmd->add_option("--remove-bands", predict_args.remove_bands,
                          "bands to drop (1-based)");
  predict_cmd->add_option("--out", predict_args.out_dir, "output directory")
      ->required();

  // gradcheck
  int gradcheck_seeds = 20;
  double gradcheck_tol = 1e-4;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck_cmd->add_option("--seeds", gradcheck_seeds, "instances per op");
  gradcheck_cmd->add_option("--tol", gradcheck_tol, "max relative error");

  // convert
  ConvertArgs convert_args;
  auto* convert_cmd =
      app.add_subcommand("convert", "ENVI BSQ raster to hsc1");
  convert_cmd->add_option("--header", convert_args.header, "ENVI header file")
      ->required();
  convert_cmd->add_option("--data", convert_args.payload, "ENVI payload file")
      ->required();
  convert_cmd->add_option("--remove-bands", convert_args.remove_bands,
                          "bands to drop (1-based, e.g. 104-108,220)");
  convert_cmd->add_option("--name", convert_args.name, "output file stem");
  convert_cmd->add_option("--out", convert_args.out_dir, "output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (synth_cmd->parsed()) {
    return dispatch([&] { return synth(synth_args); });
  }
  if (train_cmd->parsed()) {
    return dispatch([&] { return train_run(config_path, overrides); });
  }
  if (ablate_cmd->parsed()) {
    return dispatch([&] { return ablate(ablate_config, ablate_overrides); });
  }
  if (ksweep_cmd->parsed()) {
    return dispatch(
        [&] { return ksweep(ksweep_config, ksweep_overrides, k_values); });
  }
  if (eval_cmd->parsed()) {
    return dispatch([&] { return eval_run(eval_args); });
  }
  if (predict_cmd->parsed()) {
    return dispatch([&] { return predict_run(predict_args); });
  }
  if (gradcheck_cmd->parsed()) {
    return dispatch(
        [&] { return gradcheck_run(gradcheck_seeds, gradcheck_tol); });
  }
  if (convert_cmd->parsed()) {
    return dispatch([&] { return convert(convert_args); });
  }
  return kExitUsage;
}
