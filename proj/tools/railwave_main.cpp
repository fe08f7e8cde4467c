// railwave: generate | extract | train | eval
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <iostream>

#include "railwave/config.hpp"
#include "railwave/error.hpp"
#include "railwave/pipeline.hpp"

namespace {

using railwave::ErrorCode;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::BadSpec:
    case ErrorCode::MissingFile:
    case ErrorCode::MissingManifest:
    case ErrorCode::MissingFeatures:
    case ErrorCode::EmptySplit:
    case ErrorCode::EmptyClass:
    case ErrorCode::Locked:
      return 1;
    default:
      return 2;
  }
}

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Run configuration file");
  cmd->add_option("--set", opts.overrides, "Override one setting, section.key=value (repeatable)");
  cmd->add_option("--seed", opts.seed, "Seed for data generation, initialization and shuffling");
  cmd->add_flag("--dry-run", opts.dry_run, "Validate and print the plan without writing anything");
}

railwave::RunConfig build_config(const CommonOptions& opts) {
  railwave::RunConfig cfg = opts.config_path.empty() ? railwave::RunConfig{} : railwave::load_config_file(opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw railwave::Error(ErrorCode::BadConfig, "--set expects key=value, got '" + kv + "'");
    railwave::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) railwave::apply_seed(cfg, *opts.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet scalogram + ResNet fault classification pipeline"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto* generate = app.add_subcommand("generate", "Write the synthetic dataset and its manifest");
  auto* extract = app.add_subcommand("extract", "Compute scalogram images for every manifest entry");
  auto* train = app.add_subcommand("train", "Train the network and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "Score a checkpoint (or a predictions file) on one split");
  for (auto* cmd : {generate, extract, train, eval}) add_common(cmd, opts);

  railwave::EvalOptions eval_opts;
  std::string split_name = "test";
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint to evaluate (default: the run's own)");
  eval->add_option("--split", split_name, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", eval_opts.out_dir, "Report directory (default: <output_dir>/eval/<split>)");
  eval->add_option("--predictions-file", eval_opts.predictions_file, "CSV of label,prediction rows to score instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const railwave::RunConfig cfg = build_config(opts);
    if (generate->parsed()) {
      railwave::run_generate(cfg, opts.dry_run, std::cout);
    } else if (extract->parsed()) {
      const auto result = railwave::run_extract(cfg, opts.dry_run, std::cout);
      if (!result.failures.empty()) {
        std::cerr << "railwave: " << result.failures.size() << " recording(s) failed\n";
        return 2;
      }
    } else if (train->parsed()) {
      railwave::run_train(cfg, opts.dry_run, std::cout);
    } else if (eval->parsed()) {
      eval_opts.split = railwave::parse_split(split_name);
      railwave::run_eval(cfg, eval_opts, opts.dry_run, std::cout);
    }
  } catch (const railwave::Error& e) {
    std::cerr << "railwave: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "railwave: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
