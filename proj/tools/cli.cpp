#include "cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "divnorm/errors.hpp"
#include "divnorm/experiment.hpp"
#include "divnorm/gradcheck.hpp"

namespace divnorm {

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string seed;
  std::string out_dir;
  std::string dataset;
  std::string checkpoint;
  bool per_query = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool wants_dataset, bool wants_checkpoint) {
  cmd->add_option("--config", flags.config_path, "experiment config file (key = value)");
  cmd->add_option("--set", flags.overrides, "override a config key, e.g. --set train.epochs=10");
  cmd->add_option("--seed", flags.seed, "base seed (overrides config)");
  cmd->add_option("--out", flags.out_dir, "output directory");
  if (wants_dataset) cmd->add_option("--dataset", flags.dataset, "dataset CSV path");
  if (wants_checkpoint) cmd->add_option("--checkpoint", flags.checkpoint, "checkpoint path");
}

ExperimentConfig resolve(const CommonFlags& flags) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  if (!flags.config_path.empty()) cfg.apply_file(flags.config_path);
  for (const std::string& kv : flags.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!flags.seed.empty()) cfg.set("seed", flags.seed);
  if (!flags.out_dir.empty()) cfg.set("io.out_dir", flags.out_dir);
  if (!flags.dataset.empty()) cfg.set("io.dataset", flags.dataset);
  if (!flags.checkpoint.empty()) cfg.set("io.checkpoint", flags.checkpoint);
  if (flags.per_query) cfg.set("eval.per_query", "true");
  return cfg;
}

void report_written(const CommandPaths& paths) {
  for (const std::string& p : paths.written) std::cout << "wrote " << p << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"divnorm: dual-branch feature disentanglement for cloth-changing re-id"};
  app.require_subcommand(1);

  CommonFlags synth_flags, train_flags, eval_flags, aqs_flags, adc_flags;
  std::string gradcheck_seed = "1";

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset and save it");
  add_common(synth, synth_flags, false, false);

  CLI::App* train = app.add_subcommand("train", "train a model, write checkpoint and log");
  add_common(train, train_flags, true, false);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint, write report CSV");
  add_common(eval, eval_flags, true, true);
  eval->add_flag("--per-query", eval_flags.per_query, "write per-query AP/rank CSVs");

  CLI::App* aqs = app.add_subcommand("ablate-query-strategy",
                                     "evaluate sim_sum vs feat_sum on one checkpoint");
  add_common(aqs, aqs_flags, true, true);

  CLI::App* adc = app.add_subcommand(
      "ablate-drop-clothes", "sweep kept train outfits, retrain and evaluate the CC protocol");
  add_common(adc, adc_flags, true, false);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
  gradcheck->add_option("--seed", gradcheck_seed, "seed for the check corpus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) {
      report_written(run_synth(resolve(synth_flags)));
    } else if (train->parsed()) {
      report_written(run_train(resolve(train_flags)));
    } else if (eval->parsed()) {
      report_written(run_eval(resolve(eval_flags)));
    } else if (aqs->parsed()) {
      report_written(run_ablate_query_strategy(resolve(aqs_flags)));
    } else if (adc->parsed()) {
      report_written(run_ablate_drop_clothes(resolve(adc_flags)));
    } else if (gradcheck->parsed()) {
      std::uint64_t seed = 1;
      try {
        seed = std::stoull(gradcheck_seed);
      } catch (const std::exception&) {
        throw ConfigError("gradcheck --seed expects an integer, got '" + gradcheck_seed + "'");
      }
      const GradCheckResult result = run_gradient_checks(seed);
      print_gradcheck(result, std::cout);
      return result.pass ? 0 : 2;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace divnorm
