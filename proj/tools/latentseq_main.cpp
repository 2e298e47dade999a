// latentseq command-line driver: synth-data | train | eval | bench |
// lattice-check | align. Exit codes: 0 success, 1 task error, 2 config error.

#include <CLI11.hpp>
#include <iostream>

#include "latentseq/cli.hpp"

using latentseq::cli::ConfigError;
using latentseq::cli::ExperimentConfig;

namespace {

struct CommonArgs {
  std::string config_path;
  std::int64_t seed = -1;
  std::string out_dir;
  int threads = 0;

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ExperimentConfig::from_file(config_path);
    if (seed >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed);
      cfg.seed_set = true;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (threads > 0) cfg.threads = threads;
    return cfg;
  }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", args.seed, "random seed (mandatory here or in the config)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads, "worker thread bound");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-variable sequence modeling toolkit"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, bench_args, check_args, align_args;
  int synth_n = 0;
  std::string eval_checkpoint, eval_data;
  std::string align_checkpoint, align_input;
  int align_index = 0;
  bool align_json = false;

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic corpus");
  add_common(synth, synth_args);
  synth->add_option("-n,--n", synth_n, "number of instances");

  auto* train = app.add_subcommand("train", "run the task named in the config");
  add_common(train, train_args);

  auto* eval = app.add_subcommand("eval", "evaluate a segmodel checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path prefix");
  eval->add_option("--data", eval_data, "JSONL corpus to evaluate on");

  auto* bench = app.add_subcommand("bench", "estimator benchmark (CSV)");
  add_common(bench, bench_args);

  auto* check = app.add_subcommand("lattice-check", "brute-force equivalence suites");
  add_common(check, check_args);

  auto* align = app.add_subcommand("align", "segment/record alignment trace");
  add_common(align, align_args);
  align->add_option("--checkpoint", align_checkpoint, "checkpoint path prefix")
      ->required();
  align->add_option("--input", align_input, "JSONL input corpus")->required();
  align->add_option("--index", align_index, "line index into the input");
  align->add_flag("--json", align_json, "machine-readable output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto cfg = synth_args.resolve();
      if (synth_n > 0) cfg.n_instances = synth_n;
      latentseq::cli::run_synth_data(cfg);
    } else if (train->parsed()) {
      latentseq::cli::run_train(train_args.resolve());
    } else if (eval->parsed()) {
      auto cfg = eval_args.resolve();
      if (!eval_checkpoint.empty()) cfg.checkpoint = eval_checkpoint;
      if (!eval_data.empty()) cfg.valid_path = eval_data;
      latentseq::cli::run_eval(cfg);
      std::cout << "eval metrics written to " << cfg.out_dir << "/eval.json\n";
    } else if (bench->parsed()) {
      latentseq::cli::run_bench(bench_args.resolve());
    } else if (check->parsed()) {
      auto cfg = check_args.resolve();
      double max_dev = 0.0;
      auto report = latentseq::cli::lattice_check_report(
          cfg.seed, cfg.check_instances, cfg.threads, &max_dev);
      std::cout << report;
      latentseq::cli::run_lattice_check(cfg);
    } else if (align->parsed()) {
      auto data = latentseq::cli::read_jsonl(align_input);
      if (align_index < 0 || align_index >= static_cast<int>(data.size()))
        throw ConfigError("align: --index out of range");
      std::cout << latentseq::cli::align_report(align_checkpoint,
                                                data[align_index], align_json);
    }
  } catch (const ConfigError& e) {
    std::cerr << "{\"error\": \"config\", \"message\": \"" << e.what() << "\"}\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": \"task\", \"message\": \"" << e.what() << "\"}\n";
    return 1;
  }
  return 0;
}
