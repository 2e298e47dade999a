#ifndef LATENTSEQ_CLI_HPP
#define LATENTSEQ_CLI_HPP

// Experiment orchestration: synthetic-data generation, training, evaluation,
// estimator benchmarking and alignment inspection. All artifact I/O lives
// here so every run is reproducible from (config, seed).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "latentseq/segmodel.hpp"

namespace latentseq::cli {

inline constexpr const char* kVersion = "latentseq 0.1.0";

// thrown for malformed configs / missing paths (exit code 2)
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string task;  // segmodel | vrs | backtranslation | estimator-bench | lattice-check
  std::uint64_t seed = 0;
  bool seed_set = false;

  // model sizes
  int embed = 32;
  int hidden = 32;
  int max_seg_len = 6;  // L
  int top_k = 6;

  // schedules
  std::int64_t anneal_horizon = 1000;
  double free_bits_eps = 0.01;
  double tau_start = 2.0;
  double tau_end = 0.1;
  std::int64_t tau_steps = 1000;

  // granularity regularizer: eta = K + eta_offset
  double eta_offset = 0.0;
  double gamma = 1.0;

  // optimizer
  double lr = 1e-3;
  double clip = 5.0;
  int epochs = 4;

  // decoding
  int beam = 1;
  int max_decode_tokens = 80;

  // vrs
  double vrs_eps_per_token = 0.15;
  double vrs_lambda = 1.0;
  int vrs_pretrain_steps = 50;
  int vrs_steps = 200;

  // estimator bench
  std::int64_t bench_samples = 100000;
  int bench_trials = 1;

  // back-translation
  int bt_iters = 4;
  int bt_labeled = 10;
  int bt_unlabeled = 500;
  int bt_validation = 100;
  int bt_init_epochs = 200;
  int bt_phase_epochs = 1;
  int bt_beam = 3;
  int bt_embed = 24;
  int bt_hidden = 48;

  // lattice-check
  int check_instances = 1000;

  // synth-data
  int n_instances = 1000;

  // paths
  std::string train_path;
  std::string valid_path;
  std::string out_dir = ".";
  std::string checkpoint;

  int threads = 1;

  static ExperimentConfig from_json(const std::string& json_text);
  static ExperimentConfig from_file(const std::string& path);
  std::string to_json() const;
  // checks task name, mandatory seed, and that referenced paths exist
  void validate() const;
};

// ---------------------------------------------------------------------------
// synthetic corpus (restaurant-domain micro data-to-text)

struct RawRecord {
  std::string slot;
  std::string value;  // space-separated tokens, copied verbatim into the text
};

struct RawInstance {
  std::vector<RawRecord> records;
  std::vector<std::string> text;               // ends with ". <eos>"
  std::vector<std::array<int, 3>> gold;        // {start, end, record_index}
};

// n instances with K uniform in [3,8]; deterministic in seed
std::vector<RawInstance> synth_data(std::uint64_t seed, int n);
void write_jsonl(const std::string& path, const std::vector<RawInstance>& data);
std::vector<RawInstance> read_jsonl(const std::string& path);

// string corpus -> id corpus under a shared vocab
segmodel::Vocab build_vocab(const std::vector<RawInstance>& corpus);
segmodel::Instance to_ids(const RawInstance& raw, const segmodel::Vocab& vocab);

// ---------------------------------------------------------------------------
// evaluation

struct SegEvalMetrics {
  int n = 0;
  int decode_failures = 0;
  double coverage = 0.0;         // fraction of instances covering all records
  int repetition_count = 0;      // repeated non-null records across the split
  double faithfulness = 0.0;     // value tokens verbatim inside their segment
  double exact_match = 0.0;
  double mean_expected_segments = 0.0;
  double mean_abs_expected_minus_k = 0.0;
  double boundary_f1 = 0.0;      // MAP segmentation of the gold text vs gold
  std::string to_json() const;
};

SegEvalMetrics evaluate_segmodel(const segmodel::SegModel& model,
                                 const segmodel::Vocab& vocab,
                                 const std::vector<RawInstance>& corpus,
                                 int threads = 1,
                                 const segmodel::DecodeOptions& opts = {});

// ---------------------------------------------------------------------------
// tasks (artifacts written under config.out_dir)

void run_synth_data(const ExperimentConfig& config);
void run_train(const ExperimentConfig& config);
void run_eval(const ExperimentConfig& config);
void run_bench(const ExperimentConfig& config);
void run_lattice_check(const ExperimentConfig& config);

// dispatches config.task like `train`; used by the `run`-style entry points
void run(const ExperimentConfig& config);

// human-readable (or JSON) segment/record trace with per-token posterior
// alignment for one input
std::string align_report(const std::string& checkpoint_prefix,
                         const RawInstance& input, bool as_json);

// "one pass/fail line per criterion" helper shared with the acceptance suite
std::string lattice_check_report(std::uint64_t seed, int n_instances,
                                 int threads, double* max_dev_out = nullptr);

}  // namespace latentseq::cli

#endif  // LATENTSEQ_CLI_HPP
