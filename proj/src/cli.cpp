#include "latentseq/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "latentseq/estimators.hpp"
#include "latentseq/lattice.hpp"
#include "latentseq/pointer.hpp"
#include "latentseq/trainers.hpp"

namespace latentseq::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using segmodel::Instance;
using segmodel::SegModel;
using segmodel::SegModelConfig;
using segmodel::Vocab;

// ---------------------------------------------------------------------------
// config

namespace {

const std::set<std::string> kTasks = {"segmodel", "vrs", "backtranslation",
                                      "estimator-bench", "lattice-check"};

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  maybe(j, "task", c.task);
  if (j.contains("seed")) {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.seed_set = true;
  }
  maybe(j, "embed", c.embed);
  maybe(j, "hidden", c.hidden);
  maybe(j, "max_seg_len", c.max_seg_len);
  maybe(j, "top_k", c.top_k);
  maybe(j, "anneal_horizon", c.anneal_horizon);
  maybe(j, "free_bits_eps", c.free_bits_eps);
  maybe(j, "tau_start", c.tau_start);
  maybe(j, "tau_end", c.tau_end);
  maybe(j, "tau_steps", c.tau_steps);
  maybe(j, "eta_offset", c.eta_offset);
  maybe(j, "gamma", c.gamma);
  maybe(j, "lr", c.lr);
  maybe(j, "clip", c.clip);
  maybe(j, "epochs", c.epochs);
  maybe(j, "beam", c.beam);
  maybe(j, "max_decode_tokens", c.max_decode_tokens);
  maybe(j, "vrs_eps_per_token", c.vrs_eps_per_token);
  maybe(j, "vrs_lambda", c.vrs_lambda);
  maybe(j, "vrs_pretrain_steps", c.vrs_pretrain_steps);
  maybe(j, "vrs_steps", c.vrs_steps);
  maybe(j, "bench_samples", c.bench_samples);
  maybe(j, "bench_trials", c.bench_trials);
  maybe(j, "bt_iters", c.bt_iters);
  maybe(j, "bt_labeled", c.bt_labeled);
  maybe(j, "bt_unlabeled", c.bt_unlabeled);
  maybe(j, "bt_validation", c.bt_validation);
  maybe(j, "bt_init_epochs", c.bt_init_epochs);
  maybe(j, "bt_phase_epochs", c.bt_phase_epochs);
  maybe(j, "bt_beam", c.bt_beam);
  maybe(j, "bt_embed", c.bt_embed);
  maybe(j, "bt_hidden", c.bt_hidden);
  maybe(j, "check_instances", c.check_instances);
  maybe(j, "n_instances", c.n_instances);
  maybe(j, "train_path", c.train_path);
  maybe(j, "valid_path", c.valid_path);
  maybe(j, "out_dir", c.out_dir);
  maybe(j, "checkpoint", c.checkpoint);
  maybe(j, "threads", c.threads);
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["task"] = task;
  j["seed"] = seed;
  j["embed"] = embed;
  j["hidden"] = hidden;
  j["max_seg_len"] = max_seg_len;
  j["top_k"] = top_k;
  j["anneal_horizon"] = anneal_horizon;
  j["free_bits_eps"] = free_bits_eps;
  j["tau_start"] = tau_start;
  j["tau_end"] = tau_end;
  j["tau_steps"] = tau_steps;
  j["eta_offset"] = eta_offset;
  j["gamma"] = gamma;
  j["lr"] = lr;
  j["clip"] = clip;
  j["epochs"] = epochs;
  j["beam"] = beam;
  j["max_decode_tokens"] = max_decode_tokens;
  j["vrs_eps_per_token"] = vrs_eps_per_token;
  j["vrs_lambda"] = vrs_lambda;
  j["vrs_pretrain_steps"] = vrs_pretrain_steps;
  j["vrs_steps"] = vrs_steps;
  j["bench_samples"] = bench_samples;
  j["bench_trials"] = bench_trials;
  j["bt_iters"] = bt_iters;
  j["bt_labeled"] = bt_labeled;
  j["bt_unlabeled"] = bt_unlabeled;
  j["bt_validation"] = bt_validation;
  j["bt_init_epochs"] = bt_init_epochs;
  j["bt_phase_epochs"] = bt_phase_epochs;
  j["bt_beam"] = bt_beam;
  j["bt_embed"] = bt_embed;
  j["bt_hidden"] = bt_hidden;
  j["check_instances"] = check_instances;
  j["n_instances"] = n_instances;
  j["train_path"] = train_path;
  j["valid_path"] = valid_path;
  j["out_dir"] = out_dir;
  j["checkpoint"] = checkpoint;
  j["threads"] = threads;
  return j.dump(2);
}

void ExperimentConfig::validate() const {
  if (!seed_set) throw ConfigError("config: seed is mandatory");
  if (!task.empty() && !kTasks.count(task))
    throw ConfigError("config: unknown task '" + task + "'");
  auto need_path = [](const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("config: missing ") + what);
    if (!fs::exists(p))
      throw ConfigError(std::string("config: ") + what + " does not exist: " + p);
  };
  if (task == "segmodel") {
    need_path(train_path, "train_path");
    need_path(valid_path, "valid_path");
  }
  if (task == "vrs") need_path(train_path, "train_path");
}

// ---------------------------------------------------------------------------
// synthetic corpus

namespace {

struct SlotSpec {
  const char* slot;
  std::vector<const char*> values;
  std::vector<const char*> templates;  // "~" marks the value position
};

const std::vector<SlotSpec>& slot_specs() {
  static const std::vector<SlotSpec> specs = {
      {"name",
       {"cotto", "clowns", "aromi", "fitzbillies", "strada", "zizzi",
        "wildwood", "bibimbap house", "taste of cambridge", "the mill",
        "the phoenix", "loch fyne"},
       {"~"}},
      {"eattype", {"pub", "restaurant", "coffee shop"}, {"is a ~", "a ~"}},
      {"food",
       {"french", "english", "italian", "japanese", "indian", "chinese",
        "fast food"},
       {"serves ~", "offering ~"}},
      {"price",
       {"cheap", "moderate", "high", "less than 20", "20 to 25",
        "more than 30"},
       {"with ~ prices", "priced ~"}},
      {"rating",
       {"low", "average", "high", "1 out of 5", "3 out of 5", "5 out of 5"},
       {"rated ~", "customer rating ~"}},
      {"area", {"riverside", "city centre"}, {"in the ~", "located in ~"}},
      {"family", {"family friendly", "child free"}, {"it is ~", "~"}},
      {"near",
       {"burger king", "rainbow vegetarian cafe", "all bar one",
        "the sorrento", "cafe sicilia", "express by holiday inn", "the bakers",
        "ranch"},
       {"near ~"}},
  };
  return specs;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::vector<RawInstance> synth_data(std::uint64_t seed, int n) {
  if (n < 1) throw ConfigError("synth_data: n must be >= 1");
  const auto& specs = slot_specs();
  auto rng = util::rng_stream(seed, 0xdada);
  std::uniform_int_distribution<int> k_dist(3, 8);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<RawInstance> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    RawInstance inst;
    int k = k_dist(rng);
    std::vector<int> slot_order(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) slot_order[s] = static_cast<int>(s);
    std::shuffle(slot_order.begin(), slot_order.end(), rng);
    slot_order.resize(k);

    for (int s : slot_order) {
      const auto& spec = specs[s];
      const char* value = spec.values[rng() % spec.values.size()];
      inst.records.push_back({spec.slot, value});
    }
    // realization order independent of the record listing order
    std::vector<int> realize(k);
    for (int r = 0; r < k; ++r) realize[r] = r;
    std::shuffle(realize.begin(), realize.end(), rng);

    for (std::size_t o = 0; o < realize.size(); ++o) {
      int r = realize[o];
      const auto& spec = specs[slot_order[r]];
      const char* tpl = spec.templates[rng() % spec.templates.size()];
      int start = static_cast<int>(inst.text.size());
      for (const auto& tok : split_tokens(tpl)) {
        if (tok == "~")
          for (const auto& vt : split_tokens(inst.records[r].value))
            inst.text.push_back(vt);
        else
          inst.text.push_back(tok);
      }
      inst.gold.push_back({start, static_cast<int>(inst.text.size()), r + 1});
      // occasional null connective between record segments
      if (o + 1 < realize.size() && ud(rng) < 0.2) {
        int cs = static_cast<int>(inst.text.size());
        inst.text.push_back(ud(rng) < 0.5 ? "and" : "also");
        inst.gold.push_back({cs, cs + 1, 0});
      }
    }
    int fs = static_cast<int>(inst.text.size());
    inst.text.push_back(".");
    inst.text.push_back("<eos>");
    inst.gold.push_back({fs, fs + 2, 0});
    out.push_back(std::move(inst));
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<RawInstance>& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_jsonl: cannot open " + path);
  for (const auto& inst : data) {
    json j;
    auto records = json::array();
    for (const auto& r : inst.records) records.push_back({r.slot, r.value});
    j["records"] = records;
    j["text"] = inst.text;
    auto gold = json::array();
    for (const auto& g : inst.gold) gold.push_back({g[0], g[1], g[2]});
    j["gold_segments"] = gold;
    out << j.dump() << "\n";
  }
}

std::vector<RawInstance> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_jsonl: cannot open " + path);
  std::vector<RawInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    RawInstance inst;
    for (const auto& r : j.at("records"))
      inst.records.push_back({r.at(0).get<std::string>(), r.at(1).get<std::string>()});
    inst.text = j.at("text").get<std::vector<std::string>>();
    for (const auto& g : j.at("gold_segments"))
      inst.gold.push_back({g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<int>()});
    out.push_back(std::move(inst));
  }
  return out;
}

Vocab build_vocab(const std::vector<RawInstance>& corpus) {
  std::vector<std::vector<std::string>> texts;
  for (const auto& inst : corpus) {
    texts.push_back(inst.text);
    for (const auto& r : inst.records) {
      texts.push_back({r.slot});
      texts.push_back(split_tokens(r.value));
    }
  }
  return Vocab::build(texts);
}

Instance to_ids(const RawInstance& raw, const Vocab& vocab) {
  Instance inst;
  for (const auto& r : raw.records) {
    segmodel::Record rec;
    rec.slot = vocab.lookup(r.slot);
    for (const auto& vt : split_tokens(r.value))
      rec.value.push_back(vocab.lookup(vt));
    inst.records.records.push_back(std::move(rec));
  }
  for (const auto& tok : raw.text)
    inst.text.tokens.push_back(vocab.lookup(tok));
  for (const auto& g : raw.gold) inst.gold.push_back({g[0], g[1], g[2]});
  return inst;
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

bool contains_span(const std::vector<int>& haystack, int lo, int hi,
                   const std::vector<int>& needle) {
  if (needle.empty()) return true;
  for (int s = lo; s + static_cast<int>(needle.size()) <= hi; ++s) {
    bool ok = true;
    for (std::size_t k = 0; k < needle.size(); ++k)
      if (haystack[s + k] != needle[k]) {
        ok = false;
        break;
      }
    if (ok) return true;
  }
  return false;
}

}  // namespace

std::string SegEvalMetrics::to_json() const {
  json j;
  j["n"] = n;
  j["decode_failures"] = decode_failures;
  j["coverage"] = coverage;
  j["repetition_count"] = repetition_count;
  j["faithfulness"] = faithfulness;
  j["exact_match"] = exact_match;
  j["mean_expected_segments"] = mean_expected_segments;
  j["mean_abs_expected_minus_k"] = mean_abs_expected_minus_k;
  j["boundary_f1"] = boundary_f1;
  return j.dump(2);
}

SegEvalMetrics evaluate_segmodel(const SegModel& model, const Vocab& vocab,
                                 const std::vector<RawInstance>& corpus,
                                 int threads,
                                 const segmodel::DecodeOptions& opts) {
  struct Row {
    bool failed = false;
    bool covered = false;
    int repetitions = 0;
    int segments_non_null = 0;
    int segments_faithful = 0;
    bool exact = false;
    double expected_segments = 0.0;
    double abs_minus_k = 0.0;
    double boundary_f1 = 0.0;
  };
  std::vector<Row> rows(corpus.size());

  util::parallel_for(static_cast<int>(corpus.size()), threads, [&](int i) {
    Row& row = rows[i];
    Instance inst = to_ids(corpus[i], vocab);
    int k = inst.records.K();
    try {
      auto res = model.constrained_decode(inst.records, opts);
      std::set<int> seen;
      for (std::size_t o = 0; o < res.path.labels.size(); ++o) {
        int label = res.path.labels[o];
        if (label == 0) continue;
        if (seen.count(label)) row.repetitions += 1;
        seen.insert(label);
        row.segments_non_null += 1;
        const auto& value = inst.records.records[label - 1].value;
        if (contains_span(res.tokens, res.path.cuts[o], res.path.cuts[o + 1],
                          value))
          row.segments_faithful += 1;
      }
      row.covered = static_cast<int>(seen.size()) == k && row.repetitions == 0;
      row.exact = res.tokens == inst.text.tokens;
    } catch (const std::runtime_error&) {
      row.failed = true;
    }
    // posterior statistics on the gold text
    auto pots = model.score_tables(inst.records, inst.text);
    row.expected_segments = lattice::semimarkov_expected_segments(pots);
    row.abs_minus_k = std::fabs(row.expected_segments - k);
    auto map_path = lattice::semimarkov_map(pots);
    std::set<int> pred_cuts(map_path.cuts.begin() + 1, map_path.cuts.end() - 1);
    std::set<int> gold_cuts;
    for (const auto& g : inst.gold)
      if (g.start != 0) gold_cuts.insert(g.start);
    int hit = 0;
    for (int c : pred_cuts) hit += gold_cuts.count(c);
    if (pred_cuts.empty() && gold_cuts.empty())
      row.boundary_f1 = 1.0;
    else if (!pred_cuts.empty() && !gold_cuts.empty()) {
      double p = static_cast<double>(hit) / pred_cuts.size();
      double r = static_cast<double>(hit) / gold_cuts.size();
      row.boundary_f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
  });

  SegEvalMetrics m;
  m.n = static_cast<int>(corpus.size());
  int covered = 0, exact = 0, segs = 0, faithful = 0;
  for (const auto& row : rows) {
    m.decode_failures += row.failed;
    covered += row.covered;
    m.repetition_count += row.repetitions;
    segs += row.segments_non_null;
    faithful += row.segments_faithful;
    exact += row.exact;
    m.mean_expected_segments += row.expected_segments;
    m.mean_abs_expected_minus_k += row.abs_minus_k;
    m.boundary_f1 += row.boundary_f1;
  }
  m.coverage = static_cast<double>(covered) / m.n;
  m.faithfulness = segs > 0 ? static_cast<double>(faithful) / segs : 0.0;
  m.exact_match = static_cast<double>(exact) / m.n;
  m.mean_expected_segments /= m.n;
  m.mean_abs_expected_minus_k /= m.n;
  m.boundary_f1 /= m.n;
  return m;
}

// ---------------------------------------------------------------------------
// tasks

namespace {

void ensure_out_dir(const ExperimentConfig& config) {
  if (!config.out_dir.empty()) fs::create_directories(config.out_dir);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << content;
}

void write_manifest(const ExperimentConfig& config) {
  json j;
  j["version"] = kVersion;
  j["config"] = json::parse(config.to_json());
  write_text((fs::path(config.out_dir) / "run_manifest.json").string(),
             j.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void train_segmodel_task(const ExperimentConfig& config) {
  auto train_raw = read_jsonl(config.train_path);
  auto valid_raw = read_jsonl(config.valid_path);
  std::vector<RawInstance> all = train_raw;
  all.insert(all.end(), valid_raw.begin(), valid_raw.end());
  Vocab vocab = build_vocab(all);

  SegModelConfig mc{vocab.size(), config.embed, config.hidden,
                    config.max_seg_len};
  SegModel model(mc, config.seed);
  nn::Adam opt(nn::values_of({&model.params()}), config.lr, 0.9, 0.999, 1e-8,
               config.clip);

  std::vector<Instance> train;
  train.reserve(train_raw.size());
  for (const auto& raw : train_raw) train.push_back(to_ids(raw, vocab));

  std::ostringstream csv;
  csv << "epoch,mean_loss,mean_expected_segments\n";
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    double expected_sum = 0.0;
    for (const auto& inst : train) {
      double eta = inst.records.K() + config.eta_offset;
      auto tables = model.score_tables_value(inst.records, inst.text);
      ndgrad::Value nll = ndgrad::neg(lattice::semimarkov_forward(tables));
      ndgrad::Value expected = lattice::semimarkov_expected_segments(tables);
      ndgrad::Value margin = ndgrad::vmax_const(
          ndgrad::vabs(ndgrad::add_const(expected, -eta)), config.gamma);
      ndgrad::Value loss = ndgrad::add(nll, margin);
      loss_sum += loss.item();
      expected_sum += expected.item();
      ndgrad::backward(loss);
      opt.step();
    }
    csv << epoch << "," << fmt(loss_sum / train.size()) << ","
        << fmt(expected_sum / train.size()) << "\n";
  }
  write_text((fs::path(config.out_dir) / "metrics.csv").string(), csv.str());

  auto prefix = (fs::path(config.out_dir) / "model").string();
  nn::save_checkpoint(model.params(), prefix,
                      segmodel::config_to_json(mc, vocab));

  segmodel::DecodeOptions dopts;
  dopts.beam = config.beam;
  dopts.max_tokens = config.max_decode_tokens;
  auto metrics = evaluate_segmodel(model, vocab, valid_raw, config.threads, dopts);
  write_text((fs::path(config.out_dir) / "eval.json").string(),
             metrics.to_json() + "\n");
}

void train_vrs_task(const ExperimentConfig& config) {
  auto raw = read_jsonl(config.train_path);
  Vocab vocab = build_vocab(raw);
  SegModelConfig mc{vocab.size(), config.embed, config.hidden,
                    config.max_seg_len};
  SegModel model(mc, config.seed);
  trainers::VrsTrainer trainer(&model, config.seed, config.lr);

  std::vector<Instance> data;
  for (const auto& r : raw) data.push_back(to_ids(r, vocab));

  std::ostringstream jsonl;
  auto rng = util::rng_stream(config.seed, 0x7175);
  int total = config.vrs_pretrain_steps + config.vrs_steps;
  for (int s = 0; s < total; ++s) {
    const auto& inst = data[s % data.size()];
    int n_src = 0;
    for (const auto& rec : inst.records.records)
      n_src += 1 + static_cast<int>(rec.value.size());
    double eps = config.vrs_eps_per_token * n_src;
    bool pretrain = s < config.vrs_pretrain_steps;
    auto stats = trainer.step(inst, eps, config.vrs_lambda, pretrain, rng);
    json row;
    row["step"] = s;
    row["mode"] = pretrain ? "pretrain" : "cmi";
    row["objective"] = stats.objective;
    row["loglik"] = stats.loglik;
    row["kl"] = stats.kl;
    jsonl << row.dump() << "\n";
  }
  write_text((fs::path(config.out_dir) / "vrs_metrics.jsonl").string(),
             jsonl.str());
}

void train_bt_task(const ExperimentConfig& config) {
  auto task = trainers::make_bt_task(config.seed, config.bt_labeled,
                                     config.bt_unlabeled, config.bt_validation);
  trainers::BtConfig bc;
  bc.vocab = task.vocab;
  bc.embed = config.bt_embed;
  bc.hidden = config.bt_hidden;
  bc.lr = config.lr;
  bc.clip = config.clip;
  bc.beam = config.bt_beam;
  bc.phase_epochs = config.bt_phase_epochs;
  trainers::BtState state(bc, config.seed);
  state.labeled = task.labeled;
  state.unlabeled_tgt = task.unlabeled_tgt;
  state.unlabeled_src = task.unlabeled_src;
  state.validation = task.validation;

  trainers::bt_init(state, config.bt_init_epochs);
  std::vector<trainers::BtIterationMetrics> rows;
  rows.push_back(trainers::bt_metrics(state));  // iter 0: init-only baseline
  auto trained = trainers::bt_train(state, config.bt_iters);
  rows.insert(rows.end(), trained.begin(), trained.end());
  write_text((fs::path(config.out_dir) / "bt_metrics.jsonl").string(),
             trainers::bt_metrics_jsonl(rows));
}

}  // namespace

void run_synth_data(const ExperimentConfig& config) {
  if (!config.seed_set) throw ConfigError("synth-data: seed is mandatory");
  ensure_out_dir(config);
  auto data = synth_data(config.seed, config.n_instances);
  write_jsonl((fs::path(config.out_dir) / "corpus.jsonl").string(), data);
  write_manifest(config);
}

void run_train(const ExperimentConfig& config) {
  config.validate();
  if (config.task.empty()) throw ConfigError("train: task is mandatory");
  ensure_out_dir(config);
  if (config.task == "segmodel")
    train_segmodel_task(config);
  else if (config.task == "vrs")
    train_vrs_task(config);
  else if (config.task == "backtranslation")
    train_bt_task(config);
  else if (config.task == "estimator-bench")
    return run_bench(config);
  else if (config.task == "lattice-check")
    return run_lattice_check(config);
  write_manifest(config);
}

void run_eval(const ExperimentConfig& config) {
  if (!config.seed_set) throw ConfigError("eval: seed is mandatory");
  if (config.checkpoint.empty() || config.valid_path.empty())
    throw ConfigError("eval: checkpoint and valid_path are required");
  ensure_out_dir(config);
  SegModelConfig mc;
  Vocab vocab;
  segmodel::config_from_json(nn::read_checkpoint_extra(config.checkpoint), &mc,
                             &vocab);
  SegModel model(mc, config.seed);
  nn::load_checkpoint(model.params(), config.checkpoint);
  segmodel::DecodeOptions dopts;
  dopts.beam = config.beam;
  dopts.max_tokens = config.max_decode_tokens;
  auto metrics = evaluate_segmodel(model, vocab, read_jsonl(config.valid_path),
                                   config.threads, dopts);
  write_text((fs::path(config.out_dir) / "eval.json").string(),
             metrics.to_json() + "\n");
  write_manifest(config);
}

void run_bench(const ExperimentConfig& config) {
  if (!config.seed_set) throw ConfigError("bench: seed is mandatory");
  ensure_out_dir(config);
  auto results = estimators::estimator_bench(estimators::default_bench_cases(),
                                             config.bench_trials,
                                             config.bench_samples, config.seed,
                                             config.threads);
  write_text((fs::path(config.out_dir) / "estimator_bench.csv").string(),
             estimators::bench_csv(results));
  write_manifest(config);
}

std::string lattice_check_report(std::uint64_t seed, int n_instances,
                                 int threads, double* max_dev_out) {
  std::vector<lattice::SegmentalPotentials> segs;
  std::vector<lattice::HmmPotentials> hmms;
  for (int i = 0; i < n_instances; ++i) {
    auto rng = util::rng_stream(seed, static_cast<std::uint64_t>(i));
    segs.push_back(lattice::random_segmental(rng, 1 + static_cast<int>(rng() % 8),
                                             static_cast<int>(rng() % 4),
                                             1 + static_cast<int>(rng() % 3)));
    hmms.push_back(lattice::random_hmm(rng, 1 + static_cast<int>(rng() % 6),
                                       1 + static_cast<int>(rng() % 5)));
  }
  auto seg_dp = lattice::semimarkov_forward_batch(segs, threads);
  auto seg_exp = lattice::semimarkov_expected_segments_batch(segs, threads);
  auto hmm_dp = lattice::hmm_forward_batch(hmms, threads);

  std::vector<double> seg_dev(n_instances), exp_dev(n_instances),
      hmm_dev(n_instances);
  util::parallel_for(n_instances, threads, [&](int i) {
    seg_dev[i] =
        std::fabs(seg_dp[i] - lattice::brute_force_log_marginal(segs[i]));
    exp_dev[i] = std::fabs(seg_exp[i] -
                           lattice::brute_force_expected_segments(segs[i]));
    hmm_dev[i] =
        std::fabs(hmm_dp[i] - lattice::brute_force_log_marginal(hmms[i]));
  });
  double max_seg = *std::max_element(seg_dev.begin(), seg_dev.end());
  double max_exp = *std::max_element(exp_dev.begin(), exp_dev.end());
  double max_hmm = *std::max_element(hmm_dev.begin(), hmm_dev.end());
  if (max_dev_out) *max_dev_out = std::max({max_seg, max_exp, max_hmm});

  std::ostringstream os;
  os << "lattice-check over " << n_instances << " random instances per family\n";
  char line[160];
  std::snprintf(line, sizeof(line),
                "semimarkov forward vs enumeration: max |dev| = %.3e\n", max_seg);
  os << line;
  std::snprintf(line, sizeof(line),
                "expected segments vs enumeration:  max |dev| = %.3e\n", max_exp);
  os << line;
  std::snprintf(line, sizeof(line),
                "hmm forward vs enumeration:        max |dev| = %.3e\n", max_hmm);
  os << line;
  return os.str();
}

void run_lattice_check(const ExperimentConfig& config) {
  if (!config.seed_set) throw ConfigError("lattice-check: seed is mandatory");
  ensure_out_dir(config);
  double max_dev = 0.0;
  auto report = lattice_check_report(config.seed, config.check_instances,
                                     config.threads, &max_dev);
  json j;
  j["instances"] = config.check_instances;
  j["max_deviation"] = max_dev;
  j["tolerance"] = 1e-9;
  j["pass"] = max_dev <= 1e-9;
  write_text((fs::path(config.out_dir) / "lattice_check.json").string(),
             j.dump(2) + "\n");
  write_text((fs::path(config.out_dir) / "lattice_check.txt").string(), report);
  write_manifest(config);
  if (max_dev > 1e-9)
    throw std::runtime_error("lattice-check: deviation above tolerance");
}

void run(const ExperimentConfig& config) {
  config.validate();
  if (config.task == "estimator-bench")
    run_bench(config);
  else if (config.task == "lattice-check")
    run_lattice_check(config);
  else
    run_train(config);
}

// ---------------------------------------------------------------------------
// alignment inspection

std::string align_report(const std::string& checkpoint_prefix,
                         const RawInstance& input, bool as_json) {
  SegModelConfig mc;
  Vocab vocab;
  segmodel::config_from_json(nn::read_checkpoint_extra(checkpoint_prefix), &mc,
                             &vocab);
  SegModel model(mc, 0);
  nn::load_checkpoint(model.params(), checkpoint_prefix);

  Instance inst = to_ids(input, vocab);
  auto res = model.constrained_decode(inst.records);

  auto record_name = [&](int r) {
    return r == 0 ? std::string("null") : input.records[r - 1].slot;
  };
  // source tokens in flat order, for naming aligned positions
  std::vector<std::string> flat;
  for (const auto& r : input.records) {
    flat.push_back(r.slot);
    for (const auto& vt : split_tokens(r.value)) flat.push_back(vt);
  }

  if (as_json) {
    json j;
    auto segments = json::array();
    for (std::size_t o = 0; o < res.path.labels.size(); ++o) {
      json seg;
      seg["record"] = record_name(res.path.labels[o]);
      auto toks = json::array();
      for (int t = res.path.cuts[o]; t < res.path.cuts[o + 1]; ++t)
        toks.push_back(vocab.tokens[res.tokens[t]]);
      seg["tokens"] = toks;
      segments.push_back(seg);
    }
    j["segments"] = segments;
    auto tokens = json::array();
    for (const auto& step : res.steps) {
      json tok;
      tok["token"] = vocab.tokens[step.token];
      tok["record"] = record_name(step.record);
      if (step.record != 0) {
        auto post = pointer::posterior_alignment(step.state, step.token);
        json posterior;
        posterior["gen"] = post.gen;
        auto rows = json::array();
        for (std::size_t i = 0; i < post.positions.size(); ++i) {
          json r;
          r["source"] = flat[step.source_positions[i]];
          r["posterior"] = post.positions[i];
          r["aligned"] = post.aligned[i];
          rows.push_back(r);
        }
        posterior["positions"] = rows;
        tok["posterior"] = posterior;
      }
      tokens.push_back(tok);
    }
    j["tokens"] = tokens;
    return j.dump(2) + "\n";
  }

  std::ostringstream os;
  os << "decoded segments (record -> tokens)\n";
  for (std::size_t o = 0; o < res.path.labels.size(); ++o) {
    os << "  " << record_name(res.path.labels[o]) << " -> ";
    for (int t = res.path.cuts[o]; t < res.path.cuts[o + 1]; ++t)
      os << vocab.tokens[res.tokens[t]] << (t + 1 < res.path.cuts[o + 1] ? " " : "");
    os << "\n";
  }
  os << "\ntoken            record      top-aligned          p(align)\n";
  for (const auto& step : res.steps) {
    std::string top = "-";
    double p_top = 0.0;
    if (step.record != 0) {
      auto post = pointer::posterior_alignment(step.state, step.token);
      for (std::size_t i = 0; i < post.aligned.size(); ++i)
        if (post.aligned[i] > p_top) {
          p_top = post.aligned[i];
          top = flat[step.source_positions[i]];
        }
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %-11s %-20s %.4f\n",
                  vocab.tokens[step.token].c_str(),
                  record_name(step.record).c_str(), top.c_str(), p_top);
    os << line;
  }
  return os.str();
}

}  // namespace latentseq::cli
