#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "latentseq/estimators.hpp"
#include "latentseq/lattice.hpp"
#include "latentseq/stats.hpp"
#include "latentseq/trainers.hpp"

using namespace latentseq;
using ndgrad::Value;
using trainers::BtConfig;
using trainers::BtState;
using trainers::TokenSeq;

namespace {

// time-invariant HMM parameterization over an observation vocabulary;
// theta = {init logits [K], trans logits [K][K], emis logits [K][O]}
struct HmmParamModel {
  int K, O;
  nn::ParamStore params;
  Value init_logits, trans_logits, emis_logits;

  HmmParamModel(int k, int o, std::uint64_t seed) : K(k), O(o) {
    auto rng = util::rng_stream(seed, 3);
    init_logits = params.add("init", {K}, rng, 0.5);
    trans_logits = params.add("trans", {K, K}, rng, 0.5);
    emis_logits = params.add("emis", {K, O}, rng, 0.5);
  }

  // build the lattice expression for one observation sequence
  lattice::HmmExpr expr(const std::vector<int>& obs) const {
    lattice::HmmExpr e;
    e.init = ndgrad::log_softmax(init_logits);
    // per-state emission log-probs, then gathered at the observed symbol
    std::vector<Value> emis_rows;
    for (int i = 0; i < K; ++i)
      emis_rows.push_back(ndgrad::log_softmax(ndgrad::row(emis_logits, i)));
    // column-normalized transitions: p(a_t = i | a_{t-1} = j)
    std::vector<Value> cols;
    for (int j = 0; j < K; ++j) {
      std::vector<int> idx;
      for (int i = 0; i < K; ++i) idx.push_back(i * K + j);
      cols.push_back(ndgrad::log_softmax(
          ndgrad::gather(ndgrad::reshape(trans_logits, {K * K}), idx)));
    }
    std::vector<Value> rows;
    for (int i = 0; i < K; ++i) {
      std::vector<Value> entries;
      for (int j = 0; j < K; ++j)
        entries.push_back(ndgrad::pick(cols[j], i));
      rows.push_back(ndgrad::concat_n(entries));
    }
    Value trans = ndgrad::stack_rows(rows);
    for (std::size_t t = 0; t < obs.size(); ++t) {
      e.trans.push_back(trans);
      std::vector<Value> em;
      for (int i = 0; i < K; ++i)
        em.push_back(ndgrad::pick(emis_rows[i], obs[t]));
      e.emit.push_back(ndgrad::concat_n(em));
    }
    return e;
  }
};

// sample sequences from a reference 2-state HMM with near-deterministic
// emissions: state 0 -> symbols {0,1}, state 1 -> symbols {2,3}
std::vector<std::vector<int>> sample_hmm_data(int n, int t_len,
                                              std::uint64_t seed) {
  auto rng = util::rng_stream(seed, 9);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    int state = ud(rng) < 0.5 ? 0 : 1;
    std::vector<int> obs;
    for (int t = 0; t < t_len; ++t) {
      double u = ud(rng);
      obs.push_back(state == 0 ? (u < 0.48 ? 0 : (u < 0.96 ? 1 : 2))
                               : (u < 0.48 ? 2 : (u < 0.96 ? 3 : 0)));
      if (ud(rng) < 0.1) state = 1 - state;
    }
    out.push_back(obs);
  }
  return out;
}

}  // namespace

TEST_CASE("em_fit drives the loss down and recovers emission structure") {
  auto data = sample_hmm_data(60, 12, 11);
  HmmParamModel model(2, 4, 12);
  auto builder = [&](int i) { return lattice::hmm_forward(model.expr(data[i])); };

  const int n_items = static_cast<int>(data.size());
  double loss0 = 0.0;
  for (int i = 0; i < n_items; ++i) loss0 -= builder(i).item();

  auto result = trainers::em_fit(model.params, builder, n_items, 3000, 0.05);
  REQUIRE(result.losses.size() == 3000);

  double loss1 = 0.0;
  for (int i = 0; i < n_items; ++i) loss1 -= builder(i).item();
  CHECK(loss1 < loss0);

  // windowed average is monotone nonincreasing (with slack)
  auto window_mean = [&](int lo) {
    double acc = 0.0;
    for (int i = lo; i < lo + 60; ++i) acc += result.losses[i];
    return acc / 60.0;
  };
  for (int lo = 0; lo + 120 <= 3000; lo += 60)
    CHECK(window_mean(lo + 60) <= window_mean(lo) + 0.05);

  // emission argmax structure of the generating HMM is recovered: one state
  // prefers symbols {0,1}, the other {2,3} (up to state permutation)
  auto em0 = util::softmax(std::vector<double>(
      model.emis_logits.data().begin(), model.emis_logits.data().begin() + 4));
  auto em1 = util::softmax(std::vector<double>(
      model.emis_logits.data().begin() + 4, model.emis_logits.data().end()));
  double low0 = em0[0] + em0[1], low1 = em1[0] + em1[1];
  CHECK(((low0 > 0.8 && low1 < 0.2) || (low1 > 0.8 && low0 < 0.2)));
}

TEST_CASE("one em step with lr -> 0 moves the loss by lr * ||grad||^2") {
  auto data = sample_hmm_data(4, 5, 21);
  HmmParamModel model(2, 4, 22);
  auto builder = [&](int i) { return lattice::hmm_forward(model.expr(data[i])); };

  // measure the squared gradient norm at the start
  Value log_z = builder(0);
  double loss_before = -log_z.item();
  ndgrad::backward(log_z);
  double grad_sq = 0.0;
  for (const auto& [name, p] : model.params.all())
    for (double g : p.grad()) grad_sq += g * g;
  model.params.zero_grad();

  const double lr = 1e-6;
  trainers::em_fit(model.params, builder, 4, 1, lr);
  double loss_after = -builder(0).item();
  double moved = loss_before - loss_after;
  CHECK(moved == doctest::Approx(lr * grad_sq).epsilon(1e-3));
}

TEST_CASE("em_fit trajectory equals manual gradient ascent bit for bit") {
  auto data = sample_hmm_data(6, 5, 31);
  HmmParamModel a(2, 4, 32), b(2, 4, 32);
  auto build_a = [&](int i) { return lattice::hmm_forward(a.expr(data[i])); };
  trainers::em_fit(a.params, build_a, 6, 25, 0.05);

  for (int s = 0; s < 25; ++s) {
    Value log_z = lattice::hmm_forward(b.expr(data[s % 6]));
    ndgrad::backward(log_z);
    nn::sgd_step(b.params, 0.05, /*ascend=*/true);
  }
  for (std::size_t i = 0; i < a.params.all().size(); ++i)
    CHECK(a.params.all()[i].second.data() == b.params.all()[i].second.data());
}

TEST_CASE("em_fit aborts on divergence with a diagnostic") {
  HmmParamModel model(2, 4, 41);
  auto builder = [&](int i) {
    return i < 2 ? lattice::hmm_forward(model.expr({0, 1}))
                 : Value::scalar(std::numeric_limits<double>::quiet_NaN());
  };
  CHECK_THROWS_AS(trainers::em_fit(model.params, builder, 4, 10, 0.01),
                  std::runtime_error);
}

TEST_CASE("bt_init: zero steps leave the state unchanged, training helps") {
  auto task = trainers::make_bt_task(71, 8, 30, 16);
  BtConfig cfg;
  cfg.vocab = task.vocab;
  cfg.embed = 16;
  cfg.hidden = 24;
  cfg.init_epochs = 0;
  BtState state(cfg, 71);
  state.labeled = task.labeled;
  state.unlabeled_tgt = task.unlabeled_tgt;
  state.unlabeled_src = task.unlabeled_src;
  state.validation = task.validation;

  auto before = state.model.forward_params().snapshot();
  trainers::bt_init(state, 0);
  CHECK(state.model.forward_params().snapshot() == before);

  // perplexity decreases in both directions after real initialization
  auto ce_on_labeled = [&](bool fwd) {
    double acc = 0.0;
    for (const auto& [x, y] : state.labeled)
      acc += fwd ? state.model.per_token_ce(true, x, y)
                 : state.model.per_token_ce(false, y, x);
    return acc / state.labeled.size();
  };
  double fwd0 = ce_on_labeled(true), bwd0 = ce_on_labeled(false);
  trainers::bt_init(state, 60);
  CHECK(ce_on_labeled(true) < fwd0);
  CHECK(ce_on_labeled(false) < bwd0);
}

TEST_CASE("bt phases: gradient blocking and pseudo-pair determinism") {
  auto task = trainers::make_bt_task(72, 8, 20, 10);
  BtConfig cfg;
  cfg.vocab = task.vocab;
  cfg.embed = 16;
  cfg.hidden = 24;
  cfg.phase_epochs = 1;
  BtState state(cfg, 72);
  state.labeled = task.labeled;
  state.unlabeled_tgt = task.unlabeled_tgt;
  state.unlabeled_src = task.unlabeled_src;
  state.validation = task.validation;
  trainers::bt_init(state, 40);

  // pseudo decodes are deterministic given seed and beam width
  auto p1 = state.model.beam_decode(false, task.unlabeled_tgt[0], 3, 20);
  auto p2 = state.model.beam_decode(false, task.unlabeled_tgt[0], 3, 20);
  CHECK(p1 == p2);

  // backward phase: P_b decoder parameters are bit-identical afterwards
  auto bdec_before = state.model.backward_params().snapshot();
  auto fdec_before = state.model.forward_params().snapshot();

  // forward loss on the pseudo pairs decreases within the phase
  std::vector<trainers::Pair> pseudo;
  for (const auto& t : state.unlabeled_tgt) {
    auto src = state.model.beam_decode(false, t, cfg.beam,
                                       static_cast<int>(t.size()) + 6);
    if (!src.empty()) pseudo.emplace_back(src, t);
  }
  auto pseudo_ce = [&]() {
    double acc = 0.0;
    for (const auto& [src, tgt] : pseudo)
      acc += state.model.per_token_ce(true, src, tgt);
    return acc / pseudo.size();
  };
  double ce_before = pseudo_ce();
  trainers::bt_backward_phase(state);
  CHECK(state.model.backward_params().snapshot() == bdec_before);
  CHECK(state.model.forward_params().snapshot() != fdec_before);
  CHECK(pseudo_ce() < ce_before);

  // mirror: forward phase leaves P_f decoder untouched
  auto fdec_now = state.model.forward_params().snapshot();
  trainers::bt_forward_phase(state);
  CHECK(state.model.forward_params().snapshot() == fdec_now);
}

TEST_CASE("bt_train records metrics rows and n_iters = 0 is the identity") {
  auto task = trainers::make_bt_task(73, 6, 12, 8);
  BtConfig cfg;
  cfg.vocab = task.vocab;
  cfg.embed = 12;
  cfg.hidden = 16;
  cfg.phase_epochs = 1;
  BtState state(cfg, 73);
  state.labeled = task.labeled;
  state.unlabeled_tgt = task.unlabeled_tgt;
  state.unlabeled_src = task.unlabeled_src;
  state.validation = task.validation;
  trainers::bt_init(state, 30);

  auto before = state.model.forward_params().snapshot();
  auto rows0 = trainers::bt_train(state, 0);
  CHECK(rows0.empty());
  CHECK(state.model.forward_params().snapshot() == before);

  auto rows = trainers::bt_train(state, 2);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].iter == 1);
  CHECK(rows[1].iter == 2);
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.fwd_ce));
    CHECK(std::isfinite(r.bwd_ce));
    CHECK(r.exact_match >= 0.0);
    CHECK(r.exact_match <= 1.0);
  }
  auto jsonl = trainers::bt_metrics_jsonl(rows);
  CHECK(jsonl.find("\"iter\": 1") != std::string::npos);
  CHECK(jsonl.find("\"fwd_ce\"") != std::string::npos);
}

TEST_CASE("vrs: stochastic objective matches enumeration on a 4-bit toy") {
  // two records, one value token each: 4 flat source positions
  segmodel::Vocab vocab = segmodel::Vocab::build(
      {{"slota", "slotb", "va", "vb", "w1", "w2", "."}});
  segmodel::Instance inst;
  inst.records.records.push_back(
      {vocab.lookup("slota"), {vocab.lookup("va")}});
  inst.records.records.push_back(
      {vocab.lookup("slotb"), {vocab.lookup("vb")}});
  inst.text.tokens = {vocab.lookup("va"), vocab.lookup("w1"),
                      vocab.lookup("vb"), segmodel::Vocab::kEos};

  segmodel::SegModel model({vocab.size(), 6, 8, 3}, 81);
  trainers::VrsTrainer trainer(&model, 81);

  const double eps = estimators::kKlTargetPerTokenTable * 4.0;
  const double lambda = 2.0;

  // enumeration oracle: E_q[loglik] - lambda * |KL - eps|
  auto q = trainer.selector(inst.records, inst.text);
  auto prior = trainer.prior(inst.records);
  std::vector<double> qp(4);
  for (int i = 0; i < 4; ++i)
    qp[i] = std::clamp(util::sigmoid(q.logits.data()[i]), dists::kProbFloor,
                       1.0 - dists::kProbFloor);
  double e_loglik = 0.0;
  for (int m = 0; m < 16; ++m) {
    std::vector<double> mask(4);
    double w = 1.0;
    for (int i = 0; i < 4; ++i) {
      mask[i] = (m >> i) & 1;
      w *= mask[i] > 0.5 ? qp[i] : 1.0 - qp[i];
    }
    e_loglik += w * model.masked_loglik(inst.records, inst.text, mask).item();
  }
  double kl = dists::bernoulli_kl(q, prior).item();
  double want = e_loglik - lambda * std::fabs(kl - eps);

  // empty masks are redrawn inside the sampler, so condition the oracle on
  // nonempty draws as well
  double p_empty = 1.0;
  for (int i = 0; i < 4; ++i) p_empty *= 1.0 - qp[i];
  double ll_empty = model.masked_loglik(inst.records, inst.text,
                                        {0.0, 0.0, 0.0, 0.0}).item();
  double e_loglik_nonempty = (e_loglik - p_empty * ll_empty) / (1.0 - p_empty);
  double want_nonempty = e_loglik_nonempty - lambda * std::fabs(kl - eps);

  stats::RunningMoments mom;
  auto rng = util::rng_stream(82, 0);
  for (int s = 0; s < 4000; ++s)
    mom.push(trainer.stochastic_objective(inst, eps, lambda, rng).objective);
  CHECK(std::fabs(mom.mean() - want_nonempty) <= 3.0 * mom.stderr_of_mean());
  // the unconditional enumeration is nearby too (empty masks are rare)
  CHECK(std::fabs(want - want_nonempty) < 0.5);
}

TEST_CASE("vrs: lambda = 0 degenerates to the plain bound; steps update") {
  segmodel::Vocab vocab =
      segmodel::Vocab::build({{"slota", "slotb", "va", "vb", "w1", "."}});
  segmodel::Instance inst;
  inst.records.records.push_back({vocab.lookup("slota"), {vocab.lookup("va")}});
  inst.records.records.push_back({vocab.lookup("slotb"), {vocab.lookup("vb")}});
  inst.text.tokens = {vocab.lookup("va"), vocab.lookup("w1"),
                      segmodel::Vocab::kEos};

  segmodel::SegModel model({vocab.size(), 6, 8, 3}, 91);
  trainers::VrsTrainer trainer(&model, 91);

  auto rng = util::rng_stream(92, 0);
  auto stats0 = trainer.stochastic_objective(inst, 0.7, 0.0, rng);
  CHECK(stats0.objective == doctest::Approx(stats0.loglik).epsilon(1e-12));

  // pretrain step optimizes the plain bound: objective = loglik - KL
  auto s1 = trainer.step(inst, 0.7, 2.0, /*pretrain=*/true, rng);
  CHECK(s1.objective == doctest::Approx(s1.loglik - s1.kl).epsilon(1e-9));

  // main steps improve the stochastic objective on this instance
  double before = 0.0, after = 0.0;
  {
    auto rng_eval = util::rng_stream(93, 0);
    for (int i = 0; i < 200; ++i)
      before += trainer.stochastic_objective(inst, 0.7, 2.0, rng_eval).objective;
  }
  for (int s = 0; s < 150; ++s) trainer.step(inst, 0.7, 2.0, false, rng);
  {
    auto rng_eval = util::rng_stream(93, 0);
    for (int i = 0; i < 200; ++i)
      after += trainer.stochastic_objective(inst, 0.7, 2.0, rng_eval).objective;
  }
  CHECK(after > before);
}
