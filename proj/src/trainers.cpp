#include "latentseq/trainers.hpp"

#include "latentseq/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace latentseq::trainers {

using namespace ndgrad;
using segmodel::Vocab;

// ---------------------------------------------------------------------------
// generalized EM

EmFitResult em_fit(nn::ParamStore& params,
                   const std::function<Value(int)>& log_marginal_of_item,
                   int n_items, int steps, double lr) {
  if (n_items < 1) throw std::invalid_argument("em_fit: no items");
  EmFitResult result;
  result.losses.reserve(steps);
  for (int s = 0; s < steps; ++s) {
    Value log_z = log_marginal_of_item(s % n_items);
    double loss = -log_z.item();
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "em_fit: divergence at step " << s << " (loss " << loss << ")";
      throw std::runtime_error(os.str());
    }
    result.losses.push_back(loss);
    backward(log_z);
    nn::sgd_step(params, lr, /*ascend=*/true);
  }
  return result;
}

// ---------------------------------------------------------------------------
// back-translation

BtModel::BtModel(const BtConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.vocab < 5) throw std::invalid_argument("BtModel: vocab too small");
  auto rng = util::rng_stream(seed, 0xb7);
  int e = cfg_.embed, h = cfg_.hidden, v = cfg_.vocab;
  emb_ = enc_params_.add("emb", {v, e}, rng);
  enc_gru_ = nn::make_gru(enc_params_, "enc", e, h, rng);
  auto make_dec = [&](nn::ParamStore& store, const char* prefix) {
    Decoder d;
    std::string p(prefix);
    d.gru = nn::make_gru(store, p + ".gru", e, h, rng);
    d.w_init = store.add(p + ".init.w", {h, h}, rng);
    d.b_init = store.add_zeros(p + ".init.b", {h});
    d.b_out = store.add_zeros(p + ".out.b", {v});
    d.w_eos = store.add(p + ".out.w_eos", {1, h}, rng);
    d.translate = store.add_zeros(p + ".out.translate", {v, v});
    d.pos_bias = store.add_zeros(p + ".att.pos_bias", {2, 17});
    return d;
  };
  fdec_ = make_dec(fwd_params_, "fdec");
  bdec_ = make_dec(bwd_params_, "bdec");
}

BtModel::Encoded BtModel::encode(const TokenSeq& src) const {
  if (src.empty()) throw std::invalid_argument("BtModel: empty source");
  Encoded out;
  out.tokens = src;
  Value state = Value::vector(std::vector<double>(cfg_.hidden, 0.0));
  for (int tok : src) {
    state = nn::gru_step(enc_gru_, state, row(emb_, tok));
    out.h.push_back(state);
  }
  out.last = state;
  return out;
}

Value BtModel::output_logits(const Decoder& dec, const Encoded& enc,
                             const Value& state, int step) const {
  std::vector<Value> scores;
  scores.reserve(enc.h.size());
  Value bias_row = row(dec.pos_bias, step % 2);
  for (std::size_t i = 0; i < enc.h.size(); ++i) {
    int offset = std::clamp(static_cast<int>(i) - step, -8, 8) + 8;
    scores.push_back(add(dot(enc.h[i], state), pick(bias_row, offset)));
  }
  Value att = softmax(concat_n(scores));
  Value logits = dec.b_out;
  for (std::size_t i = 0; i < enc.h.size(); ++i)
    logits = add(logits, mul(row(dec.translate, enc.tokens[i]),
                             pick(att, static_cast<int>(i))));
  // termination is scored from the autoregressive state alone
  std::vector<double> eos_onehot(cfg_.vocab, 0.0);
  eos_onehot[Vocab::kEos] = 1.0;
  Value eos_logit = matvec(dec.w_eos, state);
  logits = add(logits, mul(Value::vector(eos_onehot), pick(eos_logit, 0)));
  return logits;
}

Value BtModel::seq_loglik(bool forward_dir, const TokenSeq& src,
                          const TokenSeq& tgt, util::Rng* dropout_rng,
                          double keep_rate) const {
  const Decoder& d = dec(forward_dir);
  Encoded enc = encode(src);
  Value state = vtanh(add(matvec(d.w_init, enc.last), d.b_init));
  Value total;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  int prev = Vocab::kBos;
  for (std::size_t t = 0; t <= tgt.size(); ++t) {
    int fed = prev;
    if (dropout_rng && t > 0 && ud(*dropout_rng) >= keep_rate)
      fed = Vocab::kUnk;
    state = nn::gru_step(d.gru, state, row(emb_, fed));
    Value lp = log_softmax(output_logits(d, enc, state, static_cast<int>(t)));
    int want = t < tgt.size() ? tgt[t] : Vocab::kEos;
    Value term = pick(lp, want);
    total = t == 0 ? term : add(total, term);
    prev = want;
  }
  return total;
}

double BtModel::per_token_ce(bool forward_dir, const TokenSeq& src,
                             const TokenSeq& tgt) const {
  double ll = seq_loglik(forward_dir, src, tgt).item();
  return -ll / static_cast<double>(tgt.size() + 1);
}

TokenSeq BtModel::beam_decode(bool forward_dir, const TokenSeq& src, int beam,
                              int max_len) const {
  const Decoder& d = dec(forward_dir);
  Encoded enc = encode(src);
  struct Hyp {
    Value state;
    TokenSeq tokens;
    double logp = 0.0;
    bool done = false;
  };
  Hyp root;
  root.state = vtanh(add(matvec(d.w_init, enc.last), d.b_init));
  std::vector<Hyp> active{root};
  std::vector<Hyp> finished;
  for (int step = 0; step < max_len && !active.empty(); ++step) {
    std::vector<Hyp> expanded;
    for (auto& hyp : active) {
      int prev = hyp.tokens.empty() ? Vocab::kBos : hyp.tokens.back();
      Value state = nn::gru_step(d.gru, hyp.state, row(emb_, prev));
      Value lp = log_softmax(
          output_logits(d, enc, state, static_cast<int>(hyp.tokens.size())));
      std::vector<int> order(cfg_.vocab);
      for (int w = 0; w < cfg_.vocab; ++w) order[w] = w;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return lp.data()[a] > lp.data()[b];
      });
      int taken = 0;
      for (int w : order) {
        if (w == Vocab::kUnk || w == Vocab::kBos || w == Vocab::kSeg) continue;
        if (w == Vocab::kEos && hyp.tokens.empty()) continue;
        Hyp next = hyp;
        next.state = state;
        next.logp += lp.data()[w];
        if (w == Vocab::kEos) {
          next.done = true;
          finished.push_back(std::move(next));
        } else {
          next.tokens.push_back(w);
          expanded.push_back(std::move(next));
        }
        if (++taken == beam) break;
      }
    }
    std::stable_sort(expanded.begin(), expanded.end(),
                     [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
    if (static_cast<int>(expanded.size()) > beam) expanded.resize(beam);
    active = std::move(expanded);
  }
  for (auto& hyp : active) finished.push_back(hyp);  // length cap fallback
  if (finished.empty()) return {};
  auto norm = [](const Hyp& h) {
    return h.logp / static_cast<double>(h.tokens.size() + 1);
  };
  auto best = std::max_element(
      finished.begin(), finished.end(),
      [&](const Hyp& a, const Hyp& b) { return norm(a) < norm(b); });
  return best->tokens;
}

void bt_init(BtState& state, int epochs) {
  if (state.labeled.empty()) throw std::invalid_argument("bt_init: no labeled pairs");
  if (epochs <= 0) return;
  auto& m = state.model;
  double keep = m.config().train_keep_rate;
  auto drop_rng = util::rng_stream(state.seed, 0xd0);
  nn::Adam opt(nn::values_of({&m.encoder_params(), &m.forward_params(),
                              &m.backward_params()}),
               m.config().lr, 0.9, 0.999, 1e-8, m.config().clip);
  for (int e = 0; e < epochs; ++e)
    for (const auto& [x, y] : state.labeled) {
      Value loss = neg(add(m.seq_loglik(true, x, y, &drop_rng, keep),
                           m.seq_loglik(false, y, x, &drop_rng, keep)));
      backward(loss);
      opt.step();
    }
}

namespace {

// One BT phase: decode pseudo pairs with the frozen direction, hold out a
// slice of them for measurement, then train the other direction (and the
// shared encoder) on the rest plus the replayed labeled pairs. Returns the
// post-phase per-token cross-entropy on the held-out pseudo slice: the
// distillation residual whose convergence the loop is monitored by.
double bt_phase(BtState& state, bool update_forward) {
  auto& m = state.model;
  const auto& cfg = m.config();
  const auto& pool = update_forward ? state.unlabeled_tgt : state.unlabeled_src;

  // pseudo-pair decoding is deterministic given seed and beam width; the
  // decode itself carries no gradient
  std::vector<Pair> pseudo;
  pseudo.reserve(pool.size());
  for (const auto& t : pool) {
    TokenSeq other =
        m.beam_decode(!update_forward, t, cfg.beam,
                      static_cast<int>(t.size()) + cfg.max_decode_extra);
    if (other.empty()) continue;
    pseudo.emplace_back(other, t);  // (input to the updated direction, target)
  }
  std::size_t held = std::max<std::size_t>(1, pseudo.size() / 10);
  std::vector<Pair> held_out(pseudo.end() - held, pseudo.end());
  pseudo.resize(pseudo.size() - held);
  // labeled pairs are replayed at weight 1 in every phase
  for (const auto& [x, y] : state.labeled)
    pseudo.emplace_back(update_forward ? x : y, update_forward ? y : x);

  nn::ParamStore& dec_params =
      update_forward ? m.forward_params() : m.backward_params();
  auto drop_rng = util::rng_stream(state.seed ^ 0x9d,
                                   static_cast<std::uint64_t>(state.iteration) * 2 +
                                       (update_forward ? 0 : 1));
  nn::Adam opt(nn::values_of({&m.encoder_params(), &dec_params}), cfg.lr, 0.9,
               0.999, 1e-8, cfg.clip);
  for (int e = 0; e < cfg.phase_epochs; ++e)
    for (const auto& [src, tgt] : pseudo) {
      Value loss = neg(m.seq_loglik(update_forward, src, tgt, &drop_rng,
                                    cfg.train_keep_rate));
      backward(loss);
      opt.step();
    }
  double ce = 0.0;
  for (const auto& [src, tgt] : held_out)
    ce += m.per_token_ce(update_forward, src, tgt);
  return ce / static_cast<double>(held_out.size());
}

}  // namespace

void bt_backward_phase(BtState& state) { bt_phase(state, /*update_forward=*/true); }
void bt_forward_phase(BtState& state) { bt_phase(state, /*update_forward=*/false); }

namespace {

// forward validation cross-entropy on pseudo pairs b(t) -> t: the residual
// of distilling the backward model into the forward one
double bt_fwd_ce(const BtState& state) {
  const auto& m = state.model;
  const auto& cfg = m.config();
  double fwd = 0.0;
  for (const auto& [x, y] : state.validation) {
    TokenSeq pseudo_src = m.beam_decode(
        false, y, cfg.beam, static_cast<int>(y.size()) + cfg.max_decode_extra);
    if (!pseudo_src.empty()) fwd += m.per_token_ce(true, pseudo_src, y);
  }
  return fwd / static_cast<double>(state.validation.size());
}

double bt_bwd_ce(const BtState& state) {
  const auto& m = state.model;
  const auto& cfg = m.config();
  double bwd = 0.0;
  for (const auto& [x, y] : state.validation) {
    TokenSeq pseudo_tgt = m.beam_decode(
        true, x, cfg.beam, static_cast<int>(x.size()) + cfg.max_decode_extra);
    if (!pseudo_tgt.empty()) bwd += m.per_token_ce(false, pseudo_tgt, x);
  }
  return bwd / static_cast<double>(state.validation.size());
}

double bt_exact_match(const BtState& state) {
  const auto& m = state.model;
  const auto& cfg = m.config();
  int n_exact = 0;
  for (const auto& [x, y] : state.validation) {
    TokenSeq pseudo_tgt = m.beam_decode(
        true, x, cfg.beam, static_cast<int>(x.size()) + cfg.max_decode_extra);
    if (pseudo_tgt == y) ++n_exact;
  }
  return static_cast<double>(n_exact) /
         static_cast<double>(state.validation.size());
}

}  // namespace

BtIterationMetrics bt_metrics(const BtState& state) {
  BtIterationMetrics out;
  out.iter = state.iteration;
  out.fwd_ce = bt_fwd_ce(state);
  out.bwd_ce = bt_bwd_ce(state);
  out.exact_match = bt_exact_match(state);
  return out;
}

std::vector<BtIterationMetrics> bt_train(BtState& state, int n_iters) {
  if (n_iters < 0) throw std::invalid_argument("bt_train: n_iters < 0");
  std::vector<BtIterationMetrics> rows;
  for (int it = 0; it < n_iters; ++it) {
    BtIterationMetrics row;
    row.fwd_ce = bt_phase(state, /*update_forward=*/true);
    row.bwd_ce = bt_phase(state, /*update_forward=*/false);
    row.exact_match = bt_exact_match(state);
    state.iteration += 1;
    row.iter = state.iteration;
    rows.push_back(row);
  }
  return rows;
}

std::string bt_metrics_jsonl(const std::vector<BtIterationMetrics>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "{\"iter\": %d, \"fwd_ce\": %.6f, \"bwd_ce\": %.6f, "
                  "\"exact_match\": %.4f}\n",
                  r.iter, r.fwd_ce, r.bwd_ce, r.exact_match);
    os << line;
  }
  return os.str();
}

BtTask make_bt_task(std::uint64_t seed, int n_labeled, int n_unlabeled,
                    int n_validation) {
  constexpr int kAlphabet = 30;
  BtTask task;
  task.vocab = 4 + kAlphabet;

  auto rng = util::rng_stream(seed, 0x7a5);
  std::vector<int> sigma(kAlphabet);
  for (int i = 0; i < kAlphabet; ++i) sigma[i] = i;
  std::shuffle(sigma.begin(), sigma.end(), rng);

  // deterministic symbol mapping plus local reordering: swap adjacent pairs,
  // then map every symbol through the fixed permutation
  task.transform = [sigma](const TokenSeq& src) {
    TokenSeq out = src;
    for (std::size_t i = 0; i + 1 < out.size(); i += 2)
      std::swap(out[i], out[i + 1]);
    for (auto& tok : out) tok = 4 + sigma[tok - 4];
    return out;
  };

  // Zipf-shaped symbol frequencies: the distributional asymmetry that
  // anchors the unsupervised half of back-translation, as in natural text
  std::vector<double> sym_weights(kAlphabet);
  for (int k = 0; k < kAlphabet; ++k) sym_weights[k] = 1.0 / (k + 2.0);
  auto random_source = [&](util::Rng& r) {
    std::uniform_int_distribution<int> len_d(4, 12);
    std::discrete_distribution<int> sym_d(sym_weights.begin(), sym_weights.end());
    TokenSeq s(len_d(r));
    for (auto& tok : s) tok = 4 + sym_d(r);
    return s;
  };

  for (int i = 0; i < n_labeled; ++i) {
    TokenSeq x = random_source(rng);
    task.labeled.emplace_back(x, task.transform(x));
  }
  for (int i = 0; i < n_unlabeled; ++i)
    task.unlabeled_tgt.push_back(task.transform(random_source(rng)));
  for (int i = 0; i < n_unlabeled; ++i)
    task.unlabeled_src.push_back(random_source(rng));
  for (int i = 0; i < n_validation; ++i) {
    TokenSeq x = random_source(rng);
    task.validation.emplace_back(x, task.transform(x));
  }
  return task;
}

// ---------------------------------------------------------------------------
// VRS trainer

VrsTrainer::VrsTrainer(segmodel::SegModel* model, std::uint64_t seed, double lr)
    : model_(model) {
  auto rng = util::rng_stream(seed, 0x5e1);
  int h = model_->config().hidden;
  int e = model_->config().embed;
  wq1_ = nets_.add("q.w1", {h, h + e}, rng);
  bq1_ = nets_.add_zeros("q.b1", {h});
  wq2_ = nets_.add("q.w2", {1, h}, rng);
  bq2_ = nets_.add_zeros("q.b2", {1});
  wg1_ = nets_.add("gamma.w1", {h, h}, rng);
  bg1_ = nets_.add_zeros("gamma.b1", {h});
  wg2_ = nets_.add("gamma.w2", {1, h}, rng);
  bg2_ = nets_.add_zeros("gamma.b2", {1});
  auto all = nn::values_of({&model_->params(), &nets_});
  opt_ = std::make_unique<nn::Adam>(all, lr);
}

Value VrsTrainer::selector_logits(const std::vector<Value>& h,
                                  const Value& ybar) const {
  std::vector<Value> logits;
  logits.reserve(h.size());
  for (const auto& hi : h) {
    Value u = concat(hi, ybar);
    logits.push_back(
        add(matvec(wq2_, vtanh(add(matvec(wq1_, u), bq1_))), bq2_));
  }
  return concat_n(logits);
}

Value VrsTrainer::prior_logits(const std::vector<Value>& h) const {
  std::vector<Value> logits;
  logits.reserve(h.size());
  for (const auto& hi : h)
    logits.push_back(
        add(matvec(wg2_, vtanh(add(matvec(wg1_, hi), bg1_))), bg2_));
  return concat_n(logits);
}

namespace {

Value mean_embedding(const segmodel::SegModel& model,
                     const segmodel::Utterance& y) {
  Value acc;
  for (int tok : y.tokens) {
    Value e = row(model.params().get("emb"), tok);
    acc = acc.defined() ? add(acc, e) : e;
  }
  return mul_const(acc, 1.0 / static_cast<double>(y.size()));
}

}  // namespace

dists::BernoulliMF VrsTrainer::selector(const segmodel::RecordSet& records,
                                        const segmodel::Utterance& y) const {
  auto enc = model_->encode(records);
  return {selector_logits(enc.h, mean_embedding(*model_, y))};
}

dists::BernoulliMF VrsTrainer::prior(const segmodel::RecordSet& records) const {
  auto enc = model_->encode(records);
  return {prior_logits(enc.h)};
}

std::vector<double> VrsTrainer::draw_mask(const dists::BernoulliMF& q,
                                          util::Rng& rng, int* redraws) const {
  for (int attempt = 0; attempt < 10; ++attempt) {
    auto mask = dists::bernoulli_sample(q, rng);
    double total = 0.0;
    for (double m : mask) total += m;
    if (total > 0.0) {
      if (redraws) *redraws = attempt;
      return mask;
    }
  }
  throw std::runtime_error("vrs: empty mask after 10 redraws");
}

VrsStepStats VrsTrainer::stochastic_objective(const segmodel::Instance& inst,
                                              double eps, double lambda,
                                              util::Rng& rng) const {
  auto enc = model_->encode(inst.records);
  Value qlogits = selector_logits(enc.h, mean_embedding(*model_, inst.text));
  Value glogits = prior_logits(enc.h);
  dists::BernoulliMF q{qlogits}, g{glogits};
  VrsStepStats stats;
  auto mask = draw_mask(q, rng, &stats.redraws);
  stats.loglik = model_->masked_loglik(inst.records, inst.text, mask).item();
  stats.kl = dists::bernoulli_kl(q, g).item();
  stats.objective = stats.loglik - lambda * std::fabs(stats.kl - eps);
  return stats;
}

VrsStepStats VrsTrainer::step(const segmodel::Instance& inst, double eps,
                              double lambda, bool pretrain, util::Rng& rng) {
  auto enc = model_->encode(inst.records);
  Value qlogits = selector_logits(enc.h, mean_embedding(*model_, inst.text));
  Value glogits = prior_logits(enc.h);
  dists::BernoulliMF q{qlogits}, g{glogits};

  VrsStepStats stats;
  auto mask = draw_mask(q, rng, &stats.redraws);

  // pathwise term for theta
  Value loglik = model_->masked_loglik(inst.records, inst.text, mask);
  stats.loglik = loglik.item();

  Value kl = dists::bernoulli_kl(q, g);
  stats.kl = kl.item();

  // soft-select control variate: loglik at the mean mask, no gradients
  {
    std::vector<double> mean(q.dim());
    for (int i = 0; i < q.dim(); ++i)
      mean[i] = std::clamp(util::sigmoid(qlogits.data()[i]), dists::kProbFloor,
                           1.0 - dists::kProbFloor);
    stats.baseline =
        model_->masked_loglik(inst.records, inst.text, mean).item();
  }

  // score-function surrogate for phi: (loglik - B) * log q(beta)
  Value qprobs = dists::bernoulli_probs(q);
  Value log_q_mask;
  for (int i = 0; i < q.dim(); ++i) {
    Value pi = pick(qprobs, i);
    Value term = mask[i] > 0.5 ? vlog(pi) : vlog(add_const(neg(pi), 1.0));
    log_q_mask = log_q_mask.defined() ? add(log_q_mask, term) : term;
  }
  Value surrogate = mul_const(log_q_mask, stats.loglik - stats.baseline);

  Value objective;
  if (pretrain) {
    // plain bound for theta/gamma; distant supervision (token overlap) for phi
    std::set<int> target_tokens(inst.text.tokens.begin(),
                                inst.text.tokens.end());
    Value bce;
    for (int i = 0; i < q.dim(); ++i) {
      bool hit = target_tokens.count(enc.flat_tokens[i]) > 0;
      Value pi = pick(qprobs, i);
      Value term = hit ? vlog(pi) : vlog(add_const(neg(pi), 1.0));
      bce = bce.defined() ? add(bce, term) : term;
    }
    objective = add(sub(loglik, kl), bce);
    stats.objective = stats.loglik - stats.kl;
  } else {
    Value penalized =
        estimators::cmi_objective(loglik, kl, eps, lambda);
    objective = add(penalized, surrogate);
    stats.objective = stats.loglik - lambda * std::fabs(stats.kl - eps);
  }

  backward(neg(objective));
  opt_->step();
  return stats;
}

}  // namespace latentseq::trainers
