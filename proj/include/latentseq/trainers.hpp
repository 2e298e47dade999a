#ifndef LATENTSEQ_TRAINERS_HPP
#define LATENTSEQ_TRAINERS_HPP

// Training loops over the estimators and lattices: generalized-EM fitting of
// lattice-parameterized models, iterative back-translation on a toy
// transduction task, and the variational reinforce-select step.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "latentseq/dists.hpp"
#include "latentseq/ndgrad.hpp"
#include "latentseq/nn.hpp"
#include "latentseq/segmodel.hpp"
#include "latentseq/util.hpp"

namespace latentseq::trainers {

using ndgrad::Value;

// ---------------------------------------------------------------------------
// generalized EM: gradient ascent on a lattice log-marginal

struct EmFitResult {
  std::vector<double> losses;  // -log marginal per step
};

// Plain-SGD ascent through the autodiff log-marginal; items are cycled in
// order. Aborts with a diagnostic if the loss diverges to NaN.
EmFitResult em_fit(nn::ParamStore& params,
                   const std::function<Value(int)>& log_marginal_of_item,
                   int n_items, int steps, double lr);

// ---------------------------------------------------------------------------
// back-translation on a toy transduction task

struct BtConfig {
  int vocab = 0;
  int embed = 24;
  int hidden = 48;
  double lr = 1e-3;
  double clip = 5.0;
  int beam = 3;           // pseudo-pair decoding width
  int init_epochs = 200;  // epochs over the labeled pairs
  int phase_epochs = 1;   // epochs per BT phase
  int max_decode_extra = 6;
  // teacher-forced history word dropout during training phases; weakens the
  // decoder language model so the attention/translation path carries signal
  double train_keep_rate = 0.6;
};

using TokenSeq = std::vector<int>;
using Pair = std::pair<TokenSeq, TokenSeq>;

// Forward and backward seq2seq with a physically shared encoder and separate
// attention decoders.
class BtModel {
 public:
  BtModel(const BtConfig& cfg, std::uint64_t seed);

  const BtConfig& config() const { return cfg_; }
  nn::ParamStore& encoder_params() { return enc_params_; }
  nn::ParamStore& forward_params() { return fwd_params_; }
  nn::ParamStore& backward_params() { return bwd_params_; }
  const nn::ParamStore& forward_params() const { return fwd_params_; }
  const nn::ParamStore& backward_params() const { return bwd_params_; }

  // log p(tgt, <eos> | src) under the given direction, teacher-forced.
  // dropout_rng, when given, applies history word dropout at keep_rate.
  Value seq_loglik(bool forward_dir, const TokenSeq& src, const TokenSeq& tgt,
                   util::Rng* dropout_rng = nullptr,
                   double keep_rate = 1.0) const;
  double per_token_ce(bool forward_dir, const TokenSeq& src,
                      const TokenSeq& tgt) const;
  TokenSeq beam_decode(bool forward_dir, const TokenSeq& src, int beam,
                       int max_len) const;

 private:
  // Pointer-style transduction decoder: the autoregressive state drives the
  // attention query and the termination logit, and emission comes from
  // attention-weighted per-symbol translation rows (copy-with-edit). A dense
  // state-to-vocab head cannot learn the symbol mapping from a handful of
  // labeled pairs; the translation table can.
  struct Decoder {
    nn::GruParams gru;
    Value w_init, b_init, b_out;
    Value w_eos;      // [1][h] termination logit from the state
    Value translate;  // [V_src][V_out]
    // relative-position attention bias over offsets i - t in [-8, 8],
    // with a step-parity row pair (the period-2 positional feature)
    Value pos_bias;   // [2][17]
  };
  struct Encoded {
    std::vector<Value> h;
    TokenSeq tokens;
    Value last;
  };
  Encoded encode(const TokenSeq& src) const;
  Value output_logits(const Decoder& dec, const Encoded& enc,
                      const Value& state, int step) const;
  const Decoder& dec(bool forward_dir) const {
    return forward_dir ? fdec_ : bdec_;
  }

  BtConfig cfg_;
  nn::ParamStore enc_params_, fwd_params_, bwd_params_;
  Value emb_;  // shared embedding (lives in encoder params)
  nn::GruParams enc_gru_;
  Decoder fdec_, bdec_;
};

struct BtState {
  BtModel model;
  std::vector<Pair> labeled;
  std::vector<TokenSeq> unlabeled_tgt;  // D_T
  std::vector<TokenSeq> unlabeled_src;
  std::vector<Pair> validation;
  int iteration = 0;
  std::uint64_t seed = 0;

  BtState(const BtConfig& cfg, std::uint64_t seed_) : model(cfg, seed_), seed(seed_) {}
};

struct BtIterationMetrics {
  int iter = 0;
  double fwd_ce = 0.0;
  double bwd_ce = 0.0;
  double exact_match = 0.0;
};

// maximum-likelihood initialization of both directions on the labeled pairs
void bt_init(BtState& state, int epochs);
// decode pseudo-sources b(t) for t in D_T with P_b (no gradient through the
// decode), then update P_f and the shared encoder on (b(t), t) plus the
// replayed labeled pairs
void bt_backward_phase(BtState& state);
// the symmetric phase updating P_b on (x, f(x))
void bt_forward_phase(BtState& state);

BtIterationMetrics bt_metrics(const BtState& state);
// alternates backward/forward phases, recording metrics per iteration
std::vector<BtIterationMetrics> bt_train(BtState& state, int n_iters);

std::string bt_metrics_jsonl(const std::vector<BtIterationMetrics>& rows);

// deterministic toy transduction task: a fixed symbol permutation composed
// with adjacent-pair reordering, lengths 4-12 over a 30-symbol alphabet
struct BtTask {
  int vocab = 0;  // 4 specials + alphabet
  std::vector<Pair> labeled;
  std::vector<TokenSeq> unlabeled_tgt;
  std::vector<TokenSeq> unlabeled_src;
  std::vector<Pair> validation;
  std::function<TokenSeq(const TokenSeq&)> transform;
};
BtTask make_bt_task(std::uint64_t seed, int n_labeled = 10, int n_unlabeled = 500,
                    int n_validation = 100);

// ---------------------------------------------------------------------------
// variational reinforce-select training

struct VrsStepStats {
  double objective = 0.0;  // stochastic objective value at the drawn mask
  double loglik = 0.0;
  double kl = 0.0;
  double baseline = 0.0;
  int redraws = 0;
};

// Owns the selector q_phi and prior-net gamma on top of a SegModel's encoder
// and masked decoding path; one Adam instance covers theta, gamma and phi.
class VrsTrainer {
 public:
  VrsTrainer(segmodel::SegModel* model, std::uint64_t seed, double lr = 1e-3);

  // selector and prior distributions over the flattened source positions
  dists::BernoulliMF selector(const segmodel::RecordSet& records,
                              const segmodel::Utterance& y) const;
  dists::BernoulliMF prior(const segmodel::RecordSet& records) const;

  // stochastic objective at one drawn mask (no parameter update):
  // loglik(beta) - lambda * |KL(q||B(gamma)) - eps|
  VrsStepStats stochastic_objective(const segmodel::Instance& inst, double eps,
                                    double lambda, util::Rng& rng) const;

  // One update. pretrain = distant supervision for phi (token-overlap pseudo
  // labels) plus the plain bound for theta/gamma; otherwise the CMI
  // objective with the soft-select control variate for phi.
  VrsStepStats step(const segmodel::Instance& inst, double eps, double lambda,
                    bool pretrain, util::Rng& rng);

  nn::ParamStore& net_params() { return nets_; }

 private:
  std::vector<double> draw_mask(const dists::BernoulliMF& q, util::Rng& rng,
                                int* redraws) const;
  Value selector_logits(const std::vector<Value>& h, const Value& ybar) const;
  Value prior_logits(const std::vector<Value>& h) const;

  segmodel::SegModel* model_;
  nn::ParamStore nets_;
  Value wq1_, bq1_, wq2_, bq2_, wg1_, bg1_, wg2_, bg2_;
  std::unique_ptr<nn::Adam> opt_;
};

}  // namespace latentseq::trainers

#endif  // LATENTSEQ_TRAINERS_HPP
