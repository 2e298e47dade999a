#ifndef LATENTSEQ_DISTS_HPP
#define LATENTSEQ_DISTS_HPP

// Latent-variable distribution families: reparameterized Gaussians,
// mean-field Bernoulli masks, categorical relaxations, and their analytic
// divergences. Everything is differentiable through ndgrad; callers own the
// RNG and pass noise in explicitly, so all functions are pure.

#include <vector>

#include "latentseq/ndgrad.hpp"
#include "latentseq/util.hpp"

namespace latentseq::dists {

using ndgrad::Value;

// Probability clamp floor for Bernoulli parameters and uniform noise; keeps
// divergences finite and gradients bounded at the boundary.
inline constexpr double kProbFloor = 1e-7;
// log_std is clamped to this range before use.
inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 10.0;

struct DiagGaussian {
  Value mean;     // [d]
  Value log_std;  // [d]
  int dim() const { return mean.size(); }
};

// Independent Bernoulli coordinates, stored as logits; probabilities are
// clamped to [kProbFloor, 1 - kProbFloor] wherever they are used.
struct BernoulliMF {
  Value logits;  // [n]
  int dim() const { return logits.size(); }
};

struct CategoricalLogits {
  Value logits;  // [c]
  int dim() const { return logits.size(); }
};

// clamp helpers (gradient passes through strictly inside the range)
Value clamp(const Value& x, double lo, double hi);
Value clamped_log_std(const DiagGaussian& g);
Value bernoulli_probs(const BernoulliMF& b);  // clamped, in (0,1)^n

// KL(q || p) for diagonal Gaussians of equal dimension; >= 0, differentiable
// in all four parameter vectors.
Value gaussian_kl(const DiagGaussian& q, const DiagGaussian& p);

// z = mean + exp(log_std) * eps; gradients flow to mean and log_std.
Value gaussian_rsample(const DiagGaussian& q, const std::vector<double>& eps);

// sum_i q_i ln(q_i/p_i) + (1-q_i) ln((1-q_i)/(1-p_i)), boundary-clamped.
Value bernoulli_kl(const BernoulliMF& q, const BernoulliMF& p);

// y_i = softmax_i((log pi_i + g_i)/tau), g_i = -log(-log u_i). tau must be
// positive; u is clamped strictly interior.
Value gumbel_softmax(const CategoricalLogits& pi, double tau,
                     const std::vector<double>& u);

// Hard one-hot forward, soft gradient backward; ties break to lowest index.
inline Value straight_through(const Value& y_soft) {
  return ndgrad::straight_through_onehot(y_soft);
}

// ---- noise / sampling helpers (callers own rng) ----
std::vector<double> standard_normal(util::Rng& rng, int d);
std::vector<double> standard_uniform(util::Rng& rng, int d);
// one draw from each Bernoulli coordinate of b
std::vector<double> bernoulli_sample(const BernoulliMF& b, util::Rng& rng);
// index draw from Categorical(softmax(logits))
int categorical_sample(const std::vector<double>& logits, util::Rng& rng);

}  // namespace latentseq::dists

#endif  // LATENTSEQ_DISTS_HPP
