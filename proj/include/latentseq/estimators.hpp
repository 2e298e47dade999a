#ifndef LATENTSEQ_ESTIMATORS_HPP
#define LATENTSEQ_ESTIMATORS_HPP

// Training objectives and stochastic-gradient estimators for latent-variable
// models, plus the schedules used against posterior collapse. Estimators are
// pure given an explicit seed; Monte-Carlo loops accumulate sufficient
// statistics in fixed-size chunks combined in index order, so results are
// bit-identical for any thread count.

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "latentseq/dists.hpp"
#include "latentseq/ndgrad.hpp"
#include "latentseq/util.hpp"

namespace latentseq::estimators {

using ndgrad::Value;

// ---------------------------------------------------------------------------
// reports

struct EstimatorReport {
  std::vector<double> grad_mean;
  std::vector<double> grad_var;  // per-coordinate sample variance
  std::int64_t n_samples = 0;
  double wall_time_s = 0.0;

  double max_stderr() const;
  // merge by summation of sufficient statistics
  static EstimatorReport merge(const std::vector<EstimatorReport>& parts);
};

// ---------------------------------------------------------------------------
// schedules

enum class ScheduleKind { kLinearKlAnneal, kScheduledSampling, kTemperatureDecay };

struct AnnealSchedule {
  ScheduleKind kind = ScheduleKind::kLinearKlAnneal;
  std::int64_t horizon = 1;  // k
  // weight schedules clamp into [floor, ceiling] (defaults 0..1); the
  // temperature decay runs from ceiling (start tau) down to floor (end tau).
  double floor = 0.0;
  double ceiling = 1.0;

  double eval(std::int64_t step) const;
};

// linear ramp 0 -> 1 over the horizon, constant 1 afterwards
double kl_anneal_weight(std::int64_t step, const AnnealSchedule& schedule);
// p = max(1 - i/k, 0)
double scheduled_sampling_p(std::int64_t i, std::int64_t k);

// ---------------------------------------------------------------------------
// objectives

enum class FreeBitsMode { kPerDim, kTotal };

// per-dim: sum_i max(kl_i, eps); total: max(sum_i kl_i, eps). Gradient w.r.t.
// kl_i is zero strictly inside the quota.
Value free_bits_kl(const Value& kl_per_dim, double eps,
                   FreeBitsMode mode = FreeBitsMode::kPerDim);

// each non-first token independently kept with probability keep_rate,
// otherwise replaced by unk_id
std::vector<int> word_dropout(const std::vector<int>& tokens, double keep_rate,
                              int unk_id, util::Rng& rng);

// -sum_t log softmax(inputless_logits(z))[y_t]; permutation-invariant in the
// targets
Value bow_loss(const std::function<Value(const Value&)>& inputless_logits,
               const Value& z, const std::vector<int>& target_tokens);

// (1/n) sum_i log p(x | z_i), z_i ~ prior; a stochastic lower bound of the
// log evidence by Jensen
double prior_mc_bound(
    const std::function<double(const std::vector<double>&)>& logcond,
    const dists::DiagGaussian& prior, int n, util::Rng& rng);

// (1/n) sum_i logcond(rsample(q, eps_i)) - KL(q || prior); single-sample by
// default
Value elbo(const std::function<Value(const Value&)>& logcond,
           const dists::DiagGaussian& q, const dists::DiagGaussian& prior,
           util::Rng& rng, int n_samples = 1);

// loglik evaluated at the mean mask (beta := gamma); the first-order Taylor
// surrogate of log E_beta p
double soft_select_logprob(
    const std::function<double(const std::vector<double>&)>& loglik,
    const dists::BernoulliMF& gamma);

// log p(Y|X, beta) - KL(q || prior) for one mask sample from q
double vrs_bound(
    const std::function<double(const std::vector<double>&)>& loglik_hard,
    const dists::BernoulliMF& q, const dists::BernoulliMF& prior,
    const std::vector<double>& mask_sample);

// loglik - lambda * |kl - eps|; subgradient at kl == eps is 0
double cmi_objective(double loglik, double kl, double eps, double lambda);
Value cmi_objective(const Value& loglik, const Value& kl, double eps,
                    double lambda);

// nll + lambda * |gamma_mean - alpha| (sign convention: added to the
// negative log-likelihood being minimized)
double ratio_penalty(double nll, double gamma_mean, double alpha,
                     double lambda);

// selecting-ratio / CMI targets the paper settled on: infobox-style
// data-to-text vs headline-style compression
inline constexpr double kSelectRatioTable = 0.35;
inline constexpr double kSelectRatioHeadline = 0.25;
inline constexpr double kKlTargetPerTokenTable = 0.15;
inline constexpr double kKlTargetPerTokenHeadline = 0.25;

// ---------------------------------------------------------------------------
// score-function (REINFORCE) estimator

// mean over n samples of (reward - baseline) * grad_logq(sample); unbiased
// for any sample-independent baseline. n must be >= 2 (variance undefined
// otherwise).
template <class Sample>
EstimatorReport score_function_grad(
    const std::function<Sample(util::Rng&)>& sampler,
    const std::function<std::vector<double>(const Sample&)>& grad_logq,
    const std::function<double(const Sample&)>& reward,
    const std::function<double(const Sample&)>& baseline, std::int64_t n,
    std::uint64_t seed, int threads = 1);

template <class Sample>
EstimatorReport score_function_grad(
    const std::function<Sample(util::Rng&)>& sampler,
    const std::function<std::vector<double>(const Sample&)>& grad_logq,
    const std::function<double(const Sample&)>& reward, double baseline,
    std::int64_t n, std::uint64_t seed, int threads = 1) {
  return score_function_grad<Sample>(
      sampler, grad_logq, reward,
      std::function<double(const Sample&)>([baseline](const Sample&) { return baseline; }),
      n, seed, threads);
}

// Generic chunked Monte-Carlo gradient: one gradient vector per sample index.
EstimatorReport mc_gradient(
    const std::function<std::vector<double>(util::Rng&)>& sample_grad,
    std::int64_t n, std::uint64_t seed, int threads);

template <class Sample>
EstimatorReport score_function_grad(
    const std::function<Sample(util::Rng&)>& sampler,
    const std::function<std::vector<double>(const Sample&)>& grad_logq,
    const std::function<double(const Sample&)>& reward,
    const std::function<double(const Sample&)>& baseline, std::int64_t n,
    std::uint64_t seed, int threads) {
  if (n < 2)
    throw std::invalid_argument("score_function_grad: n < 2, variance undefined");
  return mc_gradient(
      [&](util::Rng& rng) {
        Sample s = sampler(rng);
        std::vector<double> g = grad_logq(s);
        double w = reward(s) - baseline(s);
        for (auto& v : g) v *= w;
        return g;
      },
      n, seed, threads);
}

// ---------------------------------------------------------------------------
// shipped enumerable toys

// maximize L(mu, s) = E_{z = mu + e^s eps} [-(z - c)^2 / 2]
struct GaussianQuadraticToy {
  double mu = 0.0;
  double log_sigma = 0.0;
  double target = 1.0;  // c

  std::vector<double> exact_grad() const;  // d/d(mu, s), closed form
  // pathwise (reparameterized) per-sample gradient
  EstimatorReport reparam_grad(std::int64_t n, std::uint64_t seed,
                               int threads = 1) const;
};

// maximize L(theta) = E_{i ~ softmax(theta)} r_i
struct CategoricalRewardToy {
  std::vector<double> logits;
  std::vector<double> rewards;

  std::vector<double> probs() const { return util::softmax(logits); }
  double expected_reward() const;          // enumeration
  std::vector<double> exact_grad() const;  // enumeration
  EstimatorReport reinforce_grad(std::int64_t n, std::uint64_t seed,
                                 double baseline, int threads = 1) const;
  // running-mean control variate, decay 0.95 (sequential; cheap default)
  EstimatorReport reinforce_moving_avg_grad(std::int64_t n, std::uint64_t seed,
                                            double decay = 0.95) const;
  // d/d(theta) E[r^T y_soft] at temperature tau (biased for tau > 0)
  EstimatorReport gumbel_softmax_grad(std::int64_t n, std::uint64_t seed,
                                      double tau, int threads = 1) const;
};

// 1-D conjugate linear-Gaussian toy: z ~ N(0,1), x | z ~ N(z, obs_var)
struct ConjugateGaussianToy {
  double x = 0.5;
  double obs_var = 0.5;

  double log_evidence() const;    // log N(x; 0, 1 + obs_var)
  double posterior_mean() const;  // x / (1 + obs_var)
  double posterior_var() const;   // obs_var / (1 + obs_var)
  double logcond(double z) const;
  Value logcond(const Value& z) const;  // z is a length-1 vector
  dists::DiagGaussian prior() const;
};

// ---------------------------------------------------------------------------
// estimator bench

struct BenchCase {
  std::string name;
  std::vector<double> exact_grad;  // enumeration / closed-form oracle
  std::function<EstimatorReport(std::int64_t, std::uint64_t, int)> run;
};

struct BenchResult {
  std::string estimator;
  double bias = 0.0;      // max-abs deviation of the MC mean from the oracle
  double mean_var = 0.0;  // grad_var averaged over coordinates
  std::int64_t n_samples = 0;
  double wall_time_s = 0.0;
  EstimatorReport report;
  std::vector<double> exact_grad;
};

// n_trials independent trials per estimator, merged by sufficient statistics
std::vector<BenchResult> estimator_bench(const std::vector<BenchCase>& cases,
                                         int n_trials, std::int64_t n_samples,
                                         std::uint64_t seed, int threads = 1);

// the shipped default cases: reparameterized Gaussian, REINFORCE with and
// without baselines, straight-through-free Gumbel-softmax at tau = 1
std::vector<BenchCase> default_bench_cases();

// CSV contract: estimator,bias,mean_var,n_samples,wall_time_s
std::string bench_csv(const std::vector<BenchResult>& results);

}  // namespace latentseq::estimators

#endif  // LATENTSEQ_ESTIMATORS_HPP
