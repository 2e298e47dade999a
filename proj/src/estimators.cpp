#include "latentseq/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace latentseq::estimators {

using namespace ndgrad;

// ---------------------------------------------------------------------------
// reports

double EstimatorReport::max_stderr() const {
  double worst = 0.0;
  for (double v : grad_var)
    worst = std::max(worst, std::sqrt(v / static_cast<double>(n_samples)));
  return worst;
}

EstimatorReport EstimatorReport::merge(
    const std::vector<EstimatorReport>& parts) {
  if (parts.empty()) throw std::invalid_argument("merge: no reports");
  std::size_t dim = parts[0].grad_mean.size();
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  std::int64_t n = 0;
  double wall = 0.0;
  for (const auto& r : parts) {
    if (r.grad_mean.size() != dim)
      throw std::invalid_argument("merge: dimension mismatch");
    for (std::size_t j = 0; j < dim; ++j) {
      sum[j] += r.grad_mean[j] * static_cast<double>(r.n_samples);
      sum_sq[j] += r.grad_var[j] * static_cast<double>(r.n_samples - 1) +
                   static_cast<double>(r.n_samples) * r.grad_mean[j] * r.grad_mean[j];
    }
    n += r.n_samples;
    wall += r.wall_time_s;
  }
  EstimatorReport out;
  out.n_samples = n;
  out.wall_time_s = wall;
  out.grad_mean.resize(dim);
  out.grad_var.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = sum[j] / static_cast<double>(n);
    out.grad_mean[j] = mean;
    out.grad_var[j] = (sum_sq[j] - static_cast<double>(n) * mean * mean) /
                      static_cast<double>(n - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo driver

namespace {
constexpr std::int64_t kChunk = 1024;
}

EstimatorReport mc_gradient(
    const std::function<std::vector<double>(util::Rng&)>& sample_grad,
    std::int64_t n, std::uint64_t seed, int threads) {
  if (n < 2) throw std::invalid_argument("mc_gradient: n < 2");
  auto t0 = std::chrono::steady_clock::now();
  const std::int64_t n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> chunk_sum(n_chunks), chunk_sq(n_chunks);

  util::parallel_for(static_cast<int>(n_chunks), threads, [&](int c) {
    std::int64_t lo = static_cast<std::int64_t>(c) * kChunk;
    std::int64_t hi = std::min(n, lo + kChunk);
    std::vector<double>& s = chunk_sum[c];
    std::vector<double>& q = chunk_sq[c];
    for (std::int64_t i = lo; i < hi; ++i) {
      auto rng = util::rng_stream(seed, static_cast<std::uint64_t>(i));
      std::vector<double> g = sample_grad(rng);
      if (s.empty()) {
        s.assign(g.size(), 0.0);
        q.assign(g.size(), 0.0);
      }
      for (std::size_t j = 0; j < g.size(); ++j) {
        s[j] += g[j];
        q[j] += g[j] * g[j];
      }
    }
  });

  std::size_t dim = chunk_sum[0].size();
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    if (chunk_sum[c].size() != dim)
      throw std::runtime_error("mc_gradient: inconsistent gradient dimension");
    for (std::size_t j = 0; j < dim; ++j) {
      sum[j] += chunk_sum[c][j];
      sum_sq[j] += chunk_sq[c][j];
    }
  }

  EstimatorReport out;
  out.n_samples = n;
  out.grad_mean.resize(dim);
  out.grad_var.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = sum[j] / static_cast<double>(n);
    out.grad_mean[j] = mean;
    out.grad_var[j] = (sum_sq[j] - static_cast<double>(n) * mean * mean) /
                      static_cast<double>(n - 1);
  }
  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// schedules

double AnnealSchedule::eval(std::int64_t step) const {
  if (horizon <= 0) throw std::invalid_argument("schedule: horizon <= 0");
  double frac = std::min(static_cast<double>(step) / static_cast<double>(horizon), 1.0);
  switch (kind) {
    case ScheduleKind::kLinearKlAnneal:
      return std::clamp(frac, floor, ceiling);
    case ScheduleKind::kScheduledSampling:
      return std::clamp(1.0 - frac, floor, ceiling);
    case ScheduleKind::kTemperatureDecay:
      return ceiling + (floor - ceiling) * frac;
  }
  throw std::logic_error("schedule: unknown kind");
}

double kl_anneal_weight(std::int64_t step, const AnnealSchedule& schedule) {
  if (schedule.kind != ScheduleKind::kLinearKlAnneal)
    throw std::invalid_argument("kl_anneal_weight: wrong schedule kind");
  if (step < 0) throw std::invalid_argument("kl_anneal_weight: step < 0");
  return schedule.eval(step);
}

double scheduled_sampling_p(std::int64_t i, std::int64_t k) {
  if (k <= 0) throw std::invalid_argument("scheduled_sampling_p: k <= 0");
  return std::max(1.0 - static_cast<double>(i) / static_cast<double>(k), 0.0);
}

// ---------------------------------------------------------------------------
// objectives

Value free_bits_kl(const Value& kl_per_dim, double eps, FreeBitsMode mode) {
  for (double v : kl_per_dim.data())
    if (v < 0.0)
      throw std::invalid_argument("free_bits_kl: negative KL component");
  if (mode == FreeBitsMode::kPerDim)
    return sum(vmax_const(kl_per_dim, eps));
  return vmax_const(sum(kl_per_dim), eps);
}

std::vector<int> word_dropout(const std::vector<int>& tokens, double keep_rate,
                              int unk_id, util::Rng& rng) {
  if (keep_rate < 0.0 || keep_rate > 1.0)
    throw std::invalid_argument("word_dropout: keep_rate out of [0,1]");
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<int> out = tokens;
  for (std::size_t t = 1; t < out.size(); ++t)
    if (ud(rng) >= keep_rate) out[t] = unk_id;
  return out;
}

Value bow_loss(const std::function<Value(const Value&)>& inputless_logits,
               const Value& z, const std::vector<int>& target_tokens) {
  if (target_tokens.empty())
    throw std::invalid_argument("bow_loss: empty target");
  Value log_probs = log_softmax(inputless_logits(z));
  return neg(sum(gather(log_probs, target_tokens)));
}

double prior_mc_bound(
    const std::function<double(const std::vector<double>&)>& logcond,
    const dists::DiagGaussian& prior, int n, util::Rng& rng) {
  if (n < 1) throw std::invalid_argument("prior_mc_bound: n < 1");
  int d = prior.dim();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    auto eps = dists::standard_normal(rng, d);
    std::vector<double> z(d);
    for (int j = 0; j < d; ++j) {
      double ls = std::clamp(prior.log_std.data()[j], dists::kLogStdMin,
                             dists::kLogStdMax);
      z[j] = prior.mean.data()[j] + std::exp(ls) * eps[j];
    }
    acc += logcond(z);
  }
  return acc / static_cast<double>(n);
}

Value elbo(const std::function<Value(const Value&)>& logcond,
           const dists::DiagGaussian& q, const dists::DiagGaussian& prior,
           util::Rng& rng, int n_samples) {
  if (n_samples < 1) throw std::invalid_argument("elbo: n_samples < 1");
  Value recon;
  for (int i = 0; i < n_samples; ++i) {
    auto eps = dists::standard_normal(rng, q.dim());
    Value term = logcond(dists::gaussian_rsample(q, eps));
    recon = i == 0 ? term : add(recon, term);
  }
  recon = mul_const(recon, 1.0 / static_cast<double>(n_samples));
  return sub(recon, dists::gaussian_kl(q, prior));
}

double soft_select_logprob(
    const std::function<double(const std::vector<double>&)>& loglik,
    const dists::BernoulliMF& gamma) {
  std::vector<double> mean(gamma.dim());
  for (int i = 0; i < gamma.dim(); ++i) {
    double p = util::sigmoid(gamma.logits.data()[i]);
    mean[i] = std::clamp(p, dists::kProbFloor, 1.0 - dists::kProbFloor);
  }
  return loglik(mean);
}

double vrs_bound(
    const std::function<double(const std::vector<double>&)>& loglik_hard,
    const dists::BernoulliMF& q, const dists::BernoulliMF& prior,
    const std::vector<double>& mask_sample) {
  return loglik_hard(mask_sample) - dists::bernoulli_kl(q, prior).item();
}

double cmi_objective(double loglik, double kl, double eps, double lambda) {
  if (lambda < 0.0 || eps < 0.0)
    throw std::invalid_argument("cmi_objective: lambda and eps must be >= 0");
  return loglik - lambda * std::fabs(kl - eps);
}

Value cmi_objective(const Value& loglik, const Value& kl, double eps,
                    double lambda) {
  if (lambda < 0.0 || eps < 0.0)
    throw std::invalid_argument("cmi_objective: lambda and eps must be >= 0");
  return sub(loglik, mul_const(vabs(add_const(kl, -eps)), lambda));
}

double ratio_penalty(double nll, double gamma_mean, double alpha,
                     double lambda) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("ratio_penalty: alpha must be in (0,1)");
  return nll + lambda * std::fabs(gamma_mean - alpha);
}

// ---------------------------------------------------------------------------
// shipped toys

std::vector<double> GaussianQuadraticToy::exact_grad() const {
  return {target - mu, -std::exp(2.0 * log_sigma)};
}

EstimatorReport GaussianQuadraticToy::reparam_grad(std::int64_t n,
                                                   std::uint64_t seed,
                                                   int threads) const {
  double sigma = std::exp(log_sigma);
  return mc_gradient(
      [this, sigma](util::Rng& rng) {
        std::normal_distribution<double> nd(0.0, 1.0);
        double eps = nd(rng);
        double z = mu + sigma * eps;
        double df = -(z - target);
        return std::vector<double>{df, df * sigma * eps};
      },
      n, seed, threads);
}

double CategoricalRewardToy::expected_reward() const {
  auto p = probs();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * rewards[i];
  return acc;
}

std::vector<double> CategoricalRewardToy::exact_grad() const {
  auto p = probs();
  double er = expected_reward();
  std::vector<double> g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) g[j] = p[j] * (rewards[j] - er);
  return g;
}

EstimatorReport CategoricalRewardToy::reinforce_grad(std::int64_t n,
                                                     std::uint64_t seed,
                                                     double baseline,
                                                     int threads) const {
  auto p = probs();
  return mc_gradient(
      [this, p, baseline](util::Rng& rng) {
        int i = dists::categorical_sample(logits, rng);
        double w = rewards[i] - baseline;
        std::vector<double> g(p.size());
        for (std::size_t j = 0; j < p.size(); ++j)
          g[j] = w * ((static_cast<int>(j) == i ? 1.0 : 0.0) - p[j]);
        return g;
      },
      n, seed, threads);
}

EstimatorReport CategoricalRewardToy::reinforce_moving_avg_grad(
    std::int64_t n, std::uint64_t seed, double decay) const {
  if (n < 2) throw std::invalid_argument("reinforce_moving_avg_grad: n < 2");
  auto t0 = std::chrono::steady_clock::now();
  auto p = probs();
  std::size_t dim = p.size();
  std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
  double baseline = 0.0;
  for (std::int64_t s = 0; s < n; ++s) {
    auto rng = util::rng_stream(seed, static_cast<std::uint64_t>(s));
    int i = dists::categorical_sample(logits, rng);
    double w = rewards[i] - baseline;
    for (std::size_t j = 0; j < dim; ++j) {
      double g = w * ((static_cast<int>(j) == i ? 1.0 : 0.0) - p[j]);
      sum[j] += g;
      sum_sq[j] += g * g;
    }
    baseline = decay * baseline + (1.0 - decay) * rewards[i];
  }
  EstimatorReport out;
  out.n_samples = n;
  out.grad_mean.resize(dim);
  out.grad_var.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = sum[j] / static_cast<double>(n);
    out.grad_mean[j] = mean;
    out.grad_var[j] = (sum_sq[j] - static_cast<double>(n) * mean * mean) /
                      static_cast<double>(n - 1);
  }
  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

EstimatorReport CategoricalRewardToy::gumbel_softmax_grad(std::int64_t n,
                                                          std::uint64_t seed,
                                                          double tau,
                                                          int threads) const {
  return mc_gradient(
      [this, tau](util::Rng& rng) {
        auto u = dists::standard_uniform(rng, static_cast<int>(logits.size()));
        Value theta = Value::vector(logits, /*requires_grad=*/true);
        dists::CategoricalLogits pi{theta};
        Value y = dists::gumbel_softmax(pi, tau, u);
        Value obj = dot(y, Value::vector(rewards));
        backward(obj);
        return theta.grad();
      },
      n, seed, threads);
}

double ConjugateGaussianToy::log_evidence() const {
  double var = 1.0 + obs_var;
  return -0.5 * std::log(2.0 * M_PI * var) - x * x / (2.0 * var);
}

double ConjugateGaussianToy::posterior_mean() const { return x / (1.0 + obs_var); }

double ConjugateGaussianToy::posterior_var() const {
  return obs_var / (1.0 + obs_var);
}

double ConjugateGaussianToy::logcond(double z) const {
  return -0.5 * std::log(2.0 * M_PI * obs_var) -
         (x - z) * (x - z) / (2.0 * obs_var);
}

Value ConjugateGaussianToy::logcond(const Value& z) const {
  Value diff = add_const(neg(z), x);
  Value quad = mul_const(mul(diff, diff), -0.5 / obs_var);
  return add_const(quad, -0.5 * std::log(2.0 * M_PI * obs_var));
}

dists::DiagGaussian ConjugateGaussianToy::prior() const {
  return {Value::vector({0.0}), Value::vector({0.0})};
}

// ---------------------------------------------------------------------------
// bench

std::vector<BenchCase> default_bench_cases() {
  GaussianQuadraticToy gtoy{0.3, -0.2, 1.2};
  CategoricalRewardToy ctoy{{0.2, -0.4, 0.7, 0.0, -1.0},
                            {1.0, 3.0, 0.5, 2.0, 4.0}};
  std::vector<BenchCase> cases;
  cases.push_back({"reparam-gaussian", gtoy.exact_grad(),
                   [gtoy](std::int64_t n, std::uint64_t seed, int threads) {
                     return gtoy.reparam_grad(n, seed, threads);
                   }});
  cases.push_back({"reinforce-no-baseline", ctoy.exact_grad(),
                   [ctoy](std::int64_t n, std::uint64_t seed, int threads) {
                     return ctoy.reinforce_grad(n, seed, 0.0, threads);
                   }});
  cases.push_back({"reinforce-optimal-baseline", ctoy.exact_grad(),
                   [ctoy](std::int64_t n, std::uint64_t seed, int threads) {
                     return ctoy.reinforce_grad(n, seed, ctoy.expected_reward(),
                                                threads);
                   }});
  cases.push_back({"reinforce-moving-avg", ctoy.exact_grad(),
                   [ctoy](std::int64_t n, std::uint64_t seed, int threads) {
                     (void)threads;  // sequential control variate
                     return ctoy.reinforce_moving_avg_grad(n, seed);
                   }});
  cases.push_back({"gumbel-softmax-tau1", ctoy.exact_grad(),
                   [ctoy](std::int64_t n, std::uint64_t seed, int threads) {
                     return ctoy.gumbel_softmax_grad(n, seed, 1.0, threads);
                   }});
  return cases;
}

std::vector<BenchResult> estimator_bench(const std::vector<BenchCase>& cases,
                                         int n_trials, std::int64_t n_samples,
                                         std::uint64_t seed, int threads) {
  if (n_trials < 1) throw std::invalid_argument("estimator_bench: n_trials < 1");
  std::vector<BenchResult> out;
  for (const auto& c : cases) {
    if (c.exact_grad.empty())
      throw std::invalid_argument("estimator_bench: case without an oracle: " +
                                  c.name);
    std::vector<EstimatorReport> trials;
    for (int t = 0; t < n_trials; ++t)
      trials.push_back(c.run(n_samples, util::splitmix64(seed) + t, threads));
    BenchResult r;
    r.estimator = c.name;
    r.report = EstimatorReport::merge(trials);
    r.exact_grad = c.exact_grad;
    r.n_samples = r.report.n_samples;
    r.wall_time_s = r.report.wall_time_s;
    double bias = 0.0, mv = 0.0;
    for (std::size_t j = 0; j < c.exact_grad.size(); ++j) {
      bias = std::max(bias, std::fabs(r.report.grad_mean[j] - c.exact_grad[j]));
      mv += r.report.grad_var[j];
    }
    r.bias = bias;
    r.mean_var = mv / static_cast<double>(c.exact_grad.size());
    out.push_back(std::move(r));
  }
  return out;
}

std::string bench_csv(const std::vector<BenchResult>& results) {
  std::ostringstream os;
  os << "estimator,bias,mean_var,n_samples,wall_time_s\n";
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%.9g,%.9g,%lld,%.3f\n",
                  r.estimator.c_str(), r.bias, r.mean_var,
                  static_cast<long long>(r.n_samples), r.wall_time_s);
    os << line;
  }
  return os.str();
}

}  // namespace latentseq::estimators
