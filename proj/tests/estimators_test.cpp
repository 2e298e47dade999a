#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "latentseq/estimators.hpp"
#include "latentseq/stats.hpp"

using namespace latentseq;
using estimators::AnnealSchedule;
using estimators::ConjugateGaussianToy;
using estimators::ScheduleKind;
using ndgrad::Value;

namespace {

// Simpson quadrature of f(z) * N(z; 0, 1) over [-10, 10]
double gauss_quadrature(const std::function<double(double)>& f) {
  const int n = 4000;  // even
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / n;
  auto g = [&](double z) {
    return f(z) * std::exp(-z * z / 2.0) / std::sqrt(2.0 * M_PI);
  };
  double acc = g(lo) + g(hi);
  for (int i = 1; i < n; ++i) acc += g(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("prior_mc_bound: constants, Jensen bound, quadrature limit") {
  ConjugateGaussianToy toy{0.8, 0.5};

  // constant logcond gives exactly that constant
  auto rng = util::rng_stream(31, 0);
  auto constant = [](const std::vector<double>&) { return -2.5; };
  for (int n : {1, 3, 17})
    CHECK(estimators::prior_mc_bound(constant, toy.prior(), n, rng) ==
          doctest::Approx(-2.5).epsilon(1e-15));

  // estimate stays below the analytic evidence (within MC error)
  auto logcond = [&](const std::vector<double>& z) { return toy.logcond(z[0]); };
  stats::RunningMoments mom;
  auto rng2 = util::rng_stream(31, 1);
  for (int i = 0; i < 20000; ++i)
    mom.push(estimators::prior_mc_bound(logcond, toy.prior(), 1, rng2));
  CHECK(mom.mean() <= toy.log_evidence() + 3.0 * mom.stderr_of_mean());

  // large-n limit converges to E_prior[log p(x|z)], checked vs quadrature
  double want = gauss_quadrature([&](double z) { return toy.logcond(z); });
  CHECK(std::fabs(mom.mean() - want) <= 3.0 * mom.stderr_of_mean());
}

TEST_CASE("elbo: zero KL at q = prior, evidence at the true posterior") {
  ConjugateGaussianToy toy{0.8, 0.5};
  auto logcond = [&](const Value& z) { return toy.logcond(z); };

  dists::DiagGaussian prior = toy.prior();
  CHECK(dists::gaussian_kl(prior, toy.prior()).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  dists::DiagGaussian post{
      Value::vector({toy.posterior_mean()}),
      Value::vector({0.5 * std::log(toy.posterior_var())})};
  stats::RunningMoments mom;
  auto rng = util::rng_stream(32, 0);
  for (int i = 0; i < 100000; ++i)
    mom.push(estimators::elbo(logcond, post, toy.prior(), rng, 1).item());
  CHECK(std::fabs(mom.mean() - toy.log_evidence()) <=
        3.0 * mom.stderr_of_mean());
}

TEST_CASE("elbo stays below an importance-sampled evidence estimate") {
  auto rng = util::rng_stream(33, 0);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    ConjugateGaussianToy toy{nd(rng) + 0.5, 0.3 + 0.2 * trial};
    // a deliberately mismatched q
    dists::DiagGaussian q{Value::vector({toy.posterior_mean() + 0.6}),
                          Value::vector({0.5 * std::log(toy.posterior_var()) + 0.3})};
    auto logcond_v = [&](const Value& z) { return toy.logcond(z); };

    stats::RunningMoments elbo_mom;
    for (int i = 0; i < 20000; ++i)
      elbo_mom.push(estimators::elbo(logcond_v, q, toy.prior(), rng, 1).item());

    // importance-sampled log-evidence: log mean_i p(x|z_i) p(z_i) / q(z_i)
    double qm = q.mean.data()[0], qs = std::exp(q.log_std.data()[0]);
    stats::RunningMoments is_mom;
    for (int i = 0; i < 20000; ++i) {
      double z = qm + qs * nd(rng) * 2.0;  // nd is sigma=0.5, so scale by 2
      double logq = -0.5 * std::log(2.0 * M_PI * qs * qs) -
                    (z - qm) * (z - qm) / (2.0 * qs * qs);
      double logprior = -0.5 * std::log(2.0 * M_PI) - z * z / 2.0;
      is_mom.push(std::exp(toy.logcond(z) + logprior - logq));
    }
    double is_estimate = std::log(is_mom.mean());
    CHECK(elbo_mom.mean() <= is_estimate + 3.0 * elbo_mom.stderr_of_mean());
    // and the gap to the true evidence equals KL(q||posterior) in expectation
    CHECK(elbo_mom.mean() <= toy.log_evidence() + 3.0 * elbo_mom.stderr_of_mean());
  }
}

TEST_CASE("elbo is differentiable in the variational parameters") {
  ConjugateGaussianToy toy{0.8, 0.5};
  auto f = [&](const Value& x) {
    dists::DiagGaussian q{ndgrad::gather(x, {0}), ndgrad::gather(x, {1})};
    auto rng = util::rng_stream(77, 7);
    auto logcond = [&](const Value& z) { return toy.logcond(z); };
    return estimators::elbo(logcond, q, toy.prior(), rng, 2);
  };
  CHECK(ndgrad::gradcheck(f, {0.3, -0.4}, 1e-6) <= 1e-6);
}

TEST_CASE("score_function_grad: zero at reward == baseline, oracle match") {
  estimators::CategoricalRewardToy toy{{0.2, -0.4, 0.7, 0.0, -1.0},
                                       {1.0, 3.0, 0.5, 2.0, 4.0}};
  auto p = toy.probs();

  // reward identically equal to the baseline: every per-sample term is 0
  auto sampler = std::function<int(util::Rng&)>(
      [&](util::Rng& rng) { return dists::categorical_sample(toy.logits, rng); });
  auto grad_logq = std::function<std::vector<double>(const int&)>([&](const int& i) {
    std::vector<double> g(p.size());
    for (std::size_t j = 0; j < p.size(); ++j)
      g[j] = (static_cast<int>(j) == i ? 1.0 : 0.0) - p[j];
    return g;
  });
  auto flat_reward = std::function<double(const int&)>([](const int&) { return 1.7; });
  auto rep0 = estimators::score_function_grad<int>(sampler, grad_logq,
                                                   flat_reward, 1.7, 1000, 5);
  for (double g : rep0.grad_mean) CHECK(g == 0.0);
  for (double v : rep0.grad_var) CHECK(v == 0.0);

  CHECK_THROWS(estimators::score_function_grad<int>(sampler, grad_logq,
                                                    flat_reward, 1.7, 1, 5));

  // enumeration oracle at n = 1e5
  auto exact = toy.exact_grad();
  auto rep = toy.reinforce_grad(100000, 91, 0.0);
  for (std::size_t j = 0; j < exact.size(); ++j) {
    double se = std::sqrt(rep.grad_var[j] / rep.n_samples);
    CHECK(std::fabs(rep.grad_mean[j] - exact[j]) <= 3.0 * se);
  }

  // optimal constant baseline reduces the variance on the same draw count
  auto with_b = toy.reinforce_grad(100000, 91, toy.expected_reward());
  double var0 = 0.0, var_b = 0.0;
  for (std::size_t j = 0; j < exact.size(); ++j) {
    var0 += rep.grad_var[j];
    var_b += with_b.grad_var[j];
  }
  CHECK(var_b < var0);
}

TEST_CASE("mc gradients are bit-identical across thread counts") {
  estimators::CategoricalRewardToy toy{{0.1, -0.2, 0.3}, {1.0, 2.0, 0.5}};
  auto r1 = toy.reinforce_grad(10000, 7, 0.0, 1);
  auto r2 = toy.reinforce_grad(10000, 7, 0.0, 2);
  auto r4 = toy.reinforce_grad(10000, 7, 0.0, 4);
  CHECK(r1.grad_mean == r2.grad_mean);
  CHECK(r1.grad_mean == r4.grad_mean);
  CHECK(r1.grad_var == r2.grad_var);
  CHECK(r1.grad_var == r4.grad_var);
}

TEST_CASE("report merge equals sufficient-statistics pooling") {
  estimators::CategoricalRewardToy toy{{0.1, -0.2, 0.3}, {1.0, 2.0, 0.5}};
  auto full = toy.reinforce_grad(4096, 11, 0.0);
  auto a = toy.reinforce_grad(2048, 11, 0.0);
  // second half re-uses the same per-index streams offset by 2048
  auto b = estimators::mc_gradient(
      [&](util::Rng& rng) {
        auto p = toy.probs();
        int i = dists::categorical_sample(toy.logits, rng);
        std::vector<double> g(p.size());
        for (std::size_t j = 0; j < p.size(); ++j)
          g[j] = toy.rewards[i] * ((static_cast<int>(j) == i ? 1.0 : 0.0) - p[j]);
        return g;
      },
      2048, 11, 1);
  (void)full;
  auto merged = estimators::EstimatorReport::merge({a, b});
  CHECK(merged.n_samples == 4096);
  for (std::size_t j = 0; j < merged.grad_mean.size(); ++j)
    CHECK(merged.grad_mean[j] ==
          doctest::Approx(0.5 * (a.grad_mean[j] + b.grad_mean[j])).epsilon(1e-12));
}

TEST_CASE("soft_select_logprob: hard masks, linear exactness, measured gap") {
  // loglik linear in the mask: soft-select is exact
  std::vector<double> coef{0.4, -1.2, 0.7, 0.3};
  auto linear = [&](const std::vector<double>& mask) {
    double acc = -0.8;
    for (std::size_t i = 0; i < mask.size(); ++i) acc += coef[i] * mask[i];
    return acc;
  };
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  dists::BernoulliMF gamma{Value::vector({logit(0.3), logit(0.8), logit(0.5), logit(0.9)})};

  // exact expectation by 2^4 enumeration
  std::vector<double> gp(4);
  for (int i = 0; i < 4; ++i) gp[i] = util::sigmoid(gamma.logits.data()[i]);
  double e_loglik = 0.0;
  for (int m = 0; m < 16; ++m) {
    std::vector<double> mask(4);
    double w = 1.0;
    for (int i = 0; i < 4; ++i) {
      mask[i] = (m >> i) & 1;
      w *= mask[i] > 0.5 ? gp[i] : 1.0 - gp[i];
    }
    e_loglik += w * linear(mask);
  }
  CHECK(estimators::soft_select_logprob(linear, gamma) ==
        doctest::Approx(e_loglik).epsilon(1e-6));

  // hard gamma equals the hard-mask log-likelihood (up to the clamp floor)
  dists::BernoulliMF hard{Value::vector({30.0, -30.0, 30.0, 30.0})};
  CHECK(estimators::soft_select_logprob(linear, hard) ==
        doctest::Approx(linear({1.0, 0.0, 1.0, 1.0})).epsilon(1e-5));

  // nonlinear loglik: the gap |log E_beta p - log p(.|gamma)| is measured by
  // full enumeration and is strictly positive
  auto nonlinear = [&](const std::vector<double>& mask) {
    double s = linear(mask);
    return -s * s;  // concave, so Jensen bites
  };
  double log_e_p = util::kNegInf;
  for (int m = 0; m < 16; ++m) {
    std::vector<double> mask(4);
    double w = 1.0;
    for (int i = 0; i < 4; ++i) {
      mask[i] = (m >> i) & 1;
      w *= mask[i] > 0.5 ? gp[i] : 1.0 - gp[i];
    }
    log_e_p = util::log_add(log_e_p, std::log(w) + nonlinear(mask));
  }
  double gap =
      std::fabs(log_e_p - estimators::soft_select_logprob(nonlinear, gamma));
  CHECK(gap > 1e-3);
  CHECK(std::isfinite(gap));
}

TEST_CASE("vrs_bound: KL-free at q = prior, enumeration inequality, equality") {
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  std::vector<double> coef{0.9, -0.6, 0.4};
  auto loglik = [&](const std::vector<double>& mask) {
    double acc = -1.1;
    for (std::size_t i = 0; i < mask.size(); ++i) acc += coef[i] * mask[i];
    return acc;
  };
  dists::BernoulliMF prior{Value::vector({logit(0.4), logit(0.7), logit(0.5)})};

  // q = prior: the bound is the likelihood term alone
  std::vector<double> mask{1.0, 0.0, 1.0};
  CHECK(estimators::vrs_bound(loglik, prior, prior, mask) ==
        doctest::Approx(loglik(mask)).epsilon(1e-12));

  auto enumerate_masks = [&](const dists::BernoulliMF& d,
                             const std::function<double(const std::vector<double>&, double)>& fn) {
    std::vector<double> probs(3);
    for (int i = 0; i < 3; ++i) probs[i] = util::sigmoid(d.logits.data()[i]);
    for (int m = 0; m < 8; ++m) {
      std::vector<double> mk(3);
      double w = 1.0;
      for (int i = 0; i < 3; ++i) {
        mk[i] = (m >> i) & 1;
        w *= mk[i] > 0.5 ? probs[i] : 1.0 - probs[i];
      }
      fn(mk, w);
    }
  };

  // log marginal by enumeration
  double log_marginal = util::kNegInf;
  enumerate_masks(prior, [&](const std::vector<double>& mk, double w) {
    log_marginal = util::log_add(log_marginal, std::log(w) + loglik(mk));
    return 0.0;
  });

  // E_q[bound] <= log marginal for an arbitrary q
  dists::BernoulliMF q{Value::vector({logit(0.6), logit(0.3), logit(0.8)})};
  double expected_bound = 0.0;
  enumerate_masks(q, [&](const std::vector<double>& mk, double w) {
    expected_bound += w * loglik(mk);
    return 0.0;
  });
  expected_bound -= dists::bernoulli_kl(q, prior).item();
  CHECK(expected_bound <= log_marginal + 1e-9);

  // the true posterior of a linear loglik factorizes; the bound is tight there
  std::vector<double> post_logits(3);
  for (int i = 0; i < 3; ++i)
    post_logits[i] = prior.logits.data()[i] + coef[i];
  dists::BernoulliMF qstar{Value::vector(post_logits)};
  double tight = 0.0;
  enumerate_masks(qstar, [&](const std::vector<double>& mk, double w) {
    tight += w * loglik(mk);
    return 0.0;
  });
  tight -= dists::bernoulli_kl(qstar, prior).item();
  CHECK(tight == doctest::Approx(log_marginal).epsilon(1e-9));
}

TEST_CASE("cmi_objective values and subgradients") {
  CHECK(estimators::cmi_objective(-3.0, 0.7, 0.7, 2.0) == doctest::Approx(-3.0));
  CHECK(estimators::cmi_objective(-3.0, 1.9, 0.7, 0.0) == doctest::Approx(-3.0));

  // penalty gradient w.r.t. kl flips sign across eps; 0 at kl == eps
  for (double kl0 : {0.3, 0.7, 1.4}) {
    Value kl = Value::scalar(kl0, true);
    Value obj = estimators::cmi_objective(Value::scalar(-1.0), kl, 0.7, 2.0);
    ndgrad::backward(obj);
    double g = kl.grad()[0];
    if (kl0 < 0.7) CHECK(g == doctest::Approx(2.0));
    if (kl0 == 0.7) CHECK(g == 0.0);
    if (kl0 > 0.7) CHECK(g == doctest::Approx(-2.0));
  }
  CHECK_THROWS(estimators::cmi_objective(-1.0, 0.5, 0.5, -1.0));
}

TEST_CASE("ratio_penalty values, defaults and gradient magnitude") {
  CHECK(estimators::ratio_penalty(2.0, 0.35, 0.35, 5.0) == doctest::Approx(2.0));
  CHECK(estimators::kSelectRatioTable == 0.35);
  CHECK(estimators::kSelectRatioHeadline == 0.25);
  // |d penalty / d gamma_mean| = lambda away from alpha
  double h = 1e-7, lambda = 3.0;
  double up = estimators::ratio_penalty(0.0, 0.6 + h, 0.35, lambda);
  double dn = estimators::ratio_penalty(0.0, 0.6 - h, 0.35, lambda);
  CHECK((up - dn) / (2 * h) == doctest::Approx(lambda).epsilon(1e-6));
  CHECK_THROWS(estimators::ratio_penalty(0.0, 0.5, 1.5, 1.0));
}

TEST_CASE("kl_anneal_weight and scheduled_sampling_p endpoints") {
  AnnealSchedule lin{ScheduleKind::kLinearKlAnneal, 200, 0.0, 1.0};
  CHECK(estimators::kl_anneal_weight(0, lin) == 0.0);
  CHECK(estimators::kl_anneal_weight(200, lin) == 1.0);
  CHECK(estimators::kl_anneal_weight(5000, lin) == 1.0);
  CHECK(estimators::kl_anneal_weight(100, lin) == doctest::Approx(0.5));

  CHECK(estimators::scheduled_sampling_p(0, 100) == 1.0);
  CHECK(estimators::scheduled_sampling_p(100, 100) == 0.0);
  CHECK(estimators::scheduled_sampling_p(250, 100) == 0.0);
  CHECK(estimators::scheduled_sampling_p(50, 100) == doctest::Approx(0.5));
  CHECK_THROWS(estimators::scheduled_sampling_p(1, 0));

  // all schedule outputs stay in [0,1] for weight schedules
  AnnealSchedule ss{ScheduleKind::kScheduledSampling, 77, 0.0, 1.0};
  for (std::int64_t step : {0, 1, 38, 76, 77, 10000}) {
    double w1 = lin.eval(step), w2 = ss.eval(step);
    CHECK(w1 >= 0.0);
    CHECK(w1 <= 1.0);
    CHECK(w2 >= 0.0);
    CHECK(w2 <= 1.0);
  }

  // temperature decay runs from start (ceiling) to end (floor)
  AnnealSchedule td{ScheduleKind::kTemperatureDecay, 100, 0.1, 2.0};
  CHECK(td.eval(0) == doctest::Approx(2.0));
  CHECK(td.eval(100) == doctest::Approx(0.1));
  CHECK(td.eval(500) == doctest::Approx(0.1));
}

TEST_CASE("free_bits_kl: quota floor, ties, and the zero-gradient region") {
  Value kl = Value::vector({0.002, 0.003, 0.001}, true);
  Value out = estimators::free_bits_kl(kl, 0.01);
  CHECK(out.item() == doctest::Approx(0.03));
  ndgrad::backward(out);
  for (double g : kl.grad()) CHECK(g == 0.0);

  Value kl2 = Value::vector({0.005, 0.02}, true);
  CHECK(estimators::free_bits_kl(kl2, 0.01).item() == doctest::Approx(0.03));

  // tie resolves to pass-through gradient
  Value kl3 = Value::vector({0.01}, true);
  Value out3 = estimators::free_bits_kl(kl3, 0.01);
  CHECK(out3.item() == doctest::Approx(0.01));
  ndgrad::backward(out3);
  CHECK(kl3.grad()[0] == 1.0);

  // total mode reserves one quota for the whole vector
  Value kl4 = Value::vector({0.5, 0.2}, true);
  CHECK(estimators::free_bits_kl(kl4, 5.0, estimators::FreeBitsMode::kTotal)
            .item() == doctest::Approx(5.0));
  CHECK(estimators::free_bits_kl(kl4, 0.1, estimators::FreeBitsMode::kTotal)
            .item() == doctest::Approx(0.7));

  CHECK_THROWS(estimators::free_bits_kl(Value::vector({-0.1}), 0.01));
}

TEST_CASE("word_dropout behaviour") {
  std::vector<int> tokens{5, 6, 7, 8, 9};
  auto rng = util::rng_stream(41, 0);
  CHECK(estimators::word_dropout(tokens, 1.0, 0, rng) == tokens);
  auto all_unk = estimators::word_dropout(tokens, 0.0, 0, rng);
  CHECK(all_unk == std::vector<int>{5, 0, 0, 0, 0});

  // kept fraction within 3 binomial standard errors of 0.75
  int n = 100001, kept = 0;
  std::vector<int> lots(n, 3);
  auto rng2 = util::rng_stream(41, 1);
  auto noised = estimators::word_dropout(lots, 0.75, 0, rng2);
  for (std::size_t i = 1; i < noised.size(); ++i) kept += noised[i] == 3;
  double phat = static_cast<double>(kept) / (n - 1);
  double se = std::sqrt(0.75 * 0.25 / (n - 1));
  CHECK(std::fabs(phat - 0.75) <= 3.0 * se);
}

TEST_CASE("bow_loss: uniform value, permutation invariance, peakedness") {
  const int vocab = 11;
  auto uniform_logits = [&](const Value&) {
    return Value::vector(std::vector<double>(vocab, 0.37));
  };
  Value z = Value::vector({0.0});
  std::vector<int> targets{3, 5, 5, 8};
  Value loss = estimators::bow_loss(uniform_logits, z, targets);
  CHECK(loss.item() ==
        doctest::Approx(targets.size() * std::log(vocab)).epsilon(1e-12));

  std::vector<int> shuffled{5, 8, 3, 5};
  CHECK(estimators::bow_loss(uniform_logits, z, shuffled).item() ==
        doctest::Approx(loss.item()).epsilon(1e-12));

  // logits peaked on the correct unigram distribution beat uniform
  auto peaked = [&](const Value&) {
    std::vector<double> l(vocab, 0.0);
    l[3] = l[8] = 2.0;
    l[5] = 2.7;
    return Value::vector(l);
  };
  CHECK(estimators::bow_loss(peaked, z, targets).item() < loss.item());

  CHECK_THROWS(estimators::bow_loss(uniform_logits, z, {}));
}

TEST_CASE("estimator_bench: unbiasedness, variance ordering, biased relaxation") {
  auto cases = estimators::default_bench_cases();
  auto results = estimators::estimator_bench(cases, 1, 100000, 2025, 2);
  REQUIRE(results.size() == 5);

  auto find = [&](const std::string& name) -> const estimators::BenchResult& {
    for (const auto& r : results)
      if (r.estimator == name) return r;
    throw std::runtime_error("missing case " + name);
  };

  // unbiased estimators land within 3 SE of the oracle, per coordinate
  for (const char* name :
       {"reparam-gaussian", "reinforce-no-baseline", "reinforce-optimal-baseline"}) {
    const auto& r = find(name);
    for (std::size_t j = 0; j < r.exact_grad.size(); ++j) {
      double se = std::sqrt(r.report.grad_var[j] / r.report.n_samples);
      CHECK(std::fabs(r.report.grad_mean[j] - r.exact_grad[j]) <= 3.0 * se);
    }
  }

  // REINFORCE-with-baseline variance strictly below REINFORCE-without
  CHECK(find("reinforce-optimal-baseline").mean_var <
        find("reinforce-no-baseline").mean_var);
  CHECK(find("reinforce-moving-avg").mean_var <
        find("reinforce-no-baseline").mean_var);

  // Gumbel-softmax at tau = 1 is biased: outside 3 SE on some coordinate
  {
    const auto& r = find("gumbel-softmax-tau1");
    bool outside = false;
    for (std::size_t j = 0; j < r.exact_grad.size(); ++j) {
      double se = std::sqrt(r.report.grad_var[j] / r.report.n_samples);
      if (std::fabs(r.report.grad_mean[j] - r.exact_grad[j]) > 3.0 * se)
        outside = true;
    }
    CHECK(outside);
  }

  // CSV contract
  auto csv = estimators::bench_csv(results);
  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "estimator,bias,mean_var,n_samples,wall_time_s");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);

  // deterministic under a fixed seed (wall time aside)
  auto again = estimators::estimator_bench(cases, 1, 100000, 2025, 1);
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].bias == again[i].bias);
    CHECK(results[i].mean_var == again[i].mean_var);
  }

  CHECK_THROWS(estimators::estimator_bench(
      {estimators::BenchCase{"no-oracle", {}, cases[0].run}}, 1, 100, 1));
}
