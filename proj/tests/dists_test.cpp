#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "latentseq/dists.hpp"
#include "latentseq/ndgrad.hpp"
#include "latentseq/stats.hpp"
#include "latentseq/util.hpp"

using namespace latentseq;
using ndgrad::Value;

namespace {

dists::DiagGaussian gauss(std::vector<double> mean, std::vector<double> log_std,
                          bool rg = false) {
  return {Value::vector(std::move(mean), rg), Value::vector(std::move(log_std), rg)};
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("gaussian_kl closed-form values") {
  auto q = gauss({0.3, -1.2}, {0.1, -0.4});
  CHECK(dists::gaussian_kl(q, q).item() == doctest::Approx(0.0).epsilon(1e-12));

  auto q2 = gauss({1.0, -2.0, 0.5}, {0.0, 0.0, 0.0});
  auto p2 = gauss({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0});
  double norm_sq = 1.0 + 4.0 + 0.25;
  CHECK(dists::gaussian_kl(q2, p2).item() == doctest::Approx(norm_sq / 2.0));

  CHECK_THROWS(dists::gaussian_kl(q, p2));
}

TEST_CASE("gaussian_kl d=1 value with Monte-Carlo oracle") {
  // q = N(0, sigma^2=4), p = N(0,1): KL = 1.5 - ln 2
  auto q = gauss({0.0}, {std::log(2.0)});
  auto p = gauss({0.0}, {0.0});
  double kl = dists::gaussian_kl(q, p).item();
  CHECK(kl == doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-12));
  CHECK(kl == doctest::Approx(0.806853).epsilon(1e-5));

  // MC estimate of E_q[log q - log p] over 1e6 samples
  auto rng = util::rng_stream(99, 0);
  stats::RunningMoments mom;
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int i = 0; i < 1000000; ++i) {
    double z = nd(rng);
    double logq = -0.5 * std::log(2.0 * M_PI * 4.0) - z * z / 8.0;
    double logp = -0.5 * std::log(2.0 * M_PI) - z * z / 2.0;
    mom.push(logq - logp);
  }
  CHECK(std::fabs(mom.mean() - kl) <= 3.0 * mom.stderr_of_mean());
}

TEST_CASE("gaussian_kl nonnegative, zero iff q == p") {
  auto rng = util::rng_stream(7, 1);
  std::normal_distribution<double> nd(0.0, 1.5);
  for (int t = 0; t < 200; ++t) {
    int d = 1 + static_cast<int>(rng() % 4);
    std::vector<double> m1(d), m2(d), s1(d), s2(d);
    for (int i = 0; i < d; ++i) {
      m1[i] = nd(rng);
      m2[i] = nd(rng);
      s1[i] = 0.5 * nd(rng);
      s2[i] = 0.5 * nd(rng);
    }
    double kl = dists::gaussian_kl(gauss(m1, s1), gauss(m2, s2)).item();
    CHECK(kl >= -1e-12);
    double self = dists::gaussian_kl(gauss(m1, s1), gauss(m1, s1)).item();
    CHECK(self == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("gaussian_rsample deterministic transform") {
  auto q = gauss({0.7, -0.2}, {0.3, -1.0});
  Value z = dists::gaussian_rsample(q, {0.0, 0.0});
  CHECK(z.data()[0] == doctest::Approx(0.7));
  CHECK(z.data()[1] == doctest::Approx(-0.2));

  // log_std below the clamp floor: z collapses to the mean
  auto tiny = gauss({1.0}, {-50.0});
  Value z2 = dists::gaussian_rsample(tiny, {3.0});
  CHECK(std::fabs(z2.data()[0] - 1.0) <= 3.001 * std::exp(dists::kLogStdMin));
}

TEST_CASE("gaussian_rsample empirical moments match parameters") {
  auto q = gauss({0.4}, {-0.25});
  auto rng = util::rng_stream(5, 2);
  stats::RunningMoments mom;
  for (int i = 0; i < 100000; ++i) {
    auto eps = dists::standard_normal(rng, 1);
    mom.push(dists::gaussian_rsample(q, eps).data()[0]);
  }
  double want_var = std::exp(2.0 * -0.25);
  CHECK(std::fabs(mom.mean() - 0.4) <= 3.0 * mom.stderr_of_mean());
  // variance of the sample variance of a Gaussian ~ 2 sigma^4 / n
  double se_var = std::sqrt(2.0 * want_var * want_var / mom.n);
  CHECK(std::fabs(mom.variance() - want_var) <= 3.0 * se_var);
}

TEST_CASE("gaussian gradients flow to mean and log_std") {
  auto f = [](const Value& x) {
    dists::DiagGaussian q{ndgrad::gather(x, {0, 1}), ndgrad::gather(x, {2, 3})};
    dists::DiagGaussian p{ndgrad::gather(x, {4, 5}),
                          Value::vector({0.0, 0.0})};
    Value z = dists::gaussian_rsample(q, {0.37, -1.2});
    return ndgrad::add(dists::gaussian_kl(q, p), ndgrad::dot(z, z));
  };
  CHECK(ndgrad::gradcheck(f, {0.3, -0.8, 0.2, -0.5, 1.0, 0.1}, 1e-6) <= 1e-6);
}

TEST_CASE("bernoulli_kl values") {
  dists::BernoulliMF q{Value::vector({logit(0.75)})};
  dists::BernoulliMF p{Value::vector({logit(0.5)})};
  double kl = dists::bernoulli_kl(q, p).item();
  double expect = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(kl == doctest::Approx(expect).epsilon(1e-12));
  CHECK(kl == doctest::Approx(0.130812).epsilon(1e-5));

  // exhaustive two-outcome expectation oracle
  double oracle = 0.0;
  for (int b = 0; b < 2; ++b) {
    double qb = b ? 0.75 : 0.25;
    double pb = b ? 0.5 : 0.5;
    oracle += qb * std::log(qb / pb);
  }
  CHECK(kl == doctest::Approx(oracle).epsilon(1e-12));

  CHECK(dists::bernoulli_kl(q, q).item() == doctest::Approx(0.0));

  // boundary probability clamps to the floor instead of NaN
  dists::BernoulliMF extreme{Value::vector({100.0})};  // sigmoid ~ 1
  double kl_extreme = dists::bernoulli_kl(extreme, p).item();
  CHECK(std::isfinite(kl_extreme));
  CHECK(kl_extreme == doctest::Approx(std::log(2.0)).epsilon(1e-4));

  // asymmetry witnessed
  double fwd = dists::bernoulli_kl(q, p).item();
  double rev = dists::bernoulli_kl(p, q).item();
  CHECK(fwd != doctest::Approx(rev));
}

TEST_CASE("bernoulli_kl nonnegative on random parameters") {
  auto rng = util::rng_stream(13, 0);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    int n = 1 + static_cast<int>(rng() % 5);
    std::vector<double> ql(n), pl(n);
    for (int i = 0; i < n; ++i) {
      ql[i] = nd(rng);
      pl[i] = nd(rng);
    }
    dists::BernoulliMF q{Value::vector(ql)}, p{Value::vector(pl)};
    CHECK(dists::bernoulli_kl(q, p).item() >= -1e-12);
  }
}

TEST_CASE("bernoulli_kl gradcheck away from clamp boundaries") {
  auto f = [](const Value& x) {
    dists::BernoulliMF q{ndgrad::gather(x, {0, 1})};
    dists::BernoulliMF p{ndgrad::gather(x, {2, 3})};
    return dists::bernoulli_kl(q, p);
  };
  CHECK(ndgrad::gradcheck(f, {0.4, -1.1, 0.9, 0.2}, 1e-6) <= 1e-6);
}

TEST_CASE("gumbel_softmax stays on the simplex and is differentiable") {
  auto rng = util::rng_stream(3, 3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> logits(4);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (auto& v : logits) v = nd(rng);
    auto u = dists::standard_uniform(rng, 4);
    dists::CategoricalLogits pi{Value::vector(logits)};
    Value y = dists::gumbel_softmax(pi, 0.7, u);
    double s = 0.0;
    for (double v : y.data()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }

  auto u = dists::standard_uniform(rng, 3);
  auto f = [&](const Value& x) {
    dists::CategoricalLogits pi{x};
    Value y = dists::gumbel_softmax(pi, 0.9, u);
    return ndgrad::dot(y, Value::vector({1.0, -2.0, 0.5}));
  };
  CHECK(ndgrad::gradcheck(f, {0.2, -0.3, 0.8}, 1e-6) <= 1e-6);

  dists::CategoricalLogits pi{Value::vector({0.0, 0.0})};
  CHECK_THROWS(dists::gumbel_softmax(pi, 0.0, {0.5, 0.5}));
  CHECK_THROWS(dists::gumbel_softmax(pi, -1.0, {0.5, 0.5}));
}

TEST_CASE("gumbel-max argmax law is exactly categorical (chi-square)") {
  // independent of tau: check at tau = 1
  std::vector<double> logits{0.3, -0.5, 1.1};
  auto probs = util::softmax(logits);
  dists::CategoricalLogits pi{Value::vector(logits)};
  auto rng = util::rng_stream(2024, 1);
  std::vector<std::int64_t> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    auto u = dists::standard_uniform(rng, 3);
    Value y = dists::gumbel_softmax(pi, 1.0, u);
    int arg = 0;
    for (int j = 1; j < 3; ++j)
      if (y.data()[j] > y.data()[arg]) arg = j;
    counts[arg]++;
  }
  double statistic = stats::pearson_chi_square(counts, probs);
  CHECK(stats::chi_square_pvalue(statistic, 2) > 0.01);
}

TEST_CASE("low temperature concentrates the relaxation") {
  // Pilot-derived thresholds for uniform pi over 3 categories. The max
  // component exceeds 0.999 exactly when the top-two perturbed-logit gap
  // exceeds tau*log(999*2), so the peaked fraction is a function of tau:
  // measured ~0.955 at tau=0.01 and ~0.996 at tau=0.001.
  auto peaked_fraction = [](double tau, std::uint64_t stream) {
    dists::CategoricalLogits pi{Value::vector({0.0, 0.0, 0.0})};
    auto rng = util::rng_stream(17, stream);
    const int n = 100000;
    int peaked = 0;
    for (int i = 0; i < n; ++i) {
      auto u = dists::standard_uniform(rng, 3);
      Value y = dists::gumbel_softmax(pi, tau, u);
      double mx = std::max({y.data()[0], y.data()[1], y.data()[2]});
      if (mx > 0.999) ++peaked;
    }
    return static_cast<double>(peaked) / n;
  };
  double at_001 = peaked_fraction(0.01, 4);
  double at_0001 = peaked_fraction(0.001, 5);
  CHECK(at_001 >= 0.95);
  CHECK(at_0001 >= 0.99);
  CHECK(at_0001 > at_001);
}

TEST_CASE("straight_through forward/backward contract") {
  Value y = Value::vector({0.2, 0.7, 0.1}, true);
  Value soft = ndgrad::softmax(y);
  Value hard = dists::straight_through(soft);
  int arg = 1;
  for (int i = 0; i < 3; ++i)
    CHECK(hard.data()[i] == (i == arg ? 1.0 : 0.0));

  // backward equals the soft path's gradient exactly
  Value probe = Value::vector({0.4, -1.0, 2.2});
  ndgrad::backward(ndgrad::dot(hard, probe));
  auto g_hard = y.grad();
  y.zero_grad();
  ndgrad::backward(ndgrad::dot(ndgrad::softmax(y), probe));
  auto g_soft = y.grad();
  for (int i = 0; i < 3; ++i) CHECK(g_hard[i] == doctest::Approx(g_soft[i]));
}

TEST_CASE("bernoulli straight-through variant") {
  Value alpha = Value::vector({0.7}, true);
  Value hard = ndgrad::straight_through_bernoulli(alpha);
  CHECK(hard.data()[0] == 1.0);
  ndgrad::backward(ndgrad::mul_const(hard, 4.0));
  CHECK(alpha.grad()[0] == doctest::Approx(4.0));
}
