#include "latentseq/dists.hpp"

#include <cmath>
#include <stdexcept>

namespace latentseq::dists {

using namespace ndgrad;

Value clamp(const Value& x, double lo, double hi) {
  // min(x, hi) = -max(-x, -hi)
  Value upper = neg(vmax_const(neg(x), -hi));
  return vmax_const(upper, lo);
}

Value clamped_log_std(const DiagGaussian& g) {
  return clamp(g.log_std, kLogStdMin, kLogStdMax);
}

Value bernoulli_probs(const BernoulliMF& b) {
  return clamp(vsigmoid(b.logits), kProbFloor, 1.0 - kProbFloor);
}

Value gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim())
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  Value ls1 = clamped_log_std(q);
  Value ls2 = clamped_log_std(p);
  // per-dim: log s2 - log s1 - 1/2 + (s1^2 + (mu1-mu2)^2) / (2 s2^2)
  Value var1 = vexp(mul_const(ls1, 2.0));
  Value inv_var2 = vexp(mul_const(ls2, -2.0));
  Value dmu = sub(q.mean, p.mean);
  Value quad = mul(add(var1, mul(dmu, dmu)), inv_var2);
  Value per_dim = add(add_const(sub(ls2, ls1), -0.5), mul_const(quad, 0.5));
  return sum(per_dim);
}

Value gaussian_rsample(const DiagGaussian& q, const std::vector<double>& eps) {
  if (static_cast<int>(eps.size()) != q.dim())
    throw std::invalid_argument("gaussian_rsample: eps dimension mismatch");
  Value noise = Value::vector(eps);
  return add(q.mean, mul(vexp(clamped_log_std(q)), noise));
}

Value bernoulli_kl(const BernoulliMF& q, const BernoulliMF& p) {
  if (q.dim() != p.dim())
    throw std::invalid_argument("bernoulli_kl: length mismatch");
  Value qp = bernoulli_probs(q);
  Value pp = bernoulli_probs(p);
  Value qc = add_const(neg(qp), 1.0);
  Value pc = add_const(neg(pp), 1.0);
  Value term1 = mul(qp, sub(vlog(qp), vlog(pp)));
  Value term0 = mul(qc, sub(vlog(qc), vlog(pc)));
  return sum(add(term1, term0));
}

Value gumbel_softmax(const CategoricalLogits& pi, double tau,
                     const std::vector<double>& u) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau <= 0");
  if (static_cast<int>(u.size()) != pi.dim())
    throw std::invalid_argument("gumbel_softmax: noise dimension mismatch");
  std::vector<double> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    double ui = std::min(std::max(u[i], kProbFloor), 1.0 - kProbFloor);
    g[i] = -std::log(-std::log(ui));
  }
  Value log_pi = log_softmax(pi.logits);
  Value perturbed = add(log_pi, Value::vector(g));
  return softmax(mul_const(perturbed, 1.0 / tau));
}

std::vector<double> standard_normal(util::Rng& rng, int d) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(d);
  for (auto& v : out) v = nd(rng);
  return out;
}

std::vector<double> standard_uniform(util::Rng& rng, int d) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<double> out(d);
  for (auto& v : out) v = ud(rng);
  return out;
}

std::vector<double> bernoulli_sample(const BernoulliMF& b, util::Rng& rng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<double> out(b.dim());
  for (int i = 0; i < b.dim(); ++i) {
    double p = util::sigmoid(b.logits.data()[i]);
    p = std::min(std::max(p, kProbFloor), 1.0 - kProbFloor);
    out[i] = ud(rng) < p ? 1.0 : 0.0;
  }
  return out;
}

int categorical_sample(const std::vector<double>& logits, util::Rng& rng) {
  auto probs = util::softmax(logits);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double r = ud(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace latentseq::dists
