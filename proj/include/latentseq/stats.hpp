#ifndef LATENTSEQ_STATS_HPP
#define LATENTSEQ_STATS_HPP

// Small statistics helpers for the test oracles and the estimator bench.

#include <boost/math/special_functions/gamma.hpp>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace latentseq::stats {

// Upper-tail probability P(X >= stat) for a chi-square with `dof` degrees of
// freedom.
inline double chi_square_pvalue(double stat, int dof) {
  if (dof < 1) throw std::invalid_argument("chi_square_pvalue: dof < 1");
  if (stat <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, stat / 2.0);
}

// Pearson statistic of observed counts against expected probabilities.
inline double pearson_chi_square(const std::vector<std::int64_t>& counts,
                                 const std::vector<double>& probs) {
  if (counts.size() != probs.size())
    throw std::invalid_argument("pearson_chi_square: size mismatch");
  std::int64_t n = 0;
  for (auto c : counts) n += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double expect = probs[i] * static_cast<double>(n);
    double diff = static_cast<double>(counts[i]) - expect;
    stat += diff * diff / expect;
  }
  return stat;
}

struct RunningMoments {
  std::int64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  void push(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double variance() const {  // sample variance
    double m = mean();
    return (sum_sq - static_cast<double>(n) * m * m) /
           static_cast<double>(n - 1);
  }
  double stderr_of_mean() const {
    return std::sqrt(variance() / static_cast<double>(n));
  }
};

}  // namespace latentseq::stats

#endif  // LATENTSEQ_STATS_HPP
