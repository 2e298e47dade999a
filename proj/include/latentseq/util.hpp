#ifndef LATENTSEQ_UTIL_HPP
#define LATENTSEQ_UTIL_HPP

// Plain-double numeric helpers, seeded RNG streams and the deterministic
// parallel-for used by the batch kernels. All parallel reductions in this
// library go through fixed-size chunks combined in index order, so results
// are bit-identical for any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace latentseq::util {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  double m = std::max(a, b);
  if (m == kNegInf) return kNegInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp(const double* x, int n) {
  double m = kNegInf;
  for (int i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& x) {
  return logsumexp(x.data(), static_cast<int>(x.size()));
}

inline std::vector<double> softmax(std::vector<double> x) {
  double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double& v : x) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : x) v /= s;
  return x;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

// ---------------------------------------------------------------------------
// RNG streams

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for (seed, index); used so per-sample / per-instance
// draws do not depend on iteration order or thread count.
inline Rng rng_stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(seed ^ splitmix64(index)));
}

// ---------------------------------------------------------------------------
// threading

inline int resolve_threads(int requested) {
#ifdef _OPENMP
  if (requested <= 0) return omp_get_max_threads();
  return requested;
#else
  (void)requested;
  return 1;
#endif
}

// Runs f(i) for i in [0, n). With OpenMP the iterations are distributed
// statically; f must not touch shared mutable state except its own slot.
template <class F>
void parallel_for(int n, int threads, F&& f) {
  threads = resolve_threads(threads);
#ifdef _OPENMP
  if (threads > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
#endif
  for (int i = 0; i < n; ++i) f(i);
}

}  // namespace latentseq::util

#endif  // LATENTSEQ_UTIL_HPP
