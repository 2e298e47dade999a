// Benchmark of the OpenMP batch kernels against their serial reference
// implementations: semi-Markov forward, expected-segment pass, HMM forward,
// and the chunked Monte-Carlo gradient driver.
//
//   kernel_bench [n_instances] [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "latentseq/estimators.hpp"
#include "latentseq/lattice.hpp"
#include "latentseq/util.hpp"

using namespace latentseq;

namespace {

template <class F>
double time_s(F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void report(const char* name, double serial_s, double parallel_s, bool equal) {
  std::printf("%-28s serial %8.3fs   omp %8.3fs   speedup %5.2fx   %s\n", name,
              serial_s, parallel_s, serial_s / parallel_s,
              equal ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 20000;
  int threads = argc > 2 ? std::atoi(argv[2]) : 0;
  threads = util::resolve_threads(threads);
  std::printf("kernel_bench: %d instances, %d threads\n", n, threads);

  std::vector<lattice::SegmentalPotentials> segs;
  std::vector<lattice::HmmPotentials> hmms;
  segs.reserve(n);
  hmms.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto rng = util::rng_stream(2026, static_cast<std::uint64_t>(i));
    segs.push_back(lattice::random_segmental(
        rng, 6 + static_cast<int>(rng() % 3), 2 + static_cast<int>(rng() % 2),
        3));
    hmms.push_back(lattice::random_hmm(rng, 5 + static_cast<int>(rng() % 2),
                                       4 + static_cast<int>(rng() % 2)));
  }

  {
    std::vector<double> a, b;
    double ts = time_s([&] { a = lattice::semimarkov_forward_batch_serial(segs); });
    double tp = time_s([&] { b = lattice::semimarkov_forward_batch(segs, threads); });
    report("semimarkov_forward", ts, tp, a == b);
  }
  {
    std::vector<double> a, b;
    double ts = time_s(
        [&] { a = lattice::semimarkov_expected_segments_batch_serial(segs); });
    double tp = time_s(
        [&] { b = lattice::semimarkov_expected_segments_batch(segs, threads); });
    report("semimarkov_expected_segs", ts, tp, a == b);
  }
  {
    std::vector<double> a, b;
    double ts = time_s([&] { a = lattice::hmm_forward_batch_serial(hmms); });
    double tp = time_s([&] { b = lattice::hmm_forward_batch(hmms, threads); });
    report("hmm_forward", ts, tp, a == b);
  }
  {
    estimators::CategoricalRewardToy toy{{0.2, -0.4, 0.7, 0.0, -1.0},
                                         {1.0, 3.0, 0.5, 2.0, 4.0}};
    std::int64_t samples = static_cast<std::int64_t>(n) * 50;
    estimators::EstimatorReport a, b;
    double ts = time_s([&] { a = toy.reinforce_grad(samples, 7, 0.0, 1); });
    double tp = time_s([&] { b = toy.reinforce_grad(samples, 7, 0.0, threads); });
    report("mc_gradient (reinforce)", ts, tp,
           a.grad_mean == b.grad_mean && a.grad_var == b.grad_var);
  }
  return 0;
}
