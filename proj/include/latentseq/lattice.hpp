#ifndef LATENTSEQ_LATTICE_HPP
#define LATENTSEQ_LATTICE_HPP

// Log-space dynamic programs over latent alignments (HMM) and latent
// segmentations (semi-Markov), plus brute-force enumeration oracles.
//
// Potentials are plain log-probability tables decoupled from any scorer.
// Each DP comes in two forms: a plain-double kernel (used by the batch
// drivers and oracles) and an ndgrad graph form (used wherever gradients are
// needed). Batch drivers ship as a serial reference and an OpenMP version;
// both fill one output slot per instance and are bit-identical.

#include <cstdint>
#include <functional>
#include <vector>

#include "latentseq/ndgrad.hpp"
#include "latentseq/util.hpp"

namespace latentseq::lattice {

using ndgrad::Value;

// ---------------------------------------------------------------------------
// potentials

// trans[t][i][j] = log p(a_t = i | a_{t-1} = j, history); trans[0] is kept
// for shape uniformity but the recursion starts from init. Columns of each
// trans[t] and init normalize to 1 in probability space.
struct HmmPotentials {
  std::vector<double> init;                            // [K]
  std::vector<std::vector<std::vector<double>>> trans; // [T][K][K]
  std::vector<std::vector<double>> emit;               // [T][K], entries <= 0
  int T() const { return static_cast<int>(emit.size()); }
  int K() const { return static_cast<int>(init.size()); }
};

// gen[p][l][j] = log p(y_{p+1..p+l+1}, $ | record j, y_{1..p}) for a segment
// of length l+1 starting after position p; -inf where p+l+1 > m.
// trans[p][j][q] = log p(record j | previous record q, y_{1..p}); rows over j
// normalize per q and the self-transition (j == q != 0) is -inf. Record 0 is
// the null record. init_trans[j] covers the first segment.
struct SegmentalPotentials {
  int m = 0;
  int K = 0;  // non-null records; labels live in {0..K}
  int L = 1;
  std::vector<double> init_trans;                       // [K+1]
  std::vector<std::vector<std::vector<double>>> trans;  // [m][K+1][K+1]
  std::vector<std::vector<std::vector<double>>> gen;    // [m][L][K+1]
};

// cuts 0 = b_0 < b_1 < ... < b_tau = m; labels c_1..c_tau in {0..K}
struct SegmentationPath {
  std::vector<int> cuts;
  std::vector<int> labels;
  int n_segments() const { return static_cast<int>(labels.size()); }
  bool operator==(const SegmentationPath&) const = default;
};

void validate(const HmmPotentials& pots, double tol = 1e-9);
void validate(const SegmentalPotentials& pots, double tol = 1e-9);

// ---------------------------------------------------------------------------
// plain-double kernels

double hmm_forward(const HmmPotentials& pots);
// [T][K] posterior marginals p(a_t = i | y); each row sums to 1
std::vector<std::vector<double>> hmm_posteriors(const HmmPotentials& pots);

double semimarkov_forward(const SegmentalPotentials& pots);
// exact posterior E[number of segments], expectation-semiring pass
double semimarkov_expected_segments(const SegmentalPotentials& pots);
// highest-scoring segmentation (max-product); score written if non-null
SegmentationPath semimarkov_map(const SegmentalPotentials& pots,
                                double* score = nullptr);

double path_log_score(const SegmentalPotentials& pots,
                      const SegmentationPath& path);
double hmm_path_log_score(const HmmPotentials& pots,
                          const std::vector<int>& path);

// ---------------------------------------------------------------------------
// graph forms

struct HmmExpr {
  Value init;                // [K]
  std::vector<Value> trans;  // T matrices [K][K]
  std::vector<Value> emit;   // T vectors [K]
};

struct SegmentalExpr {
  int m = 0, K = 0, L = 1;
  Value init_trans;          // [K+1]
  std::vector<Value> trans;  // m matrices [K+1][K+1]
  std::vector<Value> gen;    // m matrices [L][K+1]
};

HmmExpr to_expr(const HmmPotentials& pots, bool requires_grad);
SegmentalExpr to_expr(const SegmentalPotentials& pots, bool requires_grad);

Value hmm_forward(const HmmExpr& pots);
Value semimarkov_forward(const SegmentalExpr& pots);
Value semimarkov_expected_segments(const SegmentalExpr& pots);

// ---------------------------------------------------------------------------
// enumeration oracles

// all K^T alignment paths; guard K^T <= 1e6
std::vector<std::vector<int>> enumerate_alignments(int T, int K);
// all valid segmentations; guard m <= 10
std::vector<SegmentationPath> enumerate_segmentations(int m, int K, int L);
// DFS over valid segmentations without materializing the list
void for_each_segmentation(int m, int K, int L,
                           const std::function<void(const SegmentationPath&)>& fn);
// independent count recurrence used to cross-check the enumerator
std::uint64_t segmentation_count(int m, int K, int L);

// log of the brute-force sum over all paths (the DP oracles)
double brute_force_log_marginal(const HmmPotentials& pots);
double brute_force_log_marginal(const SegmentalPotentials& pots);
double brute_force_expected_segments(const SegmentalPotentials& pots);
// posterior usage probability of each (start p, length index l, record j)
std::vector<std::vector<std::vector<double>>> brute_force_gen_posterior(
    const SegmentalPotentials& pots);
std::vector<std::vector<double>> brute_force_hmm_posteriors(
    const HmmPotentials& pots);

// ---------------------------------------------------------------------------
// random instances (tests, lattice-check, benchmark)

HmmPotentials random_hmm(util::Rng& rng, int T, int K);
SegmentalPotentials random_segmental(util::Rng& rng, int m, int K, int L);

// ---------------------------------------------------------------------------
// batch drivers: one log-marginal per instance. The _serial variants are the
// reference implementations; the OpenMP variants must match them bit-exactly.

std::vector<double> hmm_forward_batch_serial(
    const std::vector<HmmPotentials>& batch);
std::vector<double> hmm_forward_batch(const std::vector<HmmPotentials>& batch,
                                      int threads);
std::vector<double> semimarkov_forward_batch_serial(
    const std::vector<SegmentalPotentials>& batch);
std::vector<double> semimarkov_forward_batch(
    const std::vector<SegmentalPotentials>& batch, int threads);
std::vector<double> semimarkov_expected_segments_batch_serial(
    const std::vector<SegmentalPotentials>& batch);
std::vector<double> semimarkov_expected_segments_batch(
    const std::vector<SegmentalPotentials>& batch, int threads);

}  // namespace latentseq::lattice

#endif  // LATENTSEQ_LATTICE_HPP
