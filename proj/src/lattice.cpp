#include "latentseq/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latentseq::lattice {

using util::kNegInf;
using util::log_add;
using util::logsumexp;

namespace {

bool self_transition(int j, int q) { return j == q && j != 0; }

void check_normalized(double log_total, double tol, const char* what) {
  if (std::fabs(std::exp(log_total) - 1.0) > tol)
    throw std::invalid_argument(std::string(what) + ": row not normalized");
}

}  // namespace

// ---------------------------------------------------------------------------
// validation

void validate(const HmmPotentials& pots, double tol) {
  int T = pots.T(), K = pots.K();
  if (T < 1 || K < 1) throw std::invalid_argument("hmm: empty potentials");
  if (static_cast<int>(pots.trans.size()) != T)
    throw std::invalid_argument("hmm: trans/emit length mismatch");
  check_normalized(logsumexp(pots.init), tol, "hmm init");
  for (int t = 0; t < T; ++t) {
    if (static_cast<int>(pots.emit[t].size()) != K ||
        static_cast<int>(pots.trans[t].size()) != K)
      throw std::invalid_argument("hmm: shape mismatch");
    for (int i = 0; i < K; ++i)
      if (pots.emit[t][i] > 0.0)
        throw std::invalid_argument("hmm: emit entry > 0");
    for (int j = 0; j < K; ++j) {
      double col = kNegInf;
      for (int i = 0; i < K; ++i) col = log_add(col, pots.trans[t][i][j]);
      check_normalized(col, tol, "hmm trans");
    }
  }
}

void validate(const SegmentalPotentials& pots, double tol) {
  int m = pots.m, K = pots.K, L = pots.L;
  if (m < 1) throw std::invalid_argument("segmental: empty input");
  if (L < 1) throw std::invalid_argument("segmental: L < 1");
  if (static_cast<int>(pots.init_trans.size()) != K + 1 ||
      static_cast<int>(pots.trans.size()) != m ||
      static_cast<int>(pots.gen.size()) != m)
    throw std::invalid_argument("segmental: shape mismatch");
  check_normalized(logsumexp(pots.init_trans), tol, "segmental init_trans");
  for (int p = 0; p < m; ++p) {
    if (static_cast<int>(pots.gen[p].size()) != L)
      throw std::invalid_argument("segmental: gen shape");
    for (int l = 0; l < L; ++l)
      for (int j = 0; j <= K; ++j)
        if (pots.gen[p][l][j] > 0.0)
          throw std::invalid_argument("segmental: gen entry > 0");
    for (int q = 0; q <= K; ++q) {
      double col = kNegInf;
      for (int j = 0; j <= K; ++j) {
        if (self_transition(j, q) && pots.trans[p][j][q] != kNegInf)
          throw std::invalid_argument("segmental: finite self-transition");
        col = log_add(col, pots.trans[p][j][q]);
      }
      check_normalized(col, tol, "segmental trans");
    }
  }
}

// ---------------------------------------------------------------------------
// HMM kernels

double hmm_forward(const HmmPotentials& pots) {
  int T = pots.T(), K = pots.K();
  if (T < 1 || K < 1) throw std::invalid_argument("hmm_forward: empty");
  std::vector<double> beta(K), next(K);
  for (int i = 0; i < K; ++i) beta[i] = pots.init[i] + pots.emit[0][i];
  for (int t = 1; t < T; ++t) {
    for (int i = 0; i < K; ++i) {
      double acc = kNegInf;
      for (int j = 0; j < K; ++j)
        acc = std::max(acc, pots.trans[t][i][j] + beta[j]);
      if (acc == kNegInf) {
        next[i] = kNegInf;
        continue;
      }
      double s = 0.0;
      for (int j = 0; j < K; ++j)
        s += std::exp(pots.trans[t][i][j] + beta[j] - acc);
      next[i] = pots.emit[t][i] + acc + std::log(s);
    }
    beta.swap(next);
  }
  return logsumexp(beta);
}

std::vector<std::vector<double>> hmm_posteriors(const HmmPotentials& pots) {
  int T = pots.T(), K = pots.K();
  std::vector<std::vector<double>> fwd(T, std::vector<double>(K));
  for (int i = 0; i < K; ++i) fwd[0][i] = pots.init[i] + pots.emit[0][i];
  for (int t = 1; t < T; ++t)
    for (int i = 0; i < K; ++i) {
      double acc = kNegInf;
      for (int j = 0; j < K; ++j)
        acc = log_add(acc, pots.trans[t][i][j] + fwd[t - 1][j]);
      fwd[t][i] = pots.emit[t][i] + acc;
    }
  std::vector<std::vector<double>> bwd(T, std::vector<double>(K, 0.0));
  for (int t = T - 2; t >= 0; --t)
    for (int j = 0; j < K; ++j) {
      double acc = kNegInf;
      for (int i = 0; i < K; ++i)
        acc = log_add(acc,
                      pots.trans[t + 1][i][j] + pots.emit[t + 1][i] + bwd[t + 1][i]);
      bwd[t][j] = acc;
    }
  double log_z = logsumexp(fwd[T - 1]);
  std::vector<std::vector<double>> post(T, std::vector<double>(K));
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < K; ++i)
      post[t][i] = std::exp(fwd[t][i] + bwd[t][i] - log_z);
  return post;
}

// ---------------------------------------------------------------------------
// semi-Markov kernels

namespace {

// inflow[j]: score of arriving at position p ready to start a segment
// labeled j (transition applied, generation pending).
void segment_inflow(const SegmentalPotentials& pots, int p,
                    const std::vector<double>& alpha_p,
                    std::vector<double>& out) {
  int K = pots.K;
  if (p == 0) {
    out = pots.init_trans;
    return;
  }
  for (int j = 0; j <= K; ++j) {
    double acc = kNegInf;
    for (int q = 0; q <= K; ++q)
      acc = log_add(acc, pots.trans[p][j][q] + alpha_p[q]);
    out[j] = acc;
  }
}

}  // namespace

double semimarkov_forward(const SegmentalPotentials& pots) {
  int m = pots.m, K = pots.K, L = pots.L;
  if (m < 1) throw std::invalid_argument("semimarkov_forward: empty input");
  if (L < 1) throw std::invalid_argument("semimarkov_forward: L < 1");
  std::vector<std::vector<double>> alpha(m + 1,
                                         std::vector<double>(K + 1, kNegInf));
  std::vector<std::vector<double>> inflow(m, std::vector<double>(K + 1));
  for (int p = 0; p < m; ++p) {
    segment_inflow(pots, p, alpha[p], inflow[p]);
    for (int i = p + 1; i <= std::min(m, p + L); ++i) {
      int l = i - p - 1;
      for (int j = 0; j <= K; ++j)
        alpha[i][j] = log_add(alpha[i][j], inflow[p][j] + pots.gen[p][l][j]);
    }
  }
  return logsumexp(alpha[m]);
}

double semimarkov_expected_segments(const SegmentalPotentials& pots) {
  int m = pots.m, K = pots.K, L = pots.L;
  if (m < 1) throw std::invalid_argument("expected_segments: empty input");
  if (L < 1) throw std::invalid_argument("expected_segments: L < 1");
  // expectation semiring in log space: alpha = log p, mbar = log(p * count)
  std::vector<std::vector<double>> alpha(m + 1,
                                         std::vector<double>(K + 1, kNegInf));
  std::vector<std::vector<double>> mbar(m + 1,
                                        std::vector<double>(K + 1, kNegInf));
  std::vector<double> inflow_a(K + 1), inflow_m(K + 1);
  for (int p = 0; p < m; ++p) {
    if (p == 0) {
      inflow_a = pots.init_trans;
      // starting a segment increments the count: mbar contribution = alpha
      inflow_m = pots.init_trans;
    } else {
      for (int j = 0; j <= K; ++j) {
        double acc_a = kNegInf, acc_m = kNegInf;
        for (int q = 0; q <= K; ++q) {
          double tr = pots.trans[p][j][q];
          acc_a = log_add(acc_a, tr + alpha[p][q]);
          acc_m = log_add(acc_m, tr + log_add(mbar[p][q], alpha[p][q]));
        }
        inflow_a[j] = acc_a;
        inflow_m[j] = acc_m;
      }
    }
    for (int i = p + 1; i <= std::min(m, p + L); ++i) {
      int l = i - p - 1;
      for (int j = 0; j <= K; ++j) {
        double g = pots.gen[p][l][j];
        alpha[i][j] = log_add(alpha[i][j], inflow_a[j] + g);
        mbar[i][j] = log_add(mbar[i][j], inflow_m[j] + g);
      }
    }
  }
  double log_z = logsumexp(alpha[m]);
  double log_m = logsumexp(mbar[m]);
  if (log_z == kNegInf)
    throw std::runtime_error("expected_segments: zero-probability input");
  return std::exp(log_m - log_z);
}

SegmentationPath semimarkov_map(const SegmentalPotentials& pots,
                                double* score) {
  int m = pots.m, K = pots.K, L = pots.L;
  if (m < 1) throw std::invalid_argument("semimarkov_map: empty input");
  std::vector<std::vector<double>> delta(m + 1,
                                         std::vector<double>(K + 1, kNegInf));
  // best (previous cut, previous label) per state
  std::vector<std::vector<std::pair<int, int>>> back(
      m + 1, std::vector<std::pair<int, int>>(K + 1, {-1, -1}));
  for (int i = 1; i <= m; ++i)
    for (int p = std::max(0, i - L); p < i; ++p) {
      int l = i - p - 1;
      for (int j = 0; j <= K; ++j) {
        double g = pots.gen[p][l][j];
        if (g == kNegInf) continue;
        if (p == 0) {
          double cand = pots.init_trans[j] + g;
          if (cand > delta[i][j]) {
            delta[i][j] = cand;
            back[i][j] = {0, -1};
          }
        } else {
          for (int q = 0; q <= K; ++q) {
            if (delta[p][q] == kNegInf) continue;
            double cand = delta[p][q] + pots.trans[p][j][q] + g;
            if (cand > delta[i][j]) {
              delta[i][j] = cand;
              back[i][j] = {p, q};
            }
          }
        }
      }
    }
  int best_j = 0;
  for (int j = 1; j <= K; ++j)
    if (delta[m][j] > delta[m][best_j]) best_j = j;
  if (delta[m][best_j] == kNegInf)
    throw std::runtime_error("semimarkov_map: no valid segmentation");
  if (score) *score = delta[m][best_j];

  SegmentationPath path;
  int i = m, j = best_j;
  std::vector<int> rcuts{m};
  std::vector<int> rlabels;
  while (i > 0) {
    auto [p, q] = back[i][j];
    rlabels.push_back(j);
    rcuts.push_back(p);
    i = p;
    j = q;
  }
  path.cuts.assign(rcuts.rbegin(), rcuts.rend());
  path.labels.assign(rlabels.rbegin(), rlabels.rend());
  return path;
}

double path_log_score(const SegmentalPotentials& pots,
                      const SegmentationPath& path) {
  double score = 0.0;
  for (int o = 0; o < path.n_segments(); ++o) {
    int p = path.cuts[o], e = path.cuts[o + 1], j = path.labels[o];
    int l = e - p - 1;
    score += (o == 0) ? pots.init_trans[j]
                      : pots.trans[p][j][path.labels[o - 1]];
    score += pots.gen[p][l][j];
  }
  return score;
}

double hmm_path_log_score(const HmmPotentials& pots,
                          const std::vector<int>& path) {
  double score = pots.init[path[0]] + pots.emit[0][path[0]];
  for (int t = 1; t < static_cast<int>(path.size()); ++t)
    score += pots.trans[t][path[t]][path[t - 1]] + pots.emit[t][path[t]];
  return score;
}

// ---------------------------------------------------------------------------
// graph forms

HmmExpr to_expr(const HmmPotentials& pots, bool rg) {
  int T = pots.T(), K = pots.K();
  HmmExpr e;
  e.init = Value::vector(pots.init, rg);
  for (int t = 0; t < T; ++t) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(K) * K);
    for (int i = 0; i < K; ++i)
      flat.insert(flat.end(), pots.trans[t][i].begin(), pots.trans[t][i].end());
    e.trans.push_back(Value::matrix(K, K, std::move(flat), rg));
    e.emit.push_back(Value::vector(pots.emit[t], rg));
  }
  return e;
}

SegmentalExpr to_expr(const SegmentalPotentials& pots, bool rg) {
  SegmentalExpr e;
  e.m = pots.m;
  e.K = pots.K;
  e.L = pots.L;
  int n = pots.K + 1;
  e.init_trans = Value::vector(pots.init_trans, rg);
  for (int p = 0; p < pots.m; ++p) {
    std::vector<double> tflat;
    tflat.reserve(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
      tflat.insert(tflat.end(), pots.trans[p][j].begin(), pots.trans[p][j].end());
    e.trans.push_back(Value::matrix(n, n, std::move(tflat), rg));
    std::vector<double> gflat;
    gflat.reserve(static_cast<std::size_t>(pots.L) * n);
    for (int l = 0; l < pots.L; ++l)
      gflat.insert(gflat.end(), pots.gen[p][l].begin(), pots.gen[p][l].end());
    e.gen.push_back(Value::matrix(pots.L, n, std::move(gflat), rg));
  }
  return e;
}

Value hmm_forward(const HmmExpr& pots) {
  int T = static_cast<int>(pots.emit.size());
  if (T < 1) throw std::invalid_argument("hmm_forward: empty");
  Value beta = ndgrad::add(pots.emit[0], pots.init);
  for (int t = 1; t < T; ++t)
    beta = ndgrad::add(pots.emit[t], ndgrad::log_mat_vec(pots.trans[t], beta));
  return ndgrad::logsumexp(beta);
}

namespace {

// shared recursion; when count_pass is true also carries the expectation
// semiring component and returns E[segments], else returns the log-marginal
Value semimarkov_graph(const SegmentalExpr& pots, bool count_pass) {
  int m = pots.m, K = pots.K, L = pots.L;
  if (m < 1) throw std::invalid_argument("semimarkov: empty input");
  if (L < 1) throw std::invalid_argument("semimarkov: L < 1");
  std::vector<Value> alpha(m + 1), mbar(m + 1);
  // terms[i] collects one row per reachable start p
  std::vector<std::vector<Value>> terms_a(m + 1), terms_m(m + 1);
  for (int p = 0; p < m; ++p) {
    Value inflow_a = (p == 0)
                         ? pots.init_trans
                         : ndgrad::log_mat_vec(pots.trans[p], alpha[p]);
    Value inflow_m;
    if (count_pass)
      inflow_m = (p == 0) ? pots.init_trans
                          : ndgrad::log_mat_vec(
                                pots.trans[p],
                                ndgrad::logaddexp(mbar[p], alpha[p]));
    for (int i = p + 1; i <= std::min(m, p + L); ++i) {
      Value g = ndgrad::row(pots.gen[p], i - p - 1);
      terms_a[i].push_back(ndgrad::add(inflow_a, g));
      if (count_pass) terms_m[i].push_back(ndgrad::add(inflow_m, g));
    }
    int i = p + 1;
    alpha[i] = terms_a[i].size() == 1
                   ? terms_a[i][0]
                   : ndgrad::logsumexp(ndgrad::stack_rows(terms_a[i]), 0);
    if (count_pass)
      mbar[i] = terms_m[i].size() == 1
                    ? terms_m[i][0]
                    : ndgrad::logsumexp(ndgrad::stack_rows(terms_m[i]), 0);
  }
  Value log_z = ndgrad::logsumexp(alpha[m]);
  if (!count_pass) return log_z;
  Value log_m = ndgrad::logsumexp(mbar[m]);
  return ndgrad::vexp(ndgrad::sub(log_m, log_z));
}

}  // namespace

Value semimarkov_forward(const SegmentalExpr& pots) {
  return semimarkov_graph(pots, false);
}

Value semimarkov_expected_segments(const SegmentalExpr& pots) {
  return semimarkov_graph(pots, true);
}

// ---------------------------------------------------------------------------
// enumeration oracles

std::vector<std::vector<int>> enumerate_alignments(int T, int K) {
  double total = std::pow(static_cast<double>(K), T);
  if (T < 1 || K < 1 || total > 1e6)
    throw std::invalid_argument("enumerate_alignments: blowup guard");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<int> path(T, 0);
  while (true) {
    out.push_back(path);
    int t = T - 1;
    while (t >= 0 && ++path[t] == K) path[t--] = 0;
    if (t < 0) break;
  }
  return out;
}

void for_each_segmentation(
    int m, int K, int L,
    const std::function<void(const SegmentationPath&)>& fn) {
  SegmentationPath path;
  path.cuts.push_back(0);
  std::function<void(int, int)> rec = [&](int pos, int last) {
    if (pos == m) {
      fn(path);
      return;
    }
    for (int len = 1; len <= std::min(L, m - pos); ++len)
      for (int j = 0; j <= K; ++j) {
        if (self_transition(j, last)) continue;
        path.cuts.push_back(pos + len);
        path.labels.push_back(j);
        rec(pos + len, j);
        path.cuts.pop_back();
        path.labels.pop_back();
      }
  };
  rec(0, -1);
}

std::vector<SegmentationPath> enumerate_segmentations(int m, int K, int L) {
  if (m > 10) throw std::invalid_argument("enumerate_segmentations: m > 10");
  if (m < 1 || K < 0 || L < 1)
    throw std::invalid_argument("enumerate_segmentations: bad arguments");
  std::vector<SegmentationPath> out;
  for_each_segmentation(m, K, L,
                        [&](const SegmentationPath& p) { out.push_back(p); });
  return out;
}

std::uint64_t segmentation_count(int m, int K, int L) {
  // ways[i][j]: segmentations of the first i tokens whose last label is j
  std::vector<std::vector<std::uint64_t>> ways(
      m + 1, std::vector<std::uint64_t>(K + 1, 0));
  for (int i = 1; i <= m; ++i)
    for (int p = std::max(0, i - L); p < i; ++p)
      for (int j = 0; j <= K; ++j) {
        if (p == 0)
          ways[i][j] += 1;
        else
          for (int q = 0; q <= K; ++q) {
            if (self_transition(j, q)) continue;
            ways[i][j] += ways[p][q];
          }
      }
  std::uint64_t total = 0;
  for (int j = 0; j <= K; ++j) total += ways[m][j];
  return total;
}

double brute_force_log_marginal(const HmmPotentials& pots) {
  auto paths = enumerate_alignments(pots.T(), pots.K());
  double acc = kNegInf;
  for (const auto& p : paths) acc = log_add(acc, hmm_path_log_score(pots, p));
  return acc;
}

double brute_force_log_marginal(const SegmentalPotentials& pots) {
  double acc = kNegInf;
  for_each_segmentation(pots.m, pots.K, pots.L,
                        [&](const SegmentationPath& p) {
                          acc = log_add(acc, path_log_score(pots, p));
                        });
  return acc;
}

double brute_force_expected_segments(const SegmentalPotentials& pots) {
  double log_z = kNegInf, log_m = kNegInf;
  for_each_segmentation(pots.m, pots.K, pots.L,
                        [&](const SegmentationPath& p) {
                          double s = path_log_score(pots, p);
                          log_z = log_add(log_z, s);
                          log_m = log_add(log_m, s + std::log(static_cast<double>(
                                                       p.n_segments())));
                        });
  return std::exp(log_m - log_z);
}

std::vector<std::vector<std::vector<double>>> brute_force_gen_posterior(
    const SegmentalPotentials& pots) {
  double log_z = brute_force_log_marginal(pots);
  std::vector<std::vector<std::vector<double>>> post(
      pots.m, std::vector<std::vector<double>>(
                  pots.L, std::vector<double>(pots.K + 1, 0.0)));
  for_each_segmentation(
      pots.m, pots.K, pots.L, [&](const SegmentationPath& path) {
        double w = std::exp(path_log_score(pots, path) - log_z);
        for (int o = 0; o < path.n_segments(); ++o) {
          int p = path.cuts[o], l = path.cuts[o + 1] - p - 1;
          post[p][l][path.labels[o]] += w;
        }
      });
  return post;
}

std::vector<std::vector<double>> brute_force_hmm_posteriors(
    const HmmPotentials& pots) {
  double log_z = brute_force_log_marginal(pots);
  std::vector<std::vector<double>> post(pots.T(),
                                        std::vector<double>(pots.K(), 0.0));
  for (const auto& path : enumerate_alignments(pots.T(), pots.K())) {
    double w = std::exp(hmm_path_log_score(pots, path) - log_z);
    for (int t = 0; t < pots.T(); ++t) post[t][path[t]] += w;
  }
  return post;
}

// ---------------------------------------------------------------------------
// random instances

HmmPotentials random_hmm(util::Rng& rng, int T, int K) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  auto log_softmax_col = [&](int n) {
    std::vector<double> logits(n);
    for (auto& v : logits) v = nd(rng);
    double z = logsumexp(logits);
    for (auto& v : logits) v -= z;
    return logits;
  };
  HmmPotentials pots;
  pots.init = log_softmax_col(K);
  pots.trans.assign(T, std::vector<std::vector<double>>(
                           K, std::vector<double>(K, kNegInf)));
  pots.emit.assign(T, std::vector<double>(K));
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < K; ++j) {
      auto col = log_softmax_col(K);
      for (int i = 0; i < K; ++i) pots.trans[t][i][j] = col[i];
    }
    for (int i = 0; i < K; ++i)
      pots.emit[t][i] = std::log(ud(rng) * 0.95 + 0.05);
  }
  return pots;
}

SegmentalPotentials random_segmental(util::Rng& rng, int m, int K, int L) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  SegmentalPotentials pots;
  pots.m = m;
  pots.K = K;
  pots.L = L;
  int n = K + 1;
  {
    std::vector<double> logits(n);
    for (auto& v : logits) v = nd(rng);
    double z = logsumexp(logits);
    pots.init_trans.resize(n);
    for (int j = 0; j < n; ++j) pots.init_trans[j] = logits[j] - z;
  }
  pots.trans.assign(m, std::vector<std::vector<double>>(
                           n, std::vector<double>(n, kNegInf)));
  pots.gen.assign(m, std::vector<std::vector<double>>(
                         L, std::vector<double>(n, kNegInf)));
  for (int p = 0; p < m; ++p) {
    for (int q = 0; q < n; ++q) {
      std::vector<double> logits(n, kNegInf);
      for (int j = 0; j < n; ++j)
        if (!self_transition(j, q)) logits[j] = nd(rng);
      double z = logsumexp(logits);
      for (int j = 0; j < n; ++j)
        if (logits[j] != kNegInf) pots.trans[p][j][q] = logits[j] - z;
    }
    for (int l = 0; l < L && p + l + 1 <= m; ++l)
      for (int j = 0; j < n; ++j)
        pots.gen[p][l][j] = std::log(ud(rng) * 0.95 + 0.05);
  }
  return pots;
}

// ---------------------------------------------------------------------------
// batch drivers

std::vector<double> hmm_forward_batch_serial(
    const std::vector<HmmPotentials>& batch) {
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = hmm_forward(batch[i]);
  return out;
}

std::vector<double> hmm_forward_batch(const std::vector<HmmPotentials>& batch,
                                      int threads) {
  std::vector<double> out(batch.size());
  util::parallel_for(static_cast<int>(batch.size()), threads,
                     [&](int i) { out[i] = hmm_forward(batch[i]); });
  return out;
}

std::vector<double> semimarkov_forward_batch_serial(
    const std::vector<SegmentalPotentials>& batch) {
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[i] = semimarkov_forward(batch[i]);
  return out;
}

std::vector<double> semimarkov_forward_batch(
    const std::vector<SegmentalPotentials>& batch, int threads) {
  std::vector<double> out(batch.size());
  util::parallel_for(static_cast<int>(batch.size()), threads,
                     [&](int i) { out[i] = semimarkov_forward(batch[i]); });
  return out;
}

std::vector<double> semimarkov_expected_segments_batch_serial(
    const std::vector<SegmentalPotentials>& batch) {
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[i] = semimarkov_expected_segments(batch[i]);
  return out;
}

std::vector<double> semimarkov_expected_segments_batch(
    const std::vector<SegmentalPotentials>& batch, int threads) {
  std::vector<double> out(batch.size());
  util::parallel_for(static_cast<int>(batch.size()), threads,
                     [&](int i) { out[i] = semimarkov_expected_segments(batch[i]); });
  return out;
}

}  // namespace latentseq::lattice
