#ifndef LATENTSEQ_POINTER_HPP
#define LATENTSEQ_POINTER_HPP

// Copy/point output distributions: the pointer-generator mixture, the
// generalized pointer (relation-edited copies with top-k marginalization)
// and Bayes posterior alignment.

#include <vector>

#include "latentseq/ndgrad.hpp"
#include "latentseq/util.hpp"

namespace latentseq::pointer {

using ndgrad::Value;

// Single storage shared between the input embedding and the output
// projection; output logits are inner products against the same matrix.
struct EmbeddingTable {
  int vocab = 0;
  int dim = 0;
  std::vector<double> weights;  // [vocab][dim] row-major
  const double* row(int w) const { return weights.data() + static_cast<std::size_t>(w) * dim; }
};

// Point-mode top-k defaults that saturated in the paper's study: short
// headline-style sources, single-sentence summaries of long stories, and
// long multi-sentence documents.
inline constexpr int kTopKShortSource = 6;
inline constexpr int kTopKSingleSentence = 10;
inline constexpr int kTopKLongDocument = 14;

// p_gen is clamped strictly interior wherever it is used.
inline constexpr double kPgenFloor = 1e-7;

struct PointerState {
  double p_gen = 0.5;
  std::vector<double> attention;  // [n] simplex over source positions
  std::vector<double> p_vocab;    // [V] simplex
  std::vector<int> source_ids;    // [n]
  // optional per-position edit distributions [n][V]; empty = hard copy,
  // delta(y|x_i) = 1 iff y == x_i
  std::vector<std::vector<double>> delta;
  bool has_delta() const { return !delta.empty(); }
  int n_source() const { return static_cast<int>(attention.size()); }
};

// p_gen * p_vocab[y] + (1 - p_gen) * sum_i attention[i] * delta_i(y)
double pointer_mixture(const PointerState& st, int y);

// Graph form of the hard-copy mixture for training-time emissions.
Value mixture_value(const Value& p_gen, const Value& attention,
                    const Value& p_vocab, const std::vector<int>& source_ids,
                    int y);

// Two-layer perceptron with a residual connection between the layers;
// maps concat(dec_state, enc_state) -> a relation vector in embedding space.
struct RelationNet {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> w1;  // [out][in]
  std::vector<double> b1;  // [out]
  std::vector<double> w2;  // [out][out]
  std::vector<double> b2;  // [out]

  static RelationNet zeros(int in_dim, int out_dim);
  std::vector<double> apply(const std::vector<double>& u) const;
};

// r(dec, enc) via the relation net.
std::vector<double> relation_vector(const RelationNet& net,
                                    const std::vector<double>& dec_state,
                                    const std::vector<double>& enc_state);
// softmax over the vocabulary of (r + x_embed) . emb^T
std::vector<double> edit_distribution(const std::vector<double>& r,
                                      const std::vector<double>& x_embed,
                                      const EmbeddingTable& emb);
// full generalized-pointer edit: delta(.|x_i)
std::vector<double> relation_edit(const RelationNet& net,
                                  const std::vector<double>& dec_state,
                                  const std::vector<double>& enc_state,
                                  const std::vector<double>& x_embed,
                                  const EmbeddingTable& emb);

// Point-mode probability marginalized over only the k source positions with
// the highest target_embed_scores (contextualized inner products); a lower
// bound of the full marginal with equality at k = n.
double topk_point_marginal(const PointerState& st,
                           const std::vector<double>& target_embed_scores,
                           int k, int y);

struct PosteriorAlignment {
  double gen = 0.0;                // posterior mass of the generation mode
  std::vector<double> positions;   // posterior mass per source position
  // per-position alignment with the generation-mode mass redistributed by
  // the attention weights
  std::vector<double> aligned;
};

// Bayes inversion of the mixture for an emitted token y.
PosteriorAlignment posterior_alignment(const PointerState& st, int y);

}  // namespace latentseq::pointer

#endif  // LATENTSEQ_POINTER_HPP
