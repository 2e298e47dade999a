#include "latentseq/pointer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace latentseq::pointer {

namespace {

double clamp_pgen(double p) {
  return std::min(std::max(p, kPgenFloor), 1.0 - kPgenFloor);
}

double delta_at(const PointerState& st, int i, int y) {
  if (st.has_delta()) return st.delta[i][y];
  return st.source_ids[i] == y ? 1.0 : 0.0;
}

}  // namespace

double pointer_mixture(const PointerState& st, int y) {
  double p_gen = clamp_pgen(st.p_gen);
  double copy = 0.0;
  for (int i = 0; i < st.n_source(); ++i)
    copy += st.attention[i] * delta_at(st, i, y);
  return p_gen * st.p_vocab[y] + (1.0 - p_gen) * copy;
}

Value mixture_value(const Value& p_gen, const Value& attention,
                    const Value& p_vocab, const std::vector<int>& source_ids,
                    int y) {
  using namespace ndgrad;
  if (static_cast<int>(source_ids.size()) != attention.size())
    throw std::invalid_argument("mixture_value: source length mismatch");
  // clamp p_gen to [floor, 1 - floor]: min(x, hi) = -max(-x, -hi)
  Value pg = vmax_const(neg(vmax_const(neg(p_gen), -(1.0 - kPgenFloor))),
                        kPgenFloor);
  Value gen_term = mul(pg, pick(p_vocab, y));
  std::vector<int> hits;
  for (int i = 0; i < static_cast<int>(source_ids.size()); ++i)
    if (source_ids[i] == y) hits.push_back(i);
  if (hits.empty()) return gen_term;
  Value copy_mass = sum(gather(attention, hits));
  Value point_weight = add_const(neg(pg), 1.0);
  return add(gen_term, mul(point_weight, copy_mass));
}

RelationNet RelationNet::zeros(int in_dim, int out_dim) {
  RelationNet net;
  net.in_dim = in_dim;
  net.out_dim = out_dim;
  net.w1.assign(static_cast<std::size_t>(out_dim) * in_dim, 0.0);
  net.b1.assign(out_dim, 0.0);
  net.w2.assign(static_cast<std::size_t>(out_dim) * out_dim, 0.0);
  net.b2.assign(out_dim, 0.0);
  return net;
}

std::vector<double> RelationNet::apply(const std::vector<double>& u) const {
  if (static_cast<int>(u.size()) != in_dim)
    throw std::invalid_argument("RelationNet: input dimension mismatch");
  std::vector<double> a(out_dim, 0.0);
  for (int i = 0; i < out_dim; ++i) {
    const double* w = w1.data() + static_cast<std::size_t>(i) * in_dim;
    double s = b1[i];
    for (int j = 0; j < in_dim; ++j) s += w[j] * u[j];
    a[i] = s;
  }
  std::vector<double> r(out_dim, 0.0);
  for (int i = 0; i < out_dim; ++i) {
    const double* w = w2.data() + static_cast<std::size_t>(i) * out_dim;
    double s = b2[i];
    for (int j = 0; j < out_dim; ++j) s += w[j] * std::tanh(a[j]);
    r[i] = s + a[i];  // residual connection between the two layers
  }
  return r;
}

std::vector<double> relation_vector(const RelationNet& net,
                                    const std::vector<double>& dec_state,
                                    const std::vector<double>& enc_state) {
  std::vector<double> u;
  u.reserve(dec_state.size() + enc_state.size());
  u.insert(u.end(), dec_state.begin(), dec_state.end());
  u.insert(u.end(), enc_state.begin(), enc_state.end());
  return net.apply(u);
}

std::vector<double> edit_distribution(const std::vector<double>& r,
                                      const std::vector<double>& x_embed,
                                      const EmbeddingTable& emb) {
  if (static_cast<int>(r.size()) != emb.dim ||
      static_cast<int>(x_embed.size()) != emb.dim)
    throw std::invalid_argument("edit_distribution: dimension mismatch");
  std::vector<double> target(emb.dim);
  for (int d = 0; d < emb.dim; ++d) target[d] = r[d] + x_embed[d];
  std::vector<double> logits(emb.vocab);
  for (int w = 0; w < emb.vocab; ++w) {
    const double* e = emb.row(w);
    double s = 0.0;
    for (int d = 0; d < emb.dim; ++d) s += e[d] * target[d];
    logits[w] = s;
  }
  return util::softmax(std::move(logits));
}

std::vector<double> relation_edit(const RelationNet& net,
                                  const std::vector<double>& dec_state,
                                  const std::vector<double>& enc_state,
                                  const std::vector<double>& x_embed,
                                  const EmbeddingTable& emb) {
  return edit_distribution(relation_vector(net, dec_state, enc_state), x_embed,
                           emb);
}

double topk_point_marginal(const PointerState& st,
                           const std::vector<double>& target_embed_scores,
                           int k, int y) {
  int n = st.n_source();
  if (!st.has_delta())
    throw std::invalid_argument("topk_point_marginal: delta required");
  if (static_cast<int>(target_embed_scores.size()) != n)
    throw std::invalid_argument("topk_point_marginal: score length mismatch");
  if (k < 1 || k > n)
    throw std::invalid_argument("topk_point_marginal: k out of range");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return target_embed_scores[a] > target_embed_scores[b];
  });
  double p = 0.0;
  for (int r = 0; r < k; ++r) {
    int i = order[r];
    p += st.attention[i] * st.delta[i][y];
  }
  return p;
}

PosteriorAlignment posterior_alignment(const PointerState& st, int y) {
  double p_gen = clamp_pgen(st.p_gen);
  double p_y = pointer_mixture(st, y);
  if (p_y <= 0.0)
    throw std::runtime_error("posterior_alignment: p(y) = 0, undefined posterior");
  PosteriorAlignment out;
  out.gen = p_gen * st.p_vocab[y] / p_y;
  out.positions.resize(st.n_source());
  out.aligned.resize(st.n_source());
  for (int i = 0; i < st.n_source(); ++i) {
    out.positions[i] =
        (1.0 - p_gen) * st.attention[i] * delta_at(st, i, y) / p_y;
    out.aligned[i] = out.positions[i] + out.gen * st.attention[i];
  }
  return out;
}

}  // namespace latentseq::pointer
