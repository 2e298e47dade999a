#ifndef LATENTSEQ_NN_HPP
#define LATENTSEQ_NN_HPP

// Shared neural plumbing: named parameter store, GRU cell, Adam with norm
// clipping, and the checkpoint format (flat binary tensor archive of
// little-endian 64-bit floats plus a JSON manifest).

#include <cstdint>
#include <string>
#include <vector>

#include "latentseq/ndgrad.hpp"
#include "latentseq/util.hpp"

namespace latentseq::nn {

using ndgrad::Value;

class ParamStore {
 public:
  // uniform(-scale, scale) init, deterministic in registration order
  Value add(const std::string& name, std::vector<int> shape, util::Rng& rng,
            double scale = 0.08);
  Value add_zeros(const std::string& name, std::vector<int> shape);
  Value get(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::vector<std::pair<std::string, Value>>& all() const {
    return params_;
  }
  std::size_t n_parameters() const;
  void zero_grad();
  // bit-exact snapshot/compare of the raw tensor data
  std::vector<std::vector<double>> snapshot() const;

 private:
  std::vector<std::pair<std::string, Value>> params_;
};

// ---------------------------------------------------------------------------
// GRU

struct GruParams {
  Value wz, uz, bz, wr, ur, br, wh, uh, bh;
};

GruParams make_gru(ParamStore& store, const std::string& prefix, int in_dim,
                   int hidden, util::Rng& rng);
Value gru_step(const GruParams& g, const Value& h_prev, const Value& x);

// ---------------------------------------------------------------------------
// optimizer

// Adaptive-moment optimizer bound to a fixed parameter list, with
// global-norm gradient clipping (clip <= 0 disables). Binding to an explicit
// list lets phase optimizers update disjoint parameter subsets while leaving
// everything else bit-identical.
class Adam {
 public:
  explicit Adam(std::vector<Value> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                double clip_norm = 5.0);

  void step();  // consumes grads of the bound params, then zeroes them
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Value> params_;
  double lr_, beta1_, beta2_, eps_, clip_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// all parameter Values of a store, in registration order
std::vector<Value> values_of(const ParamStore& store);
// concatenation helper for multi-store optimizers
std::vector<Value> values_of(std::initializer_list<const ParamStore*> stores);

// Plain SGD ascent/descent step used by em_fit: theta += lr * grad (ascend)
// or theta -= lr * grad. Grads are zeroed after the step.
void sgd_step(ParamStore& store, double lr, bool ascend);

// ---------------------------------------------------------------------------
// checkpoints

// Writes <path>.bin (raw little-endian doubles, tensors back to back) and
// <path>.json (manifest: names, shapes, byte offsets, plus caller extras).
void save_checkpoint(const ParamStore& store, const std::string& path_prefix,
                     const std::string& extra_json);
// Loads into an existing store; every tensor must match by name and shape.
// Returns the manifest's extra JSON (verbatim string).
std::string load_checkpoint(ParamStore& store, const std::string& path_prefix);
// Reads just the manifest extras (model config, vocab) without tensors.
std::string read_checkpoint_extra(const std::string& path_prefix);

}  // namespace latentseq::nn

#endif  // LATENTSEQ_NN_HPP
