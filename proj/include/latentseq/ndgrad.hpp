#ifndef LATENTSEQ_NDGRAD_HPP
#define LATENTSEQ_NDGRAD_HPP

// Minimal reverse-mode automatic differentiation over dense double arrays.
// Graphs are built dynamically per evaluation and freed when the handles go
// out of scope. -inf is the canonical log-zero throughout; the log-space
// primitives (logsumexp, logaddexp, log_mat_vec) are max-shifted so finite
// inputs never produce NaN/Inf.
//
// A single graph is single-threaded. Distinct graphs on distinct inputs may
// be evaluated concurrently.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace latentseq::ndgrad {

class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
 public:
  std::vector<double> data;
  std::vector<double> grad;   // same shape as data, lazily zero-initialized
  std::vector<int> shape;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backprop;

  std::size_t size() const { return data.size(); }
};

// Value is a cheap handle to a graph node; copying shares the node.
class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : node(std::move(n)) {}

  static Value leaf(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad = false);
  static Value scalar(double v, bool requires_grad = false);
  static Value vector(std::vector<double> v, bool requires_grad = false);
  static Value matrix(int rows, int cols, std::vector<double> v,
                      bool requires_grad = false);

  bool defined() const { return node != nullptr; }
  const std::vector<double>& data() const { return node->data; }
  std::vector<double>& data() { return node->data; }
  const std::vector<double>& grad() const { return node->grad; }
  std::vector<double>& grad() { return node->grad; }
  const std::vector<int>& shape() const { return node->shape; }
  int size() const { return static_cast<int>(node->data.size()); }
  bool requires_grad() const { return node->requires_grad; }
  double item() const;  // scalar nodes only
  void zero_grad();     // zero this node's grad buffer

  NodePtr node;
};

// ---- elementwise arithmetic (same shape, or scalar-with-array) ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value neg(const Value& a);
Value add_const(const Value& a, double c);
Value mul_const(const Value& a, double c);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }

// ---- elementwise functions ----
Value vexp(const Value& a);
Value vlog(const Value& a);
Value vtanh(const Value& a);
Value vsigmoid(const Value& a);
// |a|, subgradient at 0 taken as 0.
Value vabs(const Value& a);
// max(a, c) elementwise; tie a == c passes the gradient through to a.
Value vmax_const(const Value& a, double c);

// ---- reductions and structure ----
Value sum(const Value& a);                   // -> scalar
Value dot(const Value& a, const Value& b);   // vectors -> scalar
Value matvec(const Value& w, const Value& x);          // [r,c] x [c] -> [r]
Value concat(const Value& a, const Value& b);          // vectors
Value concat_n(const std::vector<Value>& xs);          // vectors/scalars
Value reshape(const Value& a, std::vector<int> shape); // same numel
Value stack_rows(const std::vector<Value>& rows);      // k vectors -> [k,n]
Value row(const Value& m, int r);                      // [r,c] -> [c]
Value pick(const Value& v, int i);                     // vector -> scalar
Value gather(const Value& v, const std::vector<int>& idx);  // -> [|idx|]

// ---- log-space and probability primitives ----
// logsumexp along `axis`. rank-1: axis 0 -> scalar. rank-2: axis 0 reduces
// rows (-> length-cols vector), axis 1 reduces columns. Entries may be -inf;
// an all-(-inf) slice yields -inf with zero gradient.
Value logsumexp(const Value& x, int axis = 0);
// elementwise log(exp(a) + exp(b))
Value logaddexp(const Value& a, const Value& b);
// out[i] = logsumexp_j(m[i][j] + v[j]); the inner step of log-space DPs.
Value log_mat_vec(const Value& m, const Value& v);
Value softmax(const Value& x);      // vector -> vector
Value log_softmax(const Value& x);  // vector -> vector

// Elementwise max over k same-shape vectors; ties route the gradient to the
// lowest list index.
Value emax(const std::vector<Value>& xs);

// Forward: one-hot at argmax(y_soft) (ties -> lowest index). Backward:
// gradient passes through unchanged.
Value straight_through_onehot(const Value& y_soft);
// Forward: 1(alpha > 0.5) elementwise. Backward: identity.
Value straight_through_bernoulli(const Value& alpha);

// Reverse sweep from a scalar root. Interior grads are reset per call; leaf
// grads accumulate across calls until explicitly zeroed.
void backward(const Value& root);

// Compares backward() gradients of f against central finite differences at
// x0 and returns the worst coordinate-wise relative error
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1). Throws if f is not finite at a
// probe point.
double gradcheck(const std::function<Value(const Value&)>& f,
                 const std::vector<double>& x0, double h = 1e-6);

}  // namespace latentseq::ndgrad

#endif  // LATENTSEQ_NDGRAD_HPP
