#include "latentseq/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace latentseq::ndgrad {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

NodePtr make_node(const char* op, std::vector<int> shape,
                  std::vector<double> data, std::vector<Value> parents,
                  std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->grad.assign(n->data.size(), 0.0);
  for (const auto& p : parents) n->requires_grad |= p.node->requires_grad;
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node);
    n->backprop = std::move(bp);
  }
  return n;
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

bool is_scalar(const Value& v) { return v.size() == 1; }

}  // namespace

Value Value::leaf(std::vector<int> shape, std::vector<double> data,
                  bool requires_grad) {
  if (numel(shape) != static_cast<int>(data.size()))
    throw std::invalid_argument("leaf: shape/data mismatch");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->grad.assign(n->data.size(), 0.0);
  n->requires_grad = requires_grad;
  return Value(n);
}

Value Value::scalar(double v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

Value Value::vector(std::vector<double> v, bool requires_grad) {
  int n = static_cast<int>(v.size());
  return leaf({n}, std::move(v), requires_grad);
}

Value Value::matrix(int rows, int cols, std::vector<double> v,
                    bool requires_grad) {
  return leaf({rows, cols}, std::move(v), requires_grad);
}

double Value::item() const {
  if (size() != 1) throw std::invalid_argument("item: not a scalar");
  return node->data[0];
}

void Value::zero_grad() { std::fill(node->grad.begin(), node->grad.end(), 0.0); }

// ---------------------------------------------------------------------------
// elementwise arithmetic

namespace {

// Applies a binary op with scalar-with-array broadcasting. fw(x, y) computes
// the value; bx/by give d(out)/dx and d(out)/dy at those operands.
template <class F, class Bx, class By>
Value binary_op(const char* op, const Value& a, const Value& b, F fw, Bx bx,
                By by) {
  const bool sa = is_scalar(a), sb = is_scalar(b);
  if (!sa && !sb) check_same_shape(a, b, op);
  const auto& out_ref = sa ? b : a;
  int n = out_ref.size();
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = fw(a.data()[sa ? 0 : i], b.data()[sb ? 0 : i]);
  return Value(make_node(op, out_ref.shape(), std::move(out), {a, b},
                         [sa, sb, n, fw, bx, by](Node& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           for (int i = 0; i < n; ++i) {
                             double x = pa.data[sa ? 0 : i];
                             double y = pb.data[sb ? 0 : i];
                             double g = self.grad[i];
                             if (g == 0.0) continue;
                             pa.grad[sa ? 0 : i] += g * bx(x, y);
                             pb.grad[sb ? 0 : i] += g * by(x, y);
                           }
                         }));
}

template <class F, class B>
Value unary_op(const char* op, const Value& a, F fw, B bw) {
  int n = a.size();
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = fw(a.data()[i]);
  return Value(make_node(op, a.shape(), std::move(out), {a},
                         [n, bw](Node& self) {
                           auto& pa = *self.parents[0];
                           for (int i = 0; i < n; ++i) {
                             double g = self.grad[i];
                             if (g == 0.0) continue;
                             pa.grad[i] += g * bw(pa.data[i], self.data[i]);
                           }
                         }));
}

}  // namespace

Value add(const Value& a, const Value& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Value sub(const Value& a, const Value& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Value mul(const Value& a, const Value& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Value div(const Value& a, const Value& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Value neg(const Value& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; },
      [](double, double) { return -1.0; });
}

Value add_const(const Value& a, double c) {
  return unary_op(
      "add_const", a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Value mul_const(const Value& a, double c) {
  return unary_op(
      "mul_const", a, [c](double x) { return x * c; },
      [c](double, double) { return c; });
}

// ---------------------------------------------------------------------------
// elementwise functions

Value vexp(const Value& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Value vlog(const Value& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Value vtanh(const Value& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Value vsigmoid(const Value& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) {
        // numerically symmetric form
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Value vabs(const Value& a) {
  return unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Value vmax_const(const Value& a, double c) {
  return unary_op(
      "max_const", a, [c](double x) { return std::max(x, c); },
      [c](double x, double) { return x >= c ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// reductions and structure

Value sum(const Value& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  int n = a.size();
  return Value(make_node("sum", {1}, {s}, {a}, [n](Node& self) {
    auto& pa = *self.parents[0];
    double g = self.grad[0];
    for (int i = 0; i < n; ++i) pa.grad[i] += g;
  }));
}

Value dot(const Value& a, const Value& b) {
  check_same_shape(a, b, "dot");
  int n = a.size();
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a.data()[i] * b.data()[i];
  return Value(make_node("dot", {1}, {s}, {a, b}, [n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    double g = self.grad[0];
    for (int i = 0; i < n; ++i) {
      pa.grad[i] += g * pb.data[i];
      pb.grad[i] += g * pa.data[i];
    }
  }));
}

Value matvec(const Value& w, const Value& x) {
  if (w.shape().size() != 2 || x.shape().size() != 1 ||
      w.shape()[1] != x.shape()[0])
    throw std::invalid_argument("matvec: shape mismatch");
  int r = w.shape()[0], c = w.shape()[1];
  std::vector<double> out(r, 0.0);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    const double* wr = w.data().data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) s += wr[j] * x.data()[j];
    out[i] = s;
  }
  return Value(make_node("matvec", {r}, std::move(out), {w, x},
                         [r, c](Node& self) {
                           auto& pw = *self.parents[0];
                           auto& px = *self.parents[1];
                           for (int i = 0; i < r; ++i) {
                             double g = self.grad[i];
                             if (g == 0.0) continue;
                             double* wg =
                                 pw.grad.data() + static_cast<std::size_t>(i) * c;
                             const double* wd =
                                 pw.data.data() + static_cast<std::size_t>(i) * c;
                             for (int j = 0; j < c; ++j) {
                               wg[j] += g * px.data[j];
                               px.grad[j] += g * wd[j];
                             }
                           }
                         }));
}

Value concat(const Value& a, const Value& b) {
  if (a.shape().size() != 1 || b.shape().size() != 1)
    throw std::invalid_argument("concat: vectors only");
  int na = a.size(), nb = b.size();
  std::vector<double> out;
  out.reserve(na + nb);
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Value(make_node("concat", {na + nb}, std::move(out), {a, b},
                         [na, nb](Node& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           for (int i = 0; i < na; ++i) pa.grad[i] += self.grad[i];
                           for (int i = 0; i < nb; ++i)
                             pb.grad[i] += self.grad[na + i];
                         }));
}

Value concat_n(const std::vector<Value>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_n: empty");
  int total = 0;
  std::vector<int> sizes;
  sizes.reserve(xs.size());
  for (const auto& v : xs) {
    if (v.shape().size() != 1)
      throw std::invalid_argument("concat_n: vectors only");
    sizes.push_back(v.size());
    total += v.size();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const auto& v : xs)
    out.insert(out.end(), v.data().begin(), v.data().end());
  return Value(make_node("concat_n", {total}, std::move(out), xs,
                         [sizes](Node& self) {
                           int off = 0;
                           for (std::size_t k = 0; k < sizes.size(); ++k) {
                             auto& p = *self.parents[k];
                             for (int i = 0; i < sizes[k]; ++i)
                               p.grad[i] += self.grad[off + i];
                             off += sizes[k];
                           }
                         }));
}

Value reshape(const Value& a, std::vector<int> shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch");
  int n = a.size();
  return Value(make_node("reshape", std::move(shape),
                         std::vector<double>(a.data()), {a}, [n](Node& self) {
                           auto& pa = *self.parents[0];
                           for (int i = 0; i < n; ++i)
                             pa.grad[i] += self.grad[i];
                         }));
}

Value stack_rows(const std::vector<Value>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
  int c = rows[0].size();
  int r = static_cast<int>(rows.size());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(r) * c);
  for (const auto& v : rows) {
    if (v.shape().size() != 1 || v.size() != c)
      throw std::invalid_argument("stack_rows: ragged rows");
    out.insert(out.end(), v.data().begin(), v.data().end());
  }
  return Value(make_node("stack_rows", {r, c}, std::move(out), rows,
                         [r, c](Node& self) {
                           for (int i = 0; i < r; ++i) {
                             auto& p = *self.parents[i];
                             for (int j = 0; j < c; ++j)
                               p.grad[j] += self.grad[static_cast<std::size_t>(i) * c + j];
                           }
                         }));
}

Value row(const Value& m, int r) {
  if (m.shape().size() != 2) throw std::invalid_argument("row: matrix only");
  int rows = m.shape()[0], cols = m.shape()[1];
  if (r < 0 || r >= rows) throw std::out_of_range("row: index");
  std::vector<double> out(m.data().begin() + static_cast<std::size_t>(r) * cols,
                          m.data().begin() + static_cast<std::size_t>(r + 1) * cols);
  return Value(make_node("row", {cols}, std::move(out), {m},
                         [r, cols](Node& self) {
                           auto& pm = *self.parents[0];
                           for (int j = 0; j < cols; ++j)
                             pm.grad[static_cast<std::size_t>(r) * cols + j] +=
                                 self.grad[j];
                         }));
}

Value pick(const Value& v, int i) {
  if (i < 0 || i >= v.size()) throw std::out_of_range("pick: index");
  return Value(make_node("pick", {1}, {v.data()[i]}, {v}, [i](Node& self) {
    self.parents[0]->grad[i] += self.grad[0];
  }));
}

Value gather(const Value& v, const std::vector<int>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= v.size())
      throw std::out_of_range("gather: index");
    out[k] = v.data()[idx[k]];
  }
  return Value(make_node("gather", {static_cast<int>(idx.size())},
                         std::move(out), {v}, [idx](Node& self) {
                           auto& pv = *self.parents[0];
                           for (std::size_t k = 0; k < idx.size(); ++k)
                             pv.grad[idx[k]] += self.grad[k];
                         }));
}

// ---------------------------------------------------------------------------
// log-space primitives

namespace {

// logsumexp over a strided slice; -inf entries are ignored, all-(-inf) gives
// -inf.
double lse_slice(const double* x, int n, int stride) {
  double m = kNegInf;
  for (int i = 0; i < n; ++i) m = std::max(m, x[i * static_cast<std::size_t>(stride)]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    s += std::exp(x[i * static_cast<std::size_t>(stride)] - m);
  return m + std::log(s);
}

void lse_slice_backward(const double* x, double out, double g, double* gx,
                        int n, int stride) {
  if (out == kNegInf || g == 0.0) return;
  for (int i = 0; i < n; ++i) {
    double xi = x[i * static_cast<std::size_t>(stride)];
    if (xi == kNegInf) continue;
    gx[i * static_cast<std::size_t>(stride)] += g * std::exp(xi - out);
  }
}

}  // namespace

Value logsumexp(const Value& x, int axis) {
  const auto& sh = x.shape();
  if (sh.size() == 1) {
    if (axis != 0) throw std::invalid_argument("logsumexp: bad axis");
    double out = lse_slice(x.data().data(), sh[0], 1);
    int n = sh[0];
    return Value(make_node("logsumexp", {1}, {out}, {x}, [n](Node& self) {
      lse_slice_backward(self.parents[0]->data.data(), self.data[0],
                         self.grad[0], self.parents[0]->grad.data(), n, 1);
    }));
  }
  if (sh.size() == 2) {
    int r = sh[0], c = sh[1];
    if (axis == 0) {
      std::vector<double> out(c);
      for (int j = 0; j < c; ++j)
        out[j] = lse_slice(x.data().data() + j, r, c);
      return Value(make_node("logsumexp", {c}, std::move(out), {x},
                             [r, c](Node& self) {
                               auto& px = *self.parents[0];
                               for (int j = 0; j < c; ++j)
                                 lse_slice_backward(px.data.data() + j,
                                                    self.data[j], self.grad[j],
                                                    px.grad.data() + j, r, c);
                             }));
    }
    if (axis == 1) {
      std::vector<double> out(r);
      for (int i = 0; i < r; ++i)
        out[i] = lse_slice(x.data().data() + static_cast<std::size_t>(i) * c, c, 1);
      return Value(make_node("logsumexp", {r}, std::move(out), {x},
                             [r, c](Node& self) {
                               auto& px = *self.parents[0];
                               for (int i = 0; i < r; ++i)
                                 lse_slice_backward(
                                     px.data.data() + static_cast<std::size_t>(i) * c,
                                     self.data[i], self.grad[i],
                                     px.grad.data() + static_cast<std::size_t>(i) * c,
                                     c, 1);
                             }));
    }
    throw std::invalid_argument("logsumexp: bad axis");
  }
  throw std::invalid_argument("logsumexp: rank > 2 unsupported");
}

Value logaddexp(const Value& a, const Value& b) {
  return binary_op(
      "logaddexp", a, b,
      [](double x, double y) {
        double m = std::max(x, y);
        if (m == kNegInf) return kNegInf;
        return m + std::log(std::exp(x - m) + std::exp(y - m));
      },
      [](double x, double y) {
        if (x == kNegInf) return 0.0;
        double m = std::max(x, y);
        double sx = std::exp(x - m), sy = std::exp(y - m);
        return sx / (sx + sy);
      },
      [](double x, double y) {
        if (y == kNegInf) return 0.0;
        double m = std::max(x, y);
        double sx = std::exp(x - m), sy = std::exp(y - m);
        return sy / (sx + sy);
      });
}

Value log_mat_vec(const Value& m, const Value& v) {
  if (m.shape().size() != 2 || v.shape().size() != 1 ||
      m.shape()[1] != v.shape()[0])
    throw std::invalid_argument("log_mat_vec: shape mismatch");
  int r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(r);
  for (int i = 0; i < r; ++i) {
    double best = kNegInf;
    const double* mr = m.data().data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) best = std::max(best, mr[j] + v.data()[j]);
    if (best == kNegInf) {
      out[i] = kNegInf;
      continue;
    }
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(mr[j] + v.data()[j] - best);
    out[i] = best + std::log(s);
  }
  return Value(make_node(
      "log_mat_vec", {r}, std::move(out), {m, v}, [r, c](Node& self) {
        auto& pm = *self.parents[0];
        auto& pv = *self.parents[1];
        for (int i = 0; i < r; ++i) {
          double g = self.grad[i];
          double oi = self.data[i];
          if (g == 0.0 || oi == kNegInf) continue;
          const double* mr = pm.data.data() + static_cast<std::size_t>(i) * c;
          double* mg = pm.grad.data() + static_cast<std::size_t>(i) * c;
          for (int j = 0; j < c; ++j) {
            double t = mr[j] + pv.data[j];
            if (t == kNegInf) continue;
            double w = std::exp(t - oi);
            mg[j] += g * w;
            pv.grad[j] += g * w;
          }
        }
      }));
}

Value softmax(const Value& x) {
  if (x.shape().size() != 1) throw std::invalid_argument("softmax: vector only");
  int n = x.size();
  double m = kNegInf;
  for (double v : x.data()) m = std::max(m, v);
  if (m == kNegInf) throw std::invalid_argument("softmax: empty support");
  std::vector<double> out(n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x.data()[i] - m);
    s += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= s;
  return Value(make_node("softmax", {n}, std::move(out), {x}, [n](Node& self) {
    auto& px = *self.parents[0];
    double gs = 0.0;
    for (int i = 0; i < n; ++i) gs += self.grad[i] * self.data[i];
    for (int i = 0; i < n; ++i)
      px.grad[i] += self.data[i] * (self.grad[i] - gs);
  }));
}

Value log_softmax(const Value& x) {
  if (x.shape().size() != 1)
    throw std::invalid_argument("log_softmax: vector only");
  int n = x.size();
  double m = kNegInf;
  for (double v : x.data()) m = std::max(m, v);
  if (m == kNegInf) throw std::invalid_argument("log_softmax: empty support");
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x.data()[i] - m);
  double lse = m + std::log(s);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = x.data()[i] - lse;
  return Value(make_node("log_softmax", {n}, std::move(out), {x},
                         [n](Node& self) {
                           auto& px = *self.parents[0];
                           double gs = 0.0;
                           for (int i = 0; i < n; ++i) gs += self.grad[i];
                           for (int i = 0; i < n; ++i)
                             px.grad[i] += self.grad[i] -
                                           gs * std::exp(self.data[i]);
                         }));
}

Value emax(const std::vector<Value>& xs) {
  if (xs.empty()) throw std::invalid_argument("emax: empty");
  int n = xs[0].size();
  for (const auto& v : xs) check_same_shape(xs[0], v, "emax");
  std::vector<double> out(n, kNegInf);
  std::vector<int> arg(n, 0);
  for (int k = 0; k < static_cast<int>(xs.size()); ++k)
    for (int i = 0; i < n; ++i)
      if (xs[k].data()[i] > out[i]) {
        out[i] = xs[k].data()[i];
        arg[i] = k;
      }
  return Value(make_node("emax", xs[0].shape(), std::move(out), xs,
                         [n, arg](Node& self) {
                           for (int i = 0; i < n; ++i)
                             self.parents[arg[i]]->grad[i] += self.grad[i];
                         }));
}

Value straight_through_onehot(const Value& y_soft) {
  int n = y_soft.size();
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (y_soft.data()[i] > y_soft.data()[best]) best = i;
  std::vector<double> out(n, 0.0);
  out[best] = 1.0;
  return Value(make_node("straight_through", y_soft.shape(), std::move(out),
                         {y_soft}, [n](Node& self) {
                           auto& p = *self.parents[0];
                           for (int i = 0; i < n; ++i)
                             p.grad[i] += self.grad[i];
                         }));
}

Value straight_through_bernoulli(const Value& alpha) {
  int n = alpha.size();
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = alpha.data()[i] > 0.5 ? 1.0 : 0.0;
  return Value(make_node("straight_through_b", alpha.shape(), std::move(out),
                         {alpha}, [n](Node& self) {
                           auto& p = *self.parents[0];
                           for (int i = 0; i < n; ++i)
                             p.grad[i] += self.grad[i];
                         }));
}

// ---------------------------------------------------------------------------
// backward

void backward(const Value& root) {
  if (!root.defined() || root.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  if (!root.node->requires_grad) return;

  // iterative DFS topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node.get(), 0);
  visited.insert(root.node.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // interior grads reset per call; leaves keep accumulating
  for (Node* n : order)
    if (!n->parents.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  root.node->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

double gradcheck(const std::function<Value(const Value&)>& f,
                 const std::vector<double>& x0, double h) {
  if (h <= 0) throw std::invalid_argument("gradcheck: h must be positive");
  const int n = static_cast<int>(x0.size());
  Value x = Value::vector(x0, /*requires_grad=*/true);
  Value y = f(x);
  if (!std::isfinite(y.item()))
    throw std::runtime_error("gradcheck: f not finite at x0");
  backward(y);
  std::vector<double> g_ad = x.grad();

  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    auto eval = [&](double xi) {
      std::vector<double> xs = x0;
      xs[i] = xi;
      double v = f(Value::vector(xs)).item();
      if (!std::isfinite(v))
        throw std::runtime_error("gradcheck: f not finite at probe point");
      return v;
    };
    double g_fd = (eval(x0[i] + h) - eval(x0[i] - h)) / (2.0 * h);
    double denom = std::max({std::fabs(g_ad[i]), std::fabs(g_fd), 1.0});
    worst = std::max(worst, std::fabs(g_ad[i] - g_fd) / denom);
  }
  return worst;
}

}  // namespace latentseq::ndgrad
