#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
// A forward pass builds a DAG of nodes; backward(loss) walks it once in
// reverse topological order. Shapes are small (sentence-scale), so values
// live in plain std::vector<double> and ops are written for clarity over
// cache tricks.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ckann/common.hpp"

namespace ckann::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> v;
  std::vector<double> g;  // allocated on first use during backward
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  std::size_t size() const { return v.size(); }
  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape_size(shape) != values.size())
      throw DimensionMismatch("tensor init: " + shape_str(shape) + " vs " +
                              std::to_string(values.size()) + " values");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->v = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_size(shape), 0.0);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double x) { return from({1}, {x}); }

  bool defined() const { return n_ != nullptr; }
  Node* node() const { return n_.get(); }
  NodePtr handle() const { return n_; }

  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->v.size(); }
  std::size_t rows() const { return n_->shape.at(0); }
  std::size_t cols() const { return n_->shape.at(1); }
  bool is_matrix() const { return n_->shape.size() == 2; }
  bool is_vector() const { return n_->shape.size() == 1; }

  const std::vector<double>& values() const { return n_->v; }
  std::vector<double>& mutable_values() { return n_->v; }
  const std::vector<double>& grad() const { return n_->g; }
  std::vector<double>& mutable_grad() { return n_->g; }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  void zero_grad() { n_->g.assign(n_->v.size(), 0.0); }

  double value() const {
    if (size() != 1) throw DimensionMismatch("value() on non-scalar tensor");
    return n_->v[0];
  }
  double at(std::size_t i) const { return n_->v.at(i); }
  double at(std::size_t i, std::size_t j) const {
    return n_->v.at(i * cols() + j);
  }

 private:
  NodePtr n_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->v = std::move(values);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.handle());
    n->backward = std::move(backward);
  }
  return Tensor(n);
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw DimensionMismatch(std::string(op) + ": " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));
}

}  // namespace detail

// --- elementwise ------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) + b.at(i);
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) p->g[i] += n.g[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) - b.at(i);
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa->g[i] += n.g[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pb->g[i] -= n.g[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * b.at(i);
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa->g[i] += n.g[i] * pb->v[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pb->g[i] += n.g[i] * pa->v[i];
    }
  });
}

inline Tensor divide(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "divide");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) / b.at(i);
  return detail::make_op(a.shape(), std::move(v), {a, b}, [](Node& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa->g[i] += n.g[i] / pb->v[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        pb->g[i] -= n.g[i] * pa->v[i] / (pb->v[i] * pb->v[i]);
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * c;
  return detail::make_op(a.shape(), std::move(v), {a}, [c](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) p->g[i] += n.g[i] * c;
  });
}

inline Tensor add_const(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) + c;
  return detail::make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) p->g[i] += n.g[i];
  });
}

inline Tensor tanh_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.at(i));
  return detail::make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      p->g[i] += n.g[i] * (1.0 - n.v[i] * n.v[i]);
  });
}

inline Tensor sigmoid_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = 1.0 / (1.0 + std::exp(-a.at(i)));
  return detail::make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      p->g[i] += n.g[i] * n.v[i] * (1.0 - n.v[i]);
  });
}

inline Tensor relu_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) > 0 ? a.at(i) : 0.0;
  return detail::make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      if (p->v[i] > 0) p->g[i] += n.g[i];
  });
}

inline Tensor log_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.at(i));
  return detail::make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) p->g[i] += n.g[i] / p->v[i];
  });
}

inline Tensor sqrt_t(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a.at(i));
  return detail::make_op(a.shape(), std::move(v), {a}, [](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      p->g[i] += n.g[i] * 0.5 / n.v[i];
  });
}

// Gradient is identity inside [lo, hi], zero outside.
inline Tensor clamp_t(const Tensor& a, double lo, double hi) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::min(hi, std::max(lo, a.at(i)));
  return detail::make_op(a.shape(), std::move(v), {a}, [lo, hi](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i)
      if (p->v[i] > lo && p->v[i] < hi) p->g[i] += n.g[i];
  });
}

// Inverted dropout with a caller-provided stream; identity when not training.
inline Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw NumericError("dropout rate must be < 1");
  double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(a.size());
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    v[i] = a.at(i) * (*mask)[i];
  }
  return detail::make_op(a.shape(), std::move(v), {a}, [mask](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) p->g[i] += n.g[i] * (*mask)[i];
  });
}

// Leaf copy: same values, no history.
inline Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), a.values(), false);
}

// --- shape / selection -------------------------------------------------------

inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.is_vector() && b.is_vector()) {
    if (axis != 0) throw DimensionMismatch("concat: vector axis must be 0");
    std::vector<double> v;
    v.reserve(a.size() + b.size());
    v.insert(v.end(), a.values().begin(), a.values().end());
    v.insert(v.end(), b.values().begin(), b.values().end());
    std::size_t na = a.size();
    return detail::make_op({a.size() + b.size()}, std::move(v), {a, b},
                           [na](Node& n) {
                             auto& pa = n.parents[0];
                             auto& pb = n.parents[1];
                             if (pa->requires_grad) {
                               pa->ensure_grad();
                               for (std::size_t i = 0; i < na; ++i)
                                 pa->g[i] += n.g[i];
                             }
                             if (pb->requires_grad) {
                               pb->ensure_grad();
                               for (std::size_t i = na; i < n.size(); ++i)
                                 pb->g[i - na] += n.g[i];
                             }
                           });
  }
  if (!a.is_matrix() || !b.is_matrix())
    throw DimensionMismatch("concat: rank mismatch");
  if (axis == 0) {
    if (a.cols() != b.cols())
      throw DimensionMismatch("concat axis 0: column counts differ");
    std::vector<double> v;
    v.reserve(a.size() + b.size());
    v.insert(v.end(), a.values().begin(), a.values().end());
    v.insert(v.end(), b.values().begin(), b.values().end());
    std::size_t na = a.size();
    return detail::make_op({a.rows() + b.rows(), a.cols()}, std::move(v),
                           {a, b}, [na](Node& n) {
                             auto& pa = n.parents[0];
                             auto& pb = n.parents[1];
                             if (pa->requires_grad) {
                               pa->ensure_grad();
                               for (std::size_t i = 0; i < na; ++i)
                                 pa->g[i] += n.g[i];
                             }
                             if (pb->requires_grad) {
                               pb->ensure_grad();
                               for (std::size_t i = na; i < n.size(); ++i)
                                 pb->g[i - na] += n.g[i];
                             }
                           });
  }
  if (axis == 1) {
    if (a.rows() != b.rows())
      throw DimensionMismatch("concat axis 1: row counts differ");
    std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> v(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < ca; ++j) v[i * (ca + cb) + j] = a.at(i, j);
      for (std::size_t j = 0; j < cb; ++j)
        v[i * (ca + cb) + ca + j] = b.at(i, j);
    }
    return detail::make_op(
        {r, ca + cb}, std::move(v), {a, b}, [r, ca, cb](Node& n) {
          auto& pa = n.parents[0];
          auto& pb = n.parents[1];
          if (pa->requires_grad) pa->ensure_grad();
          if (pb->requires_grad) pb->ensure_grad();
          for (std::size_t i = 0; i < r; ++i) {
            if (pa->requires_grad)
              for (std::size_t j = 0; j < ca; ++j)
                pa->g[i * ca + j] += n.g[i * (ca + cb) + j];
            if (pb->requires_grad)
              for (std::size_t j = 0; j < cb; ++j)
                pb->g[i * cb + j] += n.g[i * (ca + cb) + ca + j];
          }
        });
  }
  throw DimensionMismatch("concat: axis must be 0 or 1");
}

// Row gather; duplicate indices accumulate on backward.
inline Tensor rows(const Tensor& m, const std::vector<std::size_t>& idx) {
  if (!m.is_matrix()) throw DimensionMismatch("rows: need a matrix");
  std::size_t c = m.cols();
  std::vector<double> v(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m.rows()) throw DimensionMismatch("rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) v[i * c + j] = m.at(idx[i], j);
  }
  auto indices = idx;
  return detail::make_op({idx.size(), c}, std::move(v), {m},
                         [indices, c](Node& n) {
                           auto& p = n.parents[0];
                           p->ensure_grad();
                           for (std::size_t i = 0; i < indices.size(); ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               p->g[indices[i] * c + j] += n.g[i * c + j];
                         });
}

inline Tensor row(const Tensor& m, std::size_t i) {
  if (!m.is_matrix()) throw DimensionMismatch("row: need a matrix");
  if (i >= m.rows()) throw DimensionMismatch("row: index out of range");
  std::size_t c = m.cols();
  std::vector<double> v(c);
  for (std::size_t j = 0; j < c; ++j) v[j] = m.at(i, j);
  return detail::make_op({c}, std::move(v), {m}, [i, c](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t j = 0; j < c; ++j) p->g[i * c + j] += n.g[j];
  });
}

inline Tensor slice(const Tensor& v, std::size_t start, std::size_t len) {
  if (!v.is_vector()) throw DimensionMismatch("slice: need a vector");
  if (start + len > v.size()) throw DimensionMismatch("slice: out of range");
  std::vector<double> out(v.values().begin() + start,
                          v.values().begin() + start + len);
  return detail::make_op({len}, std::move(out), {v}, [start, len](Node& n) {
    auto& p = n.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < len; ++i) p->g[start + i] += n.g[i];
  });
}

inline Tensor stack_rows(const std::vector<Tensor>& rows_in) {
  if (rows_in.empty()) throw DimensionMismatch("stack_rows: empty");
  std::size_t c = rows_in[0].size();
  std::vector<double> v;
  v.reserve(rows_in.size() * c);
  for (const auto& r : rows_in) {
    if (!r.is_vector() || r.size() != c)
      throw DimensionMismatch("stack_rows: inconsistent row length");
    v.insert(v.end(), r.values().begin(), r.values().end());
  }
  return detail::make_op({rows_in.size(), c}, std::move(v), rows_in,
                         [c](Node& n) {
                           for (std::size_t i = 0; i < n.parents.size(); ++i) {
                             auto& p = n.parents[i];
                             if (!p->requires_grad) continue;
                             p->ensure_grad();
                             for (std::size_t j = 0; j < c; ++j)
                               p->g[j] += n.g[i * c + j];
                           }
                         });
}

// Repeat a vector as L identical rows.
inline Tensor tile_rowvec(const Tensor& v, std::size_t n_rows) {
  if (!v.is_vector()) throw DimensionMismatch("tile_rowvec: need a vector");
  std::size_t c = v.size();
  std::vector<double> out(n_rows * c);
  for (std::size_t i = 0; i < n_rows; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = v.at(j);
  return detail::make_op({n_rows, c}, std::move(out), {v},
                         [n_rows, c](Node& n) {
                           auto& p = n.parents[0];
                           p->ensure_grad();
                           for (std::size_t i = 0; i < n_rows; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               p->g[j] += n.g[i * c + j];
                         });
}

// --- linear algebra -----------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (!a.is_matrix() || !b.is_matrix() || a.cols() != b.rows())
    throw DimensionMismatch("matmul: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = a.at(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] += av * b.at(p, j);
    }
  return detail::make_op({m, n}, std::move(v), {a, b}, [m, k, n](Node& nd) {
    auto& pa = nd.parents[0];
    auto& pb = nd.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double gv = nd.g[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p)
            pa->g[i * k + p] += gv * pb->v[p * n + j];
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double av = pa->v[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j)
            pb->g[p * n + j] += av * nd.g[i * n + j];
        }
    }
  });
}

// A (m x k) * B^T (k x n) for B given as (n x k); avoids materializing B^T.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (!a.is_matrix() || !b.is_matrix() || a.cols() != b.cols())
    throw DimensionMismatch("matmul_nt: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()) + "^T");
  std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> v(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(j, p);
      v[i * n + j] = s;
    }
  return detail::make_op({m, n}, std::move(v), {a, b}, [m, k, n](Node& nd) {
    auto& pa = nd.parents[0];
    auto& pb = nd.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA = dC * B
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double gv = nd.g[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p)
            pa->g[i * k + p] += gv * pb->v[j * k + p];
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB = dC^T * A
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double gv = nd.g[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p)
            pb->g[j * k + p] += gv * pa->v[i * k + p];
        }
    }
  });
}

// A (m x n) * x (n) -> (m)
inline Tensor matvec(const Tensor& a, const Tensor& x) {
  if (!a.is_matrix() || !x.is_vector() || a.cols() != x.size())
    throw DimensionMismatch("matvec: " + shape_str(a.shape()) + " x " +
                            shape_str(x.shape()));
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[i] += a.at(i, j) * x.at(j);
  return detail::make_op({m}, std::move(v), {a, x}, [m, n](Node& nd) {
    auto& pa = nd.parents[0];
    auto& px = nd.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          pa->g[i * n + j] += nd.g[i] * px->v[j];
    }
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          px->g[j] += nd.g[i] * pa->v[i * n + j];
    }
  });
}

// A^T (n x m) * x (m) -> (n); avoids materializing the transpose.
inline Tensor matvec_t(const Tensor& a, const Tensor& x) {
  if (!a.is_matrix() || !x.is_vector() || a.rows() != x.size())
    throw DimensionMismatch("matvec_t: " + shape_str(a.shape()) + " x " +
                            shape_str(x.shape()));
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j] += a.at(i, j) * x.at(i);
  return detail::make_op({n}, std::move(v), {a, x}, [m, n](Node& nd) {
    auto& pa = nd.parents[0];
    auto& px = nd.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          pa->g[i * n + j] += nd.g[j] * px->v[i];
    }
    if (px->requires_grad) {
      px->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          px->g[i] += nd.g[j] * pa->v[i * n + j];
    }
  });
}

// x (m) * A (m x n) -> (n)
inline Tensor vecmat(const Tensor& x, const Tensor& a) { return matvec_t(a, x); }

inline Tensor dot(const Tensor& u, const Tensor& w) {
  if (!u.is_vector() || !w.is_vector() || u.size() != w.size())
    throw DimensionMismatch("dot: " + shape_str(u.shape()) + " . " +
                            shape_str(w.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u.at(i) * w.at(i);
  return detail::make_op({1}, {s}, {u, w}, [](Node& nd) {
    auto& pu = nd.parents[0];
    auto& pw = nd.parents[1];
    double gv = nd.g[0];
    if (pu->requires_grad) {
      pu->ensure_grad();
      for (std::size_t i = 0; i < pu->v.size(); ++i)
        pu->g[i] += gv * pw->v[i];
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      for (std::size_t i = 0; i < pw->v.size(); ++i)
        pw->g[i] += gv * pu->v[i];
    }
  });
}

inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (!m.is_matrix() || !v.is_vector() || m.cols() != v.size())
    throw DimensionMismatch("add_rowvec: " + shape_str(m.shape()) + " + " +
                            shape_str(v.shape()));
  std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(m.values());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v.at(j);
  return detail::make_op({r, c}, std::move(out), {m, v}, [r, c](Node& nd) {
    auto& pm = nd.parents[0];
    auto& pv = nd.parents[1];
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < nd.size(); ++i) pm->g[i] += nd.g[i];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) pv->g[j] += nd.g[i * c + j];
    }
  });
}

// Row i of the output is row i of m scaled by s[i].
inline Tensor scale_rows(const Tensor& m, const Tensor& s) {
  if (!m.is_matrix() || !s.is_vector() || m.rows() != s.size())
    throw DimensionMismatch("scale_rows: " + shape_str(m.shape()) + " by " +
                            shape_str(s.shape()));
  std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.at(i, j) * s.at(i);
  return detail::make_op({r, c}, std::move(out), {m, s}, [r, c](Node& nd) {
    auto& pm = nd.parents[0];
    auto& ps = nd.parents[1];
    if (pm->requires_grad) {
      pm->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          pm->g[i * c + j] += nd.g[i * c + j] * ps->v[i];
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ps->g[i] += nd.g[i * c + j] * pm->v[i * c + j];
    }
  });
}

// --- reductions ----------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i);
  return detail::make_op({1}, {s}, {a}, [](Node& nd) {
    auto& p = nd.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < p->v.size(); ++i) p->g[i] += nd.g[0];
  });
}

inline Tensor pick(const Tensor& v, std::size_t i) {
  if (!v.is_vector() || i >= v.size())
    throw DimensionMismatch("pick: index out of range");
  return detail::make_op({1}, {v.at(i)}, {v}, [i](Node& nd) {
    auto& p = nd.parents[0];
    p->ensure_grad();
    p->g[i] += nd.g[0];
  });
}

// axis = 0: reduce over rows (result length cols); axis = 1: over columns.
inline Tensor mean_reduce(const Tensor& m, int axis) {
  if (!m.is_matrix()) throw DimensionMismatch("mean_reduce: need a matrix");
  std::size_t r = m.rows(), c = m.cols();
  if (axis == 0) {
    std::vector<double> v(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) v[j] += m.at(i, j);
    for (auto& x : v) x /= static_cast<double>(r);
    return detail::make_op({c}, std::move(v), {m}, [r, c](Node& nd) {
      auto& p = nd.parents[0];
      p->ensure_grad();
      double inv = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) p->g[i * c + j] += nd.g[j] * inv;
    });
  }
  if (axis == 1) {
    std::vector<double> v(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) v[i] += m.at(i, j);
      v[i] /= static_cast<double>(c);
    }
    return detail::make_op({r}, std::move(v), {m}, [r, c](Node& nd) {
      auto& p = nd.parents[0];
      p->ensure_grad();
      double inv = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) p->g[i * c + j] += nd.g[i] * inv;
    });
  }
  throw DimensionMismatch("mean_reduce: axis must be 0 or 1");
}

// Ties route gradient to the first maximal element.
inline Tensor max_reduce(const Tensor& m, int axis) {
  if (!m.is_matrix()) throw DimensionMismatch("max_reduce: need a matrix");
  std::size_t r = m.rows(), c = m.cols();
  if (axis == 0) {
    std::vector<double> v(c);
    auto arg = std::make_shared<std::vector<std::size_t>>(c, 0);
    for (std::size_t j = 0; j < c; ++j) {
      double best = m.at(0, j);
      std::size_t bi = 0;
      for (std::size_t i = 1; i < r; ++i)
        if (m.at(i, j) > best) {
          best = m.at(i, j);
          bi = i;
        }
      v[j] = best;
      (*arg)[j] = bi;
    }
    return detail::make_op({c}, std::move(v), {m}, [arg, c](Node& nd) {
      auto& p = nd.parents[0];
      p->ensure_grad();
      for (std::size_t j = 0; j < c; ++j) p->g[(*arg)[j] * c + j] += nd.g[j];
    });
  }
  if (axis == 1) {
    std::vector<double> v(r);
    auto arg = std::make_shared<std::vector<std::size_t>>(r, 0);
    for (std::size_t i = 0; i < r; ++i) {
      double best = m.at(i, 0);
      std::size_t bj = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (m.at(i, j) > best) {
          best = m.at(i, j);
          bj = j;
        }
      v[i] = best;
      (*arg)[i] = bj;
    }
    return detail::make_op({r}, std::move(v), {m}, [arg, c](Node& nd) {
      auto& p = nd.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < nd.size(); ++i)
        p->g[i * c + (*arg)[i]] += nd.g[i];
    });
  }
  throw DimensionMismatch("max_reduce: axis must be 0 or 1");
}

// --- softmax --------------------------------------------------------------------

namespace detail {
// Softmax over a strided slice; writes into out.
inline void softmax_slice(const double* in, double* out, std::size_t n,
                          std::size_t stride) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i * stride]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i * stride] = std::exp(in[i * stride] - mx);
    z += out[i * stride];
  }
  for (std::size_t i = 0; i < n; ++i) out[i * stride] /= z;
}

inline void softmax_slice_backward(const double* y, const double* gy,
                                   double* gx, std::size_t n,
                                   std::size_t stride) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += y[i * stride] * gy[i * stride];
  for (std::size_t i = 0; i < n; ++i)
    gx[i * stride] += y[i * stride] * (gy[i * stride] - s);
}
}  // namespace detail

inline Tensor softmax_vec(const Tensor& x) {
  if (!x.is_vector()) throw DimensionMismatch("softmax_vec: need a vector");
  std::vector<double> v(x.size());
  detail::softmax_slice(x.values().data(), v.data(), x.size(), 1);
  return detail::make_op(x.shape(), std::move(v), {x}, [](Node& nd) {
    auto& p = nd.parents[0];
    p->ensure_grad();
    detail::softmax_slice_backward(nd.v.data(), nd.g.data(), p->g.data(),
                                   nd.size(), 1);
  });
}

// axis = 1: softmax within each row; axis = 0: within each column.
inline Tensor softmax(const Tensor& m, int axis) {
  if (m.is_vector()) return softmax_vec(m);
  if (!m.is_matrix()) throw DimensionMismatch("softmax: need vector or matrix");
  std::size_t r = m.rows(), c = m.cols();
  std::vector<double> v(m.size());
  if (axis == 1) {
    for (std::size_t i = 0; i < r; ++i)
      detail::softmax_slice(m.values().data() + i * c, v.data() + i * c, c, 1);
  } else if (axis == 0) {
    for (std::size_t j = 0; j < c; ++j)
      detail::softmax_slice(m.values().data() + j, v.data() + j, r, c);
  } else {
    throw DimensionMismatch("softmax: axis must be 0 or 1");
  }
  return detail::make_op({r, c}, std::move(v), {m}, [r, c, axis](Node& nd) {
    auto& p = nd.parents[0];
    p->ensure_grad();
    if (axis == 1) {
      for (std::size_t i = 0; i < r; ++i)
        detail::softmax_slice_backward(nd.v.data() + i * c, nd.g.data() + i * c,
                                       p->g.data() + i * c, c, 1);
    } else {
      for (std::size_t j = 0; j < c; ++j)
        detail::softmax_slice_backward(nd.v.data() + j, nd.g.data() + j,
                                       p->g.data() + j, r, c);
    }
  });
}

// --- convolution -----------------------------------------------------------------

// Same-length 1-D convolution over an (L x d_in) sequence followed by tanh.
// kernel: (width * d_in) x n_filters, window rows flattened offset-major;
// zero padding floor((width-1)/2) on the left, remainder on the right.
inline Tensor conv1d(const Tensor& seq, const Tensor& kernel,
                     const Tensor& bias, std::size_t width) {
  if (!seq.is_matrix()) throw DimensionMismatch("conv1d: sequence must be L x d");
  std::size_t L = seq.rows(), d = seq.cols();
  if (width == 0 || !kernel.is_matrix() || kernel.rows() != width * d)
    throw DimensionMismatch("conv1d: kernel rows must equal width * d_in");
  std::size_t nf = kernel.cols();
  if (!bias.is_vector() || bias.size() != nf)
    throw DimensionMismatch("conv1d: bias size must equal filter count");
  std::size_t left = (width - 1) / 2;

  std::vector<double> pre(L * nf);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t f = 0; f < nf; ++f) pre[i * nf + f] = bias.at(f);
    for (std::size_t o = 0; o < width; ++o) {
      std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + o) -
                           static_cast<std::ptrdiff_t>(left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
      for (std::size_t j = 0; j < d; ++j) {
        double x = seq.at(static_cast<std::size_t>(src), j);
        if (x == 0.0) continue;
        const std::size_t krow = o * d + j;
        for (std::size_t f = 0; f < nf; ++f)
          pre[i * nf + f] += x * kernel.at(krow, f);
      }
    }
  }
  std::vector<double> out(L * nf);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(pre[i]);

  return detail::make_op(
      {L, nf}, std::move(out), {seq, kernel, bias},
      [L, d, nf, width, left](Node& nd) {
        auto& ps = nd.parents[0];
        auto& pk = nd.parents[1];
        auto& pb = nd.parents[2];
        std::vector<double> gpre(L * nf);
        for (std::size_t i = 0; i < gpre.size(); ++i)
          gpre[i] = nd.g[i] * (1.0 - nd.v[i] * nd.v[i]);
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < L; ++i)
            for (std::size_t f = 0; f < nf; ++f) pb->g[f] += gpre[i * nf + f];
        }
        if (ps->requires_grad) ps->ensure_grad();
        if (pk->requires_grad) pk->ensure_grad();
        for (std::size_t i = 0; i < L; ++i) {
          for (std::size_t o = 0; o < width; ++o) {
            std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + o) -
                                 static_cast<std::ptrdiff_t>(left);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
            for (std::size_t j = 0; j < d; ++j) {
              const std::size_t krow = o * d + j;
              const std::size_t sidx = static_cast<std::size_t>(src) * d + j;
              if (ps->requires_grad) {
                double acc = 0.0;
                for (std::size_t f = 0; f < nf; ++f)
                  acc += gpre[i * nf + f] * pk->v[krow * nf + f];
                ps->g[sidx] += acc;
              }
              if (pk->requires_grad) {
                double x = ps->v[sidx];
                if (x != 0.0)
                  for (std::size_t f = 0; f < nf; ++f)
                    pk->g[krow * nf + f] += gpre[i * nf + f] * x;
              }
            }
          }
        }
      });
}

// --- backward driver ---------------------------------------------------------------

inline std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;  // 0 new, 1 open, 2 done
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  state[root] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!p->requires_grad) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      } else {
        // A node currently open on the stack would mean a cycle, which the
        // builder API cannot produce.
        assert(it->second != 1 && "graph cycle");
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
// requires_grad node reachable from loss. Parameters not on the path keep
// whatever gradient they had (zero if freshly cleared).
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw DimensionMismatch("backward: loss must be scalar");
  Node* root = loss.node();
  if (!root->requires_grad) return;
  auto order = topo_order(root);
  root->ensure_grad();
  root->g[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->g.empty()) n->backward(*n);
  }
}

// --- gradient checking ---------------------------------------------------------------

// Central finite differences against reverse-mode gradients.
// Returns the max relative error over every coordinate of every input.
inline double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double eps = 1e-4) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor y = f(inputs);
  if (y.size() != 1) throw DimensionMismatch("grad_check: f must be scalar");
  backward(y);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    if (t.grad().empty())
      analytic.emplace_back(t.size(), 0.0);
    else
      analytic.push_back(t.grad());
  }

  double max_rel = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& vals = inputs[ti].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double orig = vals[i];
      vals[i] = orig + eps;
      double up = f(inputs).value();
      vals[i] = orig - eps;
      double dn = f(inputs).value();
      vals[i] = orig;
      double fd = (up - dn) / (2.0 * eps);
      double ga = analytic[ti][i];
      double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// --- recurrent encoder -----------------------------------------------------------------

struct LstmWeights {
  // Gate layout in the 4H axis: input, forget, cell, output.
  Tensor w_x;  // d_in x 4H
  Tensor w_h;  // H x 4H
  Tensor b;    // 4H
};

namespace detail {
inline std::vector<Tensor> lstm_direction(const std::vector<Tensor>& xs,
                                          const LstmWeights& w,
                                          std::size_t hidden) {
  std::size_t L = xs.size();
  Tensor h = Tensor::zeros({hidden});
  Tensor c = Tensor::zeros({hidden});
  std::vector<Tensor> hs;
  hs.reserve(L);
  for (std::size_t t = 0; t < L; ++t) {
    Tensor z = add(add(vecmat(xs[t], w.w_x), vecmat(h, w.w_h)), w.b);
    Tensor i = sigmoid_t(slice(z, 0, hidden));
    Tensor f = sigmoid_t(slice(z, hidden, hidden));
    Tensor g = tanh_t(slice(z, 2 * hidden, hidden));
    Tensor o = sigmoid_t(slice(z, 3 * hidden, hidden));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh_t(c));
    hs.push_back(h);
  }
  return hs;
}
}  // namespace detail

// Bidirectional LSTM over an (L x d_in) sequence. Output row t is
// [forward h_t : backward h_t], shape (L x 2*hidden).
inline Tensor bilstm(const Tensor& seq, const LstmWeights& fwd,
                     const LstmWeights& bwd, std::size_t hidden) {
  if (!seq.is_matrix() || seq.rows() == 0)
    throw DimensionMismatch("bilstm: need a nonempty L x d matrix");
  std::size_t L = seq.rows();
  std::vector<Tensor> xs;
  xs.reserve(L);
  for (std::size_t t = 0; t < L; ++t) xs.push_back(row(seq, t));

  auto hf = detail::lstm_direction(xs, fwd, hidden);
  std::vector<Tensor> rev(xs.rbegin(), xs.rend());
  auto hb_rev = detail::lstm_direction(rev, bwd, hidden);

  std::vector<Tensor> out_rows;
  out_rows.reserve(L);
  for (std::size_t t = 0; t < L; ++t)
    out_rows.push_back(concat(hf[t], hb_rev[L - 1 - t], 0));
  return stack_rows(out_rows);
}

}  // namespace ckann::ad
