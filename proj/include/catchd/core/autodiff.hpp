#pragma once

// Reverse-mode autodiff over dense double matrices. Dynamic tape: each op
// returns a fresh node holding its value and a closure that scatters the
// node's gradient into its parents. Desk-scale models only; no views, no
// in-place ops, float64 throughout so finite-difference checks are meaningful.

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace catchd::ad {

using Mat = Eigen::MatrixXd;

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Mat val;
  Mat grad;
  bool needs_grad;
  std::vector<Var> parents;
  std::function<void()> backprop;  // accumulates this->grad into parents

  explicit Node(Mat v, bool ng = true)
      : val(std::move(v)), grad(Mat::Zero(val.rows(), val.cols())), needs_grad(ng) {}

  double scalar() const {
    assert(val.size() == 1);
    return val(0, 0);
  }

  void zero_grad() { grad.setZero(); }
};

inline Var make(Mat v) { return std::make_shared<Node>(std::move(v), true); }
inline Var constant(Mat v) { return std::make_shared<Node>(std::move(v), false); }
inline Var scalar_const(double v) { return constant(Mat::Constant(1, 1, v)); }

namespace detail {
inline bool any_grad(const std::vector<Var>& ps) {
  for (const auto& p : ps)
    if (p->needs_grad) return true;
  return false;
}

inline Var unary(const Var& a, Mat v, std::function<void(Node&, Node&)> bp) {
  auto out = std::make_shared<Node>(std::move(v), a->needs_grad);
  if (out->needs_grad) {
    out->parents = {a};
    Node* o = out.get();
    Var pa = a;
    out->backprop = [o, pa, bp = std::move(bp)]() { bp(*o, *pa); };
  }
  return out;
}

inline Var binary(const Var& a, const Var& b, Mat v,
                  std::function<void(Node&, Node&, Node&)> bp) {
  bool ng = a->needs_grad || b->needs_grad;
  auto out = std::make_shared<Node>(std::move(v), ng);
  if (ng) {
    out->parents = {a, b};
    Node* o = out.get();
    Var pa = a, pb = b;
    out->backprop = [o, pa, pb, bp = std::move(bp)]() { bp(*o, *pa, *pb); };
  }
  return out;
}
}  // namespace detail

// ---------------------------------------------------------------- arithmetic

inline Var add(const Var& a, const Var& b) {
  assert(a->val.rows() == b->val.rows() && a->val.cols() == b->val.cols());
  return detail::binary(a, b, a->val + b->val, [](Node& o, Node& x, Node& y) {
    if (x.needs_grad) x.grad += o.grad;
    if (y.needs_grad) y.grad += o.grad;
  });
}

// broadcast a 1xN row vector across every row of a
inline Var add_rowvec(const Var& a, const Var& b) {
  assert(b->val.rows() == 1 && a->val.cols() == b->val.cols());
  Mat v = a->val.rowwise() + b->val.row(0);
  return detail::binary(a, b, std::move(v), [](Node& o, Node& x, Node& y) {
    if (x.needs_grad) x.grad += o.grad;
    if (y.needs_grad) y.grad += o.grad.colwise().sum();
  });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(a, b, a->val - b->val, [](Node& o, Node& x, Node& y) {
    if (x.needs_grad) x.grad += o.grad;
    if (y.needs_grad) y.grad -= o.grad;
  });
}

inline Var mul(const Var& a, const Var& b) {  // hadamard
  return detail::binary(a, b, a->val.cwiseProduct(b->val),
                        [](Node& o, Node& x, Node& y) {
                          if (x.needs_grad) x.grad += o.grad.cwiseProduct(y.val);
                          if (y.needs_grad) y.grad += o.grad.cwiseProduct(x.val);
                        });
}

inline Var scale(const Var& a, double s) {
  return detail::unary(a, a->val * s, [s](Node& o, Node& x) {
    if (x.needs_grad) x.grad += o.grad * s;
  });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary(a, a->val.array() + s, [](Node& o, Node& x) {
    if (x.needs_grad) x.grad += o.grad;
  });
}

inline Var matmul(const Var& a, const Var& b) {
  assert(a->val.cols() == b->val.rows());
  return detail::binary(a, b, a->val * b->val, [](Node& o, Node& x, Node& y) {
    if (x.needs_grad) x.grad.noalias() += o.grad * y.val.transpose();
    if (y.needs_grad) y.grad.noalias() += x.val.transpose() * o.grad;
  });
}

inline Var matmul_bt(const Var& a, const Var& b) {  // a * b^T
  assert(a->val.cols() == b->val.cols());
  return detail::binary(a, b, a->val * b->val.transpose(),
                        [](Node& o, Node& x, Node& y) {
                          if (x.needs_grad) x.grad.noalias() += o.grad * y.val;
                          if (y.needs_grad) y.grad.noalias() += o.grad.transpose() * x.val;
                        });
}

// ---------------------------------------------------------------- elementwise

inline Var vexp(const Var& a) {
  Mat v = a->val.array().exp();
  return detail::unary(a, v, [](Node& o, Node& x) {
    if (x.needs_grad) x.grad += o.grad.cwiseProduct(o.val);
  });
}

inline Var vlog(const Var& a) {
  Mat v = a->val.array().log();
  return detail::unary(a, v, [](Node& o, Node& x) {
    if (x.needs_grad) x.grad.array() += o.grad.array() / x.val.array();
  });
}

// hard clamp; gradient passes through the interior, zero outside
inline Var clamp(const Var& a, double lo, double hi) {
  Mat v = a->val.array().min(hi).max(lo);
  return detail::unary(a, v, [lo, hi](Node& o, Node& x) {
    if (!x.needs_grad) return;
    x.grad.array() +=
        o.grad.array() * ((x.val.array() >= lo) && (x.val.array() <= hi)).cast<double>();
  });
}

namespace detail {
inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC = 0.044715;
}  // namespace detail

// tanh-approximation GELU; smooth, so finite differences behave
inline Var gelu(const Var& a) {
  const double k = detail::kGeluK;
  const double c = detail::kGeluC;
  Eigen::ArrayXXd x = a->val.array();
  Eigen::ArrayXXd inner = k * (x + c * x.cube());
  Eigen::ArrayXXd t = inner.tanh();
  Mat v = 0.5 * x * (1.0 + t);
  return detail::unary(a, std::move(v), [](Node& o, Node& x) {
    if (!x.needs_grad) return;
    const double k = detail::kGeluK;
    const double c = detail::kGeluC;
    Eigen::ArrayXXd xv = x.val.array();
    Eigen::ArrayXXd inner = k * (xv + c * xv.cube());
    Eigen::ArrayXXd t = inner.tanh();
    Eigen::ArrayXXd dinner = k * (1.0 + 3.0 * c * xv.square());
    Eigen::ArrayXXd d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t.square()) * dinner;
    x.grad.array() += o.grad.array() * d;
  });
}

// ---------------------------------------------------------------- rowwise

inline Mat softmax_rows_val(const Mat& a) {
  Mat out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Eigen::ArrayXd row = a.row(r).array();
    double m = row.maxCoeff();
    Eigen::ArrayXd e = (row - m).exp();
    out.row(r) = (e / e.sum()).transpose();
  }
  return out;
}

inline Var softmax_rows(const Var& a) {
  return detail::unary(a, softmax_rows_val(a->val), [](Node& o, Node& x) {
    if (!x.needs_grad) return;
    for (Eigen::Index r = 0; r < o.val.rows(); ++r) {
      Eigen::ArrayXd y = o.val.row(r).array();
      Eigen::ArrayXd g = o.grad.row(r).array();
      double dot = (g * y).sum();
      x.grad.row(r).array() += y * (g - dot);
    }
  });
}

inline Var log_softmax_rows(const Var& a) {
  Mat v(a->val.rows(), a->val.cols());
  for (Eigen::Index r = 0; r < a->val.rows(); ++r) {
    Eigen::ArrayXd row = a->val.row(r).array();
    double m = row.maxCoeff();
    double lse = m + std::log((row - m).exp().sum());
    v.row(r) = (row - lse).transpose();
  }
  return detail::unary(a, std::move(v), [](Node& o, Node& x) {
    if (!x.needs_grad) return;
    for (Eigen::Index r = 0; r < o.val.rows(); ++r) {
      Eigen::ArrayXd sm = o.val.row(r).array().exp();
      Eigen::ArrayXd g = o.grad.row(r).array();
      x.grad.row(r).array() += g - sm * g.sum();
    }
  });
}

inline Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias,
                           double eps = 1e-5) {
  assert(gain->val.rows() == 1 && bias->val.rows() == 1);
  const Eigen::Index n = a->val.cols();
  Mat v(a->val.rows(), n);
  for (Eigen::Index r = 0; r < a->val.rows(); ++r) {
    Eigen::ArrayXd row = a->val.row(r).array();
    double mu = row.mean();
    double var = (row - mu).square().mean();
    double inv = 1.0 / std::sqrt(var + eps);
    v.row(r) = (((row - mu) * inv) * gain->val.row(0).transpose().array() +
                bias->val.row(0).transpose().array())
                   .transpose();
  }
  bool ng = a->needs_grad || gain->needs_grad || bias->needs_grad;
  auto out = std::make_shared<Node>(std::move(v), ng);
  if (ng) {
    out->parents = {a, gain, bias};
    Node* o = out.get();
    Var pa = a, pg = gain, pb = bias;
    out->backprop = [o, pa, pg, pb, eps]() {
      const Eigen::Index n = pa->val.cols();
      for (Eigen::Index r = 0; r < pa->val.rows(); ++r) {
        Eigen::ArrayXd row = pa->val.row(r).array();
        double mu = row.mean();
        double var = (row - mu).square().mean();
        double inv = 1.0 / std::sqrt(var + eps);
        Eigen::ArrayXd xhat = (row - mu) * inv;
        Eigen::ArrayXd g = o->grad.row(r).array();
        if (pg->needs_grad) pg->grad.row(0).array() += (g * xhat).transpose();
        if (pb->needs_grad) pb->grad.row(0).array() += g.transpose();
        if (pa->needs_grad) {
          Eigen::ArrayXd gh = g * pg->val.row(0).transpose().array();
          double m1 = gh.mean();
          double m2 = (gh * xhat).mean();
          pa->grad.row(r).array() += ((gh - m1 - xhat * m2) * inv).transpose();
        }
      }
      (void)n;
    };
  }
  return out;
}

// ---------------------------------------------------------------- structure

inline Var rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  Mat v = a->val.middleRows(start, count);
  return detail::unary(a, std::move(v), [start, count](Node& o, Node& x) {
    if (x.needs_grad) x.grad.middleRows(start, count) += o.grad;
  });
}

inline Var cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Mat v = a->val.middleCols(start, count);
  return detail::unary(a, std::move(v), [start, count](Node& o, Node& x) {
    if (x.needs_grad) x.grad.middleCols(start, count) += o.grad;
  });
}

inline Var gather_rows(const Var& table, std::vector<int> idx) {
  Mat v(static_cast<Eigen::Index>(idx.size()), table->val.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = table->val.row(idx[i]);
  return detail::unary(table, std::move(v), [idx = std::move(idx)](Node& o, Node& x) {
    if (!x.needs_grad) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      x.grad.row(idx[i]) += o.grad.row(static_cast<Eigen::Index>(i));
  });
}

inline Var hstack(const std::vector<Var>& parts) {
  assert(!parts.empty());
  Eigen::Index rows_n = parts[0]->val.rows(), cols_n = 0;
  for (const auto& p : parts) cols_n += p->val.cols();
  Mat v(rows_n, cols_n);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p->val.cols()) = p->val;
    c += p->val.cols();
  }
  bool ng = detail::any_grad(parts);
  auto out = std::make_shared<Node>(std::move(v), ng);
  if (ng) {
    out->parents = parts;
    Node* o = out.get();
    auto ps = parts;
    out->backprop = [o, ps]() {
      Eigen::Index c = 0;
      for (const auto& p : ps) {
        if (p->needs_grad) p->grad += o->grad.middleCols(c, p->val.cols());
        c += p->val.cols();
      }
    };
  }
  return out;
}

inline Var vstack(const std::vector<Var>& parts) {
  assert(!parts.empty());
  Eigen::Index cols_n = parts[0]->val.cols(), rows_n = 0;
  for (const auto& p : parts) rows_n += p->val.rows();
  Mat v(rows_n, cols_n);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p->val.rows()) = p->val;
    r += p->val.rows();
  }
  bool ng = detail::any_grad(parts);
  auto out = std::make_shared<Node>(std::move(v), ng);
  if (ng) {
    out->parents = parts;
    Node* o = out.get();
    auto ps = parts;
    out->backprop = [o, ps]() {
      Eigen::Index r = 0;
      for (const auto& p : ps) {
        if (p->needs_grad) p->grad += o->grad.middleRows(r, p->val.rows());
        r += p->val.rows();
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& a) {
  Mat v = Mat::Constant(1, 1, a->val.sum());
  return detail::unary(a, std::move(v), [](Node& o, Node& x) {
    if (x.needs_grad) x.grad.array() += o.grad(0, 0);
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a->val.size())); }

// negative log-likelihood of per-row target classes, with per-row weights:
//   value = sum_r w_r * (-log_probs(r, t_r))
inline Var weighted_nll(const Var& log_probs, std::vector<int> targets,
                        std::vector<double> weights) {
  assert(static_cast<Eigen::Index>(targets.size()) == log_probs->val.rows());
  assert(targets.size() == weights.size());
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r)
    total -= weights[r] * log_probs->val(static_cast<Eigen::Index>(r), targets[r]);
  Mat v = Mat::Constant(1, 1, total);
  return detail::unary(log_probs, std::move(v),
                       [targets = std::move(targets), weights = std::move(weights)](Node& o, Node& x) {
                         if (!x.needs_grad) return;
                         double g = o.grad(0, 0);
                         for (std::size_t r = 0; r < targets.size(); ++r)
                           x.grad(static_cast<Eigen::Index>(r), targets[r]) -= g * weights[r];
                       });
}

// ---------------------------------------------------------------- backward

inline void topo_sort(const Var& root, std::vector<Node*>& order) {
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  // iterative post-order DFS
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->needs_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

// Backpropagate from a scalar root. Leaves' .grad fields accumulate; callers
// zero them between steps.
inline void backward(const Var& root) {
  if (root->val.size() != 1) throw std::invalid_argument("backward: root must be scalar");
  std::vector<Node*> order;
  topo_sort(root, order);
  root->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace catchd::ad
