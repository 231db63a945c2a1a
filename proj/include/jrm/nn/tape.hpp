#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "jrm/common.hpp"

namespace jrm::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
};

/// Named dense tensors in a fixed order. The order defines the flat layout
/// used by checkpoints and the optimizer.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), Matrix<T>::Zero(rows, cols), Matrix<T>::Zero(rows, cols)});
    return params_.size() - 1;
  }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  Parameter<T>& at(const std::string& name) { return params_[index_.at(name)]; }
  const Parameter<T>& at(const std::string& name) const { return params_[index_.at(name)]; }

  [[nodiscard]] std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  template <typename U>
  [[nodiscard]] ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      const std::size_t i = out.add(p.name, p.value.rows(), p.value.cols());
      out[i].value = p.value.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reverse-mode tape over row-major matrices. Nodes are appended in forward
/// order; backward() walks them in reverse. A tape built with record=false
/// skips gradient bookkeeping and serves pure inference.
template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(512); }

  Var constant(Matrix<T> value) { return push(std::move(value), false); }

  Var param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {it->second};
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, id);
    return {id};
  }

  const Matrix<T>& value(Var v) const { return node(v).val(); }
  const Matrix<T>& grad(Var v) const { return node(v).grad; }

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every parameter's grad.
  void backward(Var loss) {
    if (!record_) throw Error("backward on a non-recording tape");
    if (value(loss).size() != 1) throw DimensionError("backward needs a scalar loss");
    node(loss).grad = Matrix<T>::Ones(1, 1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back();
      if (n.param) n.param->grad += n.grad;
    }
  }

  // ---- ops -----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    check(value(a).cols() == value(b).rows(), "matmul");
    Var out = push(value(a) * value(b), any_grad({a, b}));
    on_back(out, [this, a, b, out] {
      const Matrix<T>& g = grad(out);
      if (wants(a)) accum(a, g * value(b).transpose());
      if (wants(b)) accum(b, value(a).transpose() * g);
    });
    return out;
  }

  /// x W + b, b broadcast over rows.
  Var linear(Var x, Var w, Var b) {
    check(value(x).cols() == value(w).rows() && value(b).rows() == 1 &&
              value(b).cols() == value(w).cols(),
          "linear");
    Matrix<T> y = value(x) * value(w);
    y.rowwise() += value(b).row(0);
    Var out = push(std::move(y), any_grad({x, w, b}));
    on_back(out, [this, x, w, b, out] {
      const Matrix<T>& g = grad(out);
      if (wants(x)) accum(x, g * value(w).transpose());
      if (wants(w)) accum(w, value(x).transpose() * g);
      if (wants(b)) accum(b, g.colwise().sum());
    });
    return out;
  }

  Var add(Var a, Var b) {
    check(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add");
    Var out = push(value(a) + value(b), any_grad({a, b}));
    on_back(out, [this, a, b, out] {
      if (wants(a)) accum(a, grad(out));
      if (wants(b)) accum(b, grad(out));
    });
    return out;
  }

  Var scale(Var a, T c) {
    Var out = push(value(a) * c, any_grad({a}));
    on_back(out, [this, a, c, out] {
      if (wants(a)) accum(a, grad(out) * c);
    });
    return out;
  }

  /// a * row, row broadcast over rows of a.
  Var mul_row(Var a, Var row) {
    check(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "mul_row");
    Matrix<T> y = value(a);
    y.array().rowwise() *= value(row).row(0).array();
    Var out = push(std::move(y), any_grad({a, row}));
    on_back(out, [this, a, row, out] {
      const Matrix<T>& g = grad(out);
      if (wants(a)) {
        Matrix<T> ga = g;
        ga.array().rowwise() *= value(row).row(0).array();
        accum(a, ga);
      }
      if (wants(row)) accum(row, (g.array() * value(a).array()).colwise().sum().matrix());
    });
    return out;
  }

  /// x * (1 + scale) + shift, both 1 x d rows broadcast.
  Var modulate(Var x, Var shift, Var scale_row) {
    check(value(shift).rows() == 1 && value(scale_row).rows() == 1 &&
              value(shift).cols() == value(x).cols() && value(scale_row).cols() == value(x).cols(),
          "modulate");
    Matrix<T> y = value(x);
    y.array().rowwise() *= (value(scale_row).row(0).array() + T(1));
    y.rowwise() += value(shift).row(0);
    Var out = push(std::move(y), any_grad({x, shift, scale_row}));
    on_back(out, [this, x, shift, scale_row, out] {
      const Matrix<T>& g = grad(out);
      if (wants(x)) {
        Matrix<T> gx = g;
        gx.array().rowwise() *= (value(scale_row).row(0).array() + T(1));
        accum(x, gx);
      }
      if (wants(shift)) accum(shift, g.colwise().sum());
      if (wants(scale_row))
        accum(scale_row, (g.array() * value(x).array()).colwise().sum().matrix());
    });
    return out;
  }

  Var silu(Var a) {
    const Matrix<T>& x = value(a);
    Matrix<T> sig = (T(1) + (-x.array()).exp()).inverse().matrix();
    Var out = push((x.array() * sig.array()).matrix(), any_grad({a}));
    on_back(out, [this, a, out, sig = std::move(sig)] {
      if (!wants(a)) return;
      const auto xa = value(a).array();
      accum(a, (grad(out).array() * (sig.array() * (T(1) + xa * (T(1) - sig.array())))).matrix());
    });
    return out;
  }

  /// tanh approximation of GELU.
  Var gelu(Var a) {
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const T k = static_cast<T>(0.044715);
    const auto x = value(a).array();
    Matrix<T> th = (c * (x + k * x.cube())).tanh().matrix();
    Var out = push((T(0.5) * x * (T(1) + th.array())).matrix(), any_grad({a}));
    on_back(out, [this, a, out, c, k, th = std::move(th)] {
      if (!wants(a)) return;
      const auto xa = value(a).array();
      const auto t = th.array();
      const auto d = T(0.5) * (T(1) + t) +
                     T(0.5) * xa * (T(1) - t * t) * c * (T(1) + T(3) * k * xa * xa);
      accum(a, (grad(out).array() * d).matrix());
    });
    return out;
  }

  /// Row-wise normalisation to zero mean and unit variance (no affine part).
  Var layer_norm(Var a, T eps = T(1e-6)) {
    const Matrix<T>& x = value(a);
    const Eigen::Index d = x.cols();
    Matrix<T> xhat(x.rows(), d);
    Matrix<T> inv_std(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mean = x.row(r).mean();
      const T var = (x.row(r).array() - mean).square().mean();
      inv_std(r, 0) = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (x.row(r).array() - mean) * inv_std(r, 0);
    }
    Var out = push(xhat, any_grad({a}));
    on_back(out, [this, a, out, inv_std = std::move(inv_std)] {
      if (!wants(a)) return;
      const Matrix<T>& g = grad(out);
      const Matrix<T>& xh = value(out);
      Matrix<T> gx(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const T gm = g.row(r).mean();
        const T gxm = (g.row(r).array() * xh.row(r).array()).mean();
        gx.row(r) = inv_std(r, 0) * (g.row(r).array() - gm - xh.row(r).array() * gxm);
      }
      accum(a, gx);
    });
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && start + count <= value(a).cols(), "slice_cols");
    Var out = push(value(a).middleCols(start, count), any_grad({a}));
    on_back(out, [this, a, out, start, count] {
      if (!wants(a)) return;
      ensure_grad(a);
      node(a).grad.middleCols(start, count) += grad(out);
    });
    return out;
  }

  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && start + count <= value(a).rows(), "slice_rows");
    Var out = push(value(a).middleRows(start, count), any_grad({a}));
    on_back(out, [this, a, out, start, count] {
      if (!wants(a)) return;
      ensure_grad(a);
      node(a).grad.middleRows(start, count) += grad(out);
    });
    return out;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows");
    const Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
      check(value(p).cols() == cols, "concat_rows");
      rows += value(p).rows();
    }
    Matrix<T> y(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      y.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    Var out = push(std::move(y), any_grad(parts));
    on_back(out, [this, parts, out] {
      Eigen::Index r0 = 0;
      for (Var p : parts) {
        const Eigen::Index n = value(p).rows();
        if (wants(p)) accum(p, grad(out).middleRows(r0, n));
        r0 += n;
      }
    });
    return out;
  }

  Var mean_rows(Var a) {
    check(value(a).rows() > 0, "mean_rows");
    Var out = push(value(a).colwise().mean(), any_grad({a}));
    on_back(out, [this, a, out] {
      if (!wants(a)) return;
      const T inv = T(1) / static_cast<T>(value(a).rows());
      accum(a, (grad(out) * inv).replicate(value(a).rows(), 1));
    });
    return out;
  }

  /// Multi-head scaled dot-product attention. q: nq x d, k/v: nk x d.
  Var attention(Var q, Var k, Var v, int heads) {
    const Matrix<T>& Q = value(q);
    const Matrix<T>& K = value(k);
    const Matrix<T>& V = value(v);
    const Eigen::Index d = Q.cols();
    check(heads > 0 && d % heads == 0 && K.cols() == d && V.cols() == d && K.rows() == V.rows() &&
              K.rows() > 0,
          "attention");
    const Eigen::Index hd = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
    std::vector<Matrix<T>> probs(static_cast<std::size_t>(heads));
    Matrix<T> o(Q.rows(), d);
    for (int h = 0; h < heads; ++h) {
      Matrix<T> s = (Q.middleCols(h * hd, hd) * K.middleCols(h * hd, hd).transpose()) * inv_sqrt;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const T m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      o.middleCols(h * hd, hd).noalias() = s * V.middleCols(h * hd, hd);
      probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Var out = push(std::move(o), any_grad({q, k, v}));
    on_back(out, [this, q, k, v, out, heads, hd, inv_sqrt, probs = std::move(probs)] {
      const Matrix<T>& G = grad(out);
      const Matrix<T>& Q = value(q);
      const Matrix<T>& K = value(k);
      const Matrix<T>& V = value(v);
      Matrix<T> dq = Matrix<T>::Zero(Q.rows(), Q.cols());
      Matrix<T> dk = Matrix<T>::Zero(K.rows(), K.cols());
      Matrix<T> dv = Matrix<T>::Zero(V.rows(), V.cols());
      for (int h = 0; h < heads; ++h) {
        const Matrix<T>& P = probs[static_cast<std::size_t>(h)];
        const auto gh = G.middleCols(h * hd, hd);
        dv.middleCols(h * hd, hd).noalias() += P.transpose() * gh;
        Matrix<T> dp = gh * V.middleCols(h * hd, hd).transpose();
        Matrix<T> ds(P.rows(), P.cols());
        for (Eigen::Index r = 0; r < P.rows(); ++r) {
          const T dot = (dp.row(r).array() * P.row(r).array()).sum();
          ds.row(r) = P.row(r).array() * (dp.row(r).array() - dot);
        }
        ds *= inv_sqrt;
        dq.middleCols(h * hd, hd).noalias() += ds * K.middleCols(h * hd, hd);
        dk.middleCols(h * hd, hd).noalias() += ds.transpose() * Q.middleCols(h * hd, hd);
      }
      if (wants(q)) accum(q, dq);
      if (wants(k)) accum(k, dk);
      if (wants(v)) accum(v, dv);
    });
    return out;
  }

  /// mean((a - target)^2) over all entries, as a 1x1 node.
  Var mse(Var a, const Matrix<T>& target) {
    check(value(a).rows() == target.rows() && value(a).cols() == target.cols(), "mse");
    Matrix<T> diff = value(a) - target;
    const T n = static_cast<T>(diff.size());
    Matrix<T> y(1, 1);
    y(0, 0) = diff.squaredNorm() / n;
    Var out = push(std::move(y), any_grad({a}));
    on_back(out, [this, a, out, n, diff = std::move(diff)] {
      if (wants(a)) accum(a, diff * (T(2) * grad(out)(0, 0) / n));
    });
    return out;
  }

  Var sum(const std::vector<Var>& scalars) {
    check(!scalars.empty(), "sum");
    Matrix<T> y = Matrix<T>::Zero(1, 1);
    for (Var s : scalars) {
      check(value(s).size() == 1, "sum");
      y(0, 0) += value(s)(0, 0);
    }
    Var out = push(std::move(y), any_grad(scalars));
    on_back(out, [this, scalars, out] {
      for (Var s : scalars)
        if (wants(s)) accum(s, grad(out));
    });
    return out;
  }

  [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    Parameter<T>* param = nullptr;
    std::function<void()> back;
    bool needs_grad = false;

    const Matrix<T>& val() const { return ref ? *ref : value; }
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

  Var push(Matrix<T> value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F>
  void on_back(Var out, F&& f) {
    if (node(out).needs_grad) node(out).back = std::forward<F>(f);
  }

  bool any_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (node(v).needs_grad) return true;
    return false;
  }
  bool any_grad(const std::vector<Var>& vs) const {
    for (Var v : vs)
      if (node(v).needs_grad) return true;
    return false;
  }

  bool wants(Var v) const { return node(v).needs_grad; }

  void ensure_grad(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.val().rows(), n.val().cols());
  }

  template <typename E>
  void accum(Var v, const E& g) {
    Node& n = node(v);
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  static void check(bool ok, const char* op) {
    if (!ok) throw DimensionError(std::string("tape: shape mismatch in ") + op);
  }

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
};

}  // namespace jrm::nn
