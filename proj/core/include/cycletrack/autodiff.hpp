// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cycletrack::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using IdxMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

// Reverse-mode tape over dense matrices. One graph per forward pass; nodes
// are created in topological order, so backward() is a reverse sweep.
// Gradients are allocated lazily: subgraphs the loss never touches cost
// nothing on the way back.
template <typename S>
class Graph {
 public:
  using M = Mat<S>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = delete;
  Graph& operator=(Graph&&) = delete;

  int input(M v, bool requires_grad = true) {
    return push(std::move(v), requires_grad, nullptr);
  }
  int constant(M v) { return input(std::move(v), false); }
  int scalar(S v) {
    M m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Leaf tied to an external parameter slot; see accumulate_param_grads().
  int param(const M& value, int external_id) {
    const int id = input(value, true);
    param_links_.emplace_back(external_id, id);
    return id;
  }

  const M& value(int id) const { return nodes_[id].value; }
  int rows(int id) const { return static_cast<int>(nodes_[id].value.rows()); }
  int cols(int id) const { return static_cast<int>(nodes_[id].value.cols()); }

  // Gradient of the last backward() root w.r.t. node `id` (zeros if the node
  // was never reached).
  M grad(int id) const {
    if (nodes_[id].grad.size() == 0)
      return M::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    return nodes_[id].grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- arithmetic ----

  int add(int a, int b) {
    require_same_shape(a, b, "add");
    return make(value(a) + value(b), {a, b}, [this, a, b](const M& g) {
      accum(a, g);
      accum(b, g);
    });
  }

  int sub(int a, int b) {
    require_same_shape(a, b, "sub");
    return make(value(a) - value(b), {a, b}, [this, a, b](const M& g) {
      accum(a, g);
      accum(b, -g);
    });
  }

  int neg(int a) {
    return make(-value(a), {a}, [this, a](const M& g) { accum(a, -g); });
  }

  // broadcast 1xC row vector over all rows of a
  int add_rowvec(int a, int v) {
    if (cols(a) != cols(v) || rows(v) != 1)
      throw std::invalid_argument("add_rowvec: shape mismatch");
    M out = value(a);
    out.rowwise() += value(v).row(0);
    return make(std::move(out), {a, v}, [this, a, v](const M& g) {
      accum(a, g);
      accum(v, g.colwise().sum());
    });
  }

  int mul(int a, int b) {
    require_same_shape(a, b, "mul");
    return make(value(a).cwiseProduct(value(b)), {a, b},
                [this, a, b](const M& g) {
                  accum(a, g.cwiseProduct(value(b)));
                  accum(b, g.cwiseProduct(value(a)));
                });
  }

  int divide(int a, int b) {
    require_same_shape(a, b, "divide");
    return make(value(a).cwiseQuotient(value(b)), {a, b},
                [this, a, b](const M& g) {
                  accum(a, g.cwiseQuotient(value(b)));
                  accum(b, -g.cwiseProduct(value(a))
                             .cwiseQuotient(value(b).cwiseProduct(value(b))));
                });
  }

  int scale(int a, S s) {
    return make(value(a) * s, {a}, [this, a, s](const M& g) { accum(a, g * s); });
  }

  int add_scalar(int a, S s) {
    return make(value(a).array() + s, {a},
                [this, a](const M& g) { accum(a, g); });
  }

  // ---- matmul family ----

  int matmul(int a, int b) {
    if (cols(a) != rows(b)) throw std::invalid_argument("matmul: inner dims");
    return make(value(a) * value(b), {a, b}, [this, a, b](const M& g) {
      accum_expr(a, [&](M& dst) { dst.noalias() += g * value(b).transpose(); });
      accum_expr(b, [&](M& dst) { dst.noalias() += value(a).transpose() * g; });
    });
  }

  // a * b^T
  int matmul_nt(int a, int b) {
    if (cols(a) != cols(b)) throw std::invalid_argument("matmul_nt: inner dims");
    return make(value(a) * value(b).transpose(), {a, b},
                [this, a, b](const M& g) {
                  accum_expr(a, [&](M& dst) { dst.noalias() += g * value(b); });
                  accum_expr(b, [&](M& dst) {
                    dst.noalias() += g.transpose() * value(a);
                  });
                });
  }

  // a^T * b
  int matmul_tn(int a, int b) {
    if (rows(a) != rows(b)) throw std::invalid_argument("matmul_tn: inner dims");
    return make(value(a).transpose() * value(b), {a, b},
                [this, a, b](const M& g) {
                  accum_expr(a, [&](M& dst) {
                    dst.noalias() += value(b) * g.transpose();
                  });
                  accum_expr(b, [&](M& dst) { dst.noalias() += value(a) * g; });
                });
  }

  // ---- piecewise ----

  int maximum(int a, int b) {
    require_same_shape(a, b, "maximum");
    return make(value(a).cwiseMax(value(b)), {a, b}, [this, a, b](const M& g) {
      // ties go to a
      const M mask =
          (value(a).array() >= value(b).array()).template cast<S>().matrix();
      accum(a, g.cwiseProduct(mask));
      accum(b, g - g.cwiseProduct(mask));
    });
  }

  int minimum(int a, int b) {
    require_same_shape(a, b, "minimum");
    return make(value(a).cwiseMin(value(b)), {a, b}, [this, a, b](const M& g) {
      const M mask =
          (value(a).array() <= value(b).array()).template cast<S>().matrix();
      accum(a, g.cwiseProduct(mask));
      accum(b, g - g.cwiseProduct(mask));
    });
  }

  int clamp_min(int a, S lo) {
    return make(value(a).cwiseMax(lo), {a}, [this, a, lo](const M& g) {
      const M mask = (value(a).array() >= lo).template cast<S>().matrix();
      accum(a, g.cwiseProduct(mask));
    });
  }

  int clamp_max(int a, S hi) {
    return make(value(a).cwiseMin(hi), {a}, [this, a, hi](const M& g) {
      const M mask = (value(a).array() <= hi).template cast<S>().matrix();
      accum(a, g.cwiseProduct(mask));
    });
  }

  int relu(int a) { return clamp_min(a, S(0)); }

  int abs(int a) {
    return make(value(a).cwiseAbs(), {a}, [this, a](const M& g) {
      accum(a, g.cwiseProduct(value(a).array().sign().matrix()));
    });
  }

  // ---- nonlinearities ----

  int sigmoid(int a) {
    M y = (S(1) / (S(1) + (-value(a).array()).exp())).matrix();
    const int id = make(std::move(y), {a}, nullptr);
    nodes_[id].backprop = [this, a, id](const M& g) {
      const auto& y_ = value(id).array();
      accum(a, (g.array() * y_ * (S(1) - y_)).matrix());
    };
    return id;
  }

  // exact gelu: 0.5 x (1 + erf(x / sqrt(2)))
  int gelu(int a) {
    const auto erf_part = [](const M& m) {
      return m.array()
          .unaryExpr([](S v) { return S(std::erf(v / std::numbers::sqrt2)); })
          .matrix()
          .eval();
    };
    const auto& x = value(a).array();
    M y = (S(0.5) * x * (S(1) + erf_part(value(a)).array())).matrix();
    return make(std::move(y), {a}, [this, a, erf_part](const M& g) {
      const auto& x_ = value(a).array();
      const S inv_sqrt2pi = S(1) / S(std::sqrt(2.0 * std::numbers::pi));
      const M e = erf_part(value(a));
      const M d = (S(0.5) * (S(1) + e.array()) +
                   x_ * inv_sqrt2pi * (-x_ * x_ / S(2)).exp())
                      .matrix();
      accum(a, g.cwiseProduct(d));
    });
  }

  int log(int a) {
    return make(value(a).array().log().matrix(), {a}, [this, a](const M& g) {
      accum(a, g.cwiseQuotient(value(a)));
    });
  }

  int pow_const(int a, S p) {
    return make(value(a).array().pow(p).matrix(), {a}, [this, a, p](const M& g) {
      accum(a, (g.array() * p * value(a).array().pow(p - S(1))).matrix());
    });
  }

  int softmax_rows(int a) {
    M y = value(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const S mx = y.row(r).maxCoeff();
      y.row(r) = (y.row(r).array() - mx).exp();
      y.row(r) /= y.row(r).sum();
    }
    const int id = make(std::move(y), {a}, nullptr);
    nodes_[id].backprop = [this, a, id](const M& g) {
      const M& y_ = value(id);
      M dx(y_.rows(), y_.cols());
      for (Eigen::Index r = 0; r < y_.rows(); ++r) {
        const S dot = g.row(r).dot(y_.row(r));
        dx.row(r) =
            (y_.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
      accum(a, dx);
    };
    return id;
  }

  // row-wise layer norm with affine params gamma, beta (1xC each)
  int layernorm_rows(int x, int gamma, int beta, S eps = S(1e-5)) {
    if (rows(gamma) != 1 || rows(beta) != 1 || cols(gamma) != cols(x) ||
        cols(beta) != cols(x))
      throw std::invalid_argument("layernorm_rows: affine shape mismatch");
    const M& xv = value(x);
    const Eigen::Index n = xv.cols();
    M xhat(xv.rows(), n);
    M inv_std(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const S mu = xv.row(r).mean();
      const S var = (xv.row(r).array() - mu).square().sum() / S(n);
      const S is = S(1) / std::sqrt(var + eps);
      inv_std(r, 0) = is;
      xhat.row(r) = ((xv.row(r).array() - mu) * is).matrix();
    }
    M out = xhat;
    out.array().rowwise() *= value(gamma).row(0).array();
    out.rowwise() += value(beta).row(0);
    const int id = make(std::move(out), {x, gamma, beta}, nullptr);
    // keep xhat and inv_std alive in the closure
    nodes_[id].backprop = [this, x, gamma, beta, xh = std::move(xhat),
                           is = std::move(inv_std)](const M& g) {
      accum(beta, g.colwise().sum());
      accum(gamma, g.cwiseProduct(xh).colwise().sum());
      const Eigen::Index n = xh.cols();
      M dxhat = g;
      dxhat.array().rowwise() *= value(gamma).row(0).array();
      M dx(xh.rows(), n);
      for (Eigen::Index r = 0; r < xh.rows(); ++r) {
        const S m1 = dxhat.row(r).mean();
        const S m2 = dxhat.row(r).cwiseProduct(xh.row(r)).mean();
        dx.row(r) = ((dxhat.row(r).array() - m1 - xh.row(r).array() * m2) *
                     is(r, 0))
                        .matrix();
      }
      accum(x, dx);
    };
    return id;
  }

  // ---- shape ops ----

  int slice_rows(int a, int r0, int nr) {
    if (r0 < 0 || r0 + nr > rows(a))
      throw std::invalid_argument("slice_rows: out of range");
    return make(value(a).middleRows(r0, nr), {a},
                [this, a, r0, nr](const M& g) {
                  accum_expr(a, [&](M& dst) { dst.middleRows(r0, nr) += g; });
                });
  }

  int slice_cols(int a, int c0, int nc) {
    if (c0 < 0 || c0 + nc > cols(a))
      throw std::invalid_argument("slice_cols: out of range");
    return make(value(a).middleCols(c0, nc), {a},
                [this, a, c0, nc](const M& g) {
                  accum_expr(a, [&](M& dst) { dst.middleCols(c0, nc) += g; });
                });
  }

  int concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    Eigen::Index total = 0;
    for (int p : parts) {
      if (cols(p) != cols(parts[0]))
        throw std::invalid_argument("concat_rows: column mismatch");
      total += rows(p);
    }
    M out(total, cols(parts[0]));
    Eigen::Index at = 0;
    for (int p : parts) {
      out.middleRows(at, rows(p)) = value(p);
      at += rows(p);
    }
    return make(std::move(out), parts, [this, parts](const M& g) {
      Eigen::Index at = 0;
      for (int p : parts) {
        accum(p, g.middleRows(at, rows(p)));
        at += rows(p);
      }
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index total = 0;
    for (int p : parts) {
      if (rows(p) != rows(parts[0]))
        throw std::invalid_argument("concat_cols: row mismatch");
      total += cols(p);
    }
    M out(rows(parts[0]), total);
    Eigen::Index at = 0;
    for (int p : parts) {
      out.middleCols(at, cols(p)) = value(p);
      at += cols(p);
    }
    return make(std::move(out), parts, [this, parts](const M& g) {
      Eigen::Index at = 0;
      for (int p : parts) {
        accum(p, g.middleCols(at, cols(p)));
        at += cols(p);
      }
    });
  }

  int gather_rows(int a, std::vector<int> idx) {
    for (int i : idx)
      if (i < 0 || i >= rows(a))
        throw std::invalid_argument("gather_rows: index out of range");
    M out(static_cast<Eigen::Index>(idx.size()), cols(a));
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = value(a).row(idx[i]);
    return make(std::move(out), {a}, [this, a, idx = std::move(idx)](const M& g) {
      accum_expr(a, [&](M& dst) {
        for (std::size_t i = 0; i < idx.size(); ++i) dst.row(idx[i]) += g.row(i);
      });
    });
  }

  // Element gather by row-major logical index into a; index -1 reads 0.
  // Covers im2col for both patch embedding and padded convolutions. Index
  // tables are shared: callers precompute them once per configuration.
  int gather_fixed(int a, std::shared_ptr<const IdxMat> idx) {
    const Eigen::Index ac = cols(a);
    M out(idx->rows(), idx->cols());
    const M& av = value(a);
    for (Eigen::Index r = 0; r < idx->rows(); ++r) {
      for (Eigen::Index c = 0; c < idx->cols(); ++c) {
        const int li = (*idx)(r, c);
        out(r, c) = li < 0 ? S(0) : av(li / ac, li % ac);
      }
    }
    return make(std::move(out), {a}, [this, a, idx = std::move(idx)](const M& g) {
      const Eigen::Index ac = cols(a);
      accum_expr(a, [&](M& dst) {
        for (Eigen::Index r = 0; r < idx->rows(); ++r) {
          for (Eigen::Index c = 0; c < idx->cols(); ++c) {
            const int li = (*idx)(r, c);
            if (li >= 0) dst(li / ac, li % ac) += g(r, c);
          }
        }
      });
    });
  }

  int gather_fixed(int a, IdxMat idx) {
    return gather_fixed(a, std::make_shared<const IdxMat>(std::move(idx)));
  }

  // ---- reductions ----

  int sum(int a) {
    M out(1, 1);
    out(0, 0) = value(a).sum();
    return make(std::move(out), {a}, [this, a](const M& g) {
      accum_expr(a, [&](M& dst) { dst.array() += g(0, 0); });
    });
  }

  int mean(int a) {
    const S n = S(value(a).size());
    M out(1, 1);
    out(0, 0) = value(a).sum() / n;
    return make(std::move(out), {a}, [this, a, n](const M& g) {
      accum_expr(a, [&](M& dst) { dst.array() += g(0, 0) / n; });
    });
  }

  int stop_grad(int a) { return constant(value(a)); }

  // ---- backward ----

  void backward(int root) {
    if (value(root).size() != 1)
      throw std::invalid_argument("backward: root must be a 1x1 node");
    grad_ref(root).setConstant(S(1));
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0 || !n.backprop) continue;
      n.backprop(n.grad);
    }
  }

  // Adds this graph's parameter-leaf gradients into `sink(external_id, grad)`.
  template <class Sink>
  void visit_param_grads(Sink&& sink) const {
    for (const auto& [ext, id] : param_links_) {
      if (nodes_[id].grad.size() != 0) sink(ext, nodes_[id].grad);
    }
  }

 private:
  struct Node {
    M value;
    M grad;  // empty until touched
    bool requires_grad = false;
    std::function<void(const M&)> backprop;
  };

  int push(M v, bool req, std::function<void(const M&)> bp) {
    nodes_.push_back(Node{std::move(v), M(), req, std::move(bp)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  template <class Expr>
  int make(Expr&& v, const std::vector<int>& parents,
           std::function<void(const M&)> bp) {
    bool req = false;
    for (int p : parents) req = req || nodes_[p].requires_grad;
    return push(M(std::forward<Expr>(v)), req, req ? std::move(bp) : nullptr);
  }

  M& grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = M::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <class Expr>
  void accum(int id, const Expr& e) {
    if (!nodes_[id].requires_grad) return;
    grad_ref(id) += e;
  }

  template <class Fn>
  void accum_expr(int id, Fn&& fn) {
    if (!nodes_[id].requires_grad) return;
    fn(grad_ref(id));
  }

  void require_same_shape(int a, int b, const char* op) {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, int>> param_links_;
};

}  // namespace cycletrack::ad
