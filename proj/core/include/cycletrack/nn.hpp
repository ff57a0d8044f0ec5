// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/autodiff.hpp"
#include "cycletrack/rng.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cycletrack::nn {

// Optimizer parameter groups; the backbone gets its own learning rate.
enum ParamGroup : int { kGroupBackbone = 0, kGroupRest = 1 };

template <typename S>
struct ParamStore {
  struct Entry {
    std::string name;
    ad::Mat<S> value;
    ad::Mat<S> grad;
    ad::Mat<S> adam_m, adam_v;
    int group = kGroupRest;
    bool no_decay = false;  // biases, norms, positional embeddings
    bool touched = false;   // saw a gradient since zero_grads()
  };

  std::vector<Entry> entries;
  std::map<std::string, int> by_name;

  int add(const std::string& name, int rows, int cols, int group,
          bool no_decay = false) {
    if (by_name.count(name))
      throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.value = ad::Mat<S>::Zero(rows, cols);
    e.grad = ad::Mat<S>::Zero(rows, cols);
    e.adam_m = ad::Mat<S>::Zero(rows, cols);
    e.adam_v = ad::Mat<S>::Zero(rows, cols);
    e.group = group;
    e.no_decay = no_decay;
    entries.push_back(std::move(e));
    by_name[name] = static_cast<int>(entries.size()) - 1;
    return static_cast<int>(entries.size()) - 1;
  }

  Entry& operator[](int i) { return entries[i]; }
  const Entry& operator[](int i) const { return entries[i]; }

  void zero_grads() {
    for (auto& e : entries) {
      e.grad.setZero();
      e.touched = false;
    }
  }

  void accumulate(int idx, const ad::Mat<S>& g, S scale) {
    entries[idx].grad += g * scale;
    entries[idx].touched = true;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  double grad_norm() const {
    double sq = 0;
    for (const auto& e : entries)
      if (e.touched) sq += static_cast<double>(e.grad.squaredNorm());
    return std::sqrt(sq);
  }
};

// Registers this graph's parameter leaves into the store's gradients.
// Call after Graph::backward(); merge order across samples must be fixed
// by the caller for determinism.
template <typename S>
void accumulate_param_grads(const ad::Graph<S>& g, ParamStore<S>& store,
                            S scale) {
  g.visit_param_grads(
      [&](int ext, const ad::Mat<S>& grad) { store.accumulate(ext, grad, scale); });
}

// Decoupled-weight-decay Adam. Entries that saw no gradient this step are
// left untouched, matching the usual grad=None semantics.
template <typename S>
struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::vector<double> group_lr{1e-4, 1e-4};
  long step_count = 0;

  void step(ParamStore<S>& store) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, step_count);
    const double bc2 = 1.0 - std::pow(beta2, step_count);
    for (auto& e : store.entries) {
      if (!e.touched) continue;
      const double lr = group_lr.at(static_cast<std::size_t>(e.group));
      e.adam_m = S(beta1) * e.adam_m + S(1 - beta1) * e.grad;
      e.adam_v =
          (S(beta2) * e.adam_v.array() + S(1 - beta2) * e.grad.array().square())
              .matrix();
      if (!e.no_decay && weight_decay > 0)
        e.value *= S(1.0 - lr * weight_decay);
      const auto mhat = e.adam_m.array() / S(bc1);
      const auto vhat = e.adam_v.array() / S(bc2);
      e.value.array() -= S(lr) * mhat / (vhat.sqrt() + S(eps));
    }
  }
};

template <typename S>
void fill_trunc_normal(ad::Mat<S>& m, Rng& rng, double sigma) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<S>(rng.trunc_normal(sigma));
}

// ---- layer parameter bundles ----

template <typename S>
struct LinearP {
  int w = -1, b = -1;

  static LinearP create(ParamStore<S>& ps, const std::string& name, int in,
                        int out, int group, Rng& rng, double init_std = 0.02,
                        bool zero_init = false) {
    LinearP p;
    p.w = ps.add(name + ".weight", in, out, group);
    p.b = ps.add(name + ".bias", 1, out, group, /*no_decay=*/true);
    if (!zero_init) fill_trunc_normal(ps[p.w].value, rng, init_std);
    return p;
  }

  int apply(ad::Graph<S>& g, const ParamStore<S>& ps, int x) const {
    return g.add_rowvec(g.matmul(x, g.param(ps[w].value, w)),
                        g.param(ps[b].value, b));
  }
};

template <typename S>
struct LayerNormP {
  int gamma = -1, beta = -1;

  static LayerNormP create(ParamStore<S>& ps, const std::string& name, int dim,
                           int group) {
    LayerNormP p;
    p.gamma = ps.add(name + ".gamma", 1, dim, group, /*no_decay=*/true);
    p.beta = ps.add(name + ".beta", 1, dim, group, /*no_decay=*/true);
    ps[p.gamma].value.setOnes();
    return p;
  }

  int apply(ad::Graph<S>& g, const ParamStore<S>& ps, int x) const {
    return g.layernorm_rows(x, g.param(ps[gamma].value, gamma),
                            g.param(ps[beta].value, beta));
  }
};

// Multi-head self-attention weights (q, k, v, o as D x D linears).
template <typename S>
struct AttentionP {
  LinearP<S> q, k, v, o;
  int num_heads = 1;

  static AttentionP create(ParamStore<S>& ps, const std::string& name, int dim,
                           int heads, int group, Rng& rng,
                           bool zero_init_out = false) {
    AttentionP p;
    p.num_heads = heads;
    p.q = LinearP<S>::create(ps, name + ".q", dim, dim, group, rng);
    p.k = LinearP<S>::create(ps, name + ".k", dim, dim, group, rng);
    p.v = LinearP<S>::create(ps, name + ".v", dim, dim, group, rng);
    p.o = LinearP<S>::create(ps, name + ".o", dim, dim, group, rng, 0.02,
                             zero_init_out);
    return p;
  }

  // queries come from `xq`, keys/values from `xkv`; returns the projected
  // output. Per-head softmax probabilities are appended to `probs_out` as
  // value matrices when the caller asks for them.
  int apply(ad::Graph<S>& g, const ParamStore<S>& ps, int xq, int xkv,
            std::vector<ad::Mat<S>>* probs_out = nullptr) const {
    const int dim = static_cast<int>(ps[q.w].value.cols());
    if (dim % num_heads != 0)
      throw std::invalid_argument("attention: dim not divisible by heads");
    const int dh = dim / num_heads;
    const int qn = q.apply(g, ps, xq);
    const int kn = k.apply(g, ps, xkv);
    const int vn = v.apply(g, ps, xkv);
    const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));
    std::vector<int> head_out;
    head_out.reserve(num_heads);
    for (int hh = 0; hh < num_heads; ++hh) {
      const int qi = g.slice_cols(qn, hh * dh, dh);
      const int ki = g.slice_cols(kn, hh * dh, dh);
      const int vi = g.slice_cols(vn, hh * dh, dh);
      const int scores = g.scale(g.matmul_nt(qi, ki), inv_sqrt_dh);
      const int p = g.softmax_rows(scores);
      if (probs_out) probs_out->push_back(g.value(p));
      head_out.push_back(g.matmul(p, vi));
    }
    return o.apply(g, ps, g.concat_cols(head_out));
  }
};

// Pre-LN transformer block: x + Attn(LN1(x)), then x + MLP(LN2(x)).
template <typename S>
struct BlockP {
  LayerNormP<S> ln1;
  AttentionP<S> attn;
  LayerNormP<S> ln2;
  LinearP<S> fc1, fc2;

  static BlockP create(ParamStore<S>& ps, const std::string& name, int dim,
                       int heads, int mlp_ratio, int group, Rng& rng,
                       bool zero_init_residual = false) {
    BlockP p;
    p.ln1 = LayerNormP<S>::create(ps, name + ".ln1", dim, group);
    p.attn = AttentionP<S>::create(ps, name + ".attn", dim, heads, group, rng,
                                   zero_init_residual);
    p.ln2 = LayerNormP<S>::create(ps, name + ".ln2", dim, group);
    p.fc1 = LinearP<S>::create(ps, name + ".fc1", dim, dim * mlp_ratio, group, rng);
    p.fc2 = LinearP<S>::create(ps, name + ".fc2", dim * mlp_ratio, dim, group,
                               rng, 0.02, zero_init_residual);
    return p;
  }

  int apply(ad::Graph<S>& g, const ParamStore<S>& ps, int x,
            std::vector<ad::Mat<S>>* probs_out = nullptr) const {
    const int n1 = ln1.apply(g, ps, x);
    const int a = attn.apply(g, ps, n1, n1, probs_out);
    const int h = g.add(x, a);
    const int m = fc2.apply(g, ps, g.gelu(fc1.apply(g, ps, ln2.apply(g, ps, h))));
    return g.add(h, m);
  }

  // cross-attention form: queries from x, keys/values from ctx
  int apply_cross(ad::Graph<S>& g, const ParamStore<S>& ps, int x,
                  int ctx) const {
    const int a = attn.apply(g, ps, ln1.apply(g, ps, x), ctx);
    const int h = g.add(x, a);
    const int m = fc2.apply(g, ps, g.gelu(fc1.apply(g, ps, ln2.apply(g, ps, h))));
    return g.add(h, m);
  }
};

}  // namespace cycletrack::nn
