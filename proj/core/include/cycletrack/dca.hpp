// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/heads.hpp"
#include "cycletrack/nn.hpp"
#include "cycletrack/rng.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cycletrack::dca {

enum class ContextMode { None, Prompt, Noise };

inline const char* mode_name(ContextMode m) {
  switch (m) {
    case ContextMode::Prompt: return "prompt";
    case ContextMode::Noise: return "noise";
    default: return "none";
  }
}

struct DcaSchedule {
  int switch_epoch = 10;  // prompt while epoch <= switch_epoch
  int token_length = 8;
  bool noise_exclude_topk = false;
  double noise_loss_weight = 1.0;

  void validate() const {
    if (switch_epoch < 0)
      throw std::invalid_argument("dca: switch_epoch must be >= 0");
    if (token_length < 1)
      throw std::invalid_argument("dca: token_length must be >= 1");
  }
};

inline ContextMode select_mode(int epoch, const DcaSchedule& s) {
  if (epoch < 0) throw std::invalid_argument("select_mode: negative epoch");
  return epoch <= s.switch_epoch ? ContextMode::Prompt : ContextMode::Noise;
}

// Sampling-call counters; inference must leave them untouched.
struct Counters {
  std::atomic<long> prompt_calls{0};
  std::atomic<long> noise_calls{0};
};
Counters& counters();
void reset_counters();

// Per-token score: mean over heads of attn ⊙ cls. Selection math runs in
// double regardless of the model scalar so rankings are exact.
template <typename S>
Eigen::VectorXd score_tokens(const ad::Mat<S>& attn, const ad::Mat<S>& cls) {
  const Eigen::Index n_s = attn.cols();
  if (cls.size() != n_s)
    throw std::invalid_argument("score_tokens: cls length != token count");
  Eigen::VectorXd cls_flat(n_s);
  for (Eigen::Index i = 0; i < n_s; ++i)
    cls_flat(i) = static_cast<double>(cls(i / cls.cols(), i % cls.cols()));
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n_s);
  for (Eigen::Index h = 0; h < attn.rows(); ++h)
    s += attn.row(h).template cast<double>().transpose().cwiseProduct(cls_flat);
  return s / static_cast<double>(attn.rows());
}

// Indices of the k largest scores; ties broken by the smaller index.
inline std::vector<int> topk_indices(const Eigen::VectorXd& scores, int k) {
  if (k > scores.size())
    throw std::invalid_argument("topk_indices: k > candidate count");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) {
                      if (scores(a) != scores(b)) return scores(a) > scores(b);
                      return a < b;
                    });
  order.resize(k);
  return order;
}

template <typename S>
struct ContextTokens {
  int node = -1;  // K x D on the owning graph; -1 when mode == None
  ContextMode mode = ContextMode::None;
  std::vector<int> source_indices;

  int count() const { return static_cast<int>(source_indices.size()); }
};

// Top-k rows of f_x by saliency x classification score. The ranking is
// detached; gathered token values keep their gradient path.
template <typename S>
ContextTokens<S> sample_prompt(ad::Graph<S>& g, int f_x,
                               const ad::Mat<S>& attn, const ad::Mat<S>& cls,
                               int k) {
  if (k > g.rows(f_x))
    throw std::invalid_argument("sample_prompt: k > token count");
  const Eigen::VectorXd scores = score_tokens<S>(attn, cls);
  if (scores.size() != g.rows(f_x))
    throw std::invalid_argument("sample_prompt: score/token count mismatch");
  ContextTokens<S> out;
  out.mode = ContextMode::Prompt;
  out.source_indices = topk_indices(scores, k);
  out.node = g.gather_rows(f_x, out.source_indices);
  counters().prompt_calls.fetch_add(1, std::memory_order_relaxed);
  return out;
}

// k distinct token indices drawn uniformly without replacement; optionally
// excluding a set (the current top-k when noise_exclude_topk is on).
template <typename S>
ContextTokens<S> sample_noise(ad::Graph<S>& g, int f_x, int k, Rng& rng,
                              const std::vector<int>* exclude = nullptr) {
  const int n = g.rows(f_x);
  std::vector<int> candidates;
  if (exclude && !exclude->empty()) {
    std::vector<bool> drop(n, false);
    for (int i : *exclude)
      if (i >= 0 && i < n) drop[i] = true;
    for (int i = 0; i < n; ++i)
      if (!drop[i]) candidates.push_back(i);
  } else {
    candidates.resize(n);
    std::iota(candidates.begin(), candidates.end(), 0);
  }
  if (k > static_cast<int>(candidates.size()))
    throw std::invalid_argument("sample_noise: k > candidate count");
  const std::vector<int> picks =
      rng.sample_without_replacement(static_cast<int>(candidates.size()), k);
  ContextTokens<S> out;
  out.mode = ContextMode::Noise;
  out.source_indices.reserve(k);
  for (int p : picks) out.source_indices.push_back(candidates[p]);
  out.node = g.gather_rows(f_x, out.source_indices);
  counters().noise_calls.fetch_add(1, std::memory_order_relaxed);
  return out;
}

// One cross-attention transformer layer perturbing f_x with noise tokens,
// followed by a dedicated prediction head copy.
template <typename S>
MapsNodes<S> noise_decode(ad::Graph<S>& g, const nn::ParamStore<S>& ps,
                          const nn::BlockP<S>& block,
                          const HeadsP<S>& dec_heads, int f_x,
                          const ContextTokens<S>& noise, int h, int w,
                          const HeadIndexTables<S>& tables) {
  if (noise.mode != ContextMode::Noise)
    throw std::invalid_argument("noise_decode: context mode must be noise");
  const int perturbed = block.apply_cross(g, ps, f_x, noise.node);
  return predict(g, ps, dec_heads, perturbed, h, w, tables);
}

}  // namespace cycletrack::dca
