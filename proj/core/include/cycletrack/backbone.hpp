// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/image.hpp"
#include "cycletrack/nn.hpp"

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cycletrack {

// Which attention slice of the final layer becomes the saliency map. The
// default reads how much attention template queries pay to each search key.
enum class SaliencyDirection { TemplateToSearch, SearchToTemplate };

struct EncoderConfig {
  int patch_size = 16;
  int embed_dim = 128;
  int depth = 4;
  int num_heads = 4;
  int template_res = 64;
  int search_res = 128;
  int max_context_tokens = 16;
  int mlp_ratio = 4;
  SaliencyDirection saliency_direction = SaliencyDirection::TemplateToSearch;

  int n_template_tokens() const {
    return (template_res / patch_size) * (template_res / patch_size);
  }
  int n_search_tokens() const {
    return (search_res / patch_size) * (search_res / patch_size);
  }
  int feat_res() const { return search_res / patch_size; }

  void validate() const {
    if (embed_dim <= 0 || depth <= 0 || num_heads <= 0 || patch_size <= 0)
      throw std::invalid_argument("encoder config: non-positive field");
    if (embed_dim % num_heads != 0)
      throw std::invalid_argument("encoder config: embed_dim % num_heads != 0");
    if (template_res % patch_size != 0 || search_res % patch_size != 0)
      throw std::invalid_argument("encoder config: resolution % patch != 0");
    if (max_context_tokens < 0)
      throw std::invalid_argument("encoder config: max_context_tokens < 0");
  }
};

// Row-major patch extraction table: one row per patch, one column per
// (dy, dx, channel) triple, indexing into an (res*res) x 3 pixel matrix.
inline std::shared_ptr<const ad::IdxMat> make_patch_index(int res, int patch) {
  const int grid = res / patch;
  ad::IdxMat idx(grid * grid, patch * patch * 3);
  for (int py = 0; py < grid; ++py) {
    for (int px = 0; px < grid; ++px) {
      const int row = py * grid + px;
      for (int dy = 0; dy < patch; ++dy) {
        for (int dx = 0; dx < patch; ++dx) {
          for (int c = 0; c < 3; ++c) {
            const int pixel = (py * patch + dy) * res + (px * patch + dx);
            idx(row, (dy * patch + dx) * 3 + c) = pixel * 3 + c;
          }
        }
      }
    }
  }
  return std::make_shared<const ad::IdxMat>(std::move(idx));
}

// Normalized (res*res) x 3 pixel matrix leaf for an image in [0, 255].
template <typename S>
int image_input(ad::Graph<S>& g, const FloatImage& img,
                const std::array<double, 3>& mean,
                const std::array<double, 3>& stdev,
                bool requires_grad = false) {
  ad::Mat<S> px(static_cast<Eigen::Index>(img.width) * img.height, 3);
  std::size_t i = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x, ++i)
      for (int c = 0; c < 3; ++c)
        px(i, c) = static_cast<S>((img.at(x, y, c) - mean[c]) / stdev[c]);
  return g.input(std::move(px), requires_grad);
}

// Per-head saliency of each search token, extracted from final-layer
// attention probabilities. Rows of the result form sub-distributions.
template <typename S>
ad::Mat<S> extract_saliency(const std::vector<ad::Mat<S>>& head_probs, int n_z,
                            int n_s, SaliencyDirection dir) {
  if (head_probs.empty())
    throw std::invalid_argument("extract_saliency: no attention heads");
  const int n = static_cast<int>(head_probs.size());
  ad::Mat<S> out(n, n_s);
  for (int h = 0; h < n; ++h) {
    const auto& p = head_probs[h];
    if (p.rows() < n_z + n_s || p.cols() < n_z + n_s)
      throw std::invalid_argument("extract_saliency: attention too small");
    if (dir == SaliencyDirection::TemplateToSearch) {
      // template queries -> search keys, averaged over the template queries
      out.row(h) = p.block(0, n_z, n_z, n_s).colwise().mean();
    } else {
      // search queries -> template keys, averaged over the template keys
      out.row(h) = p.block(n_z, 0, n_s, n_z).rowwise().mean().transpose();
    }
  }
  return out;
}

template <typename S>
struct EncoderParams {
  nn::LinearP<S> patch_proj;
  int pos_template = -1;
  int pos_search = -1;
  int pos_context = -1;
  std::vector<nn::BlockP<S>> blocks;
  nn::LayerNormP<S> final_ln;
};

template <typename S>
struct EncodeOutput {
  int f_x = -1;         // N_s x D node after the final norm
  ad::Mat<S> saliency;  // n x N_s, detached from the graph
};

// Joint template-search transformer encoder. Holds parameter handles and
// shared index tables; the backing store lives in the model.
template <typename S>
class Encoder {
 public:
  Encoder() = default;

  Encoder(EncoderConfig cfg, nn::ParamStore<S>& ps, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.embed_dim;
    const int pdim = cfg_.patch_size * cfg_.patch_size * 3;
    params_.patch_proj = nn::LinearP<S>::create(ps, "enc.patch", pdim, d,
                                                nn::kGroupBackbone, rng);
    params_.pos_template = ps.add("enc.pos_template", cfg_.n_template_tokens(),
                                  d, nn::kGroupBackbone, true);
    params_.pos_search = ps.add("enc.pos_search", cfg_.n_search_tokens(), d,
                                nn::kGroupBackbone, true);
    params_.pos_context = ps.add("enc.pos_context", 1, d, nn::kGroupBackbone,
                                 true);
    nn::fill_trunc_normal(ps[params_.pos_template].value, rng, 0.02);
    nn::fill_trunc_normal(ps[params_.pos_search].value, rng, 0.02);
    nn::fill_trunc_normal(ps[params_.pos_context].value, rng, 0.02);
    for (int i = 0; i < cfg_.depth; ++i) {
      params_.blocks.push_back(
          nn::BlockP<S>::create(ps, "enc.block" + std::to_string(i), d,
                                cfg_.num_heads, cfg_.mlp_ratio,
                                nn::kGroupBackbone, rng));
    }
    params_.final_ln =
        nn::LayerNormP<S>::create(ps, "enc.final_ln", d, nn::kGroupBackbone);
    template_idx_ = make_patch_index(cfg_.template_res, cfg_.patch_size);
    search_idx_ = make_patch_index(cfg_.search_res, cfg_.patch_size);
  }

  const EncoderConfig& config() const { return cfg_; }
  const EncoderParams<S>& params() const { return params_; }

  enum class PatchKind { Template, Search };

  // Patchify + linear projection + learned positional embedding.
  int patch_embed(ad::Graph<S>& g, const nn::ParamStore<S>& ps, int pixels,
                  PatchKind kind) const {
    const bool tmpl = kind == PatchKind::Template;
    const int res = tmpl ? cfg_.template_res : cfg_.search_res;
    if (g.rows(pixels) != res * res || g.cols(pixels) != 3)
      throw std::invalid_argument("patch_embed: wrong input resolution");
    const int cols = g.gather_fixed(pixels, tmpl ? template_idx_ : search_idx_);
    const int proj = params_.patch_proj.apply(g, ps, cols);
    const int pos = tmpl ? params_.pos_template : params_.pos_search;
    return g.add(proj, g.param(ps[pos].value, pos));
  }

  // Full self-attention over [template; search; context]. Context tokens
  // receive the single learned context positional embedding; their outputs
  // are discarded. ctx_tokens < 0 means no context.
  EncodeOutput<S> encode(ad::Graph<S>& g, const nn::ParamStore<S>& ps,
                         int z_tokens, int x_tokens, int ctx_tokens = -1) const {
    const int n_z = cfg_.n_template_tokens();
    const int n_s = cfg_.n_search_tokens();
    if (g.rows(z_tokens) != n_z || g.rows(x_tokens) != n_s ||
        g.cols(z_tokens) != cfg_.embed_dim || g.cols(x_tokens) != cfg_.embed_dim)
      throw std::invalid_argument("encode: token shape mismatch");

    std::vector<int> parts{z_tokens, x_tokens};
    if (ctx_tokens >= 0) {
      if (g.cols(ctx_tokens) != cfg_.embed_dim)
        throw std::invalid_argument("encode: context dim mismatch");
      if (g.rows(ctx_tokens) > cfg_.max_context_tokens)
        throw std::invalid_argument("encode: too many context tokens");
      parts.push_back(g.add_rowvec(
          ctx_tokens, g.param(ps[params_.pos_context].value, params_.pos_context)));
    }
    int seq = g.concat_rows(parts);

    std::vector<ad::Mat<S>> last_probs;
    for (int i = 0; i < cfg_.depth; ++i) {
      const bool last = i + 1 == cfg_.depth;
      seq = params_.blocks[i].apply(g, ps, seq, last ? &last_probs : nullptr);
    }
    seq = params_.final_ln.apply(g, ps, seq);

    EncodeOutput<S> out;
    out.f_x = g.slice_rows(seq, n_z, n_s);
    out.saliency =
        extract_saliency<S>(last_probs, n_z, n_s, cfg_.saliency_direction);
    return out;
  }

 private:
  EncoderConfig cfg_;
  EncoderParams<S> params_;
  std::shared_ptr<const ad::IdxMat> template_idx_, search_idx_;
};

}  // namespace cycletrack
