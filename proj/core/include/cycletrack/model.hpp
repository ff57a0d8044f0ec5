// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/backbone.hpp"
#include "cycletrack/errors.hpp"
#include "cycletrack/heads.hpp"
#include "cycletrack/nn.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace cycletrack {

inline constexpr std::uint32_t kCheckpointMagic = 0x4b545943;  // "CYTK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Extra bookkeeping carried inside a checkpoint (training progress, the
// frozen run config, optimizer state flag).
struct CheckpointMeta {
  int epoch = -1;  // last finished epoch
  long optimizer_step = 0;
  std::string run_config;  // resolved config JSON, opaque here
  bool has_optimizer_state = false;
};

// Full tracker: encoder, main heads, noise decoder (one cross-attention
// block + its own head copy), and learned query tokens for the
// non-semantic-query ablation.
template <typename S>
struct TrackModel {
  EncoderConfig cfg;
  nn::ParamStore<S> params;
  Encoder<S> encoder;
  HeadsP<S> heads_main;
  nn::BlockP<S> noise_block;
  HeadsP<S> heads_noise;
  int query_tokens = -1;
  HeadIndexTables<S> head_tables;
  std::array<double, 3> pix_mean{127.5, 127.5, 127.5};
  std::array<double, 3> pix_std{64.0, 64.0, 64.0};

  static TrackModel create(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TrackModel m;
    m.cfg = cfg;
    Rng rng(derive_seed({seed, 0x6d6f64656cull}));
    m.encoder = Encoder<S>(cfg, m.params, rng);
    m.heads_main = HeadsP<S>::create(m.params, "head", cfg.embed_dim, rng);
    m.noise_block = nn::BlockP<S>::create(m.params, "ndec.block",
                                          cfg.embed_dim, cfg.num_heads,
                                          cfg.mlp_ratio, nn::kGroupRest, rng,
                                          /*zero_init_residual=*/true);
    m.heads_noise = HeadsP<S>::create(m.params, "ndec.head", cfg.embed_dim, rng);
    m.query_tokens = m.params.add("query_tokens", cfg.max_context_tokens,
                                  cfg.embed_dim, nn::kGroupRest, true);
    nn::fill_trunc_normal(m.params[m.query_tokens].value, rng, 0.02);
    m.head_tables = HeadIndexTables<S>::create(
        cfg.feat_res(), cfg.feat_res(), cfg.embed_dim, m.heads_main.cls.mid1);
    return m;
  }
};

// Versioned checkpoint container: JSON header (encoder config, pixel stats,
// training progress, tensor directory) followed by raw little-endian float32
// tensors. Optimizer moments ride along when requested.
template <typename S>
void save_checkpoint(const TrackModel<S>& model, const std::string& path,
                     const CheckpointMeta& meta = {});

template <typename S>
TrackModel<S> load_checkpoint(const std::string& path,
                              CheckpointMeta* meta_out = nullptr);

}  // namespace cycletrack
