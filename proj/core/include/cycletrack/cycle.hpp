// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/data.hpp"
#include "cycletrack/dca.hpp"
#include "cycletrack/model.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cycletrack {

using dca::ContextMode;

// Crop geometry used by training and inference.
struct CropConfig {
  double template_factor = 2.0;
  double search_factor = 4.0;
  double backward_search_scale = 1.5;  // widens the final backward search
};

// Ablation variants: the full mechanism, the two single-mode removals, and
// learned non-semantic query tokens in place of sampled ones.
enum class TrainVariant { Full, NoPrompt, NoNoise, Query };

inline const char* variant_name(TrainVariant v) {
  switch (v) {
    case TrainVariant::NoPrompt: return "no-prompt";
    case TrainVariant::NoNoise: return "no-noise";
    case TrainVariant::Query: return "query";
    default: return "full";
  }
}

inline TrainVariant variant_from_name(const std::string& s) {
  if (s == "full") return TrainVariant::Full;
  if (s == "no-prompt") return TrainVariant::NoPrompt;
  if (s == "no-noise") return TrainVariant::NoNoise;
  if (s == "query") return TrainVariant::Query;
  throw ConfigError("unknown variant: " + s);
}

// Scheduled mode after applying the variant's removals.
inline ContextMode effective_mode(TrainVariant v, ContextMode scheduled) {
  switch (v) {
    case TrainVariant::NoPrompt:
      return scheduled == ContextMode::Prompt ? ContextMode::None : scheduled;
    case TrainVariant::NoNoise:
      return ContextMode::Prompt;
    default:
      return scheduled;
  }
}

struct TrainSchedule {
  int total_epochs = 20;
  int steps_per_epoch = 200;
  int forward_length = 2;  // L
  int backward_steps = 1;  // m
  double lr_backbone = 1e-3;
  double lr_rest = 1e-3;
  int lr_decay_epoch = 16;
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-4;
  int batch_size = 4;
  dca::DcaSchedule dca;

  void validate() const {
    if (total_epochs < 1 || steps_per_epoch < 1 || batch_size < 1)
      throw ConfigError("schedule: epochs, steps and batch must be positive");
    if (forward_length < 1)
      throw ConfigError("schedule: forward_length must be >= 1");
    if (backward_steps < 1 || backward_steps > forward_length)
      throw ConfigError("schedule: backward_steps must lie in [1, forward_length]");
    if (lr_backbone <= 0 || lr_rest <= 0)
      throw ConfigError("schedule: learning rates must be positive");
    if (lr_decay_epoch < 0 || lr_decay_epoch > total_epochs)
      throw ConfigError("schedule: lr_decay_epoch must lie in [0, total_epochs]");
    if (weight_decay < 0) throw ConfigError("schedule: weight_decay < 0");
    dca.validate();
  }
};

// Counts ground-truth boxes of frames > 0 reaching a loss target; the
// self-supervision contract keeps this at zero.
std::atomic<long>& gt_label_leaks();

inline const BBox& guarded_gt(const BBox& box, int frame_index) {
  if (frame_index != 0)
    gt_label_leaks().fetch_add(1, std::memory_order_relaxed);
  return box;
}

// ---------------------------------------------------------------------------
// Tracking cores. The engine drives a Core through crops; the model core
// builds an autodiff graph, the oracle core replays ground truth and is used
// to validate engine geometry independently of learning.
// ---------------------------------------------------------------------------

template <typename S>
class ModelCore {
 public:
  struct Hop {
    EncodeOutput<S> enc;
    MapsNodes<S> maps;
    DecodedBoxNodes<S> dec;
    BBox box_crop;  // decoded value, crop-normalized
  };
  struct Ctx {
    dca::ContextTokens<S> tokens;
    ContextMode mode() const { return tokens.mode; }
    int count() const { return tokens.count(); }
  };

  ModelCore(ad::Graph<S>& g, const TrackModel<S>& model, TrainVariant variant,
            int token_length, bool noise_exclude_topk)
      : g_(g),
        model_(model),
        variant_(variant),
        token_length_(token_length),
        noise_exclude_topk_(noise_exclude_topk) {}

  Hop step(const FloatImage& z_crop, const FloatImage& x_crop,
           const CropTransform&, int, const Ctx& ctx) {
    const int z_tokens = template_tokens(z_crop);
    const int xp = image_input(g_, x_crop, model_.pix_mean, model_.pix_std);
    const int x_tokens = model_.encoder.patch_embed(
        g_, model_.params, xp, Encoder<S>::PatchKind::Search);
    Hop hop;
    hop.enc = model_.encoder.encode(g_, model_.params, z_tokens, x_tokens,
                                    ctx.mode() == ContextMode::None
                                        ? -1
                                        : ctx.tokens.node);
    const int fr = model_.cfg.feat_res();
    hop.maps = predict(g_, model_.params, model_.heads_main, hop.enc.f_x, fr,
                       fr, model_.head_tables);
    hop.dec = decode_box_nodes(g_, hop.maps);
    hop.box_crop = hop.dec.value.box;
    return hop;
  }

  Ctx make_context(const Hop& hop, ContextMode mode, Rng& rng) {
    Ctx ctx;
    if (mode == ContextMode::None) return ctx;
    if (variant_ == TrainVariant::Query) {
      // learned query tokens replace sampled semantic tokens
      const int q = g_.param(model_.params[model_.query_tokens].value,
                             model_.query_tokens);
      ctx.tokens.node = g_.slice_rows(q, 0, token_length_);
      ctx.tokens.mode = mode;
      ctx.tokens.source_indices.assign(static_cast<std::size_t>(token_length_), -1);
      return ctx;
    }
    if (mode == ContextMode::Prompt) {
      ctx.tokens = dca::sample_prompt(g_, hop.enc.f_x, hop.enc.saliency,
                                      g_.value(hop.maps.cls), token_length_);
    } else {
      std::optional<std::vector<int>> exclude;
      if (noise_exclude_topk_) {
        const auto scores = dca::score_tokens<S>(hop.enc.saliency,
                                                 g_.value(hop.maps.cls));
        exclude = dca::topk_indices(scores, token_length_);
      }
      ctx.tokens = dca::sample_noise(g_, hop.enc.f_x, token_length_, rng,
                                     exclude ? &*exclude : nullptr);
    }
    return ctx;
  }

  ad::Graph<S>& graph() { return g_; }
  const TrackModel<S>& model() const { return model_; }

 private:
  int template_tokens(const FloatImage& z_crop) {
    if (&z_crop == cached_template_img_) return cached_template_tokens_;
    const int zp = image_input(g_, z_crop, model_.pix_mean, model_.pix_std);
    cached_template_tokens_ = model_.encoder.patch_embed(
        g_, model_.params, zp, Encoder<S>::PatchKind::Template);
    cached_template_img_ = &z_crop;
    return cached_template_tokens_;
  }

  ad::Graph<S>& g_;
  const TrackModel<S>& model_;
  TrainVariant variant_;
  int token_length_;
  bool noise_exclude_topk_;
  const FloatImage* cached_template_img_ = nullptr;
  int cached_template_tokens_ = -1;
};

// Replays ground truth as perfect head outputs: one-hot classification at
// the target cell, exact offsets and sizes.
class OracleCore {
 public:
  struct Hop {
    PredictionMaps maps;
    BBox box_crop;
  };
  struct Ctx {
    ContextMode mode_ = ContextMode::None;
    int n_ = 0;
    ContextMode mode() const { return mode_; }
    int count() const { return n_; }
  };

  OracleCore(const FrameSequence& seq, int feat_res, int token_length)
      : seq_(seq), feat_res_(feat_res), token_length_(token_length) {
    if (!seq.has_full_annotations())
      throw std::invalid_argument("oracle core needs full annotations");
  }

  Hop step(const FloatImage&, const FloatImage&, const CropTransform& t,
           int frame_index, const Ctx&) const {
    const BBox gt = map_box(seq_.full_annotations[frame_index], t,
                            MapDirection::ToCrop);
    Hop hop;
    hop.maps.h = hop.maps.w = feat_res_;
    hop.maps.cls = Eigen::MatrixXd::Zero(feat_res_ * feat_res_, 1);
    hop.maps.offset = Eigen::MatrixXd::Zero(feat_res_ * feat_res_, 2);
    hop.maps.size = Eigen::MatrixXd::Constant(feat_res_ * feat_res_, 2, 0.5);
    const int pc = std::clamp(
        static_cast<int>(std::floor(gt.cx * feat_res_)), 0, feat_res_ - 1);
    const int pr = std::clamp(
        static_cast<int>(std::floor(gt.cy * feat_res_)), 0, feat_res_ - 1);
    const int peak = pr * feat_res_ + pc;
    hop.maps.cls(peak, 0) = 1.0 - 1e-7;
    hop.maps.offset(peak, 0) = gt.cx * feat_res_ - pc;
    hop.maps.offset(peak, 1) = gt.cy * feat_res_ - pr;
    hop.maps.size(peak, 0) = gt.w;
    hop.maps.size(peak, 1) = gt.h;
    hop.box_crop = decode_box(hop.maps).box;
    return hop;
  }

  Ctx make_context(const Hop&, ContextMode mode, Rng&) const {
    return Ctx{mode, mode == ContextMode::None ? 0 : token_length_};
  }

 private:
  const FrameSequence& seq_;
  int feat_res_;
  int token_length_;
};

// ---------------------------------------------------------------------------
// Tracking engine
// ---------------------------------------------------------------------------

template <typename Core>
struct TrackHop {
  typename Core::Hop hop;
  CropTransform transform;
  int frame_index = -1;
  ContextMode injected_mode = ContextMode::None;
  int injected_count = 0;
  BBox box_frame;  // clamped, frame pixels
};

template <typename Core>
struct ForwardResult {
  FloatImage template_crop;
  std::vector<TrackHop<Core>> hops;
  int degenerate_clamps = 0;
};

template <typename Core>
struct BackwardResult {
  std::vector<FloatImage> reference_crops;  // keeps template tokens alive
  std::vector<TrackHop<Core>> hops;
  int degenerate_clamps = 0;
  BBox b0_frame;  // final prediction for frame 0, frame pixels
};

inline BBox clamp_degenerate(const BBox& b, int* counter) {
  if (b.w >= 1.0 && b.h >= 1.0) return b;
  if (counter) ++(*counter);
  BBox out = b;
  out.w = std::max(out.w, 1.0);
  out.h = std::max(out.h, 1.0);
  return out;
}

// Forward tracking over the unlabeled window: crop around the previous box
// (the labeled box for the first hop), encode with the carried context,
// decode, then refresh the context from the current frame.
template <typename Core>
ForwardResult<Core> forward_track(Core& core, const TrainSample& sample,
                                  ContextMode mode, const EncoderConfig& ecfg,
                                  const CropConfig& cc, Rng& rng) {
  if (sample.frame_indices.empty())
    throw std::invalid_argument("forward_track: empty frame window");
  ForwardResult<Core> out;
  out.template_crop =
      crop(sample.seq->frames[0], sample.y0, cc.template_factor,
           ecfg.template_res)
          .image;

  typename Core::Ctx ctx{};  // context starts empty
  BBox prev_box = sample.y0;
  for (int i : sample.frame_indices) {
    auto cres = crop(sample.seq->frames[static_cast<std::size_t>(i)], prev_box,
                     cc.search_factor, ecfg.search_res);
    TrackHop<Core> th;
    th.frame_index = i;
    th.transform = cres.transform;
    th.injected_mode = ctx.mode();
    th.injected_count = ctx.count();
    th.hop = core.step(out.template_crop, cres.image, cres.transform, i, ctx);
    const BBox frame_box =
        map_box(th.hop.box_crop, cres.transform, MapDirection::ToFrame);
    th.box_frame = clamp_degenerate(frame_box, &out.degenerate_clamps);
    ctx = core.make_context(th.hop, mode, rng);
    prev_box = th.box_frame;  // crop placement is a stop-gradient boundary
    out.hops.push_back(std::move(th));
  }
  return out;
}

// Backward tracking: re-crop the last unlabeled frame at its predicted box
// as the new reference, hop back through earlier frames (reverse order) and
// finish on frame 0 over a widened search region.
template <typename Core>
BackwardResult<Core> backward_track(Core& core, const ForwardResult<Core>& fwd,
                                    const TrainSample& sample, ContextMode mode,
                                    const EncoderConfig& ecfg,
                                    const CropConfig& cc, int backward_steps,
                                    Rng& rng) {
  const int L = static_cast<int>(fwd.hops.size());
  if (backward_steps < 1 || backward_steps > L)
    throw std::invalid_argument("backward_track: steps must lie in [1, L]");

  BackwardResult<Core> out;
  typename Core::Ctx ctx{};  // context resets before the backward pass
  int ref_frame = fwd.hops.back().frame_index;
  BBox ref_box = fwd.hops.back().box_frame;
  BBox prev_box = ref_box;

  for (int j = 1; j <= backward_steps; ++j) {
    out.reference_crops.push_back(
        crop(sample.seq->frames[static_cast<std::size_t>(ref_frame)], ref_box,
             cc.template_factor, ecfg.template_res)
            .image);
    const bool final_hop = j == backward_steps;
    const int target_frame =
        final_hop ? 0 : fwd.hops[static_cast<std::size_t>(L - 1 - j)].frame_index;
    const double factor = final_hop
                              ? cc.search_factor * cc.backward_search_scale
                              : cc.search_factor;
    auto cres = crop(sample.seq->frames[static_cast<std::size_t>(target_frame)],
                     prev_box, factor, ecfg.search_res);
    TrackHop<Core> th;
    th.frame_index = target_frame;
    th.transform = cres.transform;
    th.injected_mode = ctx.mode();
    th.injected_count = ctx.count();
    th.hop = core.step(out.reference_crops.back(), cres.image, cres.transform,
                       target_frame, ctx);
    const BBox frame_box =
        map_box(th.hop.box_crop, cres.transform, MapDirection::ToFrame);
    th.box_frame = clamp_degenerate(frame_box, &out.degenerate_clamps);
    ctx = core.make_context(th.hop, mode, rng);
    ref_frame = target_frame;
    ref_box = th.box_frame;
    prev_box = th.box_frame;
    out.hops.push_back(std::move(th));
  }
  out.b0_frame = out.hops.back().box_frame;
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct StepMetrics {
  int epoch = 0;
  int step = 0;
  ContextMode mode = ContextMode::None;
  double loss = 0, loss_cls = 0, loss_l1 = 0, loss_giou = 0, loss_noise = 0;
  int degenerate_boxes = 0;
  int invisible_targets = 0;
  bool skipped = false;
};

template <typename S>
class Trainer {
 public:
  Trainer(TrackModel<S>& model, TrainSchedule sched, CropConfig crop_cfg,
          TrainVariant variant, std::uint64_t seed, int threads = 1)
      : model_(model),
        sched_(std::move(sched)),
        crop_cfg_(crop_cfg),
        variant_(variant),
        seed_(seed),
        threads_(std::max(1, threads)) {
    sched_.validate();
    opt_.weight_decay = sched_.weight_decay;
    opt_.group_lr = {sched_.lr_backbone, sched_.lr_rest};
  }

  nn::AdamW<S>& optimizer() { return opt_; }
  const TrainSchedule& schedule() const { return sched_; }

  void apply_lr_for_epoch(int epoch) {
    const double f = epoch >= sched_.lr_decay_epoch ? sched_.lr_decay_factor : 1.0;
    opt_.group_lr = {sched_.lr_backbone * f, sched_.lr_rest * f};
  }

  ContextMode mode_for_epoch(int epoch) const {
    return effective_mode(variant_, dca::select_mode(epoch, sched_.dca));
  }

  StepMetrics train_step(const std::vector<TrainSample>& batch, int epoch,
                         int step) {
    const ContextMode mode = mode_for_epoch(epoch);
    const int B = static_cast<int>(batch.size());

    struct SampleState {
      std::unique_ptr<ad::Graph<S>> graph;
      std::unique_ptr<ModelCore<S>> core;
      ForwardResult<ModelCore<S>> fwd;
      BackwardResult<ModelCore<S>> bwd;
      LossNodes<S> loss{};
      int noise_loss_node = -1;
      bool visible = true;
      bool finite = true;
      double v_total = 0, v_cls = 0, v_l1 = 0, v_giou = 0, v_noise = 0;
      int degenerate = 0;
    };
    std::vector<SampleState> states(static_cast<std::size_t>(B));

    auto phase1 = [&](int b) {
      auto& st = states[static_cast<std::size_t>(b)];
      st.graph = std::make_unique<ad::Graph<S>>();
      st.core = std::make_unique<ModelCore<S>>(*st.graph, model_, variant_,
                                               sched_.dca.token_length,
                                               sched_.dca.noise_exclude_topk);
      Rng rng(derive_seed({seed_, static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(step),
                           static_cast<std::uint64_t>(b), 0x747261636bull}));
      st.fwd = forward_track(*st.core, batch[static_cast<std::size_t>(b)], mode,
                             model_.cfg, crop_cfg_, rng);
      st.bwd = backward_track(*st.core, st.fwd, batch[static_cast<std::size_t>(b)],
                              mode, model_.cfg, crop_cfg_,
                              sched_.backward_steps, rng);
      st.degenerate = st.fwd.degenerate_clamps + st.bwd.degenerate_clamps;
    };
    run_parallel(B, phase1);

    // Snapshot donor features serially: phase 2 grows each sample's graph
    // concurrently, which may reallocate node storage under a reader.
    std::vector<ad::Mat<S>> donor_fx;
    if (mode == ContextMode::Noise && B > 1) {
      donor_fx.resize(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) {
        const auto& st = states[static_cast<std::size_t>(b)];
        donor_fx[static_cast<std::size_t>(b)] =
            st.graph->value(st.bwd.hops.back().hop.enc.f_x);
      }
    }

    auto phase2 = [&](int b) {
      auto& st = states[static_cast<std::size_t>(b)];
      auto& g = *st.graph;
      const auto& final_hop = st.bwd.hops.back();
      const BBox gt0 = guarded_gt(batch[static_cast<std::size_t>(b)].y0, 0);
      const BBox gt_crop = map_box(gt0, final_hop.transform, MapDirection::ToCrop);
      const auto clip = clip_to_crop(gt_crop);
      if (clip.visible_fraction < kMinVisibleFraction) {
        st.visible = false;
        return;
      }
      const int fr = model_.cfg.feat_res();
      const auto target = splat_target<S>(clip.box, fr, fr);
      st.loss = total_loss_node(g, final_hop.hop.maps, final_hop.hop.dec.nodes,
                                clip.box, target, loss_weights_);
      int total = st.loss.total;
      if (mode == ContextMode::Noise) {
        // perturbation tokens come from another sequence in the batch;
        // with a single sample, fall back to a time-shifted frame of the
        // same sequence (the first forward hop)
        Rng nrng(derive_seed({seed_, static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(step),
                              static_cast<std::uint64_t>(b), 0x6e6f697365ull}));
        int donor_node;
        if (B > 1) {
          donor_node = g.constant(donor_fx[static_cast<std::size_t>((b + 1) % B)]);
        } else {
          donor_node = st.fwd.hops.front().hop.enc.f_x;
        }
        auto noise = dca::sample_noise(g, donor_node, sched_.dca.token_length, nrng);
        const auto aux_maps = dca::noise_decode(
            g, model_.params, model_.noise_block, model_.heads_noise,
            final_hop.hop.enc.f_x, noise, fr, fr, model_.head_tables);
        const auto aux_dec = decode_box_nodes(g, aux_maps);
        const auto aux_loss = total_loss_node(g, aux_maps, aux_dec.nodes,
                                              clip.box, target, loss_weights_);
        st.noise_loss_node = aux_loss.total;
        st.v_noise = static_cast<double>(g.value(aux_loss.total)(0, 0));
        total = g.add(total, g.scale(aux_loss.total,
                                     S(sched_.dca.noise_loss_weight)));
      }
      st.v_total = static_cast<double>(g.value(total)(0, 0));
      st.v_cls = static_cast<double>(g.value(st.loss.focal)(0, 0));
      st.v_l1 = static_cast<double>(g.value(st.loss.l1)(0, 0));
      st.v_giou = static_cast<double>(g.value(st.loss.giou)(0, 0));
      st.finite = std::isfinite(st.v_total);
      if (st.finite) g.backward(total);
    };
    run_parallel(B, phase2);

    StepMetrics m;
    m.epoch = epoch;
    m.step = step;
    m.mode = mode;
    int visible = 0;
    for (const auto& st : states) {
      m.degenerate_boxes += st.degenerate;
      if (!st.visible) {
        ++m.invisible_targets;
        continue;
      }
      if (!st.finite) m.skipped = true;
      ++visible;
      m.loss += st.v_total;
      m.loss_cls += st.v_cls;
      m.loss_l1 += st.v_l1;
      m.loss_giou += st.v_giou;
      m.loss_noise += st.v_noise;
    }
    if (visible > 0) {
      m.loss /= visible;
      m.loss_cls /= visible;
      m.loss_l1 /= visible;
      m.loss_giou /= visible;
      m.loss_noise /= visible;
    }
    if (m.skipped || visible == 0) return m;  // abort step, keep parameters

    model_.params.zero_grads();
    for (auto& st : states) {
      if (!st.visible) continue;
      nn::accumulate_param_grads(*st.graph, model_.params,
                                 S(1.0 / static_cast<double>(visible)));
    }
    opt_.step(model_.params);
    return m;
  }

 private:
  template <class Fn>
  void run_parallel(int n, Fn&& fn) {
    const int workers = std::min(threads_, n);
    if (workers <= 1) {
      for (int i = 0; i < n; ++i) fn(i);
      return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  TrackModel<S>& model_;
  TrainSchedule sched_;
  CropConfig crop_cfg_;
  TrainVariant variant_;
  std::uint64_t seed_;
  int threads_;
  nn::AdamW<S> opt_;
  LossWeights loss_weights_{};

 public:
  LossWeights& loss_weights() { return loss_weights_; }
};

// Full training loop: epoch-scheduled mode switch, learning-rate decay,
// per-epoch checkpoints, JSONL step log via `log_sink`.
struct TrainOutcome {
  int epochs_run = 0;
  long steps_run = 0;
  StepMetrics last;
};

template <typename S>
TrainOutcome train(TrackModel<S>& model, const std::vector<FrameSequence>& data,
                   const TrainSchedule& sched, CropConfig crop_cfg,
                   TrainVariant variant, std::uint64_t seed,
                   const std::function<void(const StepMetrics&)>& log_sink,
                   const std::function<void(int /*epoch*/)>& checkpoint_sink,
                   int start_epoch = 0, int threads = 1,
                   LossWeights weights = {}) {
  sched.validate();
  Trainer<S> trainer(model, sched, crop_cfg, variant, seed, threads);
  trainer.loss_weights() = weights;
  trainer.optimizer().step_count =
      static_cast<long>(start_epoch) * sched.steps_per_epoch;

  TrainOutcome out;
  for (int epoch = start_epoch; epoch < sched.total_epochs; ++epoch) {
    trainer.apply_lr_for_epoch(epoch);
    for (int step = 0; step < sched.steps_per_epoch; ++step) {
      Rng batch_rng(derive_seed({seed, static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(step),
                                 0x6261746368ull}));
      auto batch = sample_training_batch(data, sched.batch_size,
                                         sched.forward_length, batch_rng);
      StepMetrics m = trainer.train_step(batch.samples, epoch, step);
      if (log_sink) log_sink(m);
      ++out.steps_run;
      out.last = m;
    }
    if (checkpoint_sink) checkpoint_sink(epoch);
    ++out.epochs_run;
  }
  return out;
}

}  // namespace cycletrack
