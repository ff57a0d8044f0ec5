// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/cycle.hpp"
#include "cycletrack/data.hpp"
#include "cycletrack/model.hpp"

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace cycletrack {

struct TrackResult {
  std::string sequence_id;
  std::vector<BBox> boxes;            // one per frame beyond the first
  std::vector<double> frame_seconds;  // wall time per tracked frame
  double seconds = 0.0;               // total wall time
  int degenerate_clamps = 0;
};

// One-pass inference: template cropped once from frame 0, then each frame is
// tracked around the previous prediction with no context tokens and no
// re-detection. The DCA path is never touched here.
template <typename S>
TrackResult track(const TrackModel<S>& model, const FrameSequence& seq,
                  const CropConfig& cc) {
  TrackResult out;
  out.sequence_id = seq.id;
  if (seq.length() <= 1) return out;

  const auto t0 = std::chrono::steady_clock::now();

  // template token values are fixed for the whole sequence
  ad::Mat<S> z_values;
  {
    ad::Graph<S> g;
    const auto zc = crop(seq.frames[0], seq.first_annotation,
                         cc.template_factor, model.cfg.template_res);
    const int zp = image_input(g, zc.image, model.pix_mean, model.pix_std);
    z_values = g.value(model.encoder.patch_embed(
        g, model.params, zp, Encoder<S>::PatchKind::Template));
  }

  BBox prev = seq.first_annotation;
  const int fr = model.cfg.feat_res();
  auto frame_start = std::chrono::steady_clock::now();
  for (int i = 1; i < seq.length(); ++i) {
    ad::Graph<S> g;
    const auto cres = crop(seq.frames[static_cast<std::size_t>(i)], prev,
                           cc.search_factor, model.cfg.search_res);
    const int xp = image_input(g, cres.image, model.pix_mean, model.pix_std);
    const int x_tokens = model.encoder.patch_embed(
        g, model.params, xp, Encoder<S>::PatchKind::Search);
    const auto enc = model.encoder.encode(g, model.params,
                                          g.constant(z_values), x_tokens);
    const auto maps = predict(g, model.params, model.heads_main, enc.f_x, fr,
                              fr, model.head_tables);
    const auto dec = decode_box(maps_values(g, maps));
    const BBox frame_box = map_box(dec.box, cres.transform, MapDirection::ToFrame);
    prev = clamp_degenerate(frame_box, &out.degenerate_clamps);
    out.boxes.push_back(prev);
    const auto now = std::chrono::steady_clock::now();
    out.frame_seconds.push_back(
        std::chrono::duration<double>(now - frame_start).count());
    frame_start = now;
  }
  out.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

// Ground-truth playback; exercises the metric pipeline end to end.
TrackResult track_oracle(const FrameSequence& seq);

// ---- one-pass evaluation metrics ----

// Success curve over 101 overlap thresholds {0, 0.01, .., 1.0}: fraction of
// frames with IoU >= tau. AUC is its mean.
std::vector<double> success_curve(const std::vector<BBox>& results,
                                  const std::vector<BBox>& gt);
double success_auc(const std::vector<BBox>& results, const std::vector<BBox>& gt);

// Fraction of frames whose center error is within threshold_px.
double precision(const std::vector<BBox>& results, const std::vector<BBox>& gt,
                 double threshold_px = 20.0);
// 51 thresholds {0, 1, .., 50} px.
std::vector<double> precision_curve(const std::vector<BBox>& results,
                                    const std::vector<BBox>& gt);

// Center error normalized per-axis by the ground-truth box size, swept over
// 51 thresholds {0, 0.01, .., 0.5}; the score is the curve mean.
std::vector<double> norm_precision_curve(const std::vector<BBox>& results,
                                         const std::vector<BBox>& gt);
double norm_precision(const std::vector<BBox>& results,
                      const std::vector<BBox>& gt);

double mean_iou(const std::vector<BBox>& results, const std::vector<BBox>& gt);

struct SequenceMetrics {
  std::string id;
  int frames = 0;
  double auc = 0, precision = 0, norm_precision = 0, mean_iou = 0;
  std::vector<std::string> attributes;
};

struct MetricsReport {
  double auc = 0, precision = 0, norm_precision = 0, mean_iou = 0, fps = 0;
  std::vector<double> success = std::vector<double>(101, 0.0);
  std::vector<double> precision_c = std::vector<double>(51, 0.0);
  std::vector<double> norm_precision_c = std::vector<double>(51, 0.0);
  std::vector<SequenceMetrics> per_sequence;
  std::map<std::string, SequenceMetrics> per_attribute;  // id = attribute
};

// Per-sequence metrics averaged with equal sequence weight (OTB one-pass
// convention). Sequences must carry full annotations.
MetricsReport evaluate_results(const std::vector<FrameSequence>& seqs,
                               const std::vector<TrackResult>& results);

void write_metrics_json(const MetricsReport& report, const std::string& path);
void write_result_file(const FrameSequence& seq, const TrackResult& result,
                       const std::string& path);

}  // namespace cycletrack
