// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/eval.hpp"

#include "cycletrack/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

using nlohmann::json;

namespace cycletrack {

namespace {

void check_aligned(const std::vector<BBox>& a, const std::vector<BBox>& b,
                   const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) +
                                ": result/ground-truth length mismatch");
}

double curve_mean(const std::vector<double>& c) {
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

std::string fmt_line(const BBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g", b.x0(), b.y0(),
                b.w, b.h);
  return buf;
}

}  // namespace

TrackResult track_oracle(const FrameSequence& seq) {
  if (!seq.has_full_annotations())
    throw DataError(DataErrorKind::MissingGroundtruth,
                    "oracle playback needs full annotations: " + seq.id);
  TrackResult out;
  out.sequence_id = seq.id;
  for (int i = 1; i < seq.length(); ++i)
    out.boxes.push_back(seq.full_annotations[static_cast<std::size_t>(i)]);
  out.seconds = 1e-9;
  return out;
}

std::vector<double> success_curve(const std::vector<BBox>& results,
                                  const std::vector<BBox>& gt) {
  check_aligned(results, gt, "success_curve");
  std::vector<double> curve(101, 0.0);
  if (results.empty()) return curve;
  std::vector<double> overlaps(results.size());
  for (std::size_t i = 0; i < results.size(); ++i)
    overlaps[i] = iou(results[i], gt[i]);
  for (int t = 0; t <= 100; ++t) {
    const double tau = t / 100.0;
    int hits = 0;
    for (double o : overlaps)
      if (o >= tau) ++hits;
    curve[static_cast<std::size_t>(t)] =
        static_cast<double>(hits) / static_cast<double>(overlaps.size());
  }
  return curve;
}

double success_auc(const std::vector<BBox>& results,
                   const std::vector<BBox>& gt) {
  return curve_mean(success_curve(results, gt));
}

double precision(const std::vector<BBox>& results, const std::vector<BBox>& gt,
                 double threshold_px) {
  check_aligned(results, gt, "precision");
  if (results.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < results.size(); ++i)
    if (center_distance(results[i], gt[i]) <= threshold_px) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<double> precision_curve(const std::vector<BBox>& results,
                                    const std::vector<BBox>& gt) {
  check_aligned(results, gt, "precision_curve");
  std::vector<double> curve(51, 0.0);
  if (results.empty()) return curve;
  for (int t = 0; t <= 50; ++t)
    curve[static_cast<std::size_t>(t)] = precision(results, gt, t);
  return curve;
}

std::vector<double> norm_precision_curve(const std::vector<BBox>& results,
                                         const std::vector<BBox>& gt) {
  check_aligned(results, gt, "norm_precision_curve");
  std::vector<double> curve(51, 0.0);
  if (results.empty()) return curve;
  std::vector<double> err(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double ex = (results[i].cx - gt[i].cx) / std::max(gt[i].w, 1e-12);
    const double ey = (results[i].cy - gt[i].cy) / std::max(gt[i].h, 1e-12);
    err[i] = std::hypot(ex, ey);
  }
  for (int t = 0; t <= 50; ++t) {
    const double tau = t / 100.0;  // sweep [0, 0.5]
    int hits = 0;
    for (double e : err)
      if (e <= tau) ++hits;
    curve[static_cast<std::size_t>(t)] =
        static_cast<double>(hits) / static_cast<double>(err.size());
  }
  return curve;
}

double norm_precision(const std::vector<BBox>& results,
                      const std::vector<BBox>& gt) {
  return curve_mean(norm_precision_curve(results, gt));
}

double mean_iou(const std::vector<BBox>& results, const std::vector<BBox>& gt) {
  check_aligned(results, gt, "mean_iou");
  if (results.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i)
    acc += iou(results[i], gt[i]);
  return acc / static_cast<double>(results.size());
}

MetricsReport evaluate_results(const std::vector<FrameSequence>& seqs,
                               const std::vector<TrackResult>& results) {
  if (seqs.size() != results.size())
    throw std::invalid_argument("evaluate_results: sequence/result count mismatch");
  MetricsReport rep;
  double total_seconds = 0.0;
  long total_frames = 0;
  std::map<std::string, std::vector<std::size_t>> by_attr;

  std::vector<std::vector<double>> succ, prec, nprec;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& seq = seqs[i];
    if (!seq.has_full_annotations())
      throw DataError(DataErrorKind::MissingGroundtruth,
                      "evaluation needs full annotations: " + seq.id);
    std::vector<BBox> gt(seq.full_annotations.begin() + 1,
                         seq.full_annotations.end());
    const auto& res = results[i].boxes;

    SequenceMetrics sm;
    sm.id = seq.id;
    sm.frames = static_cast<int>(res.size());
    sm.attributes = seq.attributes;
    succ.push_back(success_curve(res, gt));
    prec.push_back(precision_curve(res, gt));
    nprec.push_back(norm_precision_curve(res, gt));
    sm.auc = curve_mean(succ.back());
    sm.precision = precision(res, gt);
    sm.norm_precision = curve_mean(nprec.back());
    sm.mean_iou = mean_iou(res, gt);
    rep.per_sequence.push_back(sm);

    for (const auto& a : seq.attributes) by_attr[a].push_back(i);
    total_seconds += results[i].seconds;
    total_frames += sm.frames;
  }

  const auto avg_curves = [&](const std::vector<std::size_t>& idx,
                              const std::vector<std::vector<double>>& curves) {
    std::vector<double> mean(curves.empty() ? 0 : curves[0].size(), 0.0);
    for (std::size_t i : idx)
      for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += curves[i][t];
    for (auto& v : mean) v /= static_cast<double>(idx.size());
    return mean;
  };

  std::vector<std::size_t> all(seqs.size());
  std::iota(all.begin(), all.end(), 0u);
  rep.success = avg_curves(all, succ);
  rep.precision_c = avg_curves(all, prec);
  rep.norm_precision_c = avg_curves(all, nprec);
  rep.auc = curve_mean(rep.success);
  rep.norm_precision = curve_mean(rep.norm_precision_c);
  double psum = 0, misum = 0;
  for (const auto& sm : rep.per_sequence) {
    psum += sm.precision;
    misum += sm.mean_iou;
  }
  rep.precision = psum / static_cast<double>(rep.per_sequence.size());
  rep.mean_iou = misum / static_cast<double>(rep.per_sequence.size());
  rep.fps = total_seconds > 0 ? total_frames / total_seconds : 0.0;

  for (const auto& [attr, idx] : by_attr) {
    SequenceMetrics am;
    am.id = attr;
    am.frames = static_cast<int>(idx.size());  // sequence count for attributes
    am.auc = curve_mean(avg_curves(idx, succ));
    am.norm_precision = curve_mean(avg_curves(idx, nprec));
    double p = 0, mi = 0;
    for (std::size_t i : idx) {
      p += rep.per_sequence[i].precision;
      mi += rep.per_sequence[i].mean_iou;
    }
    am.precision = p / static_cast<double>(idx.size());
    am.mean_iou = mi / static_cast<double>(idx.size());
    rep.per_attribute[attr] = am;
  }
  return rep;
}

void write_metrics_json(const MetricsReport& rep, const std::string& path) {
  json j;
  j["auc"] = rep.auc;
  j["precision"] = rep.precision;
  j["norm_precision"] = rep.norm_precision;
  j["mean_iou"] = rep.mean_iou;
  j["fps"] = rep.fps;
  j["success_curve"] = rep.success;
  j["precision_curve"] = rep.precision_c;
  j["norm_precision_curve"] = rep.norm_precision_c;
  json per_seq = json::array();
  for (const auto& s : rep.per_sequence) {
    per_seq.push_back({{"id", s.id},
                       {"frames", s.frames},
                       {"auc", s.auc},
                       {"precision", s.precision},
                       {"norm_precision", s.norm_precision},
                       {"mean_iou", s.mean_iou},
                       {"attributes", s.attributes}});
  }
  j["per_sequence"] = per_seq;
  json per_attr;
  for (const auto& [attr, s] : rep.per_attribute) {
    per_attr[attr] = {{"sequences", s.frames},
                      {"auc", s.auc},
                      {"precision", s.precision},
                      {"norm_precision", s.norm_precision},
                      {"mean_iou", s.mean_iou}};
  }
  j["per_attribute"] = per_attr;
  std::ofstream out(path);
  if (!out) throw DataError(DataErrorKind::MissingFile, "cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_result_file(const FrameSequence& seq, const TrackResult& result,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataErrorKind::MissingFile, "cannot write " + path);
  // first line is the given first-frame box, then one prediction per frame
  out << fmt_line(seq.first_annotation) << "\n";
  for (const auto& b : result.boxes) out << fmt_line(b) << "\n";
}

}  // namespace cycletrack
