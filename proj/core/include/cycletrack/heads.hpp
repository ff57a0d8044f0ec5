// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/geometry.hpp"
#include "cycletrack/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cycletrack {

struct LossWeights {
  double lambda1 = 5.0;  // L1
  double lambda2 = 2.0;  // GIoU
};

// 3x3 same-padding im2col table over an H x W grid with C channels;
// out-of-grid taps index -1 (zero padding).
inline std::shared_ptr<const ad::IdxMat> make_conv3x3_index(int h, int w,
                                                            int c) {
  ad::IdxMat idx(h * w, 9 * c);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const int row = r * w + col;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int rr = r + dy, cc = col + dx;
          const int k = (dy + 1) * 3 + (dx + 1);
          for (int ch = 0; ch < c; ++ch) {
            idx(row, k * c + ch) =
                (rr < 0 || cc < 0 || rr >= h || cc >= w) ? -1
                                                         : (rr * w + cc) * c + ch;
          }
        }
      }
    }
  }
  return std::make_shared<const ad::IdxMat>(std::move(idx));
}

// conv3x3 -> relu -> conv3x3 -> relu -> conv1x1 -> sigmoid
template <typename S>
struct HeadStackP {
  nn::LinearP<S> conv1, conv2, conv3;
  int mid1 = 0, mid2 = 0;

  static HeadStackP create(nn::ParamStore<S>& ps, const std::string& name,
                           int in_dim, int out_ch, Rng& rng,
                           double final_bias = 0.0) {
    HeadStackP p;
    p.mid1 = std::max(8, in_dim / 2);
    p.mid2 = std::max(8, in_dim / 4);
    p.conv1 = nn::LinearP<S>::create(ps, name + ".conv1", 9 * in_dim, p.mid1,
                                     nn::kGroupRest, rng);
    p.conv2 = nn::LinearP<S>::create(ps, name + ".conv2", 9 * p.mid1, p.mid2,
                                     nn::kGroupRest, rng);
    p.conv3 = nn::LinearP<S>::create(ps, name + ".conv3", p.mid2, out_ch,
                                     nn::kGroupRest, rng);
    ps[p.conv3.b].value.setConstant(S(final_bias));
    return p;
  }
};

template <typename S>
struct HeadsP {
  HeadStackP<S> cls, offset, size;

  static HeadsP create(nn::ParamStore<S>& ps, const std::string& name,
                       int in_dim, Rng& rng) {
    HeadsP p;
    // cls bias starts low so the initial map is a flat ~0.1 prior
    p.cls = HeadStackP<S>::create(ps, name + ".cls", in_dim, 1, rng,
                                  -std::log(9.0));
    p.offset = HeadStackP<S>::create(ps, name + ".offset", in_dim, 2, rng);
    p.size = HeadStackP<S>::create(ps, name + ".size", in_dim, 2, rng);
    return p;
  }
};

// Node handles of the three prediction maps over the H x W feature grid,
// each stored as an (H*W) x channels matrix in row-major cell order.
template <typename S>
struct MapsNodes {
  int cls = -1;     // (H*W) x 1, sigmoid
  int offset = -1;  // (H*W) x 2, sigmoid
  int size = -1;    // (H*W) x 2, sigmoid
  int h = 0, w = 0;
};

// Plain-value counterpart used by inference and oracles.
struct PredictionMaps {
  Eigen::MatrixXd cls;     // (H*W) x 1
  Eigen::MatrixXd offset;  // (H*W) x 2
  Eigen::MatrixXd size;    // (H*W) x 2
  int h = 0, w = 0;
};

template <typename S>
PredictionMaps maps_values(const ad::Graph<S>& g, const MapsNodes<S>& m) {
  PredictionMaps out;
  out.cls = g.value(m.cls).template cast<double>();
  out.offset = g.value(m.offset).template cast<double>();
  out.size = g.value(m.size).template cast<double>();
  out.h = m.h;
  out.w = m.w;
  return out;
}

// Shared conv tables for one head resolution (they depend on channel counts).
template <typename S>
struct HeadIndexTables {
  std::shared_ptr<const ad::IdxMat> in, mid;
  static HeadIndexTables create(int h, int w, int in_dim, int mid1) {
    return {make_conv3x3_index(h, w, in_dim), make_conv3x3_index(h, w, mid1)};
  }
};

template <typename S>
int head_stack_apply(ad::Graph<S>& g, const nn::ParamStore<S>& ps,
                     const HeadStackP<S>& st, int grid,
                     const HeadIndexTables<S>& tables) {
  int x = g.relu(st.conv1.apply(g, ps, g.gather_fixed(grid, tables.in)));
  x = g.relu(st.conv2.apply(g, ps, g.gather_fixed(x, tables.mid)));
  return g.sigmoid(st.conv3.apply(g, ps, x));
}

// Reshapes search tokens to the feature grid and runs the three stacks.
template <typename S>
MapsNodes<S> predict(ad::Graph<S>& g, const nn::ParamStore<S>& ps,
                     const HeadsP<S>& heads, int f_x, int h, int w,
                     const HeadIndexTables<S>& tables) {
  if (g.rows(f_x) != h * w)
    throw std::invalid_argument("predict: token count != grid size");
  MapsNodes<S> out;
  out.cls = head_stack_apply(g, ps, heads.cls, f_x, tables);
  out.offset = head_stack_apply(g, ps, heads.offset, f_x, tables);
  out.size = head_stack_apply(g, ps, heads.size, f_x, tables);
  out.h = h;
  out.w = w;
  return out;
}

// Peak cell of a score column: strict argmax, ties to the smallest
// row-major index.
inline int argmax_cell(const Eigen::MatrixXd& cls) {
  int best = 0;
  for (int i = 1; i < cls.rows(); ++i)
    if (cls(i, 0) > cls(best, 0)) best = i;
  return best;
}

struct DecodedBoxValue {
  BBox box;      // crop-normalized
  int peak = 0;  // row-major cell index
};

inline DecodedBoxValue decode_box(const PredictionMaps& m) {
  DecodedBoxValue d;
  d.peak = argmax_cell(m.cls);
  const int r = d.peak / m.w, c = d.peak % m.w;
  d.box = BBox{(c + m.offset(d.peak, 0)) / m.w, (r + m.offset(d.peak, 1)) / m.h,
               m.size(d.peak, 0), m.size(d.peak, 1), BoxSpace::CropNormalized};
  return d;
}

// Box as four scalar nodes (crop-normalized center-size).
template <typename S>
struct BoxNodes {
  int cx = -1, cy = -1, w = -1, h = -1;
};

template <typename S>
BoxNodes<S> box_constant(ad::Graph<S>& g, const BBox& b) {
  return {g.scalar(S(b.cx)), g.scalar(S(b.cy)), g.scalar(S(b.w)),
          g.scalar(S(b.h))};
}

template <typename S>
struct DecodedBoxNodes {
  BoxNodes<S> nodes;
  DecodedBoxValue value;
};

// Differentiable decode at the (argmax-selected, non-differentiable) peak
// cell: gradients flow into offset and size at that cell only.
template <typename S>
DecodedBoxNodes<S> decode_box_nodes(ad::Graph<S>& g, const MapsNodes<S>& m) {
  DecodedBoxNodes<S> out;
  out.value = decode_box(maps_values(g, m));
  const int peak = out.value.peak;
  const int r = peak / m.w, c = peak % m.w;
  const int off_row = g.gather_rows(m.offset, {peak});  // 1x2
  const int size_row = g.gather_rows(m.size, {peak});   // 1x2
  out.nodes.cx =
      g.scale(g.add_scalar(g.slice_cols(off_row, 0, 1), S(c)), S(1.0 / m.w));
  out.nodes.cy =
      g.scale(g.add_scalar(g.slice_cols(off_row, 1, 1), S(r)), S(1.0 / m.h));
  out.nodes.w = g.slice_cols(size_row, 0, 1);
  out.nodes.h = g.slice_cols(size_row, 1, 1);
  return out;
}

// GIoU built from graph ops; boxes must have positive width/height values.
template <typename S>
int giou_node(ad::Graph<S>& g, const BoxNodes<S>& a, const BoxNodes<S>& b) {
  auto corners = [&](const BoxNodes<S>& bx) {
    const int hw = g.scale(bx.w, S(0.5));
    const int hh = g.scale(bx.h, S(0.5));
    return std::array<int, 4>{g.sub(bx.cx, hw), g.sub(bx.cy, hh),
                              g.add(bx.cx, hw), g.add(bx.cy, hh)};
  };
  const auto ca = corners(a), cb = corners(b);
  const int iw = g.clamp_min(
      g.sub(g.minimum(ca[2], cb[2]), g.maximum(ca[0], cb[0])), S(0));
  const int ih = g.clamp_min(
      g.sub(g.minimum(ca[3], cb[3]), g.maximum(ca[1], cb[1])), S(0));
  const int inter = g.mul(iw, ih);
  const int area_a = g.mul(a.w, a.h);
  const int area_b = g.mul(b.w, b.h);
  const int uni = g.sub(g.add(area_a, area_b), inter);
  const int hull_w = g.sub(g.maximum(ca[2], cb[2]), g.minimum(ca[0], cb[0]));
  const int hull_h = g.sub(g.maximum(ca[3], cb[3]), g.minimum(ca[1], cb[1]));
  const int hull = g.mul(hull_w, hull_h);
  return g.sub(g.divide(inter, uni), g.divide(g.sub(hull, uni), hull));
}

// mean absolute error over the four box parameters
template <typename S>
int l1_box_node(ad::Graph<S>& g, const BoxNodes<S>& a, const BoxNodes<S>& b) {
  const int d = g.concat_cols({g.sub(a.cx, b.cx), g.sub(a.cy, b.cy),
                               g.sub(a.w, b.w), g.sub(a.h, b.h)});
  return g.mean(g.abs(d));
}

// Unit-peak Gaussian splat (sigma in grid cells) centered at the cell
// containing the target center. Exactly one cell holds value 1.
template <typename S>
ad::Mat<S> splat_target(const BBox& gt_crop_norm, int h, int w,
                        double sigma = 1.0) {
  const int pc = std::clamp(static_cast<int>(std::floor(gt_crop_norm.cx * w)),
                            0, w - 1);
  const int pr = std::clamp(static_cast<int>(std::floor(gt_crop_norm.cy * h)),
                            0, h - 1);
  ad::Mat<S> t(h * w, 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double d2 = double(r - pr) * (r - pr) + double(c - pc) * (c - pc);
      t(r * w + c, 0) = static_cast<S>(std::exp(-d2 / (2.0 * sigma * sigma)));
    }
  }
  return t;
}

// Penalty-reduced focal loss over a dense map: positives are the cells where
// target == 1; other cells are weighted down by (1-t)^beta.
template <typename S>
int focal_loss_node(ad::Graph<S>& g, int cls, int target, double alpha = 2.0,
                    double beta = 4.0) {
  const ad::Mat<S>& t = g.value(target);
  if (g.rows(cls) != t.rows() || g.cols(cls) != 1 || t.cols() != 1)
    throw std::invalid_argument("focal_loss: map shape mismatch");
  ad::Mat<S> pos = (t.array() == S(1)).template cast<S>().matrix();
  const double n_pos = static_cast<double>(pos.sum());
  if (n_pos == 0.0)
    throw std::invalid_argument("focal_loss: target has no positive cell");
  ad::Mat<S> neg_w =
      ((S(1) - t.array()).pow(S(beta)) * (S(1) - pos.array())).matrix();

  const S eps = std::numeric_limits<S>::epsilon() * S(8);
  const int p = g.clamp_max(g.clamp_min(cls, eps), S(1) - eps);
  const int one_minus_p = g.add_scalar(g.neg(p), S(1));
  const int pos_term = g.mul(g.constant(pos),
                             g.mul(g.pow_const(one_minus_p, S(alpha)), g.log(p)));
  const int neg_term = g.mul(g.constant(neg_w),
                             g.mul(g.pow_const(p, S(alpha)), g.log(one_minus_p)));
  return g.scale(g.sum(g.add(pos_term, neg_term)), S(-1.0 / n_pos));
}

template <typename S>
struct LossNodes {
  int total = -1;
  int focal = -1;
  int l1 = -1;
  int giou = -1;  // the (1 - giou) term, unweighted
};

// focal + lambda1 * L1 + lambda2 * (1 - GIoU)
template <typename S>
LossNodes<S> total_loss_node(ad::Graph<S>& g, const MapsNodes<S>& maps,
                             const BoxNodes<S>& pred_box, const BBox& gt_box,
                             const ad::Mat<S>& target,
                             const LossWeights& weights) {
  LossNodes<S> out;
  out.focal = focal_loss_node(g, maps.cls, g.constant(target));
  const BoxNodes<S> gt = box_constant(g, gt_box);
  out.l1 = l1_box_node(g, pred_box, gt);
  out.giou = g.sub(g.scalar(S(1)), giou_node(g, pred_box, gt));
  out.total = g.add(out.focal, g.add(g.scale(out.l1, S(weights.lambda1)),
                                     g.scale(out.giou, S(weights.lambda2))));
  return out;
}

}  // namespace cycletrack
