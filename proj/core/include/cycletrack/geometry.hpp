// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/image.hpp"

#include <utility>

namespace cycletrack {

enum class BoxSpace { FramePixels, CropNormalized };

// Axis-aligned box, center-size parameterization. The space tag says whether
// coordinates are frame pixels or fractions of a crop window.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  BoxSpace space = BoxSpace::FramePixels;

  double x0() const { return cx - w / 2.0; }
  double y0() const { return cy - h / 2.0; }
  double x1() const { return cx + w / 2.0; }
  double y1() const { return cy + h / 2.0; }
  double area() const { return w * h; }

  static BBox from_corner(double x, double y, double w, double h,
                          BoxSpace space = BoxSpace::FramePixels) {
    return BBox{x + w / 2.0, y + h / 2.0, w, h, space};
  }
};

// Intersection over union in [0, 1]; 0 for disjoint boxes.
// Throws ConfigError if the boxes are in different spaces.
double iou(const BBox& a, const BBox& b);

// Generalized IoU in (-1, 1]: iou - (hull - union)/hull.
// Throws ConfigError on space mismatch or zero-area boxes.
double giou(const BBox& a, const BBox& b);

// Center distance in the boxes' common space.
double center_distance(const BBox& a, const BBox& b);

// Square crop window: side pixels of the source frame centered on
// (src_cx, src_cy), resampled to out_res x out_res.
struct CropTransform {
  double src_cx = 0.0;
  double src_cy = 0.0;
  double side = 0.0;
  int out_res = 0;

  double scale() const { return out_res / side; }
  double x0() const { return src_cx - side / 2.0; }
  double y0() const { return src_cy - side / 2.0; }

  // frame pixel coords -> crop pixel coords and back (exact inverse pair)
  std::pair<double, double> to_crop_px(double fx, double fy) const {
    return {(fx - x0()) * scale(), (fy - y0()) * scale()};
  }
  std::pair<double, double> to_frame_px(double cx_, double cy_) const {
    return {cx_ / scale() + x0(), cy_ / scale() + y0()};
  }
};

struct CropResult {
  FloatImage image;
  CropTransform transform;
};

// Crops a square region of side search_factor * sqrt(w*h) centered on `box`,
// bilinearly resampled to out_res. Source taps outside the frame read the
// per-channel frame mean. Throws ConfigError for non-positive box dimensions
// or search_factor <= 1.
CropResult crop(const Image& frame, const BBox& box, double search_factor,
                int out_res);

enum class MapDirection { ToCrop, ToFrame };

// Affine box mapping between frame pixels and crop-normalized ([0,1]) space.
// Throws ConfigError if the box space does not match the direction.
BBox map_box(const BBox& box, const CropTransform& t, MapDirection dir);

// Same mapping in crop-pixel units (frame pixels <-> crop pixels).
BBox map_box_px(const BBox& box, const CropTransform& t, MapDirection dir);

// Intersects a crop-normalized box with [0,1]^2. Returns the clipped box and
// the surviving area fraction; fraction 0 means fully outside.
struct ClipResult {
  BBox box;
  double visible_fraction = 0.0;
};
ClipResult clip_to_crop(const BBox& box);

// Visibility threshold below which a clipped target is excluded from losses.
inline constexpr double kMinVisibleFraction = 0.10;

}  // namespace cycletrack
