// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/geometry.hpp"

#include "cycletrack/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cycletrack {

namespace {

void check_same_space(const BBox& a, const BBox& b, const char* op) {
  if (a.space != b.space) {
    throw ConfigError(std::string(op) + ": boxes in different coordinate spaces");
  }
}

double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  check_same_space(a, b, "iou");
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const BBox& a, const BBox& b) {
  check_same_space(a, b, "giou");
  if (a.area() <= 0.0 || b.area() <= 0.0) {
    throw ConfigError("giou: zero-area box");
  }
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull_w = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
  const double hull_h = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
  const double hull = hull_w * hull_h;
  return inter / uni - (hull - uni) / hull;
}

double center_distance(const BBox& a, const BBox& b) {
  check_same_space(a, b, "center_distance");
  return std::hypot(a.cx - b.cx, a.cy - b.cy);
}

CropResult crop(const Image& frame, const BBox& box, double search_factor,
                int out_res) {
  if (box.w <= 0.0 || box.h <= 0.0) {
    throw ConfigError("crop: non-positive box dimensions");
  }
  if (search_factor <= 1.0) {
    throw ConfigError("crop: search_factor must be > 1");
  }
  if (out_res <= 0 || frame.empty()) {
    throw ConfigError("crop: invalid output resolution or empty frame");
  }

  CropTransform t;
  t.src_cx = box.cx;
  t.src_cy = box.cy;
  t.side = search_factor * std::sqrt(box.w * box.h);
  t.out_res = out_res;

  const auto mean = frame.channel_mean();
  FloatImage out(out_res, out_res);

  const double step = t.side / out_res;
  const double ox = t.x0();
  const double oy = t.y0();
  // Source tap at pixel-index coordinates; out-of-frame taps read the mean.
  auto tap = [&](int ix, int iy, int c) -> double {
    if (ix < 0 || iy < 0 || ix >= frame.width || iy >= frame.height)
      return mean[c];
    return frame.at(ix, iy, c);
  };

  for (int y = 0; y < out_res; ++y) {
    const double fy = oy + (y + 0.5) * step - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    const double wy = fy - iy;
    for (int x = 0; x < out_res; ++x) {
      const double fx = ox + (x + 0.5) * step - 0.5;
      const int ix = static_cast<int>(std::floor(fx));
      const double wx = fx - ix;
      for (int c = 0; c < 3; ++c) {
        const double v0 = (1.0 - wx) * tap(ix, iy, c) + wx * tap(ix + 1, iy, c);
        const double v1 =
            (1.0 - wx) * tap(ix, iy + 1, c) + wx * tap(ix + 1, iy + 1, c);
        out.at(x, y, c) = static_cast<float>((1.0 - wy) * v0 + wy * v1);
      }
    }
  }
  return {std::move(out), t};
}

BBox map_box(const BBox& box, const CropTransform& t, MapDirection dir) {
  if (dir == MapDirection::ToCrop) {
    if (box.space != BoxSpace::FramePixels) {
      throw ConfigError("map_box(ToCrop): expected frame-pixel box");
    }
    return BBox{(box.cx - t.x0()) / t.side, (box.cy - t.y0()) / t.side,
                box.w / t.side, box.h / t.side, BoxSpace::CropNormalized};
  }
  if (box.space != BoxSpace::CropNormalized) {
    throw ConfigError("map_box(ToFrame): expected crop-normalized box");
  }
  return BBox{box.cx * t.side + t.x0(), box.cy * t.side + t.y0(),
              box.w * t.side, box.h * t.side, BoxSpace::FramePixels};
}

BBox map_box_px(const BBox& box, const CropTransform& t, MapDirection dir) {
  const double s = t.scale();
  if (dir == MapDirection::ToCrop) {
    if (box.space != BoxSpace::FramePixels) {
      throw ConfigError("map_box_px(ToCrop): expected frame-pixel box");
    }
    return BBox{(box.cx - t.x0()) * s, (box.cy - t.y0()) * s, box.w * s,
                box.h * s, BoxSpace::CropNormalized};
  }
  if (box.space != BoxSpace::CropNormalized) {
    throw ConfigError("map_box_px(ToFrame): expected crop-space box");
  }
  return BBox{box.cx / s + t.x0(), box.cy / s + t.y0(), box.w / s, box.h / s,
              BoxSpace::FramePixels};
}

ClipResult clip_to_crop(const BBox& box) {
  const double x0 = std::clamp(box.x0(), 0.0, 1.0);
  const double y0 = std::clamp(box.y0(), 0.0, 1.0);
  const double x1 = std::clamp(box.x1(), 0.0, 1.0);
  const double y1 = std::clamp(box.y1(), 0.0, 1.0);
  ClipResult r;
  r.box = BBox{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0,
               BoxSpace::CropNormalized};
  const double orig = box.area();
  r.visible_fraction = orig > 0.0 ? r.box.area() / orig : 0.0;
  return r;
}

}  // namespace cycletrack
