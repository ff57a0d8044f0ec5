// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/plot.hpp"

#include "cycletrack/image.hpp"
#include "cycletrack/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cycletrack {

namespace {

void draw_line(Image& img, int x0, int y0, int x1, int y1,
               const std::array<std::uint8_t, 3>& col) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  while (true) {
    if (x >= 0 && y >= 0 && x < img.width && y < img.height)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
    if (x == x1 && y == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
}

}  // namespace

void plot_curve_png(const std::string& path, const std::vector<double>& ys,
                    double, double) {
  if (ys.size() < 2) throw std::invalid_argument("plot: need >= 2 points");
  const int W = 512, H = 384, margin = 32;
  Image img(W, H, 255);
  const std::array<std::uint8_t, 3> grid{225, 225, 225};
  const std::array<std::uint8_t, 3> axis{40, 40, 40};
  const std::array<std::uint8_t, 3> line{30, 90, 200};

  const int px0 = margin, px1 = W - margin / 2;
  const int py0 = H - margin, py1 = margin / 2;
  // horizontal gridlines every 0.1
  for (int i = 0; i <= 10; ++i) {
    const int y = py0 + static_cast<int>(std::lround((py1 - py0) * (i / 10.0)));
    draw_line(img, px0, y, px1, y, grid);
  }
  // vertical gridlines at quarters
  for (int i = 0; i <= 4; ++i) {
    const int x = px0 + static_cast<int>(std::lround((px1 - px0) * (i / 4.0)));
    draw_line(img, x, py0, x, py1, grid);
  }
  draw_line(img, px0, py0, px1, py0, axis);
  draw_line(img, px0, py0, px0, py1, axis);

  auto to_px = [&](std::size_t i, double v) {
    const double fx = static_cast<double>(i) / (ys.size() - 1);
    const double fy = std::clamp(v, 0.0, 1.0);
    return std::pair<int, int>(
        px0 + static_cast<int>(std::lround((px1 - px0) * fx)),
        py0 + static_cast<int>(std::lround((py1 - py0) * fy)));
  };
  for (std::size_t i = 1; i < ys.size(); ++i) {
    const auto [ax, ay] = to_px(i - 1, ys[i - 1]);
    const auto [bx, by] = to_px(i, ys[i]);
    draw_line(img, ax, ay, bx, by, line);
    draw_line(img, ax, ay + 1, bx, by + 1, line);  // 2px stroke
  }
  write_png(path, img);
}

}  // namespace cycletrack
