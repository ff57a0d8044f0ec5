// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace cycletrack {

// Rasterizes a [0,1]-valued curve (evenly spaced in x) to a PNG line plot
// with a light grid. Good enough for success/precision plots.
void plot_curve_png(const std::string& path, const std::vector<double>& ys,
                    double x_min, double x_max);

}  // namespace cycletrack
