// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/image.hpp"

#include <string>

namespace cycletrack {

// 8-bit RGB PNG round-trip via libpng. Throws DataError on unreadable or
// unwritable files.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

}  // namespace cycletrack
