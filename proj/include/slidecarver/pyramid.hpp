// Copyright 2026 The SlideCarver Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file pyramid.hpp
/// @brief Multiresolution slide container.
///
/// A pyramid is a list of RGB levels, each at twice the pixel spacing of the
/// previous one, plus a sentinel color marking regions that were never
/// scanned. On disk a pyramid is a directory holding `manifest.txt` and one
/// binary P6 file per level:
///
///     levels <N>
///     empty_color <R> <G> <B>
///     level <i> <width> <height> <spacing_x_um> <spacing_y_um> <file.ppm>
///
/// Pyramids are immutable once constructed; `read_region` may be called from
/// any number of threads.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slidecarver/raster.hpp"

namespace slidecarver {

struct Level {
  RgbImage pixels;
  double spacing_x = 1.0;  // micrometers per pixel
  double spacing_y = 1.0;

  int width() const { return pixels.width(); }
  int height() const { return pixels.height(); }
};

class PyramidImage {
 public:
  PyramidImage() = default;

  /// Validates the level chain; throws DataError on any violated invariant.
  PyramidImage(std::vector<Level> levels, Rgb empty_color);

  std::size_t level_count() const { return levels_.size(); }
  const Level& level(std::size_t i) const;
  const std::vector<Level>& levels() const { return levels_; }
  Rgb empty_color() const { return empty_color_; }

  /// Index of the level whose x spacing equals `spacing_um` to within a
  /// relative 1e-6.
  std::optional<std::size_t> find_level(double spacing_um) const;

  /// Like find_level but throws DataError when no level matches.
  std::size_t require_level(double spacing_um) const;

 private:
  std::vector<Level> levels_;
  Rgb empty_color_{};
};

struct PatchOrigin {
  std::size_t level = 0;
  int x = 0;
  int y = 0;
};

struct Patch {
  RgbImage pixels;
  PatchOrigin origin;
  bool is_empty = false;
};

/// True iff every pixel equals `color`.
bool all_pixels_equal(const RgbImage& img, Rgb color);

PyramidImage load_pyramid(const std::filesystem::path& dir);

/// Writes manifest.txt and level_<i>.ppm into `dir` (created if missing).
void save_pyramid(const PyramidImage& pyramid, const std::filesystem::path& dir);

/// Copies a w x h window of `level` with top-left corner (x, y). Pixels
/// outside the level raster come back as the empty color.
Patch read_region(const PyramidImage& pyramid, std::size_t level, int x, int y,
                  int w, int h);

/// Builds `n_levels` levels from `base` by repeated 2x2 box means with
/// round-half-up. Odd trailing rows and columns are averaged over the
/// available 1x2, 2x1 or 1x1 block, so each level is ceil(previous / 2).
PyramidImage build_pyramid(Level base, int n_levels, Rgb empty_color = {0, 0, 0});

/// One 2x2 box-mean reduction step.
RgbImage downsample_box(const RgbImage& src);

/// Nearest-neighbor resampling of a mask to new extents; target pixel x
/// samples source column floor((x + 0.5) * src_w / dst_w).
BinaryMask resample_nearest(const BinaryMask& src, int width, int height);

}  // namespace slidecarver
