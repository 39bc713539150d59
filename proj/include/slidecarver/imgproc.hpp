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

/// @file imgproc.hpp
/// @brief Raster operations used by the classical foreground extractor.
///
/// Conventions shared by every filter here:
///   - borders are replicated for convolution-style filters;
///   - morphology pads with background (0) outside the image;
///   - connectivity is 4-neighbor;
///   - thresholds use strict `>`.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "slidecarver/raster.hpp"

namespace slidecarver {

/// 0.299 R + 0.587 G + 0.114 B, unquantized.
GrayImage to_grayscale(const RgbImage& rgb);

/// |4-neighbor Laplacian| with kernel [[0,1,0],[1,-4,1],[0,1,0]].
GrayImage laplacian_abs(const GrayImage& g);

/// Normalized sampled 1-D Gaussian of odd length `ksize`.
std::vector<double> gaussian_kernel_1d(int ksize, double sigma);

/// Separable Gaussian blur; equals the dense 2-D convolution with the outer
/// product kernel.
GrayImage gaussian_blur(const GrayImage& g, int ksize, double sigma);

/// 1 where value > mean(g).
BinaryMask mean_threshold(const GrayImage& g);

/// Binary median: majority of the ksize x ksize window.
BinaryMask median_filter(const BinaryMask& m, int ksize);

enum class MorphOp { kErode, kDilate };

/// Offsets (dx, dy) of the disc with dx^2 + dy^2 <= (diameter / 2)^2.
std::vector<std::pair<int, int>> disc_element(int diameter);

BinaryMask morph(const BinaryMask& m, MorphOp op, int diameter, int iterations);

/// Erosions followed by the same number of dilations.
BinaryMask opening(const BinaryMask& m, int diameter, int iterations);

/// Exact Euclidean distance from each 1-pixel to the nearest 0-pixel. A mask
/// without any 0-pixel maps every pixel to width + height.
GrayImage distance_transform(const BinaryMask& m);

/// The 4-connected region of pixels equal to m(seed) that contains `seed`,
/// returned as 1s.
BinaryMask flood_fill(const BinaryMask& m, int seed_x, int seed_y);

struct Components {
  LabelImage labels;
  int count = 0;
};

/// 4-connected labeling of 1-pixels. Labels are assigned 1..k in row-major
/// order of each component's first pixel.
Components connected_components(const BinaryMask& m);

BinaryMask invert(const BinaryMask& m);

}  // namespace slidecarver
