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

/// @file fesi.hpp
/// @brief Foreground Extraction from Structure Information.
///
/// Tissue is detected as the region of strong local structure: the blurred
/// absolute Laplacian of the gray image is thresholded at its mean, cleaned
/// by a median filter and an opening, hole-filled from the most remote
/// background point, and finally small isolated regions are discarded.

#pragma once

#include "slidecarver/imgproc.hpp"
#include "slidecarver/pyramid.hpp"

namespace slidecarver {

struct FesiParams {
  double level_spacing = 7.68;  // um per pixel of the level to segment
  int gauss_ksize = 15;
  double gauss_sigma = 4.0;
  int median_ksize = 45;
  int morph_diameter = 7;
  int morph_iterations = 5;
  double seed_value_threshold = 100.0;     // pixels
  double seed_distance_threshold = 100.0;  // pixels

  /// Throws UsageError on even kernel sizes or non-positive thresholds.
  void validate() const;
};

/// Runs the full pipeline on the level at `params.level_spacing`.
BinaryMask fesi_segment(const PyramidImage& pyramid, const FesiParams& params = {});

/// Same pipeline on a single RGB raster.
BinaryMask fesi_segment_image(const RgbImage& image, const FesiParams& params = {});

/// Marks every pixel outside the background region that contains the point
/// farthest from tissue as tissue.
BinaryMask fill_holes_from_remote_background(const BinaryMask& m);

/// Region filter: components are visited in decreasing order of their
/// maximal distance-transform value (ties broken by the row-major position
/// of that maximum). A component is kept when its maximum exceeds
/// seed_value_threshold or its maximal point lies closer than
/// seed_distance_threshold to an already accepted maximal point.
BinaryMask fesi_refine(const BinaryMask& m, const FesiParams& params = {});

}  // namespace slidecarver
