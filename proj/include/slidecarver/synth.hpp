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

/// @file synth.hpp
/// @brief Seeded synthetic slides with exact tissue ground truth.
///
/// Tissue is a set of smooth star-shaped blobs with circular background
/// holes, stained in hematoxylin/eosin-like colors with nuclei and pixel
/// noise on a near-white background. Optional difficulty knobs: weak stain,
/// web-like fatty texture inside tissue, and a bright air-bubble ring lying
/// on the background.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slidecarver/pyramid.hpp"
#include "slidecarver/raster.hpp"

namespace slidecarver {

enum class Artifact { kNone, kBubble };

struct SynthParams {
  std::uint64_t seed = 0;
  int base_size = 2048;
  int n_blobs = 3;
  double stain_strength = 1.0;  // below 0.3 is the weak-stain regime
  double fat_fraction = 0.0;    // share of tissue area drawn as fat web
  double hole_fraction = 0.03;  // share of blob area cut out as holes
  Artifact artifact = Artifact::kNone;
  double noise = 3.0;  // background noise standard deviation, 8-bit units
  double base_spacing = 3.84;
  int levels = 3;
  Rgb empty_color{0, 0, 0};

  /// Throws UsageError. Hole fractions above kMaxHoleFraction cannot be
  /// placed inside a blob without touching its rim.
  void validate() const;

  static constexpr double kMaxHoleFraction = 0.25;
};

/// r(theta) = radius * (1 + sum_k a_k cos(k theta + phase_k)), k = 2, 3, 4.
struct BlobShape {
  double cx = 0;
  double cy = 0;
  double radius = 0;
  std::array<double, 3> amplitude{};
  std::array<double, 3> phase{};

  double radius_at(double theta) const;
  bool contains(double x, double y) const;
  /// Exact area of the star-shaped region: pi R^2 (1 + sum a_k^2 / 2).
  double area() const;
  /// Lower bound of r(theta).
  double min_radius() const;
  double max_radius() const;
};

struct Disc {
  double cx = 0;
  double cy = 0;
  double r = 0;

  bool contains(double x, double y) const {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r;
  }
};

struct SyntheticSlide {
  PyramidImage pyramid;
  BinaryMask gt;  // at level 0
  std::vector<BlobShape> blobs;
  std::vector<Disc> holes;
  std::vector<Disc> bubbles;
  /// Analytic tissue area over image area.
  double target_coverage = 0.0;
};

SyntheticSlide generate_slide(const SynthParams& params);

enum class CorpusMode { kEasy, kHard };

CorpusMode parse_corpus_mode(const std::string& s);
std::string to_string(CorpusMode mode);

/// Per-slide parameters of a corpus. Easy: strong stain, small holes, no
/// fat, no artifacts. Hard: weak stain, fat web, larger holes, bubbles.
SynthParams corpus_params(CorpusMode mode, std::uint64_t slide_seed);

/// Writes `<dir>/slide_<k>/` (pyramid files plus gt.pgm) for k in
/// [0, n_slides) and returns the slide directory names in order.
std::vector<std::string> write_corpus(const std::filesystem::path& dir, int n_slides,
                                      CorpusMode mode, std::uint64_t seed);

/// Saves one slide as a pyramid directory with `gt.pgm` next to the levels.
void save_slide(const SyntheticSlide& slide, const std::filesystem::path& dir);

}  // namespace slidecarver
