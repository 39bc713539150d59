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

#include "slidecarver/fesi.hpp"

#include <algorithm>
#include <cmath>

namespace slidecarver {

void FesiParams::validate() const {
  auto odd = [](int k) { return k >= 1 && k % 2 == 1; };
  if (!odd(gauss_ksize) || !odd(median_ksize) || !odd(morph_diameter)) {
    throw UsageError("FESI kernel sizes must be odd");
  }
  if (!(gauss_sigma > 0.0) || !(seed_value_threshold > 0.0) ||
      !(seed_distance_threshold > 0.0) || morph_iterations < 0 || !(level_spacing > 0.0)) {
    throw UsageError("FESI thresholds must be positive");
  }
}

BinaryMask fill_holes_from_remote_background(const BinaryMask& m) {
  if (m.size() == 0) return m;
  const GrayImage dist = distance_transform(invert(m));
  const auto best = std::max_element(dist.values().begin(), dist.values().end());
  const auto idx = static_cast<std::size_t>(best - dist.values().begin());
  const int sx = static_cast<int>(idx % m.width());
  const int sy = static_cast<int>(idx / m.width());
  // No background anywhere: nothing to fill from.
  if (m(sx, sy) != 0) return m;
  const BinaryMask background = flood_fill(m, sx, sy);
  return invert(background);
}

BinaryMask fesi_refine(const BinaryMask& m, const FesiParams& params) {
  params.validate();
  const GrayImage dist = distance_transform(m);
  const Components comps = connected_components(m);

  struct Seed {
    double value = -1.0;
    std::size_t index = 0;  // row-major position of the maximum
  };
  std::vector<Seed> seeds(comps.count + 1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const int label = comps.labels[i];
    if (label == 0) continue;
    // Strict > keeps the first (row-major) maximum within the component.
    if (dist[i] > seeds[label].value) seeds[label] = {dist[i], i};
  }
  std::vector<int> order(comps.count);
  for (int i = 0; i < comps.count; ++i) order[i] = i + 1;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (seeds[a].value != seeds[b].value) return seeds[a].value > seeds[b].value;
    return seeds[a].index < seeds[b].index;
  });

  const int w = m.width();
  std::vector<char> keep(comps.count + 1, 0);
  std::vector<std::pair<double, double>> accepted;
  for (int label : order) {
    const Seed& s = seeds[label];
    const double sx = static_cast<double>(s.index % w);
    const double sy = static_cast<double>(s.index / w);
    bool ok = s.value > params.seed_value_threshold;
    for (std::size_t i = 0; !ok && i < accepted.size(); ++i) {
      const double dx = sx - accepted[i].first, dy = sy - accepted[i].second;
      ok = std::sqrt(dx * dx + dy * dy) < params.seed_distance_threshold;
    }
    if (ok) {
      keep[label] = 1;
      accepted.emplace_back(sx, sy);
    }
  }

  BinaryMask out(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = keep[comps.labels[i]] ? 1 : 0;
  return out;
}

BinaryMask fesi_segment_image(const RgbImage& image, const FesiParams& params) {
  params.validate();
  GrayImage g = to_grayscale(image);
  g = laplacian_abs(g);
  g = gaussian_blur(g, params.gauss_ksize, params.gauss_sigma);
  BinaryMask mask = mean_threshold(g);
  mask = median_filter(mask, params.median_ksize);
  mask = opening(mask, params.morph_diameter, params.morph_iterations);
  mask = fill_holes_from_remote_background(mask);
  return fesi_refine(mask, params);
}

BinaryMask fesi_segment(const PyramidImage& pyramid, const FesiParams& params) {
  params.validate();
  const std::size_t level = pyramid.require_level(params.level_spacing);
  return fesi_segment_image(pyramid.level(level).pixels, params);
}

}  // namespace slidecarver
