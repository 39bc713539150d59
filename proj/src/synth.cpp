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

#include "slidecarver/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "slidecarver/pnm.hpp"
#include "slidecarver/rng.hpp"

namespace slidecarver {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMaxAmplitude = 0.05;  // per harmonic, so r >= 0.85 R

struct Color {
  double r, g, b;
};

constexpr Color kWhite{242, 240, 244};
constexpr Color kEosin{222, 120, 168};
constexpr Color kHematoxylin{110, 60, 150};
constexpr Color kNucleus{60, 30, 110};
constexpr Color kFatInterior{236, 232, 238};
constexpr Color kBubbleInterior{250, 250, 252};
constexpr Color kBubbleRim{150, 150, 165};

Color lerp(Color a, Color b, double t) {
  return {a.r + t * (b.r - a.r), a.g + t * (b.g - a.g), a.b + t * (b.b - a.b)};
}

// Smoothly interpolated lattice noise in [0, 1].
class ValueNoise {
 public:
  ValueNoise(int width, int height, double spacing, Rng& rng)
      : spacing_(spacing),
        gw_(static_cast<int>(width / spacing) + 2),
        gh_(static_cast<int>(height / spacing) + 2) {
    grid_.resize(static_cast<std::size_t>(gw_) * gh_);
    for (auto& v : grid_) v = rng.uniform();
  }

  double at(double x, double y) const {
    const double gx = x / spacing_, gy = y / spacing_;
    const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
    const double fx = smooth(gx - ix), fy = smooth(gy - iy);
    const double a = node(ix, iy), b = node(ix + 1, iy);
    const double c = node(ix, iy + 1), d = node(ix + 1, iy + 1);
    return (a + fx * (b - a)) * (1 - fy) + (c + fx * (d - c)) * fy;
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  double node(int x, int y) const {
    return grid_[static_cast<std::size_t>(std::min(y, gh_ - 1)) * gw_ + std::min(x, gw_ - 1)];
  }

  double spacing_;
  int gw_, gh_;
  std::vector<double> grid_;
};

// Jittered-grid cells; pixels near the bisector of their two nearest sites
// form the membrane of the fat web.
class FatWeb {
 public:
  FatWeb(int width, int height, double spacing, Rng& rng)
      : spacing_(spacing),
        gw_(static_cast<int>(width / spacing) + 1),
        gh_(static_cast<int>(height / spacing) + 1) {
    sites_.resize(static_cast<std::size_t>(gw_) * gh_);
    for (int j = 0; j < gh_; ++j) {
      for (int i = 0; i < gw_; ++i) {
        sites_[static_cast<std::size_t>(j) * gw_ + i] = {(i + rng.uniform(0.1, 0.9)) * spacing,
                                                          (j + rng.uniform(0.1, 0.9)) * spacing};
      }
    }
  }

  bool membrane(double x, double y) const {
    const int ci = static_cast<int>(x / spacing_), cj = static_cast<int>(y / spacing_);
    double d1 = 1e30, d2 = 1e30;
    for (int j = std::max(cj - 1, 0); j <= std::min(cj + 1, gh_ - 1); ++j) {
      for (int i = std::max(ci - 1, 0); i <= std::min(ci + 1, gw_ - 1); ++i) {
        const auto [sx, sy] = sites_[static_cast<std::size_t>(j) * gw_ + i];
        const double d = std::hypot(x - sx, y - sy);
        if (d < d1) {
          d2 = d1;
          d1 = d;
        } else if (d < d2) {
          d2 = d;
        }
      }
    }
    return d2 - d1 < kMembraneWidth;
  }

 private:
  static constexpr double kMembraneWidth = 2.5;
  double spacing_;
  int gw_, gh_;
  std::vector<std::pair<double, double>> sites_;
};

std::uint8_t to_byte(double v) {
  // Scanned pixels stay above 0 so they never collide with a black
  // empty color.
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 1L, 255L));
}

std::vector<BlobShape> place_blobs(const SynthParams& p, Rng& rng) {
  const double size = p.base_size;
  const double margin = 0.04 * size, gap = 0.03 * size;
  std::vector<BlobShape> blobs;
  for (int b = 0; b < p.n_blobs; ++b) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      BlobShape s;
      s.radius = rng.uniform(0.146, 0.186) * size;
      for (int k = 0; k < 3; ++k) {
        s.amplitude[k] = rng.uniform(-kMaxAmplitude, kMaxAmplitude);
        s.phase[k] = rng.uniform(0.0, 2 * kPi);
      }
      const double reach = s.max_radius() + margin;
      if (2 * reach >= size) continue;
      s.cx = rng.uniform(reach, size - reach);
      s.cy = rng.uniform(reach, size - reach);
      const bool clear = std::all_of(blobs.begin(), blobs.end(), [&](const BlobShape& o) {
        return std::hypot(s.cx - o.cx, s.cy - o.cy) >= s.max_radius() + o.max_radius() + gap;
      });
      if (clear) {
        blobs.push_back(s);
        break;
      }
    }
  }
  return blobs;
}

std::vector<Disc> place_holes(const BlobShape& blob, double fraction, Rng& rng) {
  std::vector<Disc> holes;
  if (fraction <= 0.0) return holes;
  const int n = static_cast<int>(std::ceil(fraction / 0.05 - 1e-12));
  const double r = std::sqrt(fraction / n * blob.area() / kPi);
  const double rho = n == 1 ? rng.uniform(0.25, 0.45) * blob.radius : 0.55 * blob.radius;
  const double phase = rng.uniform(0.0, 2 * kPi);
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2 * kPi * i / n;
    holes.push_back({blob.cx + rho * std::cos(a), blob.cy + rho * std::sin(a), r});
  }
  return holes;
}

std::vector<Disc> place_bubble(const SynthParams& p, const std::vector<BlobShape>& blobs,
                               Rng& rng) {
  const double size = p.base_size;
  for (int attempt = 0; attempt < 500; ++attempt) {
    const double r = rng.uniform(0.03, 0.06) * size;
    const double x = rng.uniform(r + 4, size - r - 4), y = rng.uniform(r + 4, size - r - 4);
    const bool clear = std::all_of(blobs.begin(), blobs.end(), [&](const BlobShape& b) {
      return std::hypot(x - b.cx, y - b.cy) >= b.max_radius() + r + 0.01 * size;
    });
    if (clear) return {{x, y, r}};
  }
  return {};
}

}  // namespace

void SynthParams::validate() const {
  auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (base_size < 1024) throw UsageError("synthetic base size must be at least 1024");
  if (n_blobs < 0) throw UsageError("blob count must be non-negative");
  if (!fraction(stain_strength) || !fraction(fat_fraction)) {
    throw UsageError("stain strength and fat fraction must lie in [0, 1]");
  }
  if (hole_fraction < 0.0 || hole_fraction > kMaxHoleFraction) {
    throw UsageError("hole fraction must lie in [0, 0.25]");
  }
  if (noise < 0.0) throw UsageError("noise must be non-negative");
  if (!(base_spacing > 0.0)) throw UsageError("base spacing must be positive");
  if (levels < 1) throw UsageError("need at least one pyramid level");
}

double BlobShape::radius_at(double theta) const {
  double f = 1.0;
  for (int k = 0; k < 3; ++k) f += amplitude[k] * std::cos((k + 2) * theta + phase[k]);
  return radius * f;
}

bool BlobShape::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy, d2 = dx * dx + dy * dy;
  const double lo = min_radius(), hi = max_radius();
  if (d2 < lo * lo) return true;
  if (d2 >= hi * hi) return false;
  const double r = radius_at(std::atan2(dy, dx));
  return d2 < r * r;
}

double BlobShape::area() const {
  double s = 0.0;
  for (double a : amplitude) s += a * a;
  return kPi * radius * radius * (1.0 + 0.5 * s);
}

double BlobShape::min_radius() const {
  double s = 0.0;
  for (double a : amplitude) s += std::abs(a);
  return radius * (1.0 - s);
}

double BlobShape::max_radius() const {
  double s = 0.0;
  for (double a : amplitude) s += std::abs(a);
  return radius * (1.0 + s);
}

SyntheticSlide generate_slide(const SynthParams& p) {
  p.validate();
  Rng rng(p.seed);
  Rng layout = rng.fork(), texture = rng.fork(), noise = rng.fork();
  const int size = p.base_size;

  SyntheticSlide out;
  out.blobs = place_blobs(p, layout);
  double tissue_area = 0.0;
  for (const auto& b : out.blobs) {
    const auto holes = place_holes(b, p.hole_fraction, layout);
    double cut = 0.0;
    for (const auto& h : holes) cut += kPi * h.r * h.r;
    tissue_area += b.area() - cut;
    out.holes.insert(out.holes.end(), holes.begin(), holes.end());
  }
  if (p.artifact == Artifact::kBubble) out.bubbles = place_bubble(p, out.blobs, layout);
  out.target_coverage = tissue_area / (static_cast<double>(size) * size);

  // Tissue support.
  BinaryMask gt(size, size);
  for (const auto& b : out.blobs) {
    const int x0 = std::max(0, static_cast<int>(b.cx - b.max_radius()) - 1);
    const int x1 = std::min(size - 1, static_cast<int>(b.cx + b.max_radius()) + 1);
    const int y0 = std::max(0, static_cast<int>(b.cy - b.max_radius()) - 1);
    const int y1 = std::min(size - 1, static_cast<int>(b.cy + b.max_radius()) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (b.contains(x + 0.5, y + 0.5)) gt(x, y) = 1;
      }
    }
  }
  for (const auto& h : out.holes) {
    for (int y = std::max(0, int(h.cy - h.r) - 1); y <= std::min(size - 1, int(h.cy + h.r) + 1); ++y) {
      for (int x = std::max(0, int(h.cx - h.r) - 1); x <= std::min(size - 1, int(h.cx + h.r) + 1);
           ++x) {
        if (h.contains(x + 0.5, y + 0.5)) gt(x, y) = 0;
      }
    }
  }

  // Texture fields.
  const ValueNoise stain(size, size, 96.0, texture);
  const ValueNoise fat_field(size, size, 160.0, texture);
  const FatWeb web(size, size, 24.0, texture);
  BinaryMask nuclei(size, size);
  constexpr int kCell = 16;
  for (int cy = 0; cy < size; cy += kCell) {
    for (int cx = 0; cx < size; cx += kCell) {
      if (!texture.bernoulli(0.5)) continue;
      const double x = cx + texture.uniform(0, kCell), y = cy + texture.uniform(0, kCell);
      const double r = texture.uniform(1.5, 3.5);
      for (int yy = std::max(0, int(y - r)); yy <= std::min(size - 1, int(y + r)); ++yy) {
        for (int xx = std::max(0, int(x - r)); xx <= std::min(size - 1, int(x + r)); ++xx) {
          if ((xx + 0.5 - x) * (xx + 0.5 - x) + (yy + 0.5 - y) * (yy + 0.5 - y) < r * r) {
            nuclei(xx, yy) = 1;
          }
        }
      }
    }
  }
  // Fat covers the tissue pixels with the highest fat_field values.
  double fat_cut = 2.0;
  if (p.fat_fraction > 0.0) {
    std::vector<double> values;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (gt(x, y)) values.push_back(fat_field.at(x, y));
      }
    }
    if (!values.empty()) {
      const auto k = static_cast<std::size_t>((1.0 - p.fat_fraction) * (values.size() - 1));
      std::nth_element(values.begin(), values.begin() + k, values.end());
      fat_cut = values[k];
    }
  }

  RgbImage img(size, size);
  const double s = p.stain_strength;
  const double tissue_noise = 4.0 + 8.0 * s;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      Color c;
      double sigma;
      if (gt(x, y)) {
        const bool fat = fat_field.at(x, y) >= fat_cut;
        if (fat) {
          c = web.membrane(x, y) ? kEosin : kFatInterior;
        } else if (nuclei(x, y)) {
          c = kNucleus;
        } else {
          c = lerp(kEosin, kHematoxylin, 0.6 * stain.at(x, y));
        }
        c = lerp(kWhite, c, s);
        sigma = tissue_noise;
      } else {
        c = kWhite;
        sigma = p.noise;
        for (const auto& b : out.bubbles) {
          const double d = std::hypot(x + 0.5 - b.cx, y + 0.5 - b.cy);
          if (d < b.r) c = d >= b.r - 3.0 ? kBubbleRim : kBubbleInterior;
        }
      }
      img.set(x, y,
              {to_byte(c.r + noise.normal(0, sigma)), to_byte(c.g + noise.normal(0, sigma)),
               to_byte(c.b + noise.normal(0, sigma))});
    }
  }

  out.gt = std::move(gt);
  out.pyramid = build_pyramid(Level{std::move(img), p.base_spacing, p.base_spacing}, p.levels,
                              p.empty_color);
  return out;
}

CorpusMode parse_corpus_mode(const std::string& s) {
  if (s == "easy") return CorpusMode::kEasy;
  if (s == "hard") return CorpusMode::kHard;
  throw UsageError("unknown corpus mode '" + s + "' (expected easy or hard)");
}

std::string to_string(CorpusMode mode) { return mode == CorpusMode::kEasy ? "easy" : "hard"; }

SynthParams corpus_params(CorpusMode mode, std::uint64_t slide_seed) {
  Rng rng(slide_seed);
  SynthParams p;
  p.seed = rng.next_u64();
  p.n_blobs = 2 + static_cast<int>(rng.below(2));
  if (mode == CorpusMode::kEasy) {
    p.stain_strength = rng.uniform(0.85, 1.0);
    p.hole_fraction = rng.uniform(0.0, 0.04);
    p.noise = 3.0;
  } else {
    p.stain_strength = rng.uniform(0.12, 0.28);
    p.fat_fraction = rng.uniform(0.2, 0.4);
    p.hole_fraction = rng.uniform(0.03, 0.08);
    p.artifact = Artifact::kBubble;
    p.noise = 4.0;
  }
  return p;
}

void save_slide(const SyntheticSlide& slide, const std::filesystem::path& dir) {
  save_pyramid(slide.pyramid, dir);
  write_mask_pgm(slide.gt, dir / "gt.pgm");
}

std::vector<std::string> write_corpus(const std::filesystem::path& dir, int n_slides,
                                      CorpusMode mode, std::uint64_t seed) {
  if (n_slides < 0) throw UsageError("slide count must be non-negative");
  Rng rng(seed);
  std::vector<std::string> names;
  for (int k = 0; k < n_slides; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "slide_%03d", k);
    save_slide(generate_slide(corpus_params(mode, rng.next_u64())), dir / name);
    names.emplace_back(name);
  }
  return names;
}

}  // namespace slidecarver
