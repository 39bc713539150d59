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

#include "slidecarver/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace slidecarver {
namespace {

void require_odd(int k, const char* what) {
  if (k < 1 || k % 2 == 0) {
    throw UsageError(std::string(what) + " must be odd and positive, got " + std::to_string(k));
  }
}

// Squared distance transform of a sampled function along one line
// (lower envelope of parabolas).
void edt_1d(const double* f, int n, std::ptrdiff_t stride, double* out,
            std::vector<int>& v, std::vector<double>& z, std::vector<double>& buf) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  buf.resize(n);
  for (int i = 0; i < n; ++i) buf[i] = f[i * stride];
  v.resize(n);
  z.resize(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (buf[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((buf[q] + double(q) * q) - (buf[p] + double(p) * p)) / (2.0 * (q - p));
      if (k == 0 || s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int i = 0; i < n; ++i) out[i * stride] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q * stride] = d * d + buf[v[j]];
  }
}

}  // namespace

GrayImage to_grayscale(const RgbImage& rgb) {
  GrayImage g(rgb.width(), rgb.height());
  const auto& b = rgb.bytes();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 0.299 * b[3 * i] + 0.587 * b[3 * i + 1] + 0.114 * b[3 * i + 2];
  }
  return g;
}

GrayImage laplacian_abs(const GrayImage& g) {
  GrayImage out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      const double v = g.clamped(x, y - 1) + g.clamped(x - 1, y) - 4.0 * g(x, y) +
                       g.clamped(x + 1, y) + g.clamped(x, y + 1);
      out(x, y) = std::abs(v);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel_1d(int ksize, double sigma) {
  require_odd(ksize, "Gaussian kernel size");
  if (!(sigma > 0.0)) throw UsageError("Gaussian sigma must be positive");
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

GrayImage gaussian_blur(const GrayImage& g, int ksize, double sigma) {
  const auto k = gaussian_kernel_1d(ksize, sigma);
  const int r = ksize / 2;
  const int w = g.width(), h = g.height();
  GrayImage tmp(w, h), out(w, h);
  if (w == 0 || h == 0) return out;
  std::vector<double> row(w + 2 * r);
  for (int y = 0; y < h; ++y) {
    for (int x = -r; x < w + r; ++x) row[x + r] = g.clamped(x, y);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < ksize; ++i) acc += k[i] * row[x + i];
      tmp(x, y) = acc;
    }
  }
  std::vector<double> col(h + 2 * r);
  for (int x = 0; x < w; ++x) {
    for (int y = -r; y < h + r; ++y) col[y + r] = tmp.clamped(x, y);
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int i = 0; i < ksize; ++i) acc += k[i] * col[y + i];
      out(x, y) = acc;
    }
  }
  return out;
}

BinaryMask mean_threshold(const GrayImage& g) {
  BinaryMask m(g.width(), g.height());
  if (g.size() == 0) return m;
  double sum = 0.0;
  for (double v : g.values()) sum += v;
  const double mean = sum / static_cast<double>(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i] > mean ? 1 : 0;
  return m;
}

BinaryMask median_filter(const BinaryMask& m, int ksize) {
  require_odd(ksize, "median kernel size");
  const int r = ksize / 2;
  const int w = m.width(), h = m.height();
  BinaryMask out(w, h);
  if (w == 0 || h == 0) return out;
  // Integral image over the replicate-padded mask.
  const int pw = w + 2 * r, ph = h + 2 * r;
  std::vector<std::int64_t> integral(static_cast<std::size_t>(pw + 1) * (ph + 1), 0);
  auto at = [&](int x, int y) -> std::int64_t& {
    return integral[static_cast<std::size_t>(y) * (pw + 1) + x];
  };
  for (int y = 0; y < ph; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < pw; ++x) {
      row += m.clamped(x - r, y - r);
      at(x + 1, y + 1) = at(x + 1, y) + row;
    }
  }
  const std::int64_t half = static_cast<std::int64_t>(ksize) * ksize / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t count =
          at(x + ksize, y + ksize) - at(x, y + ksize) - at(x + ksize, y) + at(x, y);
      out(x, y) = count > half ? 1 : 0;
    }
  }
  return out;
}

std::vector<std::pair<int, int>> disc_element(int diameter) {
  require_odd(diameter, "structuring element diameter");
  const double radius = diameter / 2.0;
  const int r = diameter / 2;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (double(dx) * dx + double(dy) * dy <= radius * radius) offsets.emplace_back(dx, dy);
    }
  }
  return offsets;
}

BinaryMask morph(const BinaryMask& m, MorphOp op, int diameter, int iterations) {
  require_odd(diameter, "structuring element diameter");
  if (iterations < 0) throw UsageError("negative morphology iteration count");
  const int r = diameter / 2;
  const double radius = diameter / 2.0;
  // The disc is symmetric, so each row dy reduces to a half-width.
  std::vector<int> half_width(2 * r + 1);
  for (int dy = -r; dy <= r; ++dy) {
    half_width[dy + r] =
        static_cast<int>(std::floor(std::sqrt(radius * radius - double(dy) * dy)));
  }
  const int w = m.width(), h = m.height();
  BinaryMask cur = m;
  std::vector<int> prefix(static_cast<std::size_t>(w + 1) * h);
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < h; ++y) {
      int* p = &prefix[static_cast<std::size_t>(y) * (w + 1)];
      p[0] = 0;
      for (int x = 0; x < w; ++x) p[x + 1] = p[x] + cur(x, y);
    }
    BinaryMask next(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bool value = op == MorphOp::kErode;
        for (int dy = -r; dy <= r; ++dy) {
          const int hw = half_width[dy + r];
          const int yy = y + dy;
          const int x0 = x - hw, x1 = x + hw;
          if (op == MorphOp::kErode) {
            // Any element pixel outside the image hits background padding.
            if (yy < 0 || yy >= h || x0 < 0 || x1 >= w) {
              value = false;
              break;
            }
            const int* p = &prefix[static_cast<std::size_t>(yy) * (w + 1)];
            if (p[x1 + 1] - p[x0] != x1 - x0 + 1) {
              value = false;
              break;
            }
          } else {
            if (yy < 0 || yy >= h) continue;
            const int* p = &prefix[static_cast<std::size_t>(yy) * (w + 1)];
            if (p[std::min(x1, w - 1) + 1] - p[std::max(x0, 0)] > 0) {
              value = true;
              break;
            }
          }
        }
        next(x, y) = value ? 1 : 0;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

BinaryMask opening(const BinaryMask& m, int diameter, int iterations) {
  return morph(morph(m, MorphOp::kErode, diameter, iterations), MorphOp::kDilate, diameter,
               iterations);
}

GrayImage distance_transform(const BinaryMask& m) {
  const int w = m.width(), h = m.height();
  GrayImage out(w, h);
  if (w == 0 || h == 0) return out;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  bool any_zero = false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    out[i] = m[i] ? kInf : 0.0;
    any_zero |= m[i] == 0;
  }
  if (!any_zero) {
    std::fill(out.values().begin(), out.values().end(), static_cast<double>(w + h));
    return out;
  }
  std::vector<int> v;
  std::vector<double> z, buf;
  std::vector<double> tmp(out.size());
  for (int x = 0; x < w; ++x) edt_1d(&out[x], h, w, &tmp[x], v, z, buf);
  for (int y = 0; y < h; ++y) {
    edt_1d(&tmp[static_cast<std::size_t>(y) * w], w, 1, &out[static_cast<std::size_t>(y) * w],
           v, z, buf);
  }
  for (auto& d : out.values()) d = std::sqrt(d);
  return out;
}

BinaryMask flood_fill(const BinaryMask& m, int seed_x, int seed_y) {
  if (!m.contains(seed_x, seed_y)) throw UsageError("flood fill seed out of bounds");
  const int w = m.width(), h = m.height();
  const std::uint8_t target = m(seed_x, seed_y);
  BinaryMask out(w, h);
  std::vector<std::pair<int, int>> stack{{seed_x, seed_y}};
  out(seed_x, seed_y) = 1;
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    const std::pair<int, int> nbrs[4] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (auto [nx, ny] : nbrs) {
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      if (out(nx, ny) || m(nx, ny) != target) continue;
      out(nx, ny) = 1;
      stack.emplace_back(nx, ny);
    }
  }
  return out;
}

Components connected_components(const BinaryMask& m) {
  const int w = m.width(), h = m.height();
  Components c{LabelImage(w, h), 0};
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m(x, y) || c.labels(x, y)) continue;
      const int label = ++c.count;
      c.labels(x, y) = label;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        const std::pair<int, int> nbrs[4] = {
            {cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}};
        for (auto [nx, ny] : nbrs) {
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (!m(nx, ny) || c.labels(nx, ny)) continue;
          c.labels(nx, ny) = label;
          stack.emplace_back(nx, ny);
        }
      }
    }
  }
  return c;
}

BinaryMask invert(const BinaryMask& m) {
  BinaryMask out(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

}  // namespace slidecarver
