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

#include "slidecarver/pyramid.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "slidecarver/pnm.hpp"

namespace slidecarver {
namespace {

std::string format_spacing(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_spacing(const std::string& token, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !(v > 0.0)) {
    throw DataError("bad spacing '" + token + "' in " + where);
  }
  return v;
}

}  // namespace

PyramidImage::PyramidImage(std::vector<Level> levels, Rgb empty_color)
    : levels_(std::move(levels)), empty_color_(empty_color) {
  if (levels_.empty()) throw DataError("pyramid has no levels");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    const Level& l = levels_[i];
    if (l.width() < 1 || l.height() < 1) throw DataError("empty pyramid level");
    if (!(l.spacing_x > 0.0) || !(l.spacing_y > 0.0)) {
      throw DataError("non-positive spacing at level " + std::to_string(i));
    }
    if (i == 0) continue;
    const Level& prev = levels_[i - 1];
    if (std::abs(l.width() - prev.width() / 2) > 1 ||
        std::abs(l.height() - prev.height() / 2) > 1) {
      throw DataError("level " + std::to_string(i) + " is not half the size of level " +
                      std::to_string(i - 1));
    }
    if (l.spacing_x != 2.0 * prev.spacing_x || l.spacing_y != 2.0 * prev.spacing_y) {
      throw DataError("spacing does not double between levels " + std::to_string(i - 1) +
                      " and " + std::to_string(i));
    }
  }
}

const Level& PyramidImage::level(std::size_t i) const {
  if (i >= levels_.size()) {
    throw UsageError("pyramid has no level " + std::to_string(i));
  }
  return levels_[i];
}

std::optional<std::size_t> PyramidImage::find_level(double spacing_um) const {
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (std::abs(levels_[i].spacing_x - spacing_um) <= 1e-6 * spacing_um) return i;
  }
  return std::nullopt;
}

std::size_t PyramidImage::require_level(double spacing_um) const {
  auto idx = find_level(spacing_um);
  if (!idx) {
    throw DataError("pyramid has no level at spacing " + format_spacing(spacing_um) + " um");
  }
  return *idx;
}

bool all_pixels_equal(const RgbImage& img, Rgb color) {
  const auto& b = img.bytes();
  for (std::size_t i = 0; i < b.size(); i += 3) {
    if (b[i] != color.r || b[i + 1] != color.g || b[i + 2] != color.b) return false;
  }
  return true;
}

PyramidImage load_pyramid(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing manifest: " + manifest_path.string());
  const std::string where = manifest_path.string();

  std::string line, key;
  std::size_t n_levels = 0;
  if (!std::getline(in, line)) throw DataError("empty manifest " + where);
  {
    std::istringstream ls(line);
    if (!(ls >> key >> n_levels) || key != "levels" || n_levels == 0) {
      throw DataError("expected 'levels <N>' in " + where);
    }
  }
  Rgb empty{};
  if (!std::getline(in, line)) throw DataError("missing empty_color in " + where);
  {
    std::istringstream ls(line);
    int r, g, b;
    if (!(ls >> key >> r >> g >> b) || key != "empty_color" || r < 0 || r > 255 ||
        g < 0 || g > 255 || b < 0 || b > 255) {
      throw DataError("expected 'empty_color <R> <G> <B>' in " + where);
    }
    empty = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
             static_cast<std::uint8_t>(b)};
  }

  std::vector<Level> levels;
  for (std::size_t i = 0; i < n_levels; ++i) {
    if (!std::getline(in, line)) throw DataError("manifest lists fewer levels than declared");
    std::istringstream ls(line);
    std::size_t idx;
    int w, h;
    std::string sx, sy, file;
    if (!(ls >> key >> idx >> w >> h >> sx >> sy >> file) || key != "level") {
      throw DataError("malformed level line '" + line + "' in " + where);
    }
    if (idx != i) throw DataError("level lines out of order in " + where);
    Level level;
    level.spacing_x = parse_spacing(sx, where);
    level.spacing_y = parse_spacing(sy, where);
    const auto ppm_path = dir / file;
    const PnmHeader header = read_pnm_header(ppm_path);
    if (header.width != w || header.height != h) {
      throw DataError("level " + std::to_string(i) + " dimensions " + std::to_string(w) +
                      "x" + std::to_string(h) + " disagree with " + ppm_path.string());
    }
    level.pixels = read_ppm(ppm_path);
    levels.push_back(std::move(level));
  }
  return PyramidImage(std::move(levels), empty);
}

void save_pyramid(const PyramidImage& pyramid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  const Rgb e = pyramid.empty_color();
  out << "levels " << pyramid.level_count() << "\n";
  out << "empty_color " << int(e.r) << ' ' << int(e.g) << ' ' << int(e.b) << "\n";
  for (std::size_t i = 0; i < pyramid.level_count(); ++i) {
    const Level& l = pyramid.level(i);
    const std::string file = "level_" + std::to_string(i) + ".ppm";
    out << "level " << i << ' ' << l.width() << ' ' << l.height() << ' '
        << format_spacing(l.spacing_x) << ' ' << format_spacing(l.spacing_y) << ' ' << file
        << "\n";
    write_ppm(l.pixels, dir / file);
  }
  if (!out) throw DataError("write failed for manifest in " + dir.string());
}

Patch read_region(const PyramidImage& pyramid, std::size_t level, int x, int y, int w,
                  int h) {
  if (w <= 0 || h <= 0) throw UsageError("read_region needs positive extents");
  const Level& src = pyramid.level(level);
  Patch patch;
  patch.origin = {level, x, y};
  patch.pixels = RgbImage(w, h, pyramid.empty_color());

  // Intersect the window with the level raster and copy rows.
  const int x0 = std::max(x, 0), x1 = std::min(x + w, src.width());
  const int y0 = std::max(y, 0), y1 = std::min(y + h, src.height());
  if (x0 < x1) {
    const auto& sb = src.pixels.bytes();
    auto& db = patch.pixels.bytes();
    const std::size_t row_bytes = static_cast<std::size_t>(x1 - x0) * 3;
    for (int yy = y0; yy < y1; ++yy) {
      const std::size_t s = (static_cast<std::size_t>(yy) * src.width() + x0) * 3;
      const std::size_t d = (static_cast<std::size_t>(yy - y) * w + (x0 - x)) * 3;
      std::copy_n(sb.begin() + s, row_bytes, db.begin() + d);
    }
  }
  patch.is_empty = all_pixels_equal(patch.pixels, pyramid.empty_color());
  return patch;
}

RgbImage downsample_box(const RgbImage& src) {
  const int w = (src.width() + 1) / 2;
  const int h = (src.height() + 1) / 2;
  RgbImage dst(w, h);
  const auto& sb = src.bytes();
  auto& db = dst.bytes();
  for (int y = 0; y < h; ++y) {
    const int sy0 = 2 * y, sy1 = std::min(2 * y + 1, src.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int sx0 = 2 * x, sx1 = std::min(2 * x + 1, src.width() - 1);
      const unsigned count = (sy1 - sy0 + 1) * (sx1 - sx0 + 1);
      for (int c = 0; c < 3; ++c) {
        unsigned sum = 0;
        for (int sy = sy0; sy <= sy1; ++sy) {
          for (int sx = sx0; sx <= sx1; ++sx) {
            sum += sb[(static_cast<std::size_t>(sy) * src.width() + sx) * 3 + c];
          }
        }
        db[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>((sum + count / 2) / count);
      }
    }
  }
  return dst;
}

PyramidImage build_pyramid(Level base, int n_levels, Rgb empty_color) {
  if (n_levels < 1) throw UsageError("build_pyramid needs at least one level");
  std::vector<Level> levels;
  levels.reserve(n_levels);
  levels.push_back(std::move(base));
  for (int i = 1; i < n_levels; ++i) {
    const Level& prev = levels.back();
    if (prev.width() < 2 || prev.height() < 2) {
      throw UsageError("build_pyramid: " + std::to_string(n_levels) +
                       " levels would reduce a dimension below 1");
    }
    Level next;
    next.pixels = downsample_box(prev.pixels);
    next.spacing_x = 2.0 * prev.spacing_x;
    next.spacing_y = 2.0 * prev.spacing_y;
    levels.push_back(std::move(next));
  }
  return PyramidImage(std::move(levels), empty_color);
}

BinaryMask resample_nearest(const BinaryMask& src, int width, int height) {
  BinaryMask dst(width, height);
  if (src.width() == 0 || src.height() == 0) return dst;
  std::vector<int> xs(width);
  for (int x = 0; x < width; ++x) {
    xs[x] = static_cast<int>((2LL * x + 1) * src.width() / (2LL * width));
  }
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>((2LL * y + 1) * src.height() / (2LL * height));
    for (int x = 0; x < width; ++x) dst(x, y) = src(xs[x], sy);
  }
  return dst;
}

}  // namespace slidecarver
