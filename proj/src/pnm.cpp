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

#include "slidecarver/pnm.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace slidecarver {
namespace {

// Reads the next whitespace-delimited header integer, skipping comments.
int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    }
    c = in.get();
  }
  if (!in || !std::isdigit(c)) {
    throw DataError("malformed PNM header in " + path.string());
  }
  long value = 0;
  while (in && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > (1L << 30)) throw DataError("PNM extent too large in " + path.string());
    c = in.get();
  }
  // Exactly one whitespace byte separates maxval from the payload; the
  // caller relies on the stream being positioned right after it.
  if (!std::isspace(c)) throw DataError("malformed PNM header in " + path.string());
  return static_cast<int>(value);
}

PnmHeader parse_header(std::istream& in, const std::filesystem::path& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw DataError("not a binary PNM file: " + path.string());
  }
  PnmHeader h;
  h.kind = magic[1];
  h.width = read_header_int(in, path);
  h.height = read_header_int(in, path);
  h.maxval = read_header_int(in, path);
  if (h.maxval != 255) {
    throw DataError("unsupported PNM maxval (need 255) in " + path.string());
  }
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void read_payload(std::istream& in, char* dst, std::size_t n,
                  const std::filesystem::path& path) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError("truncated PNM payload in " + path.string());
  }
}

}  // namespace

PnmHeader read_pnm_header(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_header(in, path);
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader h = parse_header(in, path);
  if (h.kind != '6') throw DataError("expected P6 PPM: " + path.string());
  RgbImage img(h.width, h.height);
  read_payload(in, reinterpret_cast<char*>(img.bytes().data()), img.bytes().size(), path);
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.bytes().data()),
            static_cast<std::streamsize>(image.bytes().size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Raster<std::uint8_t> read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader h = parse_header(in, path);
  if (h.kind != '5') throw DataError("expected P5 PGM: " + path.string());
  Raster<std::uint8_t> img(h.width, h.height);
  read_payload(in, reinterpret_cast<char*>(img.values().data()), img.size(), path);
  return img;
}

void write_pgm(const Raster<std::uint8_t>& image, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.values().data()),
            static_cast<std::streamsize>(image.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  BinaryMask m = read_pgm(path);
  for (auto& v : m.values()) v = v != 0 ? 1 : 0;
  return m;
}

void write_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path) {
  Raster<std::uint8_t> img(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) img[i] = mask[i] ? 255 : 0;
  write_pgm(img, path);
}

}  // namespace slidecarver
