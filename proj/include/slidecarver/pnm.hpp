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

/// @file pnm.hpp
/// @brief Binary PPM (P6) and PGM (P5) reading and writing, maxval 255.

#pragma once

#include <filesystem>

#include "slidecarver/raster.hpp"

namespace slidecarver {

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

/// Reads an 8-bit gray PGM as raw values.
Raster<std::uint8_t> read_pgm(const std::filesystem::path& path);
void write_pgm(const Raster<std::uint8_t>& image,
               const std::filesystem::path& path);

/// Mask files store tissue as 255 and background as 0. Any nonzero value
/// reads back as tissue.
BinaryMask read_mask_pgm(const std::filesystem::path& path);
void write_mask_pgm(const BinaryMask& mask, const std::filesystem::path& path);

/// Header fields of a PNM file without reading its payload.
struct PnmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  int maxval = 0;
};
PnmHeader read_pnm_header(const std::filesystem::path& path);

}  // namespace slidecarver
