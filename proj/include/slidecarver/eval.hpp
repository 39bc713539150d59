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

/// @file eval.hpp
/// @brief Jaccard index, likelihood-map postprocessing and per-method
/// summaries.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "slidecarver/models.hpp"
#include "slidecarver/raster.hpp"

namespace slidecarver {

/// |A and B| / |A or B|; 1 when both masks are empty. Throws ShapeError on
/// differing extents.
double jaccard(const BinaryMask& a, const BinaryMask& b);

/// Gaussian smoothing (sigma 1, 7x7, replicated border) of the probability
/// grid.
GrayImage smooth_likelihood(const LikelihoodMap& lm);

/// Smooths, thresholds at > 0.5 and expands each cell to the level pixels
/// nearest to it: pixel x belongs to cell floor((x - offset + stride/2) /
/// stride). Pixels outside the map's coverage are background.
BinaryMask postprocess(const LikelihoodMap& lm, int target_width, int target_height);

struct EvalRow {
  std::string slide;
  std::string method;
  double jaccard = 0.0;
};

struct MethodSummary {
  std::string method;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by (slide, method)
  std::vector<MethodSummary> summaries;  // sorted by method
};

/// Throws DataError when a method has fewer than two values.
EvalReport summarize(std::vector<EvalRow> rows);

/// Tab-separated text: a `# slide method jaccard` header and one row per
/// slide and method, then `# method mean std` and one footer row per method.
std::string format_report(const EvalReport& report);
/// Per-slide rows only (no footer), as written by single evaluations.
std::string format_rows(const std::vector<EvalRow>& rows);

/// Reads the per-slide rows of either format; footer rows are skipped.
std::vector<EvalRow> parse_rows(std::istream& in);

}  // namespace slidecarver
