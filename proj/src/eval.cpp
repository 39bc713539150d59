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

#include "slidecarver/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

#include "slidecarver/imgproc.hpp"

namespace slidecarver {

double jaccard(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_extent(b)) {
    throw ShapeError("jaccard: mask extents differ (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

GrayImage smooth_likelihood(const LikelihoodMap& lm) {
  GrayImage g(lm.prob.width(), lm.prob.height());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = lm.prob[i];
  return gaussian_blur(g, 7, 1.0);
}

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

}  // namespace

BinaryMask postprocess(const LikelihoodMap& lm, int target_width, int target_height) {
  if (lm.stride <= 0) throw UsageError("likelihood map stride must be positive");
  BinaryMask out(target_width, target_height);
  if (lm.prob.size() == 0) return out;
  const GrayImage s = smooth_likelihood(lm);
  const int half = lm.stride / 2;
  std::vector<int> col(target_width);
  for (int x = 0; x < target_width; ++x) col[x] = floor_div(x - lm.offset_x + half, lm.stride);
  for (int y = 0; y < target_height; ++y) {
    const int i = floor_div(y - lm.offset_y + half, lm.stride);
    if (i < 0 || i >= s.height()) continue;
    for (int x = 0; x < target_width; ++x) {
      const int j = col[x];
      if (j >= 0 && j < s.width() && s(j, i) > 0.5) out(x, y) = 1;
    }
  }
  return out;
}

EvalReport summarize(std::vector<EvalRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    if (a.slide != b.slide) return a.slide < b.slide;
    if (a.method != b.method) return a.method < b.method;
    return a.jaccard < b.jaccard;
  });
  std::vector<std::string> methods;
  for (const auto& r : rows) methods.push_back(r.method);
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  EvalReport report;
  for (const auto& m : methods) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.method == m) v.push_back(r.jaccard);
    }
    if (v.size() < 2) {
      throw DataError("method '" + m + "' has " + std::to_string(v.size()) +
                      " value(s); a summary needs at least 2");
    }
    MethodSummary s;
    s.method = m;
    s.count = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / (v.size() - 1));
    report.summaries.push_back(s);
  }
  report.rows = std::move(rows);
  return report;
}

std::string format_rows(const std::vector<EvalRow>& rows) {
  std::string out = "# slide\tmethod\tjaccard\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.jaccard);
    out += r.slide + "\t" + r.method + "\t" + buf + "\n";
  }
  return out;
}

std::string format_report(const EvalReport& report) {
  std::string out = format_rows(report.rows);
  out += "# method\tmean\tstd\n";
  char buf[96];
  for (const auto& s : report.summaries) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", s.mean, s.std);
    out += s.method + buf;
  }
  return out;
}

std::vector<EvalRow> parse_rows(std::istream& in) {
  std::vector<EvalRow> rows;
  std::string line;
  bool in_rows = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      in_rows = line.rfind("# slide", 0) == 0;
      continue;
    }
    if (!in_rows) continue;
    std::istringstream ls(line);
    EvalRow r;
    std::string value;
    if (!std::getline(ls, r.slide, '\t') || !std::getline(ls, r.method, '\t') ||
        !std::getline(ls, value, '\t')) {
      throw DataError("malformed evaluation row at line " + std::to_string(lineno));
    }
    const auto res = std::from_chars(value.data(), value.data() + value.size(), r.jaccard);
    if (res.ec != std::errc() || r.jaccard < 0.0 || r.jaccard > 1.0) {
      throw DataError("bad Jaccard value at line " + std::to_string(lineno));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace slidecarver
