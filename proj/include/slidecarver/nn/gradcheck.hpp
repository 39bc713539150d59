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

/// @file gradcheck.hpp
/// @brief Central finite-difference verification of analytic gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "slidecarver/nn/layers.hpp"
#include "slidecarver/rng.hpp"

namespace slidecarver::nn {

struct GradCheckOptions {
  double step = 1e-3;
  /// Coordinates probed per tensor; 0 probes every coordinate.
  std::size_t max_probes_per_tensor = 0;
  /// Denominator floor, so coordinates whose true gradient is ~0 are judged
  /// by absolute error.
  double floor = 1e-8;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::string worst;  // "<tensor>[<index>] analytic=.. numeric=.."

  bool passed(double tolerance) const { return probes > 0 && max_rel_error <= tolerance; }
};

/// A tensor to perturb together with the analytic gradient computed for it.
struct GradTarget {
  std::string name;
  Tensor<double>* value = nullptr;
  const Tensor<double>* analytic = nullptr;
};

/// Compares `analytic` against (loss(x + h) - loss(x - h)) / 2h for the
/// probed coordinates of every target. `loss` must be a deterministic
/// function of the target values.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::vector<GradTarget>& targets,
                                  const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  Rng rng(opts.seed);
  for (const auto& t : targets) {
    const std::size_t n = t.value->numel();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (opts.max_probes_per_tensor > 0 && opts.max_probes_per_tensor < n) {
      for (std::size_t i = 0; i < opts.max_probes_per_tensor; ++i) {
        std::swap(idx[i], idx[i + rng.below(n - i)]);
      }
      idx.resize(opts.max_probes_per_tensor);
    }
    for (std::size_t i : idx) {
      double& x = (*t.value)[i];
      const double saved = x;
      x = saved + opts.step;
      const double up = loss();
      x = saved - opts.step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double analytic = (*t.analytic)[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.probes;
      if (report.worst.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = t.name + "[" + std::to_string(i) + "] analytic=" +
                       std::to_string(analytic) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

/// Checks one layer against the scalar loss sum(projection * layer(x)),
/// covering the input gradient and every trainable parameter. `reset` runs
/// before each forward pass (e.g. to reseed dropout).
inline GradCheckReport check_layer_gradients(Layer<double>& layer, Tensor<double> input,
                                             Mode mode, Rng& rng,
                                             const GradCheckOptions& opts = {},
                                             const std::function<void()>& reset = {}) {
  auto run = [&](const Tensor<double>& x) {
    if (reset) reset();
    return layer.forward(x, mode);
  };
  Tensor<double> projection(layer.output_shape(input.shape()));
  for (auto& v : projection.values()) v = rng.uniform(-1.0, 1.0);

  auto params = layer.parameters();
  zero_grad(params);
  run(input);
  const Tensor<double> dx = layer.backward(projection);
  std::vector<Tensor<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  auto loss = [&]() {
    const Tensor<double> y = run(input);
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += projection[i] * y[i];
    return s;
  };
  std::vector<GradTarget> targets{{layer.name() + ".input", &input, &dx}};
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->trainable) targets.push_back({params[k]->name, &params[k]->value, &analytic[k]});
  }
  return grad_check(loss, targets, opts);
}

}  // namespace slidecarver::nn
