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

/// @file loss.hpp
/// @brief Per-cell weighted softmax cross entropy with an L2 penalty.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "slidecarver/nn/layers.hpp"

namespace slidecarver::nn {

template <typename T>
struct LossResult {
  double loss = 0.0;       // data + l2
  double data_loss = 0.0;  // weighted mean cross entropy
  double l2_loss = 0.0;    // lambda * sum of squared decayed weights
  Tensor<T> dlogits;
};

/// Softmax over the channel axis of (N, C, H, W) logits.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  require_rank4(logits, "softmax");
  Tensor<T> out(logits.shape());
  const std::size_t plane = logits.h() * logits.w(), c = logits.c();
  std::vector<double> e(c);
  for (std::size_t n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = logits.plane(n, 0)[i];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, double(logits.plane(n, k)[i]));
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        e[k] = std::exp(double(logits.plane(n, k)[i]) - mx);
        sum += e[k];
      }
      for (std::size_t k = 0; k < c; ++k) out.plane(n, k)[i] = static_cast<T>(e[k] / sum);
    }
  }
  return out;
}

/// loss = sum_cells w * (-log softmax[label]) / sum_cells w
///        + lambda * sum over decayed parameters of value^2.
///
/// `labels` and `weights` hold one entry per (n, y, x) cell. Cells with zero
/// weight contribute neither loss nor gradient; if all weights are zero the
/// data term is zero. The L2 gradient (2 lambda w) is added directly into
/// the `grad` of each decayed parameter; the returned `dlogits` covers the
/// data term only.
template <typename T>
LossResult<T> weighted_softmax_xent(const Tensor<T>& logits,
                                    std::span<const std::uint8_t> labels,
                                    std::span<const T> weights, double l2_lambda,
                                    const std::vector<Parameter<T>*>& params) {
  require_rank4(logits, "weighted_softmax_xent");
  const std::size_t plane = logits.h() * logits.w(), c = logits.c();
  const std::size_t cells = logits.n() * plane;
  if (labels.size() != cells || weights.size() != cells) {
    throw ShapeError("weighted_softmax_xent: " + std::to_string(cells) + " cells but " +
                     std::to_string(labels.size()) + " labels and " +
                     std::to_string(weights.size()) + " weights");
  }
  LossResult<T> r;
  r.dlogits = Tensor<T>(logits.shape());
  double wsum = 0.0;
  for (std::size_t i = 0; i < cells; ++i) wsum += weights[i];

  if (wsum > 0.0) {
    std::vector<double> prob(c);
    double total = 0.0;
    for (std::size_t n = 0; n < logits.n(); ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t cell = n * plane + i;
        const double w = weights[cell];
        if (w == 0.0) continue;
        const std::uint8_t label = labels[cell];
        if (label >= c) throw DataError("label out of range in loss");
        double mx = logits.plane(n, 0)[i];
        for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, double(logits.plane(n, k)[i]));
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          prob[k] = std::exp(double(logits.plane(n, k)[i]) - mx);
          sum += prob[k];
        }
        const double log_sum = std::log(sum);
        total += w * (log_sum - (double(logits.plane(n, label)[i]) - mx));
        for (std::size_t k = 0; k < c; ++k) {
          const double p = prob[k] / sum;
          r.dlogits.plane(n, k)[i] = static_cast<T>(w * (p - (k == label ? 1.0 : 0.0)) / wsum);
        }
      }
    }
    r.data_loss = total / wsum;
  }

  if (l2_lambda != 0.0) {
    double sq = 0.0;
    for (auto* p : params) {
      if (!p->decay) continue;
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        const double v = p->value[i];
        sq += v * v;
        p->grad[i] += static_cast<T>(2.0 * l2_lambda * v);
      }
    }
    r.l2_loss = l2_lambda * sq;
  }
  r.loss = r.data_loss + r.l2_loss;
  return r;
}

}  // namespace slidecarver::nn
