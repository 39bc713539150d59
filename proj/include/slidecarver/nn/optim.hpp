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

/// @file optim.hpp
/// @brief Adam and He initialization.

#pragma once

#include <cmath>
#include <vector>

#include "slidecarver/nn/layers.hpp"
#include "slidecarver/rng.hpp"

namespace slidecarver::nn {

struct AdamOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are zero-initialized and bound to the
/// parameter list given at construction; non-trainable entries are skipped.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamOptions opts = {})
      : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.numel(), 0.0);
      v_.emplace_back(p->value.numel(), 0.0);
    }
  }

  void step() {
    ++step_;
    const double c1 = 1.0 - std::pow(opts_.beta1, double(step_));
    const double c2 = 1.0 - std::pow(opts_.beta2, double(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>& p = *params_[k];
      if (!p.trainable) continue;
      if (p.grad.numel() != p.value.numel()) {
        throw ShapeError("adam: gradient shape mismatch for " + p.name);
      }
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double g = p.grad[i];
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        p.value[i] -= static_cast<T>(opts_.lr * mhat / (std::sqrt(vhat) + opts_.epsilon));
      }
    }
  }

  long step_count() const { return step_; }
  double lr() const { return opts_.lr; }
  void set_lr(double lr) { opts_.lr = lr; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<double>& first_moment(std::size_t k) const { return m_[k]; }
  const std::vector<double>& second_moment(std::size_t k) const { return v_[k]; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamOptions opts_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

/// Samples N(0, 2 / fan_in).
template <typename T>
Tensor<T> he_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw UsageError("he_init: zero fan_in");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.normal() * stddev);
  return t;
}

/// He-initializes convolution weights in place; biases, batch-norm shifts
/// and running means become 0, batch-norm scales and running variances 1.
template <typename T>
void he_initialize(Sequential<T>& net, Rng& rng);

template <typename T>
void he_initialize_layer(Layer<T>& layer, Rng& rng) {
  if (auto* conv = dynamic_cast<Conv2d<T>*>(&layer)) {
    const std::size_t k = conv->kernel();
    conv->weight().value =
        he_init<T>(conv->weight().value.shape(), k * k * conv->in_channels(), rng);
    conv->bias().value.fill(T(0));
  } else if (auto* up = dynamic_cast<UpConv2x2<T>*>(&layer)) {
    // Each output pixel receives exactly one tap per input channel.
    up->weight().value = he_init<T>(up->weight().value.shape(), up->in_channels(), rng);
    up->bias().value.fill(T(0));
  } else if (auto* bn = dynamic_cast<BatchNorm2d<T>*>(&layer)) {
    bn->gamma().value.fill(T(1));
    bn->beta().value.fill(T(0));
    bn->running_mean().value.fill(T(0));
    bn->running_var().value.fill(T(1));
  }
}

template <typename T>
void he_initialize(Sequential<T>& net, Rng& rng) {
  for (std::size_t i = 0; i < net.size(); ++i) he_initialize_layer(net[i], rng);
}

}  // namespace slidecarver::nn
