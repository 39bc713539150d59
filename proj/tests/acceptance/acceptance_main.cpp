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

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "slidecarver/cli.hpp"
#include "slidecarver/eval.hpp"
#include "slidecarver/imgproc.hpp"
#include "slidecarver/models.hpp"
#include "slidecarver/nn/gradcheck.hpp"
#include "slidecarver/nn/layers.hpp"
#include "slidecarver/nn/loss.hpp"
#include "slidecarver/pnm.hpp"
#include "slidecarver/pyramid.hpp"
#include "slidecarver/train.hpp"

namespace slidecarver::acceptance {
namespace {

namespace fs = std::filesystem;
using nn::Mode;
using nn::Shape;
using nn::Tensor;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects sub-check results for one criterion.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
    ++checks_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_.empty() && checks_ > 0; }
  std::string summary() const {
    std::string s = std::to_string(checks_ - failures_.size()) + "/" + std::to_string(checks_) +
                    " checks";
    for (const auto& n : notes_) s += "; " + n;
    for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) s += "; FAILED " + failures_[i];
    return s;
  }

 private:
  std::size_t checks_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

Tensor<double> random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

template <typename V>
bool same_bits(const V& a, const V& b) {
  using T = typename V::value_type;
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Train-mode forwards move batch-norm running statistics toward the
// activation statistics so random networks are not saturated in infer mode.
template <typename T>
void calibrate(Network<T>& net, Rng& rng, std::size_t side, int rounds) {
  Tensor<T> x(Shape{2, 3, side, side});
  for (auto& v : x.values()) v = static_cast<T>(rng.uniform());
  for (int r = 0; r < rounds; ++r) net.forward(x, Mode::kTrain);
  net.clear_cache();
}

constexpr FcnnConfig kToyFcnn{.width_divisor = 8};
constexpr UcnnConfig kToyUcnn{.base_channels = 4, .depth = 4, .output_size = 132, .dropout = 0.5};

// ---------------------------------------------------------------------------
// 1. Shape contracts

Verdict shapes() {
  Verdict v;
  Rng rng(1);
  {
    const auto t0 = Clock::now();
    auto fcnn = build_fcnn(rng);
    Tensor<float> x(Shape{1, 3, 128, 128});
    for (auto& p : x.values()) p = static_cast<float>(rng.uniform());
    const Tensor<float> y = fcnn->forward(x, Mode::kInfer);
    const double dt = seconds_since(t0);
    v.check(y.shape() == Shape({1, 2, 1, 1}), "FCNN forward 128x128x3 -> 1x1x2");
    v.check(fcnn->output_shape({1, 3, 128, 128}) == Shape({1, 2, 1, 1}), "FCNN output_shape");
    v.check(dt < 1.0, "FCNN check under 1 s (" + fmt(dt) + " s)");
    v.note("FCNN forward " + fmt(dt, 2) + " s");
  }
  {
    const auto t0 = Clock::now();
    Ucnn<float> ucnn;
    const Shape out = ucnn.output_shape({1, 3, 892, 892});
    const double dt = seconds_since(t0);
    v.check(out == Shape({1, 2, 708, 708}), "UCNN 892x892 -> 708x708");
    v.check(ucnn.spec().input_size == 892 && ucnn.spec().output_size == 708, "UCNN spec sizes");
    bool rejects = false;
    try {
      ucnn.output_shape({1, 3, 890, 890});
    } catch (const ShapeError&) {
      rejects = true;
    }
    v.check(rejects, "UCNN rejects 890x890");
    v.check(dt < 1.0, "UCNN check under 1 s (" + fmt(dt) + " s)");
  }
  {
    // Shape propagation agrees with an actual forward pass at toy width.
    const auto t0 = Clock::now();
    auto toy = build_ucnn(rng, kToyUcnn);
    Tensor<float> x(Shape{1, 3, 316, 316});
    const Tensor<float> y = toy->forward(x, Mode::kInfer);
    const double dt = seconds_since(t0);
    v.check(y.shape() == toy->output_shape(x.shape()) && y.shape() == Shape({1, 2, 132, 132}),
            "toy UCNN forward matches output_shape");
    v.check(dt < 1.0, "toy UCNN check under 1 s (" + fmt(dt) + " s)");
  }
  return v;
}

// ---------------------------------------------------------------------------
// 2. Gradient verification

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  constexpr double kLayerTol = 1e-4;
  Rng rng(2);
  auto layer = [&](nn::Layer<double>& l, Tensor<double> x, Mode mode,
                   const std::function<void()>& reset = {}) {
    for (auto* p : l.parameters()) {
      if (p->trainable) {
        for (auto& w : p->value.values()) w = rng.uniform(-1.0, 1.0);
      }
    }
    const auto r = nn::check_layer_gradients(l, std::move(x), mode, rng, {}, reset);
    v.check(r.passed(kLayerTol), l.name() + " max rel " + fmt(r.max_rel_error) + " " + r.worst);
    return r.max_rel_error;
  };
  double worst = 0.0;
  for (std::size_t k : {1u, 3u, 5u}) {
    nn::Conv2d<double> conv("conv" + std::to_string(k), 3, 4, k);
    worst = std::max(worst, layer(conv, random_tensor(rng, {2, 3, 8, 9}), Mode::kTrain));
  }
  {
    // Distinct values keep the max away from ties.
    nn::MaxPool2<double> pool("maxpool");
    Tensor<double> x(Shape{2, 3, 7, 6});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 0.01 * static_cast<double>((i * 37) % 251);
    worst = std::max(worst, layer(pool, x, Mode::kTrain));
  }
  {
    nn::BatchNorm2d<double> bn("batchnorm_train", 3);
    worst = std::max(worst, layer(bn, random_tensor(rng, {3, 3, 4, 5}), Mode::kTrain));
  }
  {
    nn::BatchNorm2d<double> bn("batchnorm_infer", 3);
    for (auto& m : bn.running_mean().value.values()) m = rng.uniform(-0.5, 0.5);
    for (auto& s : bn.running_var().value.values()) s = rng.uniform(0.5, 2.0);
    worst = std::max(worst, layer(bn, random_tensor(rng, {2, 3, 4, 5}), Mode::kInfer));
  }
  {
    nn::ReLU<double> relu("relu");
    Tensor<double> x = random_tensor(rng, {2, 3, 5, 5});
    for (auto& e : x.values()) e += e >= 0.0 ? 0.05 : -0.05;  // off the kink
    worst = std::max(worst, layer(relu, x, Mode::kTrain));
  }
  {
    nn::Dropout<double> drop("dropout", 0.5);
    worst = std::max(worst, layer(drop, random_tensor(rng, {2, 3, 5, 5}), Mode::kTrain,
                                  [&] { drop.reseed(99); }));
  }
  {
    nn::UpConv2x2<double> up("upconv", 3, 2);
    worst = std::max(worst, layer(up, random_tensor(rng, {2, 3, 4, 3}), Mode::kTrain));
  }
  {
    Tensor<double> a = random_tensor(rng, {2, 2, 10, 8}), b = random_tensor(rng, {2, 3, 6, 4});
    const Tensor<double> proj = random_tensor(rng, {2, 5, 6, 4});
    auto [da, db] = nn::crop_concat_backward(proj, a.shape(), b.shape());
    auto loss = [&] {
      const Tensor<double> c = nn::crop_concat(a, b);
      double s = 0.0;
      for (std::size_t i = 0; i < c.numel(); ++i) s += c[i] * proj[i];
      return s;
    };
    const auto r = nn::grad_check(loss, {{"a", &a, &da}, {"b", &b, &db}});
    v.check(r.passed(kLayerTol), "crop_concat " + r.worst);
    worst = std::max(worst, r.max_rel_error);
  }
  {
    Tensor<double> logits = random_tensor(rng, {2, 2, 3, 4}, -3.0, 3.0);
    std::vector<std::uint8_t> labels(24);
    std::vector<double> weights(24);
    for (std::size_t i = 0; i < 24; ++i) {
      labels[i] = static_cast<std::uint8_t>(rng.below(2));
      weights[i] = rng.bernoulli(0.3) ? 0.0 : 1.0;
    }
    nn::Conv2d<double> decayed("decayed", 2, 2, 3);
    for (auto& w : decayed.weight().value.values()) w = rng.uniform(-1.0, 1.0);
    const auto params = decayed.parameters();
    nn::zero_grad(params);
    const auto r0 = nn::weighted_softmax_xent<double>(logits, labels, weights, 0.01, params);
    Tensor<double> dl = r0.dlogits, dw = decayed.weight().grad;
    auto loss = [&] {
      return nn::weighted_softmax_xent<double>(logits, labels, weights, 0.01, params).loss;
    };
    const auto r = nn::grad_check(loss, {{"logits", &logits, &dl}, {"l2", &decayed.weight().value, &dw}});
    v.check(r.passed(kLayerTol), "weighted softmax loss " + r.worst);
    worst = std::max(worst, r.max_rel_error);
  }
  v.note("worst layer rel error " + fmt(worst, 3));

  {
    // The patch classifier at width / 8 in double precision, through the
    // training loss. A 136 input gives a 2x2 map per sample.
    Fcnn<double> net(kToyFcnn);
    net.initialize(rng);
    Tensor<double> x = random_tensor(rng, {2, 3, 136, 136}, 0.0, 1.0);
    std::vector<std::uint8_t> labels(8);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(2));
    std::vector<double> weights(8, 1.0);
    const auto params = net.parameters();
    nn::zero_grad(params);
    const auto r0 = nn::weighted_softmax_xent<double>(net.forward(x, Mode::kTrain), labels, weights,
                                                      2e-6, params);
    // The first convolution skips the input gradient.
    v.check(net.backward(r0.dlogits).numel() == 0, "FCNN returns no input gradient");
    std::vector<Tensor<double>> grads;
    for (auto* p : params) grads.push_back(p->grad);
    std::vector<nn::GradTarget> targets;
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!params[k]->trainable) continue;
      const std::string& name = params[k]->name;
      // A convolution bias followed by batch norm is a per-channel constant
      // that normalization removes; its true gradient is exactly zero.
      if (name.ends_with(".bias") && name.starts_with("conv") && name != "conv7.bias") {
        double g = 0.0;
        for (double e : grads[k].values()) g = std::max(g, std::abs(e));
        v.check(g < 1e-9, name + " gradient " + fmt(g) + " should vanish");
        continue;
      }
      targets.push_back({name, &params[k]->value, &grads[k]});
    }
    auto loss = [&] {
      return nn::weighted_softmax_xent<double>(net.forward(x, Mode::kTrain), labels, weights, 2e-6,
                                               params)
          .loss;
    };
    const auto r = nn::grad_check(loss, targets, {.step = 1e-7, .max_probes_per_tensor = 40});
    v.check(r.passed(1e-3), "toy FCNN " + fmt(r.max_rel_error) + " " + r.worst);
    v.note("toy FCNN rel error " + fmt(r.max_rel_error, 3) + " over " + std::to_string(r.probes) +
           " probes");
  }
  const double dt = seconds_since(t0);
  v.check(dt < 60.0, "suite under 60 s (" + fmt(dt) + " s)");
  return v;
}

// ---------------------------------------------------------------------------
// 3. Oracle equivalence

Verdict oracles() {
  Verdict v;
  const auto t0 = Clock::now();
  constexpr int kInputs = 100;
  std::map<std::string, int> bad;
  auto near = [](const GrayImage& a, const GrayImage& b) {
    if (!a.same_extent(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::abs(a[i] - b[i]) > 1e-9) return false;
    }
    return true;
  };
  for (int s = 0; s < kInputs; ++s) {
    Rng rng(1000 + s);
    const RgbImage rgb = oracle::random_rgb(rng, 16, 16);
    const GrayImage g = oracle::random_gray(rng, 16, 16);
    const BinaryMask m = oracle::random_mask(rng, 16, 16, rng.uniform(0.2, 0.9));
    const BinaryMask m2 = oracle::random_mask(rng, 16, 16, rng.uniform(0.1, 0.6));
    const int ksize = 3 + 2 * static_cast<int>(rng.below(4));
    const double sigma = rng.uniform(0.5, 4.0);
    const int med = 3 + 2 * static_cast<int>(rng.below(3));
    const int diam = 1 + 2 * static_cast<int>(rng.below(4));
    const int iters = 1 + static_cast<int>(rng.below(2));
    const int sx = static_cast<int>(rng.below(16)), sy = static_cast<int>(rng.below(16));

    bad["grayscale"] += !(to_grayscale(rgb) == oracle::grayscale(rgb));
    bad["laplacian"] += !near(laplacian_abs(g), oracle::laplacian(g));
    bad["gaussian"] += !near(gaussian_blur(g, ksize, sigma), oracle::gaussian(g, ksize, sigma));
    bad["median"] += !(median_filter(m, med) == oracle::median(m, med));
    bad["erosion"] += !(morph(m, MorphOp::kErode, diam, iters) == oracle::morph(m, true, diam, iters));
    bad["dilation"] += !(morph(m, MorphOp::kDilate, diam, iters) == oracle::morph(m, false, diam, iters));
    bad["opening"] += !(opening(m, diam, iters) ==
                        oracle::morph(oracle::morph(m, true, diam, iters), false, diam, iters));
    bad["distance"] += !(distance_transform(m) == oracle::distance(m));
    bad["flood"] += !(flood_fill(m, sx, sy) == oracle::flood(m, sx, sy));
    int count = 0;
    const LabelImage labels = oracle::components(m2, &count);
    const Components c = connected_components(m2);
    bad["components"] += !(c.count == count && c.labels == labels);
    bad["jaccard"] += !(jaccard(m, m2) == oracle::jaccard(m, m2));
  }
  for (const auto& [op, n] : bad) {
    v.check(n == 0, op + " mismatches on " + std::to_string(n) + "/" + std::to_string(kInputs));
  }
  v.note(std::to_string(bad.size()) + " operations x " + std::to_string(kInputs) + " inputs");
  const double dt = seconds_since(t0);
  v.check(dt < 60.0, "suite under 60 s (" + fmt(dt) + " s)");
  return v;
}

// ---------------------------------------------------------------------------
// 4. Dense equals patchwise

Verdict dense_patchwise() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(4);
  auto net = build_fcnn(rng);  // full width, random weights
  calibrate(*net, rng, 128, 20);
  RgbImage img = oracle::random_rgb(rng, 312, 264);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(std::max<int>(b, 1));
  const PyramidImage slide = build_pyramid({std::move(img), 3.84, 3.84}, 1);
  const LikelihoodMap map = infer_fcnn_dense(slide, *net, {.fcnn_tile_cells = 9});
  v.check(map.prob.width() == 24 && map.prob.height() == 18, "map extent 24x18");
  v.check(map.stride == 8 && map.offset_x == 64 && map.offset_y == 64, "stride 8, offset 64");
  double max_err = 0.0;
  float lo = 1.0f, hi = 0.0f;
  int probes = 0;
  for (int i = 0; i < map.prob.height(); i += 2) {
    for (int j = (i / 2) % 2; j < map.prob.width(); j += 2) {
      const Patch patch = read_region(slide, 0, 8 * j, 8 * i, 128, 128);
      const float p = predict_tile(*net, patch.pixels)(0, 0);
      max_err = std::max(max_err, static_cast<double>(std::abs(map.prob(j, i) - p)));
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      ++probes;
    }
  }
  v.check(max_err <= 1e-5, "max |dense - patch| " + fmt(max_err) + " > 1e-5");
  v.check(hi - lo > 1e-3, "probabilities not saturated");
  const double dt = seconds_since(t0);
  v.check(dt < 120.0, "under 120 s (" + fmt(dt) + " s)");
  v.note(std::to_string(probes) + " cells, max error " + fmt(max_err, 3) + ", spread " +
         fmt(hi - lo, 3));
  return v;
}

// ---------------------------------------------------------------------------
// 5. Empty-region neutrality

Verdict neutrality() {
  Verdict v;
  Rng rng(5);
  {
    // Loss level: logits under zero weights may take any value.
    for (int t = 0; t < 50; ++t) {
      Tensor<double> logits = random_tensor(rng, {3, 2, 6, 7}, -4.0, 4.0);
      std::vector<std::uint8_t> labels(126);
      std::vector<double> weights(126);
      for (std::size_t i = 0; i < 126; ++i) {
        labels[i] = static_cast<std::uint8_t>(rng.below(2));
        weights[i] = rng.bernoulli(0.4) ? 0.0 : 1.0;
      }
      const auto a = nn::weighted_softmax_xent<double>(logits, labels, weights, 0.0, {});
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t i = 0; i < 42; ++i) {
          if (weights[n * 42 + i] != 0.0) continue;
          logits.plane(n, 0)[i] = rng.uniform(-1e3, 1e3);
          logits.plane(n, 1)[i] = rng.uniform(-1e3, 1e3);
        }
      }
      const auto b = nn::weighted_softmax_xent<double>(logits, labels, weights, 0.0, {});
      bool zero = true;
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t i = 0; i < 42; ++i) {
          if (weights[n * 42 + i] == 0.0) {
            zero = zero && b.dlogits.plane(n, 0)[i] == 0.0 && b.dlogits.plane(n, 1)[i] == 0.0;
          }
        }
      }
      v.check(a.loss == b.loss, "loss unchanged by zero-weight logits");
      v.check(same_bits(a.dlogits.values(), b.dlogits.values()) && zero,
              "logit gradients unchanged and zero at zero-weight cells");
    }
  }
  {
    // Network level, toy U-Net with frozen statistics. The patch is scanned
    // for input columns < 103 and empty (black) beyond; output column j sees
    // input columns [j, j + 184] and is weighted only when its aligned
    // input pixel j + 92 is scanned, i.e. j <= 10.
    Ucnn<double> net({.base_channels = 4, .depth = 4, .output_size = 132, .dropout = 0.5});
    net.initialize(rng);
    calibrate(net, rng, 316, 3);
    Tensor<double> x(Shape{1, 3, 316, 316});
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 316; ++i) {
        for (std::size_t j = 0; j < 103; ++j) x.at(0, c, i, j) = rng.uniform(0.3, 1.0);
      }
    }
    std::vector<std::uint8_t> labels(132 * 132);
    std::vector<double> weights(132 * 132, 0.0);
    for (std::size_t i = 0; i < 132; ++i) {
      for (std::size_t j = 0; j <= 10; ++j) weights[i * 132 + j] = 1.0;
      for (std::size_t j = 0; j < 132; ++j) labels[i * 132 + j] = (i / 20 + j) % 2;
    }
    const auto params = net.parameters();
    auto evaluate = [&](const Tensor<double>& input) {
      nn::zero_grad(params);
      const auto r = nn::weighted_softmax_xent<double>(net.forward(input, Mode::kInfer), labels,
                                                       weights, 5e-7, params);
      net.backward(r.dlogits);
      net.clear_cache();
      std::vector<double> g;
      for (auto* p : params) {
        if (p->trainable) g.insert(g.end(), p->grad.values().begin(), p->grad.values().end());
      }
      return std::pair{r.loss, g};
    };
    const auto [loss0, grad0] = evaluate(x);
    double gnorm = 0.0;
    for (double e : grad0) gnorm += e * e;
    v.check(gnorm > 0.0, "reference gradient is non-zero");

    Tensor<double> far = x;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 316; ++i) {
        for (std::size_t j = 215; j < 316; ++j) far.at(0, c, i, j) = rng.uniform(0.0, 1.0);
      }
    }
    const auto [loss1, grad1] = evaluate(far);
    v.check(loss1 == loss0, "loss changed when mutating empty columns >= 215");
    v.check(same_bits(grad0, grad1), "gradients changed when mutating empty columns >= 215");

    // Control: an empty column inside a weighted cell's receptive field.
    Tensor<double> near = x;
    for (std::size_t i = 0; i < 316; ++i) near.at(0, 0, i, 110) = 1.0;
    const auto [loss2, grad2] = evaluate(near);
    v.check(loss2 != loss0 && !same_bits(grad0, grad2), "control mutation is visible");
    v.note("U-Net: " + std::to_string(grad0.size()) + " gradient entries bit-identical");
  }
  return v;
}

// ---------------------------------------------------------------------------
// 6. Protocol mechanics

// Pink disc on near-white background at 3.84 um.
LabeledSlide disc_slide(int w, int h, double r, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(w, h);
  BinaryMask gt(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool in = std::hypot(x - w / 2.0, y - h / 2.0) <= r;
      const int n = static_cast<int>(rng.below(9)) - 4;
      gt(x, y) = in;
      img.set(x, y, in ? Rgb{std::uint8_t(200 + n), std::uint8_t(90 + n), std::uint8_t(150 + n)}
                       : Rgb{std::uint8_t(240 + n), std::uint8_t(240 + n), std::uint8_t(240 + n)});
    }
  }
  return {"disc" + std::to_string(seed), build_pyramid({img, 3.84, 3.84}, 1), gt};
}

Verdict protocol() {
  Verdict v;
  const TrainConfig f = TrainConfig::defaults(ModelKind::kFcnn);
  const TrainConfig u = TrainConfig::defaults(ModelKind::kUcnn);
  v.check(f.train_iterations == 100 && f.val_iterations == 100 && u.train_iterations == 100 &&
              u.val_iterations == 100,
          "100 + 100 iterations per epoch");
  v.check(f.batch == 100 && u.batch == 4, "batch sizes 100 / 4");
  v.check(f.lr_patience == 10 && f.stop_patience == 50 && u.lr_patience == 10 &&
              u.stop_patience == 50,
          "patience 10 / 50");
  v.check(u.pool_size > 0 && u.replace_fraction == 0.9, "replace fraction 0.9");

  // Learning-rate schedule: one best epoch followed by n flat ones.
  for (int n = 0; n <= 60; ++n) {
    std::vector<double> h{0.9};
    h.insert(h.end(), static_cast<std::size_t>(n), 0.85);
    const LrDecision d = schedule_lr(h, f);
    v.check(d.lr == f.initial_lr / std::pow(2.0, n / 10), "lr after " + std::to_string(n) + " flat");
    v.check(d.stop == (n >= 50), "stop after " + std::to_string(n) + " flat");
  }

  // Selection probability and replacement count.
  for (int k = 0; k <= 1000; ++k) {
    const double a = k / 1000.0;
    v.check(selection_probability(a) == std::max(1.0 - a, 0.01), "p_sel at a=" + fmt(a));
  }
  for (std::size_t n = 1; n <= 1000; ++n) {
    v.check(replacement_count(n, 0.9) == (9 * n + 9) / 10, "ceil(0.9 * " + std::to_string(n) + ")");
  }
  {
    const std::vector<LabeledSlide> slides{disc_slide(300, 300, 100, 1)};
    const PatchSampler sampler(slides, ModelKind::kUcnn, 316 - 184 + 184, 132, 3.84);
    Rng rng(6);
    std::vector<PatchRecord> pool;
    std::vector<double> acc;
    for (int i = 0; i < 400; ++i) {
      PatchRecord r;
      r.last_accuracy = std::round(rng.uniform() * 1000.0) / 1000.0;
      r.selection_probability = selection_probability(r.last_accuracy);
      acc.push_back(r.last_accuracy);
      pool.push_back(std::move(r));
    }
    std::vector<std::size_t> order(400);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return acc[a] > acc[b]; });
    std::set<std::size_t> replaced(order.begin(), order.begin() + 360);
    const std::vector<PatchRecord> before = pool;
    refresh_pool(pool, sampler, 0.9, rng);
    int fresh = 0;
    bool exact = true;
    for (std::size_t i = 0; i < 400; ++i) {
      const bool is_fresh = pool[i].pixels.width() == 316;
      fresh += is_fresh;
      exact = exact && is_fresh == (replaced.count(i) == 1);
      if (is_fresh) exact = exact && pool[i].selection_probability == 1.0;
    }
    v.check(fresh == 360 && exact, "refresh replaced the 360 most accurate records");
  }

  // The loop follows the schedule: patience counted from real validation
  // accuracies of a small run with default patience.
  {
    const std::vector<LabeledSlide> tr{disc_slide(300, 300, 90, 2)}, va{disc_slide(300, 300, 80, 3)};
    TrainConfig cfg = f;
    cfg.fcnn = kToyFcnn;
    cfg.train_iterations = 1;
    cfg.val_iterations = 1;
    cfg.batch = 2;
    cfg.augmentations = 1;
    cfg.max_epochs = 400;
    cfg.seed = 7;
    const TrainResult r = train(tr, va, cfg);
    std::vector<double> history;
    bool follows = true;
    int last_best = 0, halvings_seen = 0;
    double best = -1.0;
    for (const EpochLog& e : r.log) {
      follows = follows && e.lr == schedule_lr(history, cfg).lr;
      if (!history.empty() && e.lr < schedule_lr({history.begin(), history.end() - 1}, cfg).lr) {
        ++halvings_seen;
      }
      history.push_back(e.val_accuracy);
      if (e.val_accuracy > best) {
        best = e.val_accuracy;
        last_best = e.epoch;
      }
    }
    const EpochLog& last = r.log.back();
    v.check(follows, "per-epoch lr equals the schedule");
    v.check(last.stopped && last.epoch - last_best == 50, "stopped exactly 50 epochs after best");
    v.check(r.best_epoch == last_best, "kept weights of the best epoch");
    v.check(halvings_seen >= 4, "run exercised lr halving");
    v.note("schedule run stopped at epoch " + std::to_string(last.epoch) + " with " +
           std::to_string(halvings_seen) + " halvings");
  }

  // One epoch with the default iteration counts and batch sizes.
  for (ModelKind kind : {ModelKind::kFcnn, ModelKind::kUcnn}) {
    const auto t0 = Clock::now();
    const std::vector<LabeledSlide> tr{disc_slide(420, 420, 150, 4)}, va{disc_slide(420, 420, 140, 5)};
    TrainConfig cfg = TrainConfig::defaults(kind);
    cfg.fcnn = kToyFcnn;
    cfg.ucnn = kToyUcnn;
    cfg.max_epochs = 1;
    const TrainResult r = train(tr, va, cfg);
    const EpochLog& e = r.log.at(0);
    const std::size_t b = static_cast<std::size_t>(cfg.batch);
    const std::string name = to_string(kind);
    v.check(e.train_batches == 100 && e.val_batches == 100, name + " 100 + 100 iterations");
    v.check(e.train_samples == 100 * b * 5, name + " training samples = 100 x batch x (1 + 4)");
    v.check(e.val_samples == 100 * b, name + " validation samples = 100 x batch");
    v.note(name + " default epoch " + fmt(seconds_since(t0), 3) + " s");
  }
  return v;
}

// ---------------------------------------------------------------------------
// 7 / 8. Desk-scale run and its repetition

struct DeskRun {
  bool ok = false;
  std::string error;
  std::map<std::string, double> mean;  // per method
  std::vector<fs::path> artifacts;     // relative to the run directory
  double seconds = 0.0;
};

constexpr std::uint64_t kDeskSeed = 11;

DeskRun desk_run(const fs::path& dir) {
  DeskRun out;
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream o, e;
    const int code = run_cli(args, o, e);
    if (code != 0) {
      std::string cmd;
      for (const auto& a : args) cmd += a + " ";
      throw std::runtime_error("`" + cmd + "` exited " + std::to_string(code) + ": " + e.str());
    }
    return o.str();
  };
  try {
    const std::string seed = std::to_string(kDeskSeed);
    const fs::path corpus = dir / "corpus";
    cli({"synth", "--seed", seed, "--out", corpus.string(), "--slides", "12", "--mode", "easy"});
    auto slide = [&](int k) {
      char name[16];
      std::snprintf(name, sizeof name, "slide_%03d", k);
      return (corpus / name).string();
    };
    std::vector<std::string> train_set, val_set;
    for (int k = 0; k < 6; ++k) train_set.push_back(slide(k));
    for (int k = 6; k < 9; ++k) val_set.push_back(slide(k));

    std::vector<std::string> fcnn = {"train", "--model", "fcnn", "--seed", seed, "--out",
                                     (dir / "fcnn.wseg").string(), "--width-divisor", "8",
                                     "--epochs", "30", "--train-iterations", "20",
                                     "--val-iterations", "20", "--batch", "20", "--train"};
    fcnn.insert(fcnn.end(), train_set.begin(), train_set.end());
    fcnn.push_back("--val");
    fcnn.insert(fcnn.end(), val_set.begin(), val_set.end());
    cli(fcnn);

    std::vector<std::string> ucnn = {"train", "--model", "ucnn", "--seed", seed, "--out",
                                     (dir / "ucnn.wseg").string(), "--base-channels", "4",
                                     "--depth", "4", "--output-size", "132", "--epochs", "30",
                                     "--train-iterations", "12", "--val-iterations", "5",
                                     "--batch", "2", "--pool-size", "24", "--train"};
    ucnn.insert(ucnn.end(), train_set.begin(), train_set.end());
    ucnn.push_back("--val");
    ucnn.insert(ucnn.end(), val_set.begin(), val_set.end());
    cli(ucnn);
    out.artifacts = {"fcnn.wseg", "fcnn.wseg.log", "ucnn.wseg", "ucnn.wseg.log"};

    std::vector<std::string> report = {"report", "--out", (dir / "report.tsv").string(),
                                       "--inputs"};
    for (int k = 9; k < 12; ++k) {
      for (const std::string method : {"fesi", "fcnn", "ucnn"}) {
        const std::string tag = method + "_" + std::to_string(k);
        std::vector<std::string> seg = {"segment", "--method", method, "--input", slide(k),
                                        "--out", (dir / (tag + ".pgm")).string()};
        if (method != "fesi") {
          seg.push_back("--weights");
          seg.push_back((dir / (method + ".wseg")).string());
        }
        cli(seg);
        cli({"eval", "--pred", (dir / (tag + ".pgm")).string(), "--gt", slide(k) + "/gt.pgm",
             "--method", method, "--out", (dir / (tag + ".tsv")).string()});
        report.push_back((dir / (tag + ".tsv")).string());
        out.artifacts.push_back(tag + ".pgm");
        out.artifacts.push_back(tag + ".tsv");
      }
    }
    cli(report);
    out.artifacts.push_back("report.tsv");
    std::ifstream rf(dir / "report.tsv");
    for (const auto& s : summarize(parse_rows(rf)).summaries) out.mean[s.method] = s.mean;
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = seconds_since(t0);
  return out;
}

Verdict desk(const DeskRun& r) {
  Verdict v;
  v.check(r.ok, "pipeline: " + r.error);
  if (!r.ok) return v;
  auto mean = [&](const std::string& m) { return r.mean.count(m) ? r.mean.at(m) : 0.0; };
  v.check(mean("fcnn") >= 0.90, "FCNN mean Jaccard " + fmt(mean("fcnn")) + " < 0.90");
  v.check(mean("ucnn") >= 0.90, "U-Net mean Jaccard " + fmt(mean("ucnn")) + " < 0.90");
  v.check(mean("fesi") >= 0.85, "FESI mean Jaccard " + fmt(mean("fesi")) + " < 0.85");
  v.check(r.seconds <= 1800.0, "runtime " + fmt(r.seconds) + " s > 30 min");
  v.note("mean Jaccard fesi " + fmt(mean("fesi")) + ", fcnn " + fmt(mean("fcnn")) + ", ucnn " +
         fmt(mean("ucnn")) + "; " + fmt(r.seconds, 4) + " s");
  return v;
}

Verdict determinism(const fs::path& a, const DeskRun& ra, const fs::path& b, const DeskRun& rb) {
  Verdict v;
  v.check(ra.ok && rb.ok, "both runs completed: " + ra.error + rb.error);
  if (!ra.ok || !rb.ok) return v;
  for (const auto& f : ra.artifacts) {
    const auto x = file_bytes(a / f), y = file_bytes(b / f);
    v.check(!x.empty() && x == y, f.string() + " differs");
  }
  for (int k = 0; k < 12; ++k) {
    char name[16];
    std::snprintf(name, sizeof name, "slide_%03d", k);
    for (const char* f : {"gt.pgm", "level_0.ppm"}) {
      v.check(file_bytes(a / "corpus" / name / f) == file_bytes(b / "corpus" / name / f),
              std::string(name) + "/" + f + " differs");
    }
  }
  v.note(std::to_string(ra.artifacts.size()) + " weight, log, mask and report files compared");
  return v;
}

// ---------------------------------------------------------------------------
// 9. Round trips

Verdict round_trips(const fs::path& dir) {
  Verdict v;
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const int w = 1 + static_cast<int>(rng.below(300)), h = 1 + static_cast<int>(rng.below(300));
    int levels = 1;
    while (levels < 4 && (w >> levels) >= 1 && (h >> levels) >= 1 && rng.bernoulli(0.7)) ++levels;
    const Rgb empty{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)),
                    std::uint8_t(rng.below(256))};
    const double spacing = rng.uniform(0.2, 5.0);
    const PyramidImage p =
        build_pyramid({oracle::random_rgb(rng, w, h), spacing, spacing}, levels, empty);
    const fs::path d1 = dir / ("p" + std::to_string(t)), d2 = dir / ("q" + std::to_string(t));
    save_pyramid(p, d1);
    const PyramidImage q = load_pyramid(d1);
    bool same = q.level_count() == p.level_count() && q.empty_color() == p.empty_color();
    for (std::size_t i = 0; same && i < p.level_count(); ++i) {
      same = q.level(i).pixels == p.level(i).pixels &&
             q.level(i).spacing_x == p.level(i).spacing_x &&
             q.level(i).spacing_y == p.level(i).spacing_y;
    }
    save_pyramid(q, d2);
    for (std::size_t i = 0; same && i < p.level_count(); ++i) {
      const std::string f = "level_" + std::to_string(i) + ".ppm";
      same = file_bytes(d1 / f) == file_bytes(d2 / f);
    }
    same = same && file_bytes(d1 / "manifest.txt") == file_bytes(d2 / "manifest.txt");
    v.check(same, "pyramid " + std::to_string(w) + "x" + std::to_string(h));
  }
  auto weights_equal = [](const WeightSet& a, const WeightSet& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t k = 0; k < a.tensors.size(); ++k) {
      if (a.tensors[k].name != b.tensors[k].name ||
          a.tensors[k].tensor.shape() != b.tensors[k].tensor.shape() ||
          !same_bits(a.tensors[k].tensor.values(), b.tensors[k].tensor.values())) {
        return false;
      }
    }
    return true;
  };
  for (int t = 0; t < 10; ++t) {
    // Arbitrary bit patterns, NaNs and subnormals included.
    WeightSet ws;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int k = 0; k < n; ++k) {
      Shape s;
      const int rank = 1 + static_cast<int>(rng.below(4));
      for (int r = 0; r < rank; ++r) s.push_back(1 + rng.below(5));
      Tensor<float> tensor(s);
      for (auto& e : tensor.values()) {
        const auto bits = static_cast<std::uint32_t>(rng.next_u64());
        std::memcpy(&e, &bits, sizeof bits);
      }
      ws.tensors.push_back({"t" + std::to_string(t) + "." + std::to_string(k), std::move(tensor)});
    }
    const fs::path f1 = dir / "a.wseg", f2 = dir / "b.wseg";
    save_weights(ws, f1);
    const WeightSet back = load_weights(f1);
    save_weights(back, f2);
    v.check(weights_equal(ws, back) && file_bytes(f1) == file_bytes(f2),
            "random weight set " + std::to_string(t));
  }
  for (ModelKind kind : {ModelKind::kFcnn, ModelKind::kUcnn}) {
    std::unique_ptr<Network<float>> net;
    if (kind == ModelKind::kFcnn) net = build_fcnn(rng, kToyFcnn);
    else net = build_ucnn(rng, kToyUcnn);
    calibrate(*net, rng, net->spec().input_size, 2);
    const WeightSet ws = net->export_weights();
    save_weights(ws, dir / "net.wseg");
    const WeightSet back = load_weights(dir / "net.wseg");
    auto rebuilt = network_from_weights(back);
    v.check(weights_equal(ws, back) && weights_equal(rebuilt->export_weights(), ws),
            to_string(kind) + " network weights");
  }
  v.note("20 pyramids, 10 random weight sets, 2 networks");
  return v;
}

}  // namespace
}  // namespace slidecarver::acceptance

int main(int argc, char** argv) {
  using namespace slidecarver::acceptance;
  namespace fs = std::filesystem;
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string workdir = (fs::temp_directory_path() / "slidecarver_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--workdir", workdir, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  std::set<int> run(only.begin(), only.end());
  if (run.empty()) run = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const fs::path work(workdir);

  bool all = true;
  auto report = [&](int id, const std::string& title, const std::function<Verdict()>& fn) {
    if (!run.count(id)) return;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    all = all && v.passed();
    std::cout << "criterion " << id << " " << (v.passed() ? "PASS" : "FAIL") << "  " << title
              << " (" << fmt(seconds_since(t0), 3) << " s): " << v.summary() << std::endl;
  };

  report(1, "shape contracts", shapes);
  report(2, "gradient verification", gradients);
  report(3, "oracle equivalence", oracles);
  report(4, "dense equals patchwise", dense_patchwise);
  report(5, "empty-region neutrality", neutrality);
  report(6, "protocol mechanics", protocol);
  DeskRun first;
  bool have_first = false;
  report(7, "desk-scale run", [&] {
    first = desk_run(work / "desk_a");
    have_first = true;
    return desk(first);
  });
  report(8, "determinism", [&] {
    if (!have_first) first = desk_run(work / "desk_a");
    const DeskRun second = desk_run(work / "desk_b");
    return determinism(work / "desk_a", first, work / "desk_b", second);
  });
  report(9, "round trips", [&] { return round_trips(work / "roundtrip"); });
  return all ? 0 : 1;
}
