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

/// @file layers.hpp
/// @brief Layers with explicit forward and backward passes.
///
/// Every layer caches what its backward pass needs during `forward`, so a
/// backward call must follow the matching forward call. Parameter gradients
/// accumulate until `zero_grad`. All layers are templated on the scalar type:
/// training runs in float, gradient checks in double.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "slidecarver/nn/tensor.hpp"
#include "slidecarver/rng.hpp"

namespace slidecarver::nn {

enum class Mode { kTrain, kInfer };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;  // false for batch-norm running statistics
  bool decay = false;     // part of the L2 penalty (convolution weights only)
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }

  /// Releases cached activations.
  virtual void clear_cache() {}

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// ---------------------------------------------------------------------------
// Convolution

/// Valid (unpadded) stride-1 cross-correlation. Weights are laid out
/// (out_channels, in_channels, k, k).
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel)
      : Layer<T>(std::move(name)), cin_(in_channels), cout_(out_channels), k_(kernel) {
    if (in_channels == 0 || out_channels == 0 || kernel == 0) {
      throw UsageError("conv layer " + this->name() + " needs positive geometry");
    }
    weight_ = {this->name() + ".weight", Tensor<T>(Shape{cout_, cin_, k_, k_}),
               Tensor<T>(Shape{cout_, cin_, k_, k_}), true, true};
    bias_ = {this->name() + ".bias", Tensor<T>(Shape{cout_}), Tensor<T>(Shape{cout_}), true, false};
  }

  std::size_t in_channels() const { return cin_; }
  std::size_t out_channels() const { return cout_; }
  std::size_t kernel() const { return k_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  /// The first layer of a network never needs its input gradient.
  void set_propagate_input_grad(bool v) { propagate_input_grad_ = v; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != cin_) {
      throw ShapeError(this->name() + ": expected (N," + std::to_string(cin_) + ",H,W) input, got " +
                       shape_string(in));
    }
    if (in[2] < k_ || in[3] < k_) {
      throw ShapeError(this->name() + ": kernel " + std::to_string(k_) +
                       " larger than input " + shape_string(in));
    }
    return {in[0], cout_, in[2] - k_ + 1, in[3] - k_ + 1};
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(output_shape(x.shape()));
    input_ = x;
    if (use_im2col(y)) {
      forward_im2col(x, y);
    } else {
      forward_shifted(x, y);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (input_.empty()) throw UsageError(this->name() + ": backward without forward");
    if (dy.shape() != output_shape(input_.shape())) {
      throw ShapeError(this->name() + ": gradient shape mismatch");
    }
    Tensor<T> dx;
    if (propagate_input_grad_) dx = Tensor<T>(input_.shape());
    // Bias gradient: per-channel sum over batch and space.
    const std::size_t plane = dy.h() * dy.w();
    for (std::size_t co = 0; co < cout_; ++co) {
      T acc = 0;
      for (std::size_t n = 0; n < dy.n(); ++n) {
        const T* p = dy.plane(n, co);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      bias_.grad[co] += acc;
    }
    if (use_im2col(dy)) {
      backward_im2col(dy, dx);
    } else {
      backward_shifted(dy, dx);
    }
    return dx;
  }

  void clear_cache() override { input_ = Tensor<T>(); }

 private:
  static constexpr std::size_t kIm2colMaxSpatial = 1024;
  static constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

  bool use_im2col(const Tensor<T>& y) const { return y.h() * y.w() <= kIm2colMaxSpatial; }

  std::size_t depth() const { return cin_ * k_ * k_; }

  // cols rows are (ci, ky, kx); columns are (sample, oy, ox).
  void im2col(const Tensor<T>& x, std::size_t n, std::size_t ho, std::size_t wo, T* cols,
              std::size_t ld, std::size_t col0) const {
    const std::size_t win = x.w();
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      const T* src = x.plane(n, ci);
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          T* row = cols + ((ci * k_ + ky) * k_ + kx) * ld + col0;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            std::copy_n(src + (oy + ky) * win + kx, wo, row + oy * wo);
          }
        }
      }
    }
  }

  void col2im(const T* cols, std::size_t ld, std::size_t col0, std::size_t ho, std::size_t wo,
              Tensor<T>& dx, std::size_t n) const {
    const std::size_t win = dx.w();
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      T* dst = dx.plane(n, ci);
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const T* row = cols + ((ci * k_ + ky) * k_ + kx) * ld + col0;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            T* d = dst + (oy + ky) * win + kx;
            const T* s = row + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) d[ox] += s[ox];
          }
        }
      }
    }
  }

  std::size_t samples_per_chunk(std::size_t spatial) const {
    const std::size_t per = std::max<std::size_t>(1, depth() * spatial);
    return std::max<std::size_t>(1, kColumnBudget / per);
  }

  void forward_im2col(const Tensor<T>& x, Tensor<T>& y) {
    const std::size_t ho = y.h(), wo = y.w(), p = ho * wo, batch = x.n();
    const std::size_t chunk = samples_per_chunk(p);
    ConstMatMap<T> w(weight_.value.data(), cout_, depth());
    for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
      const std::size_t nc = std::min(chunk, batch - n0), ld = nc * p;
      cols_.resize(depth() * ld);
      for (std::size_t i = 0; i < nc; ++i) im2col(x, n0 + i, ho, wo, cols_.data(), ld, i * p);
      out_.resize(cout_ * ld);
      MatMap<T> out(out_.data(), cout_, ld);
      out.noalias() = w * ConstMatMap<T>(cols_.data(), depth(), ld);
      for (std::size_t i = 0; i < nc; ++i) {
        for (std::size_t co = 0; co < cout_; ++co) {
          const T* s = out_.data() + co * ld + i * p;
          T* d = y.plane(n0 + i, co);
          const T b = bias_.value[co];
          for (std::size_t j = 0; j < p; ++j) d[j] = s[j] + b;
        }
      }
    }
  }

  void backward_im2col(const Tensor<T>& dy, Tensor<T>& dx) {
    const std::size_t ho = dy.h(), wo = dy.w(), p = ho * wo, batch = dy.n();
    const std::size_t chunk = samples_per_chunk(p);
    ConstMatMap<T> w(weight_.value.data(), cout_, depth());
    MatMap<T> dw(weight_.grad.data(), cout_, depth());
    for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
      const std::size_t nc = std::min(chunk, batch - n0), ld = nc * p;
      cols_.resize(depth() * ld);
      for (std::size_t i = 0; i < nc; ++i) {
        im2col(input_, n0 + i, ho, wo, cols_.data(), ld, i * p);
      }
      out_.resize(cout_ * ld);
      for (std::size_t i = 0; i < nc; ++i) {
        for (std::size_t co = 0; co < cout_; ++co) {
          std::copy_n(dy.plane(n0 + i, co), p, out_.data() + co * ld + i * p);
        }
      }
      ConstMatMap<T> g(out_.data(), cout_, ld);
      ConstMatMap<T> cols(cols_.data(), depth(), ld);
      dw.noalias() += g * cols.transpose();
      if (propagate_input_grad_) {
        dcols_.resize(depth() * ld);
        MatMap<T> dcols(dcols_.data(), depth(), ld);
        dcols.noalias() = w.transpose() * g;
        for (std::size_t i = 0; i < nc; ++i) col2im(dcols_.data(), ld, i * p, ho, wo, dx, n0 + i);
      }
    }
  }

  // Per-sample path for large outputs: the output is computed over full
  // input-width rows, so each kernel tap becomes one GEMM against a
  // contiguous shifted view of the input. Columns ox >= wo are scratch.
  void pack_taps() {
    taps_.resize(k_ * k_);
    for (std::size_t t = 0; t < k_ * k_; ++t) {
      taps_[t].resize(cout_, cin_);
      for (std::size_t co = 0; co < cout_; ++co) {
        for (std::size_t ci = 0; ci < cin_; ++ci) {
          taps_[t](co, ci) = weight_.value[(co * cin_ + ci) * k_ * k_ + t];
        }
      }
    }
  }

  void load_padded(const Tensor<T>& x, std::size_t n, std::size_t stride) {
    const std::size_t plane = x.h() * x.w();
    xbuf_.assign(cin_ * stride, T(0));
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      std::copy_n(x.plane(n, ci), plane, xbuf_.data() + ci * stride);
    }
  }

  // Copies the k*k shifted views of every padded input channel into cols_,
  // giving a (cin*k*k, len) matrix for a single GEMM.
  void shifted_cols(std::size_t win, std::size_t stride, std::size_t len) {
    cols_.resize(depth() * len);
    for (std::size_t ci = 0; ci < cin_; ++ci) {
      for (std::size_t t = 0; t < k_ * k_; ++t) {
        const std::size_t off = (t / k_) * win + t % k_;
        std::copy_n(xbuf_.data() + ci * stride + off, len, cols_.data() + (ci * k_ * k_ + t) * len);
      }
    }
  }

  bool cols_fit(std::size_t len) const { return depth() * len <= kColumnBudget; }

  void forward_shifted(const Tensor<T>& x, Tensor<T>& y) {
    const std::size_t win = x.w(), ho = y.h(), wo = y.w();
    const std::size_t stride = x.h() * win + k_ - 1, len = ho * win;
    pack_taps();
    RowMatrix<T> full(cout_, len);
    for (std::size_t n = 0; n < x.n(); ++n) {
      load_padded(x, n, stride);
      ConstMatMap<T> xb(xbuf_.data(), cin_, stride);
      full.setZero();
      for (std::size_t t = 0; t < k_ * k_; ++t) {
        full.noalias() += taps_[t] * xb.middleCols((t / k_) * win + t % k_, len);
      }
      for (std::size_t co = 0; co < cout_; ++co) {
        T* d = y.plane(n, co);
        const T b = bias_.value[co];
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const T* s = full.data() + co * len + oy * win;
          for (std::size_t ox = 0; ox < wo; ++ox) d[oy * wo + ox] = s[ox] + b;
        }
      }
    }
  }

  void backward_shifted(const Tensor<T>& dy, Tensor<T>& dx) {
    const std::size_t win = input_.w(), ho = dy.h(), wo = dy.w();
    const std::size_t stride = input_.h() * win + k_ - 1, len = ho * win;
    pack_taps();
    MatMap<T> dw(weight_.grad.data(), cout_, depth());
    RowMatrix<T> g(cout_, len);
    RowMatrix<T> dxb;
    if (propagate_input_grad_) dxb.resize(cin_, stride);
    for (std::size_t n = 0; n < dy.n(); ++n) {
      load_padded(input_, n, stride);
      ConstMatMap<T> xb(xbuf_.data(), cin_, stride);
      g.setZero();
      for (std::size_t co = 0; co < cout_; ++co) {
        const T* s = dy.plane(n, co);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          std::copy_n(s + oy * wo, wo, g.data() + co * len + oy * win);
        }
      }
      // A per-tap weight gradient has only cout x cin outputs, which GEMM
      // handles poorly; one product against all shifted rows is much faster.
      if (cols_fit(len)) {
        shifted_cols(win, stride, len);
        dw.noalias() += g * ConstMatMap<T>(cols_.data(), depth(), len).transpose();
      } else {
        for (std::size_t t = 0; t < k_ * k_; ++t) {
          const std::size_t off = (t / k_) * win + t % k_;
          dtap_.noalias() = g * xb.middleCols(off, len).transpose();
          for (std::size_t co = 0; co < cout_; ++co) {
            for (std::size_t ci = 0; ci < cin_; ++ci) dw(co, ci * k_ * k_ + t) += dtap_(co, ci);
          }
        }
      }
      if (propagate_input_grad_) {
        dxb.setZero();
        for (std::size_t t = 0; t < k_ * k_; ++t) {
          const std::size_t off = (t / k_) * win + t % k_;
          dxb.middleCols(off, len).noalias() += taps_[t].transpose() * g;
        }
        const std::size_t plane = input_.h() * win;
        for (std::size_t ci = 0; ci < cin_; ++ci) {
          T* d = dx.plane(n, ci);
          const T* s = dxb.data() + ci * stride;
          for (std::size_t i = 0; i < plane; ++i) d[i] += s[i];
        }
      }
    }
  }

  std::size_t cin_, cout_, k_;
  bool propagate_input_grad_ = true;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
  AlignedVector<T> cols_, dcols_, out_, xbuf_;
  std::vector<RowMatrix<T>> taps_;
  RowMatrix<T> dtap_;
};

// ---------------------------------------------------------------------------
// Transposed convolution

/// 2x2 stride-2 transposed convolution: each input pixel writes a 2x2 block.
/// Weights are laid out (in_channels, out_channels, 2, 2). Without bias this
/// is the adjoint of the stride-2 2x2 convolution sharing the same weights.
template <typename T>
class UpConv2x2 final : public Layer<T> {
 public:
  UpConv2x2(std::string name, std::size_t in_channels, std::size_t out_channels)
      : Layer<T>(std::move(name)), cin_(in_channels), cout_(out_channels) {
    weight_ = {this->name() + ".weight", Tensor<T>(Shape{cin_, cout_, 2, 2}),
               Tensor<T>(Shape{cin_, cout_, 2, 2}), true, true};
    bias_ = {this->name() + ".bias", Tensor<T>(Shape{cout_}), Tensor<T>(Shape{cout_}), true, false};
  }

  std::size_t in_channels() const { return cin_; }
  std::size_t out_channels() const { return cout_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != cin_) {
      throw ShapeError(this->name() + ": bad input shape " + shape_string(in));
    }
    return {in[0], cout_, 2 * in[2], 2 * in[3]};
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(output_shape(x.shape()));
    input_ = x;
    const std::size_t h = x.h(), w = x.w(), p = h * w;
    ConstMatMap<T> wm(weight_.value.data(), cin_, cout_ * 4);
    RowMatrix<T> z(cout_ * 4, p);
    for (std::size_t n = 0; n < x.n(); ++n) {
      ConstMatMap<T> xm(x.plane(n, 0), cin_, p);
      z.noalias() = wm.transpose() * xm;
      for (std::size_t co = 0; co < cout_; ++co) {
        T* d = y.plane(n, co);
        const T b = bias_.value[co];
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t bb = 0; bb < 2; ++bb) {
            const T* s = z.data() + (co * 4 + a * 2 + bb) * p;
            for (std::size_t i = 0; i < h; ++i) {
              T* row = d + (2 * i + a) * (2 * w) + bb;
              for (std::size_t j = 0; j < w; ++j) row[2 * j] = s[i * w + j] + b;
            }
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (input_.empty()) throw UsageError(this->name() + ": backward without forward");
    const std::size_t h = input_.h(), w = input_.w(), p = h * w;
    Tensor<T> dx(input_.shape());
    ConstMatMap<T> wm(weight_.value.data(), cin_, cout_ * 4);
    MatMap<T> dwm(weight_.grad.data(), cin_, cout_ * 4);
    RowMatrix<T> g(cout_ * 4, p);
    for (std::size_t n = 0; n < dy.n(); ++n) {
      for (std::size_t co = 0; co < cout_; ++co) {
        const T* s = dy.plane(n, co);
        T bsum = 0;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t bb = 0; bb < 2; ++bb) {
            T* d = g.data() + (co * 4 + a * 2 + bb) * p;
            for (std::size_t i = 0; i < h; ++i) {
              const T* row = s + (2 * i + a) * (2 * w) + bb;
              for (std::size_t j = 0; j < w; ++j) {
                d[i * w + j] = row[2 * j];
                bsum += row[2 * j];
              }
            }
          }
        }
        bias_.grad[co] += bsum;
      }
      ConstMatMap<T> xm(input_.plane(n, 0), cin_, p);
      dwm.noalias() += xm * g.transpose();
      MatMap<T> dxm(dx.plane(n, 0), cin_, p);
      dxm.noalias() = wm * g;
    }
    return dx;
  }

  void clear_cache() override { input_ = Tensor<T>(); }

 private:
  std::size_t cin_, cout_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Batch normalization

/// Per-channel normalization over batch and space. Train mode uses batch
/// statistics and folds them into running estimates with momentum 0.9
/// (running = 0.9 * running + 0.1 * batch, biased variance); infer mode uses
/// the running estimates.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm2d(std::string name, std::size_t channels)
      : Layer<T>(std::move(name)), c_(channels) {
    gamma_ = {this->name() + ".gamma", Tensor<T>(Shape{c_}, T(1)), Tensor<T>(Shape{c_}), true, false};
    beta_ = {this->name() + ".beta", Tensor<T>(Shape{c_}), Tensor<T>(Shape{c_}), true, false};
    running_mean_ = {this->name() + ".running_mean", Tensor<T>(Shape{c_}), Tensor<T>(Shape{c_}), false,
                     false};
    running_var_ = {this->name() + ".running_var", Tensor<T>(Shape{c_}, T(1)), Tensor<T>(Shape{c_}),
                    false, false};
  }

  std::size_t channels() const { return c_; }
  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Parameter<T>& running_mean() { return running_mean_; }
  Parameter<T>& running_var() { return running_var_; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4 || in[1] != c_) {
      throw ShapeError(this->name() + ": channel mismatch, expected " + std::to_string(c_) +
                       " got " + shape_string(in));
    }
    return in;
  }

  std::vector<Parameter<T>*> parameters() override {
    return {&gamma_, &beta_, &running_mean_, &running_var_};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    output_shape(x.shape());
    Tensor<T> y(x.shape());
    const std::size_t plane = x.h() * x.w();
    if (mode == Mode::kInfer) {
      // xhat is kept so that a backward pass through the frozen statistics
      // is possible, like every other layer's cache.
      xhat_ = Tensor<T>(x.shape());
      inv_std_.assign(c_, 0.0);
      for (std::size_t c = 0; c < c_; ++c) {
        const double inv = 1.0 / std::sqrt(double(running_var_.value[c]) + kEpsilon);
        inv_std_[c] = inv;
        const T scale = static_cast<T>(gamma_.value[c] * inv);
        const T shift = beta_.value[c] - scale * running_mean_.value[c];
        const T mean = running_mean_.value[c], tinv = static_cast<T>(inv);
        for (std::size_t n = 0; n < x.n(); ++n) {
          const T* s = x.plane(n, c);
          T* xh = xhat_.plane(n, c);
          T* d = y.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) {
            d[i] = s[i] * scale + shift;
            xh[i] = (s[i] - mean) * tinv;
          }
        }
      }
      state_ = State::kInfer;
      return y;
    }
    const double count = static_cast<double>(x.n() * plane);
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(c_, 0.0);
    for (std::size_t c = 0; c < c_; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* s = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += s[i];
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* s = x.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = s[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / count;
      const double inv = 1.0 / std::sqrt(var + kEpsilon);
      inv_std_[c] = inv;
      const T g = gamma_.value[c], b = beta_.value[c];
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* s = x.plane(n, c);
        T* xh = xhat_.plane(n, c);
        T* d = y.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          xh[i] = static_cast<T>((s[i] - mean) * inv);
          d[i] = g * xh[i] + b;
        }
      }
      running_mean_.value[c] =
          static_cast<T>(kMomentum * running_mean_.value[c] + (1.0 - kMomentum) * mean);
      running_var_.value[c] =
          static_cast<T>(kMomentum * running_var_.value[c] + (1.0 - kMomentum) * var);
    }
    state_ = State::kTrain;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (state_ == State::kNone) throw UsageError(this->name() + ": backward without forward");
    const std::size_t plane = dy.h() * dy.w();
    const double count = static_cast<double>(dy.n() * plane);
    Tensor<T> dx(dy.shape());
    if (state_ == State::kInfer) {
      // Frozen statistics: a per-channel affine map.
      for (std::size_t c = 0; c < c_; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        const T k = static_cast<T>(gamma_.value[c] * inv_std_[c]);
        for (std::size_t n = 0; n < dy.n(); ++n) {
          const T* g = dy.plane(n, c);
          const T* xh = xhat_.plane(n, c);
          T* d = dx.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += g[i];
            sum_dy_xhat += double(g[i]) * xh[i];
            d[i] = g[i] * k;
          }
        }
        gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
        beta_.grad[c] += static_cast<T>(sum_dy);
      }
      return dx;
    }
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += double(g[i]) * xh[i];
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad[c] += static_cast<T>(sum_dy);
      const double k = gamma_.value[c] * inv_std_[c] / count;
      const double mean_dy = sum_dy, mean_dy_xhat = sum_dy_xhat;
      for (std::size_t n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        T* d = dx.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          d[i] = static_cast<T>(k * (count * g[i] - mean_dy - xh[i] * mean_dy_xhat));
        }
      }
    }
    return dx;
  }

  void clear_cache() override {
    xhat_ = Tensor<T>();
    state_ = State::kNone;
  }

 private:
  std::size_t c_;
  Parameter<T> gamma_, beta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  enum class State { kNone, kTrain, kInfer } state_ = State::kNone;
};

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = output_[i] > T(0) ? dy[i] : T(0);
    return dx;
  }

  void clear_cache() override { output_ = Tensor<T>(); }

 private:
  Tensor<T> output_;
};

/// Inverted dropout: train mode zeroes each unit with probability p and
/// scales survivors by 1 / (1 - p); infer mode is the identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::string name, double p, std::uint64_t seed = 0)
      : Layer<T>(std::move(name)), p_(p), rng_(seed) {
    if (!(p >= 0.0 && p < 1.0)) throw UsageError("dropout probability must be in [0, 1)");
  }

  double probability() const { return p_; }
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::kInfer || p_ == 0.0) {
      mask_.clear();
      return x;
    }
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    mask_.resize(x.numel());
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      mask_[i] = rng_.uniform() >= p_ ? 1 : 0;
      y[i] = mask_[i] ? x[i] * scale : T(0);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (mask_.empty()) return dy;
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = mask_[i] ? dy[i] * scale : T(0);
    return dx;
  }

  void clear_cache() override { mask_.clear(); }

 private:
  double p_;
  Rng rng_;
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// Pooling

/// 2x2 max pooling with stride 2. A trailing odd row or column is dropped.
/// Gradients go to the first maximal element in row-major order.
template <typename T>
class MaxPool2 final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  static std::size_t pooled_extent(std::size_t in) { return (in - 2) / 2 + 1; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 4) throw ShapeError(this->name() + ": expects rank-4 input");
    if (in[2] < 2 || in[3] < 2) {
      throw ShapeError(this->name() + ": spatial extent below 2 in " + shape_string(in));
    }
    return {in[0], in[1], pooled_extent(in[2]), pooled_extent(in[3])};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode) override {
    Tensor<T> y(output_shape(x.shape()));
    in_shape_ = x.shape();
    argmax_.resize(y.numel());
    const std::size_t ho = y.h(), wo = y.w(), win = x.w();
    std::size_t o = 0;
    for (std::size_t n = 0; n < x.n(); ++n) {
      for (std::size_t c = 0; c < x.c(); ++c) {
        const T* s = x.plane(n, c);
        T* d = y.plane(n, c);
        for (std::size_t i = 0; i < ho; ++i) {
          for (std::size_t j = 0; j < wo; ++j, ++o) {
            const std::size_t base = 2 * i * win + 2 * j;
            const std::size_t cand[4] = {base, base + 1, base + win, base + win + 1};
            std::size_t best = cand[0];
            for (int q = 1; q < 4; ++q) {
              if (s[cand[q]] > s[best]) best = cand[q];
            }
            d[i * wo + j] = s[best];
            argmax_[o] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(in_shape_);
    const std::size_t plane_out = dy.h() * dy.w();
    std::size_t o = 0;
    for (std::size_t n = 0; n < dy.n(); ++n) {
      for (std::size_t c = 0; c < dy.c(); ++c) {
        const T* g = dy.plane(n, c);
        T* d = dx.plane(n, c);
        for (std::size_t i = 0; i < plane_out; ++i, ++o) d[argmax_[o]] += g[i];
      }
    }
    return dx;
  }

  void clear_cache() override { argmax_.clear(); }

 private:
  Shape in_shape_;
  std::vector<std::uint32_t> argmax_;
};

// ---------------------------------------------------------------------------
// Skip connections

/// Center-crops `a` to the spatial size of `b` and concatenates along
/// channels, `a` first.
template <typename T>
Tensor<T> crop_concat(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a, "crop_concat");
  require_rank4(b, "crop_concat");
  if (a.n() != b.n()) throw ShapeError("crop_concat: batch mismatch");
  if (a.h() < b.h() || a.w() < b.w()) throw ShapeError("crop_concat: a smaller than b");
  if ((a.h() - b.h()) % 2 != 0 || (a.w() - b.w()) % 2 != 0) {
    throw ShapeError("crop_concat: odd size difference " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const std::size_t oy = (a.h() - b.h()) / 2, ox = (a.w() - b.w()) / 2;
  const std::size_t h = b.h(), w = b.w();
  Tensor<T> out(a.n(), a.c() + b.c(), h, w);
  for (std::size_t n = 0; n < a.n(); ++n) {
    for (std::size_t c = 0; c < a.c(); ++c) {
      const T* s = a.plane(n, c);
      T* d = out.plane(n, c);
      for (std::size_t y = 0; y < h; ++y) std::copy_n(s + (y + oy) * a.w() + ox, w, d + y * w);
    }
    for (std::size_t c = 0; c < b.c(); ++c) {
      std::copy_n(b.plane(n, c), h * w, out.plane(n, a.c() + c));
    }
  }
  return out;
}

/// Splits the gradient of crop_concat back into gradients shaped like its
/// two inputs; the cropped border of `a` receives zero.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> crop_concat_backward(const Tensor<T>& dout, const Shape& a_shape,
                                                     const Shape& b_shape) {
  Tensor<T> da(a_shape), db(b_shape);
  const std::size_t ac = a_shape[1], h = b_shape[2], w = b_shape[3];
  const std::size_t oy = (a_shape[2] - h) / 2, ox = (a_shape[3] - w) / 2;
  for (std::size_t n = 0; n < dout.n(); ++n) {
    for (std::size_t c = 0; c < ac; ++c) {
      const T* s = dout.plane(n, c);
      T* d = da.plane(n, c);
      for (std::size_t y = 0; y < h; ++y) {
        std::copy_n(s + y * w, w, d + (y + oy) * a_shape[3] + ox);
      }
    }
    for (std::size_t c = 0; c < b_shape[1]; ++c) {
      std::copy_n(dout.plane(n, ac + c), h * w, db.plane(n, c));
    }
  }
  return {std::move(da), std::move(db)};
}

// ---------------------------------------------------------------------------
// Containers

template <typename T>
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(Tensor<T> x, Mode mode) {
    for (auto& l : layers_) x = l->forward(x, mode);
    return x;
  }

  Tensor<T> backward(Tensor<T> dy) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dy = (*it)->backward(dy);
    return dy;
  }

  Shape output_shape(Shape s) const {
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  void clear_cache() {
    for (auto& l : layers_) l->clear_cache();
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
void zero_grad(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->grad.fill(T(0));
}

}  // namespace slidecarver::nn
