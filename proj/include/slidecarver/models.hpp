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

/// @file models.hpp
/// @brief The two segmentation networks, their weight files and whole-slide
/// inference.
///
/// FCNN: a 128x128 patch classifier (seven valid convolutions, three 2x2
/// pools) that becomes a dense stride-8 likelihood map when run on larger
/// inputs. UCNN: a valid-convolution U-Net mapping 892x892 tiles to 708x708
/// per-pixel predictions. Both use conv -> batch norm -> ReLU except for the
/// final logits layer.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "slidecarver/nn/layers.hpp"
#include "slidecarver/nn/optim.hpp"
#include "slidecarver/pyramid.hpp"
#include "slidecarver/raster.hpp"

namespace slidecarver {

enum class ModelKind { kFcnn, kUcnn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct FcnnConfig {
  /// Channel counts of the six hidden layers are divided by this; the
  /// logits layer always has 2 channels.
  std::size_t width_divisor = 1;

  static constexpr std::array<std::size_t, 7> kFilters = {16, 32, 64, 64, 1024, 512, 2};
  static constexpr std::array<std::size_t, 7> kKernels = {5, 5, 3, 3, 11, 1, 1};
  static constexpr std::size_t kPatchSize = 128;
  static constexpr std::size_t kStride = 8;
  static constexpr std::size_t kOffset = 64;  // center of the 128 patch

  std::size_t filters(std::size_t layer) const;
};

struct UcnnConfig {
  std::size_t base_channels = 32;
  std::size_t depth = 4;  // pooling stages
  std::size_t output_size = 708;
  double dropout = 0.5;
};

/// Spatial extents along the UCNN path for a given output size.
struct UcnnGeometry {
  std::size_t input_size = 0;
  std::size_t output_size = 0;
  std::vector<std::size_t> encoder_out;  // per stage, before pooling
  std::size_t bottleneck_out = 0;
  std::vector<std::size_t> decoder_up;   // per stage (top first), after upconv
  std::vector<std::size_t> decoder_out;  // per stage (top first)

  std::size_t margin() const { return (input_size - output_size) / 2; }
};

/// Throws UsageError when no input size yields `output_size` with even
/// pooling inputs and even crop margins.
UcnnGeometry ucnn_geometry(const UcnnConfig& cfg);

struct LayerDesc {
  std::string name;
  std::string type;  // conv, upconv, pool, batchnorm, relu, dropout
  std::size_t kernel = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::kFcnn;
  std::vector<LayerDesc> layers;
  std::size_t input_size = 0;
  std::size_t output_size = 0;
  double training_spacing = 3.84;
  FcnnConfig fcnn;
  UcnnConfig ucnn;
};

struct NamedTensor {
  std::string name;
  nn::Tensor<float> tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered named tensors. The first entry, `model.config`, records the
/// architecture so a file alone suffices to rebuild the network.
struct WeightSet {
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

/// Weight file: "WSEG", u32 version 1, u32 count, then per tensor u16 name
/// length, UTF-8 name, u8 rank, rank x u32 extents and the f32 values, all
/// little-endian.
void save_weights(const WeightSet& ws, const std::filesystem::path& path);
WeightSet load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const WeightSet& ws);
WeightSet deserialize_weights(const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------

/// Common interface of both architectures.
template <typename T>
class Network {
 public:
  virtual ~Network() = default;

  virtual nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) = 0;
  virtual nn::Tensor<T> backward(const nn::Tensor<T>& dlogits) = 0;
  virtual nn::Shape output_shape(const nn::Shape& in) const = 0;
  virtual std::vector<nn::Parameter<T>*> parameters() = 0;
  virtual void clear_cache() = 0;
  virtual void initialize(Rng& rng) = 0;
  virtual void reseed_dropout(std::uint64_t) {}
  virtual const ModelSpec& spec() const = 0;

  /// Named tensors including batch-norm running statistics, converted to f32.
  WeightSet export_weights();
  /// Throws ShapeError if names or extents differ from this network.
  void import_weights(const WeightSet& ws);
};

template <typename T>
class Fcnn final : public Network<T> {
 public:
  explicit Fcnn(FcnnConfig cfg = {});

  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) override {
    return net_.forward(x, mode);
  }
  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits) override {
    return net_.backward(dlogits);
  }
  nn::Shape output_shape(const nn::Shape& in) const override { return net_.output_shape(in); }
  std::vector<nn::Parameter<T>*> parameters() override { return net_.parameters(); }
  void clear_cache() override { net_.clear_cache(); }
  void initialize(Rng& rng) override { nn::he_initialize(net_, rng); }
  const ModelSpec& spec() const override { return spec_; }

  /// Sum of convolution weight and bias counts.
  std::size_t conv_parameter_count();

 private:
  nn::Sequential<T> net_;
  ModelSpec spec_;
};

template <typename T>
class Ucnn final : public Network<T> {
 public:
  explicit Ucnn(UcnnConfig cfg = {});

  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) override;
  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits) override;
  nn::Shape output_shape(const nn::Shape& in) const override;
  std::vector<nn::Parameter<T>*> parameters() override;
  void clear_cache() override;
  void initialize(Rng& rng) override;
  void reseed_dropout(std::uint64_t seed) override;
  const ModelSpec& spec() const override { return spec_; }
  const UcnnGeometry& geometry() const { return geometry_; }

 private:
  struct Block {
    nn::Sequential<T> layers;  // conv bn relu conv bn relu [dropout]
  };

  UcnnConfig cfg_;
  UcnnGeometry geometry_;
  ModelSpec spec_;
  std::vector<Block> encoders_;
  Block bottleneck_;
  std::vector<std::unique_ptr<nn::UpConv2x2<T>>> ups_;  // index = stage
  std::vector<Block> decoders_;                         // index = stage
  std::vector<std::unique_ptr<nn::MaxPool2<T>>> pools_;
  std::unique_ptr<nn::Conv2d<T>> head_;
  // Cached shapes for the backward pass.
  std::vector<nn::Shape> skip_shapes_, up_shapes_;
};

/// Builds an FCNN and He-initializes it from `rng`.
std::unique_ptr<Fcnn<float>> build_fcnn(Rng& rng, FcnnConfig cfg = {});
std::unique_ptr<Ucnn<float>> build_ucnn(Rng& rng, UcnnConfig cfg = {});

/// Reconstructs a network from a weight set's `model.config` entry and loads
/// the weights into it.
std::unique_ptr<Network<float>> network_from_weights(const WeightSet& ws);

/// Converts RGB8 to a (1, 3, h, w) tensor scaled to [0, 1].
nn::Tensor<float> image_to_tensor(const RgbImage& img);
/// Writes sample `n` of a batch tensor.
void image_into_tensor(const RgbImage& img, nn::Tensor<float>& t, std::size_t n);

// ---------------------------------------------------------------------------
// Whole-slide inference

/// Tissue probabilities on a grid. Cell (i, j) is centered on level pixel
/// (offset_x + stride * j, offset_y + stride * i).
struct LikelihoodMap {
  Raster<float> prob;
  Raster<std::uint8_t> empty;  // 1 where the cell's center pixel is not scanned
  int stride = 1;
  int offset_x = 0;
  int offset_y = 0;
  std::size_t level = 0;
};

struct InferenceOptions {
  double spacing = 3.84;
  int jobs = 1;
  /// FCNN tile size in output cells (the input tile adds a 120-pixel halo).
  int fcnn_tile_cells = 48;
};

/// Dense FCNN application: the probability at cell (i, j) equals the patch
/// classifier on the 128x128 window with top-left corner (8j, 8i).
LikelihoodMap infer_fcnn_dense(const PyramidImage& pyramid, Network<float>& fcnn,
                               const InferenceOptions& opts = {});

/// Tiled U-Net application. Output tiles of the network's output size are
/// laid edge to edge from the level origin; each input tile extends by the
/// valid-convolution margin on every side, with pixels outside the level
/// read as the empty color. The map has stride 1 and covers the level.
LikelihoodMap infer_ucnn_tiled(const PyramidImage& pyramid, Network<float>& ucnn,
                               const InferenceOptions& opts = {});

/// Evaluates a network on one RGB tile in inference mode and returns the
/// tissue-class softmax probability per output cell.
Raster<float> predict_tile(Network<float>& net, const RgbImage& tile);

}  // namespace slidecarver
