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

/// @file train.hpp
/// @brief Patch sampling, augmentation, selective sampling and the epoch
/// loop with learning-rate halving and early stopping.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slidecarver/models.hpp"
#include "slidecarver/pyramid.hpp"
#include "slidecarver/raster.hpp"
#include "slidecarver/rng.hpp"

namespace slidecarver {

struct TrainConfig {
  ModelKind kind = ModelKind::kFcnn;
  double initial_lr = 5e-4;
  int lr_patience = 10;    // epochs without improvement before halving
  int stop_patience = 50;  // epochs without improvement before stopping
  int train_iterations = 100;
  int val_iterations = 100;
  int batch = 100;  // drawn patches per iteration, before augmentation
  double l2_lambda = 2e-6;
  int augmentations = 4;  // copies added per drawn patch
  int pool_size = 400;    // UCNN selective-sampling pool
  double replace_fraction = 0.9;
  int max_epochs = 1000;
  std::uint64_t seed = 0;
  double spacing = 3.84;
  FcnnConfig fcnn;
  UcnnConfig ucnn;

  /// Defaults for the given architecture: batch 100 and lambda 2e-6 for the
  /// FCNN, batch 4 and lambda 5e-7 for the U-Net.
  static TrainConfig defaults(ModelKind kind);
  /// Throws UsageError on non-positive counts or fractions outside (0, 1].
  void validate() const;
};

/// A slide with ground truth at any pyramid level; sampling resamples the
/// mask to the training level.
struct LabeledSlide {
  std::string name;
  PyramidImage pyramid;
  BinaryMask gt;
};

struct PatchRecord {
  RgbImage pixels;
  std::uint8_t label = 0;  // FCNN: ground truth at the central pixel
  BinaryMask labels;       // UCNN: output-sized ground truth
  BinaryMask weights;      // UCNN: 0 where the aligned input pixel is empty
  double selection_probability = 1.0;
  double last_accuracy = 0.0;
  std::size_t slide = 0;
  PatchOrigin origin;  // top-left of the input window
};

/// Lower bound on selection probability so a well-classified pool keeps a
/// positive total draw weight.
inline constexpr double kMinSelectionProbability = 0.01;

/// max(1 - accuracy, 0.01).
double selection_probability(double accuracy);

/// ceil(fraction * pool_size).
std::size_t replacement_count(std::size_t pool_size, double fraction);

/// Draws training patches from a slide set at the training spacing.
class PatchSampler {
 public:
  /// `input_size` / `output_size` are the network's input and output
  /// extents (128 / 1 for the FCNN). Throws DataError if a slide lacks the
  /// training level or ground truth. The pyramids are referenced, not
  /// copied, so `slides` must outlive the sampler.
  PatchSampler(const std::vector<LabeledSlide>& slides, ModelKind kind, std::size_t input_size,
               std::size_t output_size, double spacing);

  ModelKind kind() const { return kind_; }

  /// FCNN: class-balanced draw (tissue or background center with equal
  /// probability), uniform over eligible centers of that class. UCNN:
  /// uniform over output windows lying inside the level.
  PatchRecord sample(Rng& rng) const;

  /// FCNN draw with a fixed central class; throws DataError if no slide has
  /// an eligible center of that class.
  PatchRecord sample_class(std::uint8_t cls, Rng& rng) const;

  /// Extracts the record whose input window has top-left corner (x, y).
  PatchRecord extract(std::size_t slide, int x, int y) const;

  std::size_t class_count(std::uint8_t cls) const { return kind_ == ModelKind::kFcnn ? class_total_[cls] : 0; }

 private:
  struct Slide {
    const PyramidImage* pyramid;
    std::size_t level;
    BinaryMask gt;  // at the training level
    // FCNN: cumulative eligible center counts per row, per class.
    std::vector<std::uint64_t> row_prefix[2];
  };

  std::pair<int, int> locate(const Slide& s, std::uint8_t cls, std::uint64_t k) const;

  ModelKind kind_;
  int input_, output_, margin_;
  std::vector<Slide> slides_;
  std::uint64_t class_total_[2] = {0, 0};
  std::vector<std::uint64_t> window_prefix_;  // UCNN: cumulative window counts
};

enum class Augmentation { kMirrorH, kMirrorV, kRot90, kRot180, kRot270, kBlur, kGamma };

struct AugmentSpec {
  Augmentation kind = Augmentation::kMirrorH;
  double param = 0.0;  // blur sigma or gamma exponent
};

/// Uniform over the seven transforms; sigma ~ U[0.1, 0.5], gamma ~ U[0.5, 1.5].
AugmentSpec draw_augmentation(Rng& rng);

/// Mirrors and clockwise rotations move labels and weights with the pixels;
/// blur and gamma change pixels only.
PatchRecord apply_augmentation(const PatchRecord& rec, const AugmentSpec& spec);

/// `copies` independently drawn transforms of `rec`.
std::vector<PatchRecord> augment(const PatchRecord& rec, Rng& rng, int copies = 4);

template <typename T>
struct Batch {
  nn::Tensor<T> input;
  std::vector<std::uint8_t> labels;  // one per output cell
  std::vector<T> weights;            // one per output cell
};

template <typename T>
Batch<T> make_batch(const std::vector<const PatchRecord*>& records, ModelKind kind);

/// Mean predicted probability of the true class over weighted cells of
/// sample `n`; 1 when the sample has no weighted cell.
template <typename T>
double patch_accuracy(const nn::Tensor<T>& prob, std::size_t n, const PatchRecord& rec,
                      ModelKind kind);

/// Replaces the ceil(fraction * size) records with the highest
/// last_accuracy (ties: lower index first) by fresh draws with selection
/// probability 1.
void refresh_pool(std::vector<PatchRecord>& pool, const PatchSampler& sampler, double fraction,
                  Rng& rng);

/// Index drawn with probability proportional to selection_probability.
std::size_t draw_from_pool(const std::vector<PatchRecord>& pool, Rng& rng);

struct LrDecision {
  double lr = 0.0;  // rate for the next epoch
  bool stop = false;
  int epochs_since_best = 0;
};

/// Replays a validation-accuracy history. The rate halves whenever the best
/// accuracy has not strictly improved for lr_patience epochs since the
/// last improvement or halving; stop once stop_patience epochs pass
/// without improvement.
LrDecision schedule_lr(const std::vector<double>& history, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  bool stopped = false;
  // What the epoch actually ran; not part of the log line.
  int train_batches = 0;
  int val_batches = 0;
  std::size_t train_samples = 0;  // drawn patches plus augmented copies
  std::size_t val_samples = 0;
};

/// `epoch \t lr \t train_loss \t val_accuracy \t stopped`.
std::string format_log_line(const EpochLog& e);

struct TrainResult {
  WeightSet weights;  // from the epoch with the best validation accuracy
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Full training run; deterministic for a given cfg.seed.
TrainResult train(const std::vector<LabeledSlide>& train_slides,
                  const std::vector<LabeledSlide>& val_slides, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Builds an untrained network of the configured kind.
std::unique_ptr<Network<float>> make_network(const TrainConfig& cfg, Rng& rng);

/// Loads `<dir>/manifest.txt` levels and `<dir>/gt.pgm`.
LabeledSlide load_labeled_slide(const std::filesystem::path& dir);

}  // namespace slidecarver
