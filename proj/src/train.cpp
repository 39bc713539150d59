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

#include "slidecarver/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "slidecarver/imgproc.hpp"
#include "slidecarver/nn/loss.hpp"
#include "slidecarver/pnm.hpp"

namespace slidecarver {

TrainConfig TrainConfig::defaults(ModelKind kind) {
  TrainConfig cfg;
  cfg.kind = kind;
  if (kind == ModelKind::kUcnn) {
    cfg.batch = 4;
    cfg.l2_lambda = 5e-7;
  }
  return cfg;
}

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw UsageError("initial learning rate must be positive");
  if (lr_patience <= 0 || stop_patience <= 0) throw UsageError("patience must be positive");
  if (train_iterations <= 0 || val_iterations <= 0) {
    throw UsageError("iteration counts must be positive");
  }
  if (batch <= 0 || pool_size <= 0 || max_epochs <= 0) {
    throw UsageError("batch, pool size and epoch limit must be positive");
  }
  if (augmentations < 0) throw UsageError("augmentation count must be non-negative");
  if (l2_lambda < 0.0) throw UsageError("L2 lambda must be non-negative");
  if (!(replace_fraction > 0.0 && replace_fraction <= 1.0)) {
    throw UsageError("replace fraction must lie in (0, 1]");
  }
  if (!(spacing > 0.0)) throw UsageError("training spacing must be positive");
}

double selection_probability(double accuracy) {
  return std::max(1.0 - accuracy, kMinSelectionProbability);
}

std::size_t replacement_count(std::size_t pool_size, double fraction) {
  // Guard against 0.9 * 10 evaluating to 9.000000000000002.
  return std::min(pool_size, static_cast<std::size_t>(std::ceil(fraction * pool_size - 1e-9)));
}

// ---------------------------------------------------------------------------
// Sampling

PatchSampler::PatchSampler(const std::vector<LabeledSlide>& slides, ModelKind kind,
                           std::size_t input_size, std::size_t output_size, double spacing)
    : kind_(kind),
      input_(static_cast<int>(input_size)),
      output_(static_cast<int>(output_size)),
      margin_(static_cast<int>(input_size - output_size) / 2) {
  if (slides.empty()) throw DataError("no slides to sample from");
  window_prefix_.push_back(0);
  for (const auto& ls : slides) {
    if (ls.gt.size() == 0) throw DataError("slide '" + ls.name + "' has no ground truth");
    Slide s;
    s.pyramid = &ls.pyramid;
    s.level = ls.pyramid.require_level(spacing);
    const Level& lv = ls.pyramid.level(s.level);
    s.gt = ls.gt.width() == lv.width() && ls.gt.height() == lv.height()
               ? ls.gt
               : resample_nearest(ls.gt, lv.width(), lv.height());
    if (kind_ == ModelKind::kFcnn) {
      const int half = input_ / 2;
      for (auto& p : s.row_prefix) p.assign(1, 0);
      for (int y = half; y <= lv.height() - half; ++y) {
        std::uint64_t ones = 0, cols = 0;
        for (int x = half; x <= lv.width() - half; ++x, ++cols) ones += s.gt(x, y);
        s.row_prefix[0].push_back(s.row_prefix[0].back() + cols - ones);
        s.row_prefix[1].push_back(s.row_prefix[1].back() + ones);
      }
      class_total_[0] += s.row_prefix[0].back();
      class_total_[1] += s.row_prefix[1].back();
    } else {
      const std::uint64_t nx = lv.width() >= output_ ? lv.width() - output_ + 1 : 0;
      const std::uint64_t ny = lv.height() >= output_ ? lv.height() - output_ + 1 : 0;
      window_prefix_.push_back(window_prefix_.back() + nx * ny);
    }
    slides_.push_back(std::move(s));
  }
  if (kind_ == ModelKind::kUcnn && window_prefix_.back() == 0) {
    throw DataError("no slide is large enough for a " + std::to_string(output_) + " output window");
  }
}

std::pair<int, int> PatchSampler::locate(const Slide& s, std::uint8_t cls,
                                         std::uint64_t k) const {
  const auto& prefix = s.row_prefix[cls];
  const auto row = std::upper_bound(prefix.begin(), prefix.end(), k) - prefix.begin() - 1;
  const int half = input_ / 2, y = half + static_cast<int>(row);
  std::uint64_t left = k - prefix[row];
  const int width = s.pyramid->level(s.level).width();
  for (int x = half; x <= width - half; ++x) {
    if (s.gt(x, y) == cls && left-- == 0) return {x, y};
  }
  throw Error("patch sampler index out of range");
}

PatchRecord PatchSampler::sample_class(std::uint8_t cls, Rng& rng) const {
  if (kind_ != ModelKind::kFcnn) throw UsageError("class-conditioned draws are FCNN only");
  if (cls > 1) throw UsageError("class must be 0 or 1");
  if (class_total_[cls] == 0) {
    throw DataError(std::string("no eligible ") + (cls ? "tissue" : "background") +
                    " patch centers in the slide set");
  }
  std::uint64_t k = rng.below(class_total_[cls]);
  for (std::size_t i = 0; i < slides_.size(); ++i) {
    const std::uint64_t n = slides_[i].row_prefix[cls].back();
    if (k < n) {
      const auto [x, y] = locate(slides_[i], cls, k);
      return extract(i, x - input_ / 2, y - input_ / 2);
    }
    k -= n;
  }
  throw Error("patch sampler index out of range");
}

PatchRecord PatchSampler::sample(Rng& rng) const {
  if (kind_ == ModelKind::kFcnn) return sample_class(rng.bernoulli(0.5) ? 1 : 0, rng);
  const std::uint64_t k = rng.below(window_prefix_.back());
  const std::size_t i =
      std::upper_bound(window_prefix_.begin(), window_prefix_.end(), k) - window_prefix_.begin() - 1;
  const std::uint64_t local = k - window_prefix_[i];
  const std::uint64_t nx = slides_[i].gt.width() - output_ + 1;
  const int ox = static_cast<int>(local % nx), oy = static_cast<int>(local / nx);
  return extract(i, ox - margin_, oy - margin_);
}

PatchRecord PatchSampler::extract(std::size_t slide, int x, int y) const {
  const Slide& s = slides_.at(slide);
  Patch p = read_region(*s.pyramid, s.level, x, y, input_, input_);
  PatchRecord rec;
  rec.pixels = std::move(p.pixels);
  rec.origin = p.origin;
  rec.slide = slide;
  if (kind_ == ModelKind::kFcnn) {
    const int cx = x + input_ / 2, cy = y + input_ / 2;
    if (!s.gt.contains(cx, cy)) throw UsageError("FCNN patch center outside the level");
    rec.label = s.gt(cx, cy);
    return rec;
  }
  const Rgb empty = s.pyramid->empty_color();
  rec.labels = BinaryMask(output_, output_);
  rec.weights = BinaryMask(output_, output_);
  for (int j = 0; j < output_; ++j) {
    for (int i = 0; i < output_; ++i) {
      const int gx = x + margin_ + i, gy = y + margin_ + j;
      if (s.gt.contains(gx, gy)) rec.labels(i, j) = s.gt(gx, gy);
      rec.weights(i, j) = rec.pixels.at(i + margin_, j + margin_) == empty ? 0 : 1;
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

bool swaps_axes(Augmentation a) { return a == Augmentation::kRot90 || a == Augmentation::kRot270; }

// Source coordinate of output pixel (x, y) for an input of extent w x h.
std::pair<int, int> source_of(Augmentation a, int x, int y, int w, int h) {
  switch (a) {
    case Augmentation::kMirrorH: return {w - 1 - x, y};
    case Augmentation::kMirrorV: return {x, h - 1 - y};
    case Augmentation::kRot90: return {y, h - 1 - x};
    case Augmentation::kRot180: return {w - 1 - x, h - 1 - y};
    case Augmentation::kRot270: return {w - 1 - y, x};
    default: return {x, y};
  }
}

RgbImage remap(const RgbImage& in, Augmentation a) {
  const int w = in.width(), h = in.height();
  RgbImage out(swaps_axes(a) ? h : w, swaps_axes(a) ? w : h);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const auto [sx, sy] = source_of(a, x, y, w, h);
      out.set(x, y, in.at(sx, sy));
    }
  }
  return out;
}

BinaryMask remap(const BinaryMask& in, Augmentation a) {
  if (in.size() == 0) return in;
  const int w = in.width(), h = in.height();
  BinaryMask out(swaps_axes(a) ? h : w, swaps_axes(a) ? w : h);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const auto [sx, sy] = source_of(a, x, y, w, h);
      out(x, y) = in(sx, sy);
    }
  }
  return out;
}

RgbImage blur_rgb(const RgbImage& in, double sigma) {
  const int ksize = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
  RgbImage out(in.width(), in.height());
  GrayImage channel(in.width(), in.height());
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < channel.size(); ++i) channel[i] = in.bytes()[3 * i + c];
    const GrayImage b = gaussian_blur(channel, ksize, sigma);
    for (std::size_t i = 0; i < b.size(); ++i) {
      out.bytes()[3 * i + c] = static_cast<std::uint8_t>(std::clamp(std::lround(b[i]), 0L, 255L));
    }
  }
  return out;
}

RgbImage gamma_rgb(const RgbImage& in, double gamma) {
  std::uint8_t lut[256];
  for (int v = 0; v < 256; ++v) {
    lut[v] = static_cast<std::uint8_t>(
        std::clamp(std::lround(255.0 * std::pow(v / 255.0, gamma)), 0L, 255L));
  }
  RgbImage out = in;
  for (auto& b : out.bytes()) b = lut[b];
  return out;
}

}  // namespace

AugmentSpec draw_augmentation(Rng& rng) {
  AugmentSpec s;
  s.kind = static_cast<Augmentation>(rng.below(7));
  if (s.kind == Augmentation::kBlur) s.param = rng.uniform(0.1, 0.5);
  if (s.kind == Augmentation::kGamma) s.param = rng.uniform(0.5, 1.5);
  return s;
}

PatchRecord apply_augmentation(const PatchRecord& rec, const AugmentSpec& spec) {
  PatchRecord out = rec;
  switch (spec.kind) {
    case Augmentation::kBlur:
      out.pixels = blur_rgb(rec.pixels, spec.param);
      break;
    case Augmentation::kGamma:
      out.pixels = gamma_rgb(rec.pixels, spec.param);
      break;
    default:
      out.pixels = remap(rec.pixels, spec.kind);
      out.labels = remap(rec.labels, spec.kind);
      out.weights = remap(rec.weights, spec.kind);
  }
  return out;
}

std::vector<PatchRecord> augment(const PatchRecord& rec, Rng& rng, int copies) {
  std::vector<PatchRecord> out;
  out.reserve(copies);
  for (int i = 0; i < copies; ++i) out.push_back(apply_augmentation(rec, draw_augmentation(rng)));
  return out;
}

// ---------------------------------------------------------------------------
// Batches and selective sampling

template <typename T>
Batch<T> make_batch(const std::vector<const PatchRecord*>& records, ModelKind kind) {
  if (records.empty()) throw UsageError("empty batch");
  const int w = records[0]->pixels.width(), h = records[0]->pixels.height();
  Batch<T> b;
  b.input = nn::Tensor<T>(records.size(), 3, h, w);
  for (std::size_t n = 0; n < records.size(); ++n) {
    const PatchRecord& r = *records[n];
    if (r.pixels.width() != w || r.pixels.height() != h) throw ShapeError("ragged batch");
    const auto& bytes = r.pixels.bytes();
    const std::size_t plane = r.pixels.pixel_count();
    for (int c = 0; c < 3; ++c) {
      T* dst = b.input.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(bytes[3 * i + c] / 255.0f);
    }
    if (kind == ModelKind::kFcnn) {
      b.labels.push_back(r.label);
      b.weights.push_back(T(1));
    } else {
      b.labels.insert(b.labels.end(), r.labels.values().begin(), r.labels.values().end());
      for (auto v : r.weights.values()) b.weights.push_back(static_cast<T>(v));
    }
  }
  return b;
}

template Batch<float> make_batch(const std::vector<const PatchRecord*>&, ModelKind);
template Batch<double> make_batch(const std::vector<const PatchRecord*>&, ModelKind);

template <typename T>
double patch_accuracy(const nn::Tensor<T>& prob, std::size_t n, const PatchRecord& rec,
                      ModelKind kind) {
  if (kind == ModelKind::kFcnn) return prob.plane(n, rec.label)[0];
  double num = 0.0, den = 0.0;
  const std::size_t plane = prob.h() * prob.w();
  const T* p0 = prob.plane(n, 0);
  const T* p1 = prob.plane(n, 1);
  for (std::size_t i = 0; i < plane; ++i) {
    if (!rec.weights[i]) continue;
    num += rec.labels[i] ? p1[i] : p0[i];
    den += 1.0;
  }
  return den > 0.0 ? num / den : 1.0;
}

template double patch_accuracy(const nn::Tensor<float>&, std::size_t, const PatchRecord&,
                               ModelKind);
template double patch_accuracy(const nn::Tensor<double>&, std::size_t, const PatchRecord&,
                               ModelKind);

void refresh_pool(std::vector<PatchRecord>& pool, const PatchSampler& sampler, double fraction,
                  Rng& rng) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pool[a].last_accuracy > pool[b].last_accuracy;
  });
  const std::size_t n = replacement_count(pool.size(), fraction);
  std::vector<std::size_t> replaced(order.begin(), order.begin() + n);
  std::sort(replaced.begin(), replaced.end());
  for (std::size_t i : replaced) pool[i] = sampler.sample(rng);
}

std::size_t draw_from_pool(const std::vector<PatchRecord>& pool, Rng& rng) {
  if (pool.empty()) throw UsageError("empty selection pool");
  double total = 0.0;
  for (const auto& r : pool) total += r.selection_probability;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    acc += pool[i].selection_probability;
    if (u < acc) return i;
  }
  return pool.size() - 1;
}

// ---------------------------------------------------------------------------
// Schedule and loop

LrDecision schedule_lr(const std::vector<double>& history, const TrainConfig& cfg) {
  LrDecision d;
  d.lr = cfg.initial_lr;
  double best = -std::numeric_limits<double>::infinity();
  int since_change = 0;
  for (double acc : history) {
    if (acc > best) {
      best = acc;
      d.epochs_since_best = 0;
      since_change = 0;
      continue;
    }
    ++d.epochs_since_best;
    if (++since_change >= cfg.lr_patience) {
      d.lr *= 0.5;
      since_change = 0;
    }
  }
  d.stop = d.epochs_since_best >= cfg.stop_patience;
  return d;
}

std::string format_log_line(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6g\t%.6f\t%.6f\t%d", e.epoch, e.lr, e.train_loss,
                e.val_accuracy, e.stopped ? 1 : 0);
  return buf;
}

std::unique_ptr<Network<float>> make_network(const TrainConfig& cfg, Rng& rng) {
  if (cfg.kind == ModelKind::kFcnn) return build_fcnn(rng, cfg.fcnn);
  return build_ucnn(rng, cfg.ucnn);
}

namespace {

std::vector<const PatchRecord*> pointers(const std::vector<PatchRecord>& recs) {
  std::vector<const PatchRecord*> out;
  for (const auto& r : recs) out.push_back(&r);
  return out;
}

// Fraction of correctly classified cells, counting only weighted cells.
// Returns {correct, counted}.
std::pair<double, double> count_correct(const nn::Tensor<float>& logits,
                                        const Batch<float>& batch) {
  const std::size_t plane = logits.h() * logits.w();
  double correct = 0.0, counted = 0.0;
  for (std::size_t n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t cell = n * plane + i;
      if (batch.weights[cell] == 0.0f) continue;
      const std::uint8_t pred = logits.plane(n, 1)[i] > logits.plane(n, 0)[i] ? 1 : 0;
      correct += pred == batch.labels[cell];
      counted += 1.0;
    }
  }
  return {correct, counted};
}

}  // namespace

TrainResult train(const std::vector<LabeledSlide>& train_slides,
                  const std::vector<LabeledSlide>& val_slides, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  Rng root(cfg.seed);
  Rng init_rng = root.fork(), sample_rng = root.fork(), aug_rng = root.fork();
  Rng val_rng = root.fork(), dropout_rng = root.fork();

  auto net = make_network(cfg, init_rng);
  const std::size_t in = net->spec().input_size, out = net->spec().output_size;
  const PatchSampler sampler(train_slides, cfg.kind, in, out, cfg.spacing);
  const PatchSampler val_sampler(val_slides, cfg.kind, in, out, cfg.spacing);

  // The validation set is drawn once so epochs are compared on equal data;
  // only origins are kept and patches are re-extracted each epoch.
  std::vector<std::pair<std::size_t, PatchOrigin>> val_set;
  for (int i = 0; i < cfg.val_iterations * cfg.batch; ++i) {
    const PatchRecord r = val_sampler.sample(val_rng);
    val_set.emplace_back(r.slide, r.origin);
  }

  std::vector<PatchRecord> pool;
  if (cfg.kind == ModelKind::kUcnn) {
    for (int i = 0; i < cfg.pool_size; ++i) pool.push_back(sampler.sample(sample_rng));
  }

  const auto params = net->parameters();
  nn::Adam<float> adam(params, nn::AdamOptions{cfg.initial_lr});
  TrainResult result;
  std::vector<double> history;
  double best = -std::numeric_limits<double>::infinity();
  const int group = 1 + cfg.augmentations;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = schedule_lr(history, cfg).lr;
    adam.set_lr(lr);
    double loss_sum = 0.0;
    EpochLog e;
    for (int it = 0; it < cfg.train_iterations; ++it) {
      std::vector<PatchRecord> recs;
      std::vector<std::size_t> drawn;
      recs.reserve(static_cast<std::size_t>(cfg.batch) * group);
      for (int b = 0; b < cfg.batch; ++b) {
        if (cfg.kind == ModelKind::kFcnn) {
          recs.push_back(sampler.sample(sample_rng));
        } else {
          drawn.push_back(draw_from_pool(pool, sample_rng));
          recs.push_back(pool[drawn.back()]);
        }
        auto copies = augment(recs.back(), aug_rng, cfg.augmentations);
        std::move(copies.begin(), copies.end(), std::back_inserter(recs));
      }
      const Batch<float> batch = make_batch<float>(pointers(recs), cfg.kind);
      net->reseed_dropout(dropout_rng.next_u64());
      nn::zero_grad(params);
      const nn::Tensor<float> logits = net->forward(batch.input, nn::Mode::kTrain);
      const auto loss = nn::weighted_softmax_xent<float>(logits, batch.labels, batch.weights,
                                                         cfg.l2_lambda, params);
      net->backward(loss.dlogits);
      net->clear_cache();
      adam.step();
      loss_sum += loss.loss;
      ++e.train_batches;
      e.train_samples += batch.input.n();
      if (cfg.kind == ModelKind::kUcnn) {
        const nn::Tensor<float> prob = nn::softmax_channels(logits);
        for (std::size_t b = 0; b < drawn.size(); ++b) {
          PatchRecord& r = pool[drawn[b]];
          r.last_accuracy = patch_accuracy(prob, b * group, recs[b * group], cfg.kind);
          r.selection_probability = selection_probability(r.last_accuracy);
        }
      }
    }
    if (cfg.kind == ModelKind::kUcnn) refresh_pool(pool, sampler, cfg.replace_fraction, sample_rng);

    double acc_sum = 0.0;
    int acc_terms = 0;
    for (int it = 0; it < cfg.val_iterations; ++it) {
      std::vector<PatchRecord> recs;
      for (int b = 0; b < cfg.batch; ++b) {
        const auto& [slide, origin] = val_set[static_cast<std::size_t>(it) * cfg.batch + b];
        recs.push_back(val_sampler.extract(slide, origin.x, origin.y));
      }
      const Batch<float> batch = make_batch<float>(pointers(recs), cfg.kind);
      const nn::Tensor<float> logits = net->forward(batch.input, nn::Mode::kInfer);
      net->clear_cache();
      ++e.val_batches;
      e.val_samples += batch.input.n();
      const auto [correct, counted] = count_correct(logits, batch);
      if (counted > 0.0) {
        acc_sum += correct / counted;
        ++acc_terms;
      }
    }
    const double val_acc = acc_terms ? acc_sum / acc_terms : 0.0;
    history.push_back(val_acc);
    if (val_acc > best) {
      best = val_acc;
      result.best_epoch = epoch;
      result.weights = net->export_weights();
    }
    const LrDecision d = schedule_lr(history, cfg);
    e.epoch = epoch;
    e.lr = lr;
    e.train_loss = loss_sum / cfg.train_iterations;
    e.val_accuracy = val_acc;
    e.stopped = d.stop;
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
    if (d.stop) break;
  }
  return result;
}

LabeledSlide load_labeled_slide(const std::filesystem::path& dir) {
  LabeledSlide s;
  s.name = dir.filename().string();
  if (s.name.empty()) s.name = dir.parent_path().filename().string();
  s.pyramid = load_pyramid(dir);
  const auto gt = dir / "gt.pgm";
  if (!std::filesystem::exists(gt)) throw DataError("missing ground truth " + gt.string());
  s.gt = read_mask_pgm(gt);
  return s;
}

}  // namespace slidecarver
