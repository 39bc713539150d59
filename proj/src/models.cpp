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

#include "slidecarver/models.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>

#include "slidecarver/nn/loss.hpp"

namespace slidecarver {

using nn::Mode;
using nn::Shape;
using nn::Tensor;

std::string to_string(ModelKind kind) { return kind == ModelKind::kFcnn ? "fcnn" : "ucnn"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "fcnn") return ModelKind::kFcnn;
  if (s == "ucnn") return ModelKind::kUcnn;
  throw UsageError("unknown model kind '" + s + "' (expected fcnn or ucnn)");
}

std::size_t FcnnConfig::filters(std::size_t layer) const {
  if (layer + 1 == kFilters.size()) return kFilters[layer];
  if (width_divisor == 0 || kFilters[layer] % width_divisor != 0) {
    throw UsageError("FCNN width divisor must divide every hidden channel count");
  }
  return kFilters[layer] / width_divisor;
}

UcnnGeometry ucnn_geometry(const UcnnConfig& cfg) {
  if (cfg.depth == 0 || cfg.base_channels == 0 || cfg.output_size == 0) {
    throw UsageError("UCNN needs positive depth, width and output size");
  }
  UcnnGeometry g;
  g.output_size = cfg.output_size;
  g.decoder_out.resize(cfg.depth);
  g.decoder_up.resize(cfg.depth);
  // Walk the expansion path backwards: each stage's two valid convs add 4,
  // and its input came from a 2x upsampling.
  std::size_t s = cfg.output_size;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    g.decoder_out[i] = s;
    const std::size_t up = s + 4;
    if (up % 2 != 0) throw UsageError("UCNN output size yields odd upsampling input");
    g.decoder_up[i] = up;
    s = up / 2;
  }
  g.bottleneck_out = s;
  // Contraction path: bottleneck input is a pooled stage output.
  g.encoder_out.resize(cfg.depth);
  std::size_t t = g.bottleneck_out + 4;
  for (std::size_t i = cfg.depth; i-- > 0;) {
    g.encoder_out[i] = 2 * t;
    t = g.encoder_out[i] + 4;
  }
  g.input_size = t;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    if (g.encoder_out[i] < g.decoder_up[i] || (g.encoder_out[i] - g.decoder_up[i]) % 2 != 0) {
      throw UsageError("UCNN skip connection needs an even crop margin");
    }
  }
  return g;
}

const NamedTensor* WeightSet::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

constexpr char kMagic[4] = {'W', 'S', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, b_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw DataError("corrupt weight file: truncated");
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_weights(const WeightSet& ws) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ws.tensors.size()));
  for (const auto& nt : ws.tensors) {
    if (nt.name.size() > 0xffff) throw UsageError("tensor name too long: " + nt.name);
    if (nt.tensor.rank() > 0xff) throw UsageError("tensor rank too large: " + nt.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(nt.name.size()));
    out.insert(out.end(), nt.name.begin(), nt.name.end());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(nt.tensor.rank()));
    for (std::size_t d : nt.tensor.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : nt.tensor.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightSet deserialize_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("corrupt weight file: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw DataError("unsupported weight file version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  WeightSet ws;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor nt;
    nt.name.resize(r.get<std::uint16_t>());
    r.bytes(nt.name.data(), nt.name.size());
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      numel *= d;
      if (numel > (std::uint64_t{1} << 34)) throw DataError("corrupt weight file: huge tensor");
    }
    if (numel * 4 > bytes.size()) throw DataError("corrupt weight file: truncated");
    nt.tensor = Tensor<float>(shape);
    for (auto& v : nt.tensor.values()) v = std::bit_cast<float>(r.get<std::uint32_t>());
    ws.tensors.push_back(std::move(nt));
  }
  if (!r.done()) throw DataError("corrupt weight file: trailing bytes");
  return ws;
}

void save_weights(const WeightSet& ws, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(ws);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

WeightSet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

// ---------------------------------------------------------------------------
// Network base

namespace {

Tensor<float> config_tensor(const ModelSpec& spec) {
  if (spec.kind == ModelKind::kFcnn) {
    Tensor<float> t(nn::Shape{2});
    t[0] = 0.0f;
    t[1] = static_cast<float>(spec.fcnn.width_divisor);
    return t;
  }
  Tensor<float> t(nn::Shape{5});
  t[0] = 1.0f;
  t[1] = static_cast<float>(spec.ucnn.base_channels);
  t[2] = static_cast<float>(spec.ucnn.depth);
  t[3] = static_cast<float>(spec.ucnn.output_size);
  t[4] = static_cast<float>(spec.ucnn.dropout);
  return t;
}

}  // namespace

template <typename T>
WeightSet Network<T>::export_weights() {
  WeightSet ws;
  ws.tensors.push_back({"model.config", config_tensor(spec())});
  for (auto* p : parameters()) ws.tensors.push_back({p->name, p->value.template cast<float>()});
  return ws;
}

template <typename T>
void Network<T>::import_weights(const WeightSet& ws) {
  const auto params = parameters();
  if (ws.tensors.size() != params.size() + 1) {
    throw ShapeError("weight set has " + std::to_string(ws.tensors.size()) +
                     " tensors, network expects " + std::to_string(params.size() + 1));
  }
  const Tensor<float> cfg = config_tensor(spec());
  if (ws.tensors[0].name != "model.config" || ws.tensors[0].tensor != cfg) {
    throw ShapeError("weight set was saved for a different architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& nt = ws.tensors[i + 1];
    if (nt.name != params[i]->name || nt.tensor.shape() != params[i]->value.shape()) {
      throw ShapeError("weight '" + nt.name + "' " + nn::shape_string(nt.tensor.shape()) +
                       " does not match '" + params[i]->name + "' " +
                       nn::shape_string(params[i]->value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = ws.tensors[i + 1].tensor.template cast<T>();
  }
}

// ---------------------------------------------------------------------------
// FCNN

template <typename T>
Fcnn<T>::Fcnn(FcnnConfig cfg) {
  spec_.kind = ModelKind::kFcnn;
  spec_.fcnn = cfg;
  spec_.input_size = FcnnConfig::kPatchSize;
  spec_.output_size = 1;
  std::size_t in = 3;
  for (std::size_t i = 0; i < FcnnConfig::kFilters.size(); ++i) {
    const std::size_t out = cfg.filters(i), k = FcnnConfig::kKernels[i];
    const std::string id = std::to_string(i + 1);
    auto& conv = net_.template add<nn::Conv2d<T>>("conv" + id, in, out, k);
    spec_.layers.push_back({"conv" + id, "conv", k, in, out});
    if (i == 0) conv.set_propagate_input_grad(false);
    const bool logits = i + 1 == FcnnConfig::kFilters.size();
    if (!logits) {
      net_.template add<nn::BatchNorm2d<T>>("bn" + id, out);
      net_.template add<nn::ReLU<T>>("relu" + id);
      spec_.layers.push_back({"bn" + id, "batchnorm", 0, out, out});
      spec_.layers.push_back({"relu" + id, "relu", 0, out, out});
    }
    if (i < 3) {
      net_.template add<nn::MaxPool2<T>>("pool" + id);
      spec_.layers.push_back({"pool" + id, "pool", 2, out, out});
    }
    in = out;
  }
}

template <typename T>
std::size_t Fcnn<T>::conv_parameter_count() {
  std::size_t total = 0;
  for (auto* p : parameters()) {
    if (p->name.rfind("conv", 0) == 0) total += p->value.numel();
  }
  return total;
}

// ---------------------------------------------------------------------------
// UCNN

namespace {

template <typename T>
void add_conv_pair(nn::Sequential<T>& seq, const std::string& prefix, std::size_t in,
                   std::size_t out, std::vector<LayerDesc>& desc) {
  for (int j = 1; j <= 2; ++j) {
    const std::string id = prefix + "." + std::to_string(j);
    seq.template add<nn::Conv2d<T>>(id + ".conv", j == 1 ? in : out, out, 3);
    seq.template add<nn::BatchNorm2d<T>>(id + ".bn", out);
    seq.template add<nn::ReLU<T>>(id + ".relu");
    desc.push_back({id + ".conv", "conv", 3, j == 1 ? in : out, out});
    desc.push_back({id + ".bn", "batchnorm", 0, out, out});
    desc.push_back({id + ".relu", "relu", 0, out, out});
  }
}

}  // namespace

template <typename T>
Ucnn<T>::Ucnn(UcnnConfig cfg) : cfg_(cfg), geometry_(ucnn_geometry(cfg)) {
  spec_.kind = ModelKind::kUcnn;
  spec_.ucnn = cfg;
  spec_.input_size = geometry_.input_size;
  spec_.output_size = geometry_.output_size;
  const std::size_t depth = cfg.depth;
  auto channels = [&](std::size_t stage) { return cfg.base_channels << stage; };

  encoders_.resize(depth);
  std::size_t in = 3;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string id = "enc" + std::to_string(i + 1);
    add_conv_pair(encoders_[i].layers, id, in, channels(i), spec_.layers);
    if (i + 1 == depth && cfg.dropout > 0.0) {
      encoders_[i].layers.template add<nn::Dropout<T>>(id + ".dropout", cfg.dropout);
      spec_.layers.push_back({id + ".dropout", "dropout", 0, channels(i), channels(i)});
    }
    pools_.push_back(std::make_unique<nn::MaxPool2<T>>(id + ".pool"));
    spec_.layers.push_back({id + ".pool", "pool", 2, channels(i), channels(i)});
    in = channels(i);
  }
  if (auto* first = dynamic_cast<nn::Conv2d<T>*>(&encoders_[0].layers[0])) {
    first->set_propagate_input_grad(false);
  }
  add_conv_pair(bottleneck_.layers, "mid", in, channels(depth), spec_.layers);
  if (cfg.dropout > 0.0) {
    bottleneck_.layers.template add<nn::Dropout<T>>("mid.dropout", cfg.dropout);
    spec_.layers.push_back({"mid.dropout", "dropout", 0, channels(depth), channels(depth)});
  }

  ups_.resize(depth);
  decoders_.resize(depth);
  for (std::size_t i = depth; i-- > 0;) {
    const std::string id = "dec" + std::to_string(i + 1);
    ups_[i] = std::make_unique<nn::UpConv2x2<T>>(id + ".up", channels(i + 1), channels(i));
    spec_.layers.push_back({id + ".up", "upconv", 2, channels(i + 1), channels(i)});
    add_conv_pair(decoders_[i].layers, id, 2 * channels(i), channels(i), spec_.layers);
  }
  head_ = std::make_unique<nn::Conv2d<T>>("head.conv", channels(0), 2, 1);
  spec_.layers.push_back({"head.conv", "conv", 1, channels(0), 2});
  reseed_dropout(0);
}

template <typename T>
void Ucnn<T>::reseed_dropout(std::uint64_t seed) {
  Rng rng(seed);
  auto reseed = [&](nn::Sequential<T>& seq) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (auto* d = dynamic_cast<nn::Dropout<T>*>(&seq[i])) d->reseed(rng.next_u64());
    }
  };
  for (auto& e : encoders_) reseed(e.layers);
  reseed(bottleneck_.layers);
}

template <typename T>
Shape Ucnn<T>::output_shape(const Shape& in) const {
  Shape s = in;
  std::vector<Shape> skips;
  for (std::size_t i = 0; i < encoders_.size(); ++i) {
    s = encoders_[i].layers.output_shape(s);
    skips.push_back(s);
    s = pools_[i]->output_shape(s);
  }
  s = bottleneck_.layers.output_shape(s);
  for (std::size_t i = encoders_.size(); i-- > 0;) {
    s = ups_[i]->output_shape(s);
    const Shape& a = skips[i];
    if (a[2] < s[2] || a[3] < s[3] || (a[2] - s[2]) % 2 || (a[3] - s[3]) % 2) {
      throw ShapeError("UCNN skip " + nn::shape_string(a) + " cannot be cropped to " +
                       nn::shape_string(s));
    }
    s = decoders_[i].layers.output_shape({s[0], a[1] + s[1], s[2], s[3]});
  }
  return head_->output_shape(s);
}

template <typename T>
Tensor<T> Ucnn<T>::forward(const Tensor<T>& x, Mode mode) {
  output_shape(x.shape());
  const std::size_t depth = encoders_.size();
  std::vector<Tensor<T>> skips(depth);
  skip_shapes_.assign(depth, {});
  up_shapes_.assign(depth, {});
  Tensor<T> h = x;
  for (std::size_t i = 0; i < depth; ++i) {
    skips[i] = encoders_[i].layers.forward(std::move(h), mode);
    skip_shapes_[i] = skips[i].shape();
    h = pools_[i]->forward(skips[i], mode);
  }
  h = bottleneck_.layers.forward(std::move(h), mode);
  for (std::size_t i = depth; i-- > 0;) {
    Tensor<T> up = ups_[i]->forward(h, mode);
    up_shapes_[i] = up.shape();
    h = decoders_[i].layers.forward(nn::crop_concat(skips[i], up), mode);
    skips[i] = Tensor<T>();
  }
  return head_->forward(h, mode);
}

template <typename T>
Tensor<T> Ucnn<T>::backward(const Tensor<T>& dlogits) {
  const std::size_t depth = encoders_.size();
  std::vector<Tensor<T>> skip_grads(depth);
  Tensor<T> g = head_->backward(dlogits);
  for (std::size_t i = 0; i < depth; ++i) {
    g = decoders_[i].layers.backward(std::move(g));
    auto [da, db] = nn::crop_concat_backward(g, skip_shapes_[i], up_shapes_[i]);
    skip_grads[i] = std::move(da);
    g = ups_[i]->backward(db);
  }
  g = bottleneck_.layers.backward(std::move(g));
  for (std::size_t i = depth; i-- > 0;) {
    g = pools_[i]->backward(g);
    for (std::size_t k = 0; k < g.numel(); ++k) g[k] += skip_grads[i][k];
    skip_grads[i] = Tensor<T>();
    g = encoders_[i].layers.backward(std::move(g));
  }
  return g;
}

template <typename T>
std::vector<nn::Parameter<T>*> Ucnn<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  auto append = [&](std::vector<nn::Parameter<T>*> ps) {
    out.insert(out.end(), ps.begin(), ps.end());
  };
  for (auto& e : encoders_) append(e.layers.parameters());
  append(bottleneck_.layers.parameters());
  for (std::size_t i = encoders_.size(); i-- > 0;) {
    append(ups_[i]->parameters());
    append(decoders_[i].layers.parameters());
  }
  append(head_->parameters());
  return out;
}

template <typename T>
void Ucnn<T>::clear_cache() {
  for (auto& e : encoders_) e.layers.clear_cache();
  bottleneck_.layers.clear_cache();
  for (auto& d : decoders_) d.layers.clear_cache();
  for (auto& u : ups_) u->clear_cache();
  for (auto& p : pools_) p->clear_cache();
  head_->clear_cache();
}

template <typename T>
void Ucnn<T>::initialize(Rng& rng) {
  for (auto& e : encoders_) nn::he_initialize(e.layers, rng);
  nn::he_initialize(bottleneck_.layers, rng);
  for (std::size_t i = encoders_.size(); i-- > 0;) {
    nn::he_initialize_layer(*ups_[i], rng);
    nn::he_initialize(decoders_[i].layers, rng);
  }
  nn::he_initialize_layer(*head_, rng);
}

template class Network<float>;
template class Network<double>;
template class Fcnn<float>;
template class Fcnn<double>;
template class Ucnn<float>;
template class Ucnn<double>;

std::unique_ptr<Fcnn<float>> build_fcnn(Rng& rng, FcnnConfig cfg) {
  auto net = std::make_unique<Fcnn<float>>(cfg);
  net->initialize(rng);
  return net;
}

std::unique_ptr<Ucnn<float>> build_ucnn(Rng& rng, UcnnConfig cfg) {
  auto net = std::make_unique<Ucnn<float>>(cfg);
  net->initialize(rng);
  return net;
}

std::unique_ptr<Network<float>> network_from_weights(const WeightSet& ws) {
  const NamedTensor* cfg = ws.find("model.config");
  if (!cfg || cfg->tensor.rank() != 1 || cfg->tensor.numel() < 2) {
    throw DataError("weight set lacks a model.config entry");
  }
  const auto& c = cfg->tensor;
  std::unique_ptr<Network<float>> net;
  if (c[0] == 0.0f) {
    net = std::make_unique<Fcnn<float>>(FcnnConfig{static_cast<std::size_t>(c[1])});
  } else if (c[0] == 1.0f && c.numel() == 5) {
    UcnnConfig u;
    u.base_channels = static_cast<std::size_t>(c[1]);
    u.depth = static_cast<std::size_t>(c[2]);
    u.output_size = static_cast<std::size_t>(c[3]);
    u.dropout = c[4];
    net = std::make_unique<Ucnn<float>>(u);
  } else {
    throw DataError("unrecognized model.config entry");
  }
  net->import_weights(ws);
  return net;
}

// ---------------------------------------------------------------------------
// Inference

void image_into_tensor(const RgbImage& img, Tensor<float>& t, std::size_t n) {
  const std::size_t plane = img.pixel_count();
  const auto& b = img.bytes();
  float* r = t.plane(n, 0);
  float* g = t.plane(n, 1);
  float* bl = t.plane(n, 2);
  constexpr float kScale = 1.0f / 255.0f;
  for (std::size_t i = 0; i < plane; ++i) {
    r[i] = b[3 * i] * kScale;
    g[i] = b[3 * i + 1] * kScale;
    bl[i] = b[3 * i + 2] * kScale;
  }
}

Tensor<float> image_to_tensor(const RgbImage& img) {
  Tensor<float> t(1, 3, img.height(), img.width());
  image_into_tensor(img, t, 0);
  return t;
}

Raster<float> predict_tile(Network<float>& net, const RgbImage& tile) {
  const Tensor<float> logits = net.forward(image_to_tensor(tile), Mode::kInfer);
  net.clear_cache();
  const Tensor<float> prob = nn::softmax_channels(logits);
  Raster<float> out(static_cast<int>(prob.w()), static_cast<int>(prob.h()));
  std::copy_n(prob.plane(0, 1), out.size(), out.values().begin());
  return out;
}

namespace {

// Runs `work(tile_index, network)` over all tiles. Each worker owns a copy
// of the network, and every tile writes a disjoint output region, so the
// result does not depend on the number of workers.
template <typename Work>
void for_each_tile(Network<float>& net, std::size_t tiles, int jobs, Work work) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), tiles));
  if (workers == 1) {
    for (std::size_t t = 0; t < tiles; ++t) work(t, net);
    return;
  }
  const WeightSet ws = net.export_weights();
  std::vector<std::unique_ptr<Network<float>>> copies;
  for (std::size_t w = 0; w < workers; ++w) copies.push_back(network_from_weights(ws));
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t t = w; t < tiles; t += workers) work(t, *copies[w]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void mark_empty(const Level& level, Rgb empty, LikelihoodMap& map) {
  for (int i = 0; i < map.prob.height(); ++i) {
    for (int j = 0; j < map.prob.width(); ++j) {
      const int x = map.offset_x + map.stride * j, y = map.offset_y + map.stride * i;
      const bool inside = x >= 0 && y >= 0 && x < level.width() && y < level.height();
      map.empty(j, i) = !inside || level.pixels.at(x, y) == empty;
    }
  }
}

}  // namespace

LikelihoodMap infer_fcnn_dense(const PyramidImage& pyramid, Network<float>& fcnn,
                               const InferenceOptions& opts) {
  if (fcnn.spec().kind != ModelKind::kFcnn) throw UsageError("infer_fcnn_dense needs an FCNN");
  const std::size_t li = pyramid.require_level(opts.spacing);
  const Level& level = pyramid.level(li);
  const int patch = FcnnConfig::kPatchSize, stride = FcnnConfig::kStride;
  const int halo = patch - stride;
  LikelihoodMap map;
  map.level = li;
  map.stride = stride;
  map.offset_x = map.offset_y = FcnnConfig::kOffset;
  const int gw = level.width() >= patch ? (level.width() - patch) / stride + 1 : 0;
  const int gh = level.height() >= patch ? (level.height() - patch) / stride + 1 : 0;
  map.prob = Raster<float>(gw, gh);
  map.empty = Raster<std::uint8_t>(gw, gh);
  if (gw == 0 || gh == 0) return map;

  const int tc = std::max(1, opts.fcnn_tile_cells);
  const int tx = (gw + tc - 1) / tc, ty = (gh + tc - 1) / tc;
  for_each_tile(fcnn, static_cast<std::size_t>(tx) * ty, opts.jobs,
                [&](std::size_t t, Network<float>& net) {
                  const int cx0 = static_cast<int>(t % tx) * tc, cy0 = static_cast<int>(t / tx) * tc;
                  const int cw = std::min(tc, gw - cx0), ch = std::min(tc, gh - cy0);
                  const Patch in = read_region(pyramid, li, cx0 * stride, cy0 * stride,
                                               cw * stride + halo, ch * stride + halo);
                  const Raster<float> p = predict_tile(net, in.pixels);
                  for (int i = 0; i < ch; ++i) {
                    for (int j = 0; j < cw; ++j) map.prob(cx0 + j, cy0 + i) = p(j, i);
                  }
                });
  mark_empty(level, pyramid.empty_color(), map);
  return map;
}

LikelihoodMap infer_ucnn_tiled(const PyramidImage& pyramid, Network<float>& ucnn,
                               const InferenceOptions& opts) {
  if (ucnn.spec().kind != ModelKind::kUcnn) throw UsageError("infer_ucnn_tiled needs a UCNN");
  const std::size_t li = pyramid.require_level(opts.spacing);
  const Level& level = pyramid.level(li);
  const int in = static_cast<int>(ucnn.spec().input_size);
  const int out = static_cast<int>(ucnn.spec().output_size);
  const int margin = (in - out) / 2;
  LikelihoodMap map;
  map.level = li;
  map.stride = 1;
  map.prob = Raster<float>(level.width(), level.height());
  map.empty = Raster<std::uint8_t>(level.width(), level.height());
  const int tx = (level.width() + out - 1) / out, ty = (level.height() + out - 1) / out;
  for_each_tile(ucnn, static_cast<std::size_t>(tx) * ty, opts.jobs,
                [&](std::size_t t, Network<float>& net) {
                  const int ox = static_cast<int>(t % tx) * out, oy = static_cast<int>(t / tx) * out;
                  const Patch tile = read_region(pyramid, li, ox - margin, oy - margin, in, in);
                  const Raster<float> p = predict_tile(net, tile.pixels);
                  const int cw = std::min(out, level.width() - ox);
                  const int ch = std::min(out, level.height() - oy);
                  for (int i = 0; i < ch; ++i) {
                    for (int j = 0; j < cw; ++j) map.prob(ox + j, oy + i) = p(j, i);
                  }
                });
  mark_empty(level, pyramid.empty_color(), map);
  return map;
}

}  // namespace slidecarver
