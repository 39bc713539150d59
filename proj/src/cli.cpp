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

#include "slidecarver/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "slidecarver/error.hpp"
#include "slidecarver/eval.hpp"
#include "slidecarver/fesi.hpp"
#include "slidecarver/models.hpp"
#include "slidecarver/pnm.hpp"
#include "slidecarver/pyramid.hpp"
#include "slidecarver/synth.hpp"
#include "slidecarver/train.hpp"

namespace slidecarver {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["version"] = kVersion;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << j.dump(2) << '\n';
  }
};

// Manifest path for a file output: `<file>.run.json`.
fs::path manifest_for(const fs::path& output) {
  return output.parent_path() / (output.filename().string() + ".run.json");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

// Seeds come from --seed, else SLIDECARVER_SEED, else 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedEnv)) {
    std::uint64_t v = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw UsageError(std::string(kSeedEnv) + " is not an unsigned integer: '" + s + "'");
    }
    return v;
  }
  return 0;
}

// A path naming a slide directory is used as is; a directory without a
// pyramid manifest expands to its slide_* subdirectories in name order.
std::vector<fs::path> expand_slides(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::exists(p / "manifest.txt") || !fs::is_directory(p)) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && fs::exists(e.path() / "manifest.txt")) found.push_back(e.path());
    }
    if (found.empty()) throw DataError("no slides under " + p.string());
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

std::vector<std::string> strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> s;
  for (const auto& p : paths) s.push_back(p.string());
  return s;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::optional<std::uint64_t> seed;
  std::string out;
  int slides = 1;
  std::string mode = "easy";
  int size = 2048;
};

void run_synth(const SynthArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.seed);
  const CorpusMode mode = parse_corpus_mode(a.mode);
  if (a.slides < 0) throw UsageError("--slides must be non-negative");
  const fs::path dir(a.out);
  fs::create_directories(dir);
  Rng rng(seed);
  Manifest m;
  m.command = "synth";
  m.seed = seed;
  m.config = {{"slides", a.slides}, {"mode", a.mode}, {"size", a.size}};
  for (int k = 0; k < a.slides; ++k) {
    SynthParams p = corpus_params(mode, rng.next_u64());
    p.base_size = a.size;
    char name[32];
    std::snprintf(name, sizeof name, "slide_%03d", k);
    save_slide(generate_slide(p), dir / name);
    m.outputs.push_back((dir / name).string());
    out << (dir / name).string() << '\n';
  }
  m.write(dir / "run.json");
}

struct TrainArgs {
  std::optional<std::uint64_t> seed;
  std::string model;
  std::vector<std::string> train, val;
  std::string out, log;
  std::optional<int> epochs, train_iterations, val_iterations, batch, pool_size;
  std::optional<int> lr_patience, stop_patience, augmentations;
  std::optional<double> lr, l2;
  std::size_t width_divisor = 1;
  std::size_t base_channels = 32, depth = 4, output_size = 708;
  double dropout = 0.5;
};

void run_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = TrainConfig::defaults(parse_model_kind(a.model));
  cfg.seed = resolve_seed(a.seed);
  if (a.epochs) cfg.max_epochs = *a.epochs;
  if (a.train_iterations) cfg.train_iterations = *a.train_iterations;
  if (a.val_iterations) cfg.val_iterations = *a.val_iterations;
  if (a.batch) cfg.batch = *a.batch;
  if (a.pool_size) cfg.pool_size = *a.pool_size;
  if (a.lr_patience) cfg.lr_patience = *a.lr_patience;
  if (a.stop_patience) cfg.stop_patience = *a.stop_patience;
  if (a.augmentations) cfg.augmentations = *a.augmentations;
  if (a.lr) cfg.initial_lr = *a.lr;
  if (a.l2) cfg.l2_lambda = *a.l2;
  cfg.fcnn.width_divisor = a.width_divisor;
  cfg.ucnn = {a.base_channels, a.depth, a.output_size, a.dropout};
  cfg.validate();
  if (cfg.kind == ModelKind::kFcnn) (void)cfg.fcnn.filters(0);
  else (void)ucnn_geometry(cfg.ucnn);

  const auto train_dirs = expand_slides(a.train), val_dirs = expand_slides(a.val);
  std::vector<LabeledSlide> train_slides, val_slides;
  for (const auto& d : train_dirs) train_slides.push_back(load_labeled_slide(d));
  for (const auto& d : val_dirs) val_slides.push_back(load_labeled_slide(d));

  const fs::path weights(a.out);
  const fs::path log = a.log.empty() ? fs::path(a.out + ".log") : fs::path(a.log);
  ensure_parent(weights);
  ensure_parent(log);
  std::ofstream logf(log, std::ios::binary | std::ios::trunc);
  if (!logf) throw DataError("cannot write " + log.string());
  logf << "# epoch\tlr\ttrain_loss\tval_accuracy\tstopped\n";
  const TrainResult r = train(train_slides, val_slides, cfg, [&](const EpochLog& e) {
    const std::string line = format_log_line(e);
    logf << line << '\n' << std::flush;
    out << line << '\n';
  });
  save_weights(r.weights, weights);

  Manifest m;
  m.command = "train";
  m.seed = cfg.seed;
  m.config = {{"model", a.model},
              {"initial_lr", cfg.initial_lr},
              {"lr_patience", cfg.lr_patience},
              {"stop_patience", cfg.stop_patience},
              {"train_iterations", cfg.train_iterations},
              {"val_iterations", cfg.val_iterations},
              {"batch", cfg.batch},
              {"l2_lambda", cfg.l2_lambda},
              {"augmentations", cfg.augmentations},
              {"pool_size", cfg.pool_size},
              {"replace_fraction", cfg.replace_fraction},
              {"max_epochs", cfg.max_epochs},
              {"spacing", cfg.spacing},
              {"best_epoch", r.best_epoch}};
  if (cfg.kind == ModelKind::kFcnn) {
    m.config["width_divisor"] = cfg.fcnn.width_divisor;
  } else {
    m.config["base_channels"] = cfg.ucnn.base_channels;
    m.config["depth"] = cfg.ucnn.depth;
    m.config["output_size"] = cfg.ucnn.output_size;
    m.config["dropout"] = cfg.ucnn.dropout;
  }
  m.inputs = strings(train_dirs);
  const auto v = strings(val_dirs);
  m.inputs.insert(m.inputs.end(), v.begin(), v.end());
  m.outputs = {weights.string(), log.string()};
  m.write(manifest_for(weights));
}

struct SegmentArgs {
  std::string method, input, out, weights;
  int jobs = 1;
};

void run_segment(const SegmentArgs& a) {
  const std::string method = a.method;
  if (method != "fesi" && method != "fcnn" && method != "ucnn") {
    throw UsageError("unknown method '" + method + "' (expected fesi, fcnn or ucnn)");
  }
  if (method != "fesi" && a.weights.empty()) {
    throw UsageError("segment --method " + method + " requires --weights");
  }
  if (a.jobs < 1) throw UsageError("--jobs must be at least 1");
  const PyramidImage pyramid = load_pyramid(a.input);
  BinaryMask mask;
  json config = {{"method", method}, {"jobs", a.jobs}};
  Manifest m;
  m.inputs = {a.input};
  if (method == "fesi") {
    const FesiParams params;
    mask = fesi_segment(pyramid, params);
    config["level_spacing"] = params.level_spacing;
  } else {
    auto net = network_from_weights(load_weights(a.weights));
    if (to_string(net->spec().kind) != method) {
      throw DataError("weights in " + a.weights + " are for " + to_string(net->spec().kind) +
                      ", not " + method);
    }
    InferenceOptions opts;
    opts.jobs = a.jobs;
    const LikelihoodMap lm = method == "fcnn" ? infer_fcnn_dense(pyramid, *net, opts)
                                              : infer_ucnn_tiled(pyramid, *net, opts);
    const Level& level = pyramid.level(lm.level);
    mask = postprocess(lm, level.width(), level.height());
    config["level_spacing"] = opts.spacing;
    m.inputs.push_back(a.weights);
  }
  const fs::path out(a.out);
  ensure_parent(out);
  write_mask_pgm(mask, out);
  m.command = "segment";
  m.config = config;
  m.outputs = {out.string()};
  m.write(manifest_for(out));
}

struct EvalArgs {
  std::string pred, gt, slide, method = "pred", out;
};

void run_eval(const EvalArgs& a, std::ostream& out) {
  const BinaryMask pred = read_mask_pgm(a.pred);
  BinaryMask gt = read_mask_pgm(a.gt);
  // Ground truth is rendered at the prediction's level.
  if (!gt.same_extent(pred)) gt = resample_nearest(gt, pred.width(), pred.height());
  EvalRow row;
  row.slide = a.slide.empty() ? fs::path(a.gt).parent_path().filename().string() : a.slide;
  if (row.slide.empty()) row.slide = fs::path(a.gt).stem().string();
  row.method = a.method;
  row.jaccard = jaccard(pred, gt);
  const std::string text = format_rows({row});
  out << text;
  if (!a.out.empty()) {
    write_text(a.out, text);
    Manifest m;
    m.command = "eval";
    m.config = {{"slide", row.slide}, {"method", row.method}};
    m.inputs = {a.pred, a.gt};
    m.outputs = {a.out};
    m.write(manifest_for(a.out));
  }
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

void run_report(const ReportArgs& a, std::ostream& out) {
  std::vector<EvalRow> rows;
  for (const auto& in : a.inputs) {
    std::ifstream f(in);
    if (!f) throw DataError("cannot open " + in);
    auto r = parse_rows(f);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const std::string text = format_report(summarize(std::move(rows)));
  out << text;
  if (!a.out.empty()) {
    write_text(a.out, text);
    Manifest m;
    m.command = "report";
    m.inputs = a.inputs;
    m.outputs = {a.out};
    m.write(manifest_for(a.out));
  }
}

struct OverlayArgs {
  std::string input, mask, out;
  int level = 0;
};

void run_overlay(const OverlayArgs& a) {
  const PyramidImage pyramid = load_pyramid(a.input);
  if (a.level < 0 || static_cast<std::size_t>(a.level) >= pyramid.level_count()) {
    throw UsageError("--level " + std::to_string(a.level) + " is not in the pyramid");
  }
  RgbImage img = pyramid.level(a.level).pixels;
  BinaryMask mask = read_mask_pgm(a.mask);
  if (mask.width() != img.width() || mask.height() != img.height()) {
    mask = resample_nearest(mask, img.width(), img.height());
  }
  // Boundary: tissue pixels with a 4-neighbor outside the mask or image.
  const Rgb paint{0, 200, 0};
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!mask(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x + 1 == img.width() || y + 1 == img.height() ||
                        !mask(x - 1, y) || !mask(x + 1, y) || !mask(x, y - 1) || !mask(x, y + 1);
      if (edge) img.set(x, y, paint);
    }
  }
  const fs::path out(a.out);
  ensure_parent(out);
  write_ppm(img, out);
  Manifest m;
  m.command = "overlay";
  m.config = {{"level", a.level}};
  m.inputs = {a.input, a.mask};
  m.outputs = {a.out};
  m.write(manifest_for(out));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tissue segmentation for whole-slide images", "slidecarver"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic slide corpus");
  synth->add_option("--seed", sa.seed, "Random seed (default: $SLIDECARVER_SEED or 0)");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--slides", sa.slides, "Number of slides")->capture_default_str();
  synth->add_option("--mode", sa.mode, "easy or hard")->capture_default_str();
  synth->add_option("--size", sa.size, "Base level size in pixels")->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train an FCNN or U-Net");
  tr->add_option("--model", ta.model, "fcnn or ucnn")->required();
  tr->add_option("--train", ta.train, "Training slide or corpus directories")->required();
  tr->add_option("--val", ta.val, "Validation slide or corpus directories")->required();
  tr->add_option("--out", ta.out, "Weight file to write")->required();
  tr->add_option("--log", ta.log, "Epoch log (default: <out>.log)");
  tr->add_option("--seed", ta.seed, "Random seed (default: $SLIDECARVER_SEED or 0)");
  tr->add_option("--epochs", ta.epochs, "Maximum number of epochs");
  tr->add_option("--train-iterations", ta.train_iterations, "Training iterations per epoch");
  tr->add_option("--val-iterations", ta.val_iterations, "Validation iterations per epoch");
  tr->add_option("--batch", ta.batch, "Patches drawn per iteration");
  tr->add_option("--pool-size", ta.pool_size, "U-Net selective sampling pool size");
  tr->add_option("--lr", ta.lr, "Initial learning rate");
  tr->add_option("--l2", ta.l2, "L2 regularization weight");
  tr->add_option("--lr-patience", ta.lr_patience, "Epochs without improvement before halving");
  tr->add_option("--stop-patience", ta.stop_patience, "Epochs without improvement before stopping");
  tr->add_option("--augmentations", ta.augmentations, "Augmented copies per drawn patch");
  tr->add_option("--width-divisor", ta.width_divisor, "FCNN hidden channel divisor")
      ->capture_default_str();
  tr->add_option("--base-channels", ta.base_channels, "U-Net first-stage channels")
      ->capture_default_str();
  tr->add_option("--depth", ta.depth, "U-Net pooling stages")->capture_default_str();
  tr->add_option("--output-size", ta.output_size, "U-Net output tile size")->capture_default_str();
  tr->add_option("--dropout", ta.dropout, "U-Net dropout probability")->capture_default_str();

  SegmentArgs ga;
  auto* seg = app.add_subcommand("segment", "Segment one slide");
  seg->add_option("--method", ga.method, "fesi, fcnn or ucnn")->required();
  seg->add_option("--input", ga.input, "Slide directory")->required();
  seg->add_option("--out", ga.out, "Mask to write (P5)")->required();
  seg->add_option("--weights", ga.weights, "Weight file (fcnn/ucnn)");
  seg->add_option("--jobs", ga.jobs, "Parallel inference tiles")->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Jaccard index of a mask against ground truth");
  ev->add_option("--pred", ea.pred, "Predicted mask")->required();
  ev->add_option("--gt", ea.gt, "Ground-truth mask")->required();
  ev->add_option("--slide", ea.slide, "Slide name (default: ground truth directory)");
  ev->add_option("--method", ea.method, "Method label")->capture_default_str();
  ev->add_option("--out", ea.out, "Row file to write");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Summarize evaluation rows per method");
  rep->add_option("--inputs", ra.inputs, "Row files")->required();
  rep->add_option("--out", ra.out, "Report file to write");

  OverlayArgs oa;
  auto* ov = app.add_subcommand("overlay", "Paint a mask boundary over a slide level");
  ov->add_option("--input", oa.input, "Slide directory")->required();
  ov->add_option("--mask", oa.mask, "Mask (any level; resampled)")->required();
  ov->add_option("--out", oa.out, "RGB image to write (P6)")->required();
  ov->add_option("--level", oa.level, "Pyramid level")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);  // --help or --version
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*synth) run_synth(sa, out);
    else if (*tr) run_train(ta, out);
    else if (*seg) run_segment(ga);
    else if (*ev) run_eval(ea, out);
    else if (*rep) run_report(ra, out);
    else if (*ov) run_overlay(oa);
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace slidecarver
