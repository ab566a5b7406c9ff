/* Copyright (c) 2026 The flowdeform Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Command-line front end: gradient checks, toy training, inference,
// alignment visualization, offset statistics and image metrics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowdeform/analysis.hpp"
#include "flowdeform/gradsuite.hpp"
#include "flowdeform/image.hpp"
#include "flowdeform/metrics.hpp"
#include "flowdeform/model.hpp"
#include "flowdeform/sampling.hpp"
#include "flowdeform/train.hpp"

namespace fs = std::filesystem;
using namespace flowdeform;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("no such file or directory: " + path);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

// ---------------------------------------------------------------------------

int run_grad_check(std::uint64_t seed) {
  const auto entries = run_gradient_suite(seed);
  bool ok = true;
  std::printf("%-20s %12s %10s %8s  %s\n", "op", "worst_rel", "tolerance", "checked", "status");
  for (const auto& e : entries) {
    ok = ok && e.pass();
    std::printf("%-20s %12.3e %10.0e %8zu  %s\n", e.name.c_str(), e.worst_rel_error, e.tolerance,
                e.checked, e.pass() ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int run_train_toy(const TrainArgs& a) {
  require_file(a.config);
  std::ifstream is(a.config);
  TrainOptions o = read_train_config(is);
  if (a.steps) o.steps = *a.steps;
  if (a.seed) o.seed = *a.seed;
  o.out_dir = a.out;
  ParamStore<float> store;
  const auto r = train(o, store, [&](const MetricsRow& row) {
    if (a.quiet) return;
    if (std::isfinite(row.psnr_holdout))
      std::printf("step %6d  lr %.3e  loss %.5f  holdout %.3f dB\n", row.step, row.lr, row.loss,
                  row.psnr_holdout);
    std::fflush(stdout);
  });
  std::printf("holdout Y-PSNR: bicubic %.3f dB, initial %.3f dB, final %.3f dB (%+.3f vs bicubic)\n",
              r.initial.bicubic_psnr, r.initial.model_psnr, r.final.model_psnr,
              r.final.model_psnr - r.initial.bicubic_psnr);
  std::printf("wrote %s\n", (fs::path(a.out) / "checkpoint").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

std::vector<Tensor4<float>> read_frames(const std::vector<std::string>& paths) {
  std::vector<Tensor4<float>> frames;
  for (const auto& p : paths) {
    require_file(p);
    frames.push_back(read_png(p));
    if (frames.back().shape() != frames.front().shape())
      throw UsageError("frame " + p + " has shape " + frames.back().shape().str() +
                       ", expected " + frames.front().shape().str());
  }
  return frames;
}

int run_super_resolve(const std::string& checkpoint, const std::vector<std::string>& paths,
                      const std::string& out) {
  require_file(checkpoint);
  ParamStore<float> store;
  const ModelConfig cfg = load_checkpoint(checkpoint, store);
  if (static_cast<int>(paths.size()) != cfg.num_frames)
    throw UsageError("the checkpoint expects " + std::to_string(cfg.num_frames) + " frames, got " +
                     std::to_string(paths.size()));
  const auto frames = read_frames(paths);
  Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto result = fdan_forward(tape, store, cfg, frames);
  const auto parent = std::filesystem::path(out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_png(out, result.hr.value());
  std::printf("wrote %s (%dx%d)\n", out.c_str(), result.hr.value().w(), result.hr.value().h());
  return 0;
}

// ---------------------------------------------------------------------------

struct AlignArgs {
  std::string checkpoint;
  std::vector<std::string> frames;
  std::string out_dir;
  int neighbor = 0;
  std::uint64_t seed = 1;
  double min_disp = 1.0, max_disp = 2.0;
  double max_flow = 0.0;
};

double max_magnitude(const Tensor4<float>& flow) {
  double m = 0.0;
  for (std::size_t i = 0; i < flow.shape().plane(); ++i)
    m = std::max(m, std::hypot(static_cast<double>(flow.plane(0, 0)[i]),
                               static_cast<double>(flow.plane(0, 1)[i])));
  return m;
}

int run_align_viz(const AlignArgs& a) {
  ParamStore<float> store;
  ModelConfig cfg = ModelConfig::toy();
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint);
    cfg = load_checkpoint(a.checkpoint, store);
  } else {
    init_fdan(store, cfg, a.seed);
  }
  if (a.neighbor < 0 || a.neighbor >= cfg.num_frames || a.neighbor == cfg.reference_index())
    throw UsageError("--neighbor must be a non-reference frame index");

  std::vector<Tensor4<float>> frames;
  std::optional<Tensor4<float>> gt_flow;
  if (!a.frames.empty()) {
    if (static_cast<int>(a.frames.size()) != cfg.num_frames)
      throw UsageError("expected " + std::to_string(cfg.num_frames) + " frames");
    frames = read_frames(a.frames);
  } else {
    SynthSpec spec;
    spec.num_frames = cfg.num_frames;
    spec.scale = cfg.scale;
    spec.min_disp = a.min_disp;
    spec.max_disp = a.max_disp;
    spec.augment = false;
    const auto s = make_holdout<float>(spec, 1, a.seed).front();
    frames = s.lr_frames;
    gt_flow = s.lr_flows[a.neighbor];
  }

  SampleTrace trace;
  Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto out = fdan_forward(tape, store, cfg, frames, FdanTraceRequest{a.neighbor, &trace});
  const Tensor4<float> zero(1, 2, frames[0].h(), frames[0].w());
  const Tensor4<float> flow = cfg.uses_flow() ? out.flows[a.neighbor].fine.value() : zero;
  const double scale = a.max_flow > 0 ? a.max_flow : std::max(1.0, max_magnitude(flow));

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_png((dir / "reference.png").string(), frames[cfg.reference_index()]);
  write_png((dir / "neighbor.png").string(), frames[a.neighbor]);
  Tape<float> wt;
  write_png((dir / "warped_neighbor.png").string(),
            warp(wt.constant(frames[a.neighbor]), wt.constant(flow)).value());
  write_png((dir / "flow.png").string(), flow_to_color(flow, scale));
  {
    auto os = open_out(dir / "trace.csv");
    trace.write_csv(os);
  }
  std::printf("flow max |f| %.3f px, color scale %.3f px, %zu trace rows\n", max_magnitude(flow), scale,
              trace.rows.size());
  if (gt_flow) {
    write_png((dir / "flow_gt.png").string(), flow_to_color(*gt_flow, scale));
    double epe = 0.0;
    const std::size_t n = flow.shape().plane();
    for (std::size_t i = 0; i < n; ++i)
      epe += std::hypot(static_cast<double>(flow.plane(0, 0)[i] - gt_flow->plane(0, 0)[i]),
                        static_cast<double>(flow.plane(0, 1)[i] - gt_flow->plane(0, 1)[i]));
    std::printf("endpoint error vs ground truth: %.3f px\n", epe / static_cast<double>(n));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct HistArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> labels;
  std::string out;
  int samples = 16;
  std::uint64_t seed = 1;
  double min_disp = 4.0, max_disp = 6.0;
  int frame = 0;
  int layer = 0;
};

int run_offset_hist(const HistArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.checkpoints.size())
    throw UsageError("give one --label per --checkpoint");
  const auto edges = default_offset_edges();
  std::vector<LabeledHistogram> rows;
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    require_file(a.checkpoints[i]);
    ParamStore<float> store;
    const ModelConfig cfg = load_checkpoint(a.checkpoints[i], store);
    SynthSpec spec;
    spec.num_frames = cfg.num_frames;
    spec.scale = cfg.scale;
    spec.min_disp = a.min_disp;
    spec.max_disp = a.max_disp;
    const auto set = make_holdout<float>(spec, a.samples, a.seed);
    OffsetHistogramOptions opts;
    opts.frame = a.frame;
    opts.layer = a.layer;
    const std::string label = a.labels.empty() ? to_string(cfg.fdc_mode) : a.labels[i];
    rows.push_back({label, model_offset_histogram(store, cfg, set, opts)});
    std::printf("%-12s fraction in [0, 2): %.4f\n", label.c_str(), rows.back().fractions[0] + rows.back().fractions[1]);
  }
  if (a.out.empty()) {
    write_labeled_histograms(std::cout, edges, rows);
  } else {
    auto os = open_out(a.out);
    write_labeled_histograms(os, edges, rows);
  }
  return 0;
}

// ---------------------------------------------------------------------------

std::map<std::string, fs::path> png_files(const std::string& dir) {
  require_file(dir);
  std::map<std::string, fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files[e.path().filename().string()] = e.path();
  if (files.empty()) throw UsageError("no PNG files in " + dir);
  return files;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
  const auto pred = png_files(pred_dir), gt = png_files(gt_dir);
  MetricReport report;
  for (const auto& [name, path] : gt) {
    auto it = pred.find(name);
    if (it == pred.end()) throw UsageError("prediction missing for " + name);
    report.frames.push_back(evaluate_frame(name, read_png(it->second.string()), read_png(path.string())));
  }
  if (out.empty()) {
    report.write_csv(std::cout);
  } else {
    auto os = open_out(out);
    report.write_csv(os);
  }
  const auto m = report.mean();
  std::fprintf(stderr, "%zu frames: RGB %.3f dB / %.4f, Y %.3f dB / %.4f\n", report.frames.size(),
               m.psnr_rgb, m.ssim_rgb, m.psnr_y, m.ssim_y);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowdeform: flow-guided deformable alignment for video super-resolution"};
  app.require_subcommand(1);

  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every differentiable op");
  gc->add_option("--seed", gc_seed, "Seed for the random inputs");

  TrainArgs ta;
  auto* tt = app.add_subcommand("train-toy", "Train a model from a key = value config file");
  tt->add_option("--config", ta.config, "Training config")->required();
  tt->add_option("--out", ta.out, "Output directory (metrics.csv, checkpoint/)")->required();
  tt->add_option("--steps", ta.steps, "Override the number of steps");
  tt->add_option("--seed", ta.seed, "Override the seed");
  tt->add_flag("--quiet", ta.quiet, "Only print the summary");

  std::string sr_ckpt, sr_out;
  std::vector<std::string> sr_frames;
  auto* sr = app.add_subcommand("super-resolve", "Upscale the middle frame of a PNG window");
  sr->add_option("--checkpoint", sr_ckpt, "Checkpoint directory")->required();
  sr->add_option("--frames", sr_frames, "Frame PNGs in temporal order")->required();
  sr->add_option("--out", sr_out, "Output PNG")->required();

  AlignArgs aa;
  auto* av = app.add_subcommand("align-viz", "Flow, warped neighbor and sampling trace for one neighbor");
  av->add_option("--checkpoint", aa.checkpoint, "Checkpoint directory (default: toy init from --seed)");
  av->add_option("--frames", aa.frames, "Frame PNGs (default: a synthetic window from --seed)");
  av->add_option("--out-dir", aa.out_dir, "Output directory")->required();
  av->add_option("--neighbor", aa.neighbor, "Neighbor frame index")->capture_default_str();
  av->add_option("--seed", aa.seed, "Seed for the synthetic window and init")->capture_default_str();
  av->add_option("--min-disp", aa.min_disp, "Synthetic motion, LR px per frame")->capture_default_str();
  av->add_option("--max-disp", aa.max_disp, "Synthetic motion, LR px per frame")->capture_default_str();
  av->add_option("--max-flow", aa.max_flow, "Flow magnitude at full saturation (0 = auto)");

  HistArgs ha;
  auto* oh = app.add_subcommand("offset-hist", "Offset magnitude histogram over a synthetic set");
  oh->add_option("--checkpoint", ha.checkpoints, "Checkpoint directory (repeatable)")->required();
  oh->add_option("--label", ha.labels, "Label per checkpoint (default: its fdc mode)");
  oh->add_option("--out", ha.out, "Output CSV (default: stdout)");
  oh->add_option("--samples", ha.samples, "Synthetic windows")->capture_default_str();
  oh->add_option("--seed", ha.seed, "Seed for the synthetic set")->capture_default_str();
  oh->add_option("--min-disp", ha.min_disp, "Motion, LR px per frame")->capture_default_str();
  oh->add_option("--max-disp", ha.max_disp, "Motion, LR px per frame")->capture_default_str();
  oh->add_option("--frame", ha.frame, "Neighbor frame index")->capture_default_str();
  oh->add_option("--layer", ha.layer, "Deformable layer (1, 2, or 0 for both)")->capture_default_str();

  std::string ev_pred, ev_gt, ev_out;
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM report for matching PNGs in two directories");
  ev->add_option("--pred", ev_pred, "Prediction directory")->required();
  ev->add_option("--gt", ev_gt, "Ground-truth directory")->required();
  ev->add_option("--out", ev_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    // Usage errors all exit 2, with help for the subcommand being parsed.
    const auto subs = app.get_subcommands();
    std::cerr << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == gc) return run_grad_check(gc_seed);
    if (active == tt) return run_train_toy(ta);
    if (active == sr) return run_super_resolve(sr_ckpt, sr_frames, sr_out);
    if (active == av) return run_align_viz(aa);
    if (active == oh) return run_offset_hist(ha);
    if (active == ev) return run_eval(ev_pred, ev_gt, ev_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
