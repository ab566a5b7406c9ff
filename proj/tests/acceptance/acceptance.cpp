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

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <work_dir> <cli_binary> <toy_config> [--only 1,2,...]
//
// Criteria 5 and 6 share three toy training runs (advanced, naive, none) and
// take most of the wall time.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flowdeform/analysis.hpp"
#include "flowdeform/deform.hpp"
#include "flowdeform/flow.hpp"
#include "flowdeform/gradsuite.hpp"
#include "flowdeform/image.hpp"
#include "flowdeform/metrics.hpp"
#include "flowdeform/sampling.hpp"
#include "flowdeform/train.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace flowdeform;
using flowdeform::testing::random_tensor;
using flowdeform::testing::ssim_oracle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  std::string cli;
  std::string config;
};

double max_abs_diff(const Tensor4<double>& a, const Tensor4<double>& b, int margin = 0) {
  if (a.shape() != b.shape()) return INFINITY;
  double worst = 0.0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c)
      for (int y = margin; y < a.h() - margin; ++y)
        for (int x = margin; x < a.w() - margin; ++x)
          worst = std::max(worst, std::abs(a(n, c, y, x) - b(n, c, y, x)));
  return worst;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite.

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = run_gradient_suite(1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = secs < 300.0;
  std::string worst_name;
  double worst_ratio = 0.0;
  for (const auto& e : entries) {
    ok = ok && e.pass();
    std::printf("    %-18s worst %.3e (limit %.0e, %zu coords)\n", e.name.c_str(), e.worst_rel_error,
                e.tolerance, e.checked);
    if (e.worst_rel_error / e.tolerance > worst_ratio) {
      worst_ratio = e.worst_rel_error / e.tolerance;
      worst_name = e.name;
    }
  }
  return {ok && entries.size() == 13, std::to_string(entries.size()) + " checks, tightest " + worst_name +
                                          " at " + fmt("%.2f", worst_ratio) + " of its limit, " +
                                          fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------
// 2. Reduction identities.

void randomize(ParamStore<double>& store, std::uint64_t seed, double amp) {
  for (std::size_t i = 0; i < store.size(); ++i) fill_uniform(store[i].value, seed + i, -amp, amp);
}

Tensor4<double> constant_flow(int n, int h, int w, double dx, double dy) {
  Tensor4<double> f(n, 2, h, w);
  for (int b = 0; b < n; ++b)
    for (int i = 0; i < h * w; ++i) {
      f.plane(b, 0)[i] = dx;
      f.plane(b, 1)[i] = dy;
    }
  return f;
}

Outcome reduction_identities() {
  const double tol = 1e-10;
  std::vector<std::pair<std::string, double>> errs;
  const KernelTaps taps = KernelTaps::grid3x3();

  {
    // Advanced integration with zero flow is the deformable conv itself, fed
    // by the head's offsets and modulations.
    ParamStore<double> store;
    std::mt19937_64 rng(3);
    add_deform_layer(store, "f", 3, rng, 0.1);
    randomize(store, 40, 0.2);
    Tape<double> tape;
    auto ref = tape.constant(random_tensor({2, 3, 9, 8}, 6));
    auto nbr = tape.constant(random_tensor({2, 3, 9, 8}, 7));
    auto out = fdc(tape, store, "f", ref, nbr, tape.constant(Tensor4<double>(2, 2, 9, 8)),
                   FdcMode::kAdvanced, 0.1);
    auto direct = deform_conv(nbr, out.bundle.offsets, out.bundle.modulations,
                              tape.param(store.at("f.dcn.weight")), tape.param(store.at("f.dcn.bias")),
                              taps);
    errs.push_back({"fdc_advanced(flow=0) vs deform_conv", max_abs_diff(out.aligned.value(), direct.value())});
  }
  {
    Tape<double> tape;
    const auto x = random_tensor({2, 4, 7, 9}, 11);
    auto w = warp(tape.constant(x), tape.constant(Tensor4<double>(2, 2, 7, 9)));
    errs.push_back({"warp(x, 0) vs x", max_abs_diff(w.value(), x)});
  }
  {
    ParamStore<double> store;
    std::mt19937_64 rng(4);
    add_deform_layer(store, "f", 3, rng, 0.1);
    randomize(store, 50, 0.15);
    Tape<double> tape;
    auto ref = tape.constant(random_tensor({2, 3, 14, 14}, 8));
    auto nbr = tape.constant(random_tensor({2, 3, 14, 14}, 9));
    auto flow = tape.constant(constant_flow(2, 14, 14, 0.37, -0.81));
    auto adv = fdc(tape, store, "f", ref, nbr, flow, FdcMode::kAdvanced, 0.1);
    auto nai = fdc(tape, store, "f", ref, nbr, flow, FdcMode::kNaive, 0.1);
    double max_off = 0.0;
    for (double v : adv.bundle.offsets.value().vec()) max_off = std::max(max_off, std::abs(v));
    std::printf("    learned offsets up to %.3f px in the constant-flow case\n", max_off);
    if (max_off < 0.05) errs.push_back({"learned offsets too small to exercise the identity", INFINITY});
    // Reads stay inside the map at least 3 pixels from the border.
    errs.push_back({"fdc_naive vs fdc_advanced, constant flow (interior)",
                    max_abs_diff(adv.aligned.value(), nai.aligned.value(), 3)});
  }
  {
    // Fresh heads emit zero offsets and 0.5 masks: layer 1 is a plain 3x3
    // conv of the aligned neighbor with half the weights.
    ParamStore<double> store;
    std::mt19937_64 rng(8);
    add_fdm(store, "m", 3, rng, 0.1);
    Tape<double> tape;
    auto ref = tape.constant(random_tensor({1, 3, 8, 7}, 17));
    auto nbr = tape.constant(random_tensor({1, 3, 8, 7}, 18));
    auto flow = tape.constant(constant_flow(1, 8, 7, 0.0, 0.0));
    auto layer = fdc(tape, store, "m.l1", ref, nbr, flow, FdcMode::kAdvanced, 0.1);
    Tensor4<double> half = store.at("m.l1.dcn.weight").value;
    for (auto& v : half.span()) v *= 0.5;
    auto plain = conv2d(nbr, tape.constant(half), tape.param(store.at("m.l1.dcn.bias")), 1, 1);
    errs.push_back({"zero-init FDM layer 1 vs plain conv", max_abs_diff(layer.aligned.value(), plain.value())});
  }
  bool ok = true;
  double worst = 0.0;
  for (const auto& [name, e] : errs) {
    std::printf("    %-52s %.3e\n", name.c_str(), e);
    ok = ok && e < tol;
    worst = std::max(worst, e);
  }
  return {ok, "worst " + fmt("%.2e", worst) + " (limit 1e-10)"};
}

// ---------------------------------------------------------------------------
// 3. Matching oracle.

// Noise image -> 4x4 patch vectors at quarter resolution, mean-centered and
// unit-normalized per location.
Tensor4<double> patch_features(const Tensor4<double>& img) {
  Tape<double> tape;
  auto f = pixel_unshuffle(tape.constant(img), 4).value();
  const int c = f.c();
  const std::size_t hw = f.shape().plane();
  for (std::size_t i = 0; i < hw; ++i) {
    double mean = 0.0;
    for (int k = 0; k < c; ++k) mean += f.plane(0, k)[i];
    mean /= c;
    double norm = 0.0;
    for (int k = 0; k < c; ++k) {
      f.plane(0, k)[i] -= mean;
      norm += f.plane(0, k)[i] * f.plane(0, k)[i];
    }
    norm = std::sqrt(norm);
    for (int k = 0; k < c; ++k) f.plane(0, k)[i] /= norm;
  }
  return f;
}

Tensor4<double> circular_shift(const Tensor4<double>& in, int sx, int sy) {
  Tensor4<double> out(in.shape());
  const int h = in.h(), w = in.w();
  for (int c = 0; c < in.c(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(0, c, y, x) = in(0, c, ((y - sy) % h + h) % h, ((x - sx) % w + w) % w);
  return out;
}

int wrap(int v, int n) { return ((v % n) + n) % n; }

Outcome matching_oracle() {
  const int hr = 64, q = hr / 4;
  const auto img = random_tensor({1, 3, hr, hr}, 2024, 0.0, 1.0);
  const auto ref = patch_features(img);
  SoftArgmaxOptions soft;
  soft.temperature = 0.01;
  int cases = 0, hard_bad = 0;
  double soft_worst = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(-q / 2, q / 2);
  std::vector<std::pair<int, int>> shifts{{0, 0}, {q / 2, 0}, {0, -q / 2}, {q / 2, q / 2}, {-q / 2, 3}};
  for (int i = 0; i < 15; ++i) shifts.push_back({pick(rng), pick(rng)});
  for (auto [sx, sy] : shifts) {
    // Shifting the image by 4s pixels shifts every patch vector by s.
    const auto nbr = patch_features(circular_shift(img, 4 * sx, 4 * sy));
    Tape<double> tape;
    auto vol = cost_volume(tape.constant(ref), tape.constant(nbr));
    const auto hard = hard_argmax_flow(vol.value());
    const auto sf = soft_argmax_flow(vol, soft).value();
    for (int y = 0; y < q; ++y)
      for (int x = 0; x < q; ++x) {
        const int dx = static_cast<int>(hard(0, 0, y, x)), dy = static_cast<int>(hard(0, 1, y, x));
        if (wrap(dx - sx, q) != 0 || wrap(dy - sy, q) != 0) ++hard_bad;
        soft_worst = std::max({soft_worst, std::abs(sf(0, 0, y, x) - dx), std::abs(sf(0, 1, y, x) - dy)});
      }
    ++cases;
  }
  return {hard_bad == 0 && soft_worst < 1e-3,
          std::to_string(cases) + " shifts on a " + std::to_string(q) + "x" + std::to_string(q) +
              " grid, hard mismatches " + std::to_string(hard_bad) + ", soft worst " +
              fmt("%.2e", soft_worst) + " px (limit 1e-3)"};
}

// ---------------------------------------------------------------------------
// 4. Flow endpoint error.

Outcome flow_epe() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  ParamStore<float> store;
  add_semantic_features(store, "sem", 128, rng, 0.1);
  std::uniform_int_distribution<int> shift(-20, 20);
  const int size = 192, margin = 48, pad = 24;
  double total = 0.0;
  for (int p = 0; p < 20; ++p) {
    const auto tex = make_texture<float>(size + 2 * pad, size + 2 * pad, 1000 + p);
    const int dx = shift(rng), dy = shift(rng);
    // nbr(p) = ref(p + d), so the flow from ref into nbr is -d.
    const auto ref = crop(tex, pad, pad, size, size);
    const auto nbr = crop(tex, pad + dy, pad + dx, size, size);
    Tape<float> tape;
    tape.set_grad_enabled(false);
    auto rs = semantic_features(tape, store, "sem", tape.constant(ref), 0.1f);
    auto ns = semantic_features(tape, store, "sem", tape.constant(nbr), 0.1f);
    const auto fine = flow_upsample(soft_argmax_flow(cost_volume(rs, ns)), 4).value();
    double e = 0.0;
    int n = 0;
    for (int y = margin; y < size - margin; ++y)
      for (int x = margin; x < size - margin; ++x) {
        e += std::hypot(fine(0, 0, y, x) + dx, fine(0, 1, y, x) + dy);
        ++n;
      }
    total += e / n;
  }
  const double epe = total / 20;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {epe < 1.0 && secs < 60.0,
          "mean EPE " + fmt("%.3f", epe) + " px over 20 pairs (limit 1), " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------
// 5 and 6. Toy training.

struct RunResult {
  TrainResult train;
  fs::path dir;
  double seconds = 0.0;
};

TrainOptions toy_options(const Context& ctx) {
  std::ifstream is(ctx.config);
  if (!is) throw std::runtime_error("cannot read " + ctx.config);
  return read_train_config(is);
}

const RunResult& toy_run(const Context& ctx, FdcMode mode) {
  static std::map<FdcMode, RunResult> cache;
  auto it = cache.find(mode);
  if (it != cache.end()) return it->second;
  TrainOptions o = toy_options(ctx);
  o.model.fdc_mode = mode;
  RunResult r;
  r.dir = ctx.work / ("toy_" + to_string(mode));
  fs::remove_all(r.dir);
  o.out_dir = r.dir.string();
  std::printf("    training %s: %d steps, batch %d, motion %.0f-%.0f px/frame\n", to_string(mode).c_str(),
              o.steps, o.batch, o.data.min_disp, o.data.max_disp);
  std::fflush(stdout);
  const auto t0 = std::chrono::steady_clock::now();
  ParamStore<float> store;
  r.train = train(o, store, [&](const MetricsRow& row) {
    if (std::isfinite(row.psnr_holdout)) {
      std::printf("      step %5d  loss %.5f  holdout %.3f dB\n", row.step, row.loss, row.psnr_holdout);
      std::fflush(stdout);
    }
  });
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("    %s: bicubic %.3f dB, final %.3f dB, %.0f s\n", to_string(mode).c_str(),
              r.train.initial.bicubic_psnr, r.train.final.model_psnr, r.seconds);
  return cache.emplace(mode, std::move(r)).first->second;
}

// Mean loss over consecutive 50-step windows of the first 200 steps.
std::vector<double> smoothed_losses(const TrainResult& r) {
  std::vector<double> out;
  for (std::size_t start = 0; start + 50 <= std::min<std::size_t>(200, r.log.size()); start += 50) {
    double s = 0.0;
    for (std::size_t i = start; i < start + 50; ++i) s += r.log[i].loss;
    out.push_back(s / 50);
  }
  return out;
}

Outcome toy_training(const Context& ctx) {
  const auto& r = toy_run(ctx, FdcMode::kAdvanced);
  const double gain = r.train.final.model_psnr - r.train.initial.bicubic_psnr;
  const auto sm = smoothed_losses(r.train);
  bool monotone = true;
  std::string windows;
  for (std::size_t i = 0; i < sm.size(); ++i) {
    windows += (i ? " " : "") + fmt("%.5f", sm[i]);
    if (i > 0 && sm[i] > sm[i - 1]) monotone = false;
  }
  std::printf("    first-200-step loss, 50-step means: %s (%s)\n", windows.c_str(),
              monotone ? "non-increasing" : "not monotone; soft property");
  const double last = r.train.log.empty() ? NAN : r.train.log.back().loss;
  const double first = r.train.log.empty() ? NAN : r.train.log.front().loss;
  return {gain >= 1.0 && r.seconds < 7200.0,
          "holdout Y-PSNR " + fmt("%.3f", r.train.final.model_psnr) + " dB vs bicubic " +
              fmt("%.3f", r.train.initial.bicubic_psnr) + " dB, gain " + fmt("%+.3f", gain) +
              " dB (need >= 1.0); loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + ", " +
              fmt("%.0f s", r.seconds)};
}

Outcome ablation(const Context& ctx) {
  const auto& adv = toy_run(ctx, FdcMode::kAdvanced);
  const auto& nai = toy_run(ctx, FdcMode::kNaive);
  const auto& none = toy_run(ctx, FdcMode::kNone);
  const double pa = adv.train.final.model_psnr, pn = nai.train.final.model_psnr,
               p0 = none.train.final.model_psnr;
  const bool ordering = pa >= pn && pn >= p0;
  std::printf("    holdout PSNR: advanced %.3f, naive %.3f, none %.3f dB; full ordering %s (soft)\n", pa, pn, p0,
              ordering ? "holds" : "does not hold");

  // Offsets for frame t-3 on a fresh fast-motion set.
  TrainOptions o = toy_options(ctx);
  const auto set = make_holdout<float>(o.data, 16, 4242);
  std::map<std::string, double> near;
  std::vector<LabeledHistogram> rows;
  for (const auto* run : {&adv, &nai, &none}) {
    ParamStore<float> store;
    const ModelConfig cfg = load_checkpoint((run->dir / "checkpoint").string(), store);
    const auto h = model_offset_histogram(store, cfg, set);
    rows.push_back({to_string(cfg.fdc_mode), h});
    near[to_string(cfg.fdc_mode)] = h[0] + h[1];
  }
  {
    std::ofstream os(ctx.work / "offset_hist.csv");
    write_labeled_histograms(os, default_offset_edges(), rows);
  }
  std::printf("    fraction of |tap + offset| in [0, 2): advanced %.4f, naive %.4f, none %.4f\n",
              near["advanced"], near["naive"], near["none"]);
  const double gap = pa - p0;
  const bool ok = gap >= 0.2 && near["advanced"] > near["none"];
  return {ok, "advanced - none " + fmt("%+.3f", gap) + " dB (need >= 0.2); [0, 2) fraction " +
                  fmt("%.4f", near["advanced"]) + " vs " + fmt("%.4f", near["none"]) +
                  " (need strictly higher); ordering " + (ordering ? "holds" : "violated") + " (soft)"};
}

// ---------------------------------------------------------------------------
// 7. Metric sanity.

Outcome metric_sanity() {
  std::vector<std::pair<std::string, bool>> checks;
  auto solid = [](double r, double g, double b) {
    Tensor4<double> t(1, 3, 1, 1);
    t[0] = r;
    t[1] = g;
    t[2] = b;
    return t;
  };
  checks.push_back({"Y(black) = 16/255", std::abs(rgb_to_y(solid(0, 0, 0))[0] - 16.0 / 255) < 1e-12});
  checks.push_back({"Y(white) = 235/255", std::abs(rgb_to_y(solid(1, 1, 1))[0] - 235.0 / 255) < 1e-12});
  checks.push_back({"Y(green) > Y(blue)", rgb_to_y(solid(0, 1, 0))[0] > rgb_to_y(solid(0, 0, 1))[0]});

  const auto a = random_tensor({1, 3, 16, 16}, 1, 0.0, 1.0);
  Tensor4<double> b(a.shape()), c(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    b[i] = a[i] + (i % 3 ? 0.1 : -0.1);
    c[i] = a[i] + (b[i] - a[i]) / std::sqrt(2.0);
  }
  checks.push_back({"psnr identical = 100", psnr(a, a) == 100.0});
  checks.push_back({"psnr uniform 0.1 error = 20", std::abs(psnr(b, a) - 20.0) < 1e-9});
  checks.push_back({"psnr halved MSE +3.0103", std::abs(psnr(c, a) - psnr(b, a) - 3.0103) < 1e-4});
  checks.push_back({"psnr symmetric", psnr(a, b) == psnr(b, a)});

  const auto tex = make_texture<double>(32, 32, 5);
  Tensor4<double> g(1, 1, 32, 32), neg(1, 1, 32, 32);
  for (std::size_t i = 0; i < g.numel(); ++i) {
    g[i] = tex[i];
    neg[i] = 1.0 - tex[i];
  }
  checks.push_back({"ssim identical = 1", std::abs(ssim(g, g) - 1.0) < 1e-12});
  checks.push_back({"ssim negative < 1", ssim(g, neg) < 1.0});
  double oracle_worst = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto p = random_tensor({1, 1, 16, 16}, 100 + s, 0.0, 1.0);
    Tensor4<double> m(p.shape());
    const auto q = random_tensor({1, 1, 16, 16}, 200 + s, 0.0, 1.0);
    for (std::size_t i = 0; i < p.numel(); ++i) m[i] = 0.8 * p[i] + 0.2 * q[i];
    oracle_worst = std::max(oracle_worst, std::abs(ssim(p, m) - ssim_oracle(p, m)));
  }
  checks.push_back({"ssim vs windowed oracle < 1e-10", oracle_worst < 1e-10});
  checks.push_back({"ssim symmetric < 1e-12", std::abs(ssim(g, neg) - ssim(neg, g)) < 1e-12});
  bool small_rejected = false;
  try {
    ssim(Tensor4<double>(1, 1, 8, 8), Tensor4<double>(1, 1, 8, 8));
  } catch (const std::invalid_argument&) {
    small_rejected = true;
  }
  checks.push_back({"ssim rejects images below the window", small_rejected});

  int passed = 0;
  std::string failed;
  for (const auto& [name, ok] : checks) {
    passed += ok;
    if (!ok) failed += " [" + name + "]";
  }
  return {passed == static_cast<int>(checks.size()),
          std::to_string(passed) + "/" + std::to_string(checks.size()) + " checks, SSIM oracle gap " +
              fmt("%.1e", oracle_worst) + failed};
}

// ---------------------------------------------------------------------------
// 8. Determinism of the CLI training command.

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome determinism(const Context& ctx) {
  const int steps = 100;
  std::vector<fs::path> dirs{ctx.work / "det_a", ctx.work / "det_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    const std::string cmd = "\"" + ctx.cli + "\" train-toy --quiet --config \"" + ctx.config + "\" --out \"" +
                            d.string() + "\" --seed 7 --steps " + std::to_string(steps) + " > \"" +
                            (ctx.work / (d.filename().string() + ".log")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "train-toy failed: " + cmd};
  }
  std::size_t files = 0, bytes = 0;
  std::string mismatch;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dirs[0]);
    const auto a = slurp(e.path()), b = slurp(dirs[1] / rel);
    ++files;
    bytes += a.size();
    if (a != b || a.empty()) mismatch += " " + rel.string();
  }
  const bool has_log = fs::exists(dirs[0] / "metrics.csv");
  return {mismatch.empty() && has_log && files > 3,
          std::to_string(files) + " files (" + std::to_string(bytes) + " bytes) compared across two `train-toy --seed 7` runs of " +
              std::to_string(steps) + " steps" + (mismatch.empty() ? ", all identical" : ", differing:" + mismatch)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 4) {
    std::fprintf(stderr, "usage: %s <work_dir> <cli_binary> <toy_config> [--only 1,2,...]\n", argv[0]);
    return 2;
  }
  Context ctx{argv[1], argv[2], argv[3]};
  fs::create_directories(ctx.work);
  std::set<int> only;
  for (int i = 4; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    }

  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "reduction identities", reduction_identities},
      {3, "matching oracle", matching_oracle},
      {4, "flow endpoint error", flow_epe},
      {5, "toy training beats bicubic", [&] { return toy_training(ctx); }},
      {6, "ablation direction", [&] { return ablation(ctx); }},
      {7, "metric sanity", metric_sanity},
      {8, "determinism", [&] { return determinism(ctx); }},
  };
  std::vector<std::string> lines;
  bool all = true;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::printf("[%d] %s\n", c.id, c.title);
    std::fflush(stdout);
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    char buf[32];
    std::snprintf(buf, sizeof buf, "criterion %d: %s", c.id, o.pass ? "PASS" : "FAIL");
    lines.push_back(std::string(buf) + " | " + c.title + " | " + o.detail);
    std::printf("%s\n\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("summary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return all ? 0 : 1;
}
