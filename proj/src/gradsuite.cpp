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

#include "flowdeform/gradsuite.hpp"

#include "flowdeform/data.hpp"
#include "flowdeform/deform.hpp"
#include "flowdeform/flow.hpp"
#include "flowdeform/gradcheck.hpp"
#include "flowdeform/model.hpp"
#include "flowdeform/sampling.hpp"
#include "flowdeform/train.hpp"

namespace flowdeform {

namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;

Tensor4<double> uniform(Shape4 s, std::uint64_t seed, double lo, double hi) {
  Tensor4<double> t(s);
  fill_uniform(t, seed, lo, hi);
  return t;
}

using Inputs = std::vector<Var<double>>;

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradSuiteEntry> out;
  std::uint64_t next = seed * 1000;
  auto fresh = [&next]() { return ++next; };
  auto record = [&out](const GradCheckResult& r, double tol) {
    out.push_back({r.name, r.worst_rel_error, tol, r.checked});
  };
  GradCheckOptions opts;
  opts.seed = fresh();

  record(check_gradients("conv2d",
                         {uniform({2, 3, 6, 5}, fresh(), -1, 1), uniform({4, 3, 3, 3}, fresh(), -1, 1),
                          uniform({1, 4, 1, 1}, fresh(), -1, 1)},
                         [](Tape<double>&, const Inputs& v) { return conv2d(v[0], v[1], v[2], 2, 1); },
                         opts),
         kOpTolerance);

  {
    auto x = uniform({1, 3, 5, 5}, fresh(), -0.9, 0.9);
    push_off_integers(x, 0.05);
    record(check_gradients("leaky_relu", {x},
                           [](Tape<double>&, const Inputs& v) { return leaky_relu(v[0], 0.1); }, opts),
           kOpTolerance);
  }

  record(check_gradients("pixel_shuffle", {uniform({1, 8, 3, 4}, fresh(), -1, 1)},
                         [](Tape<double>&, const Inputs& v) { return pixel_shuffle(v[0], 2); }, opts),
         kOpTolerance);

  {
    auto coords = uniform({1, 2, 4, 4}, fresh(), -0.8, 5.8);
    push_off_integers(coords, 1e-2);
    record(check_gradients("bilinear_sample", {uniform({1, 2, 6, 6}, fresh(), -1, 1), coords},
                           [](Tape<double>&, const Inputs& v) { return bilinear_sample(v[0], v[1]); },
                           opts),
           kOpTolerance);
  }

  {
    auto flow = uniform({1, 2, 6, 6}, fresh(), -1.6, 1.6);
    push_off_integers(flow, 1e-2);
    record(check_gradients("warp", {uniform({1, 2, 6, 6}, fresh(), -1, 1), flow},
                           [](Tape<double>&, const Inputs& v) { return warp(v[0], v[1]); }, opts),
           kOpTolerance);
  }

  {
    const KernelTaps taps = KernelTaps::grid3x3();
    auto disp = uniform({1, 18, 5, 5}, fresh(), -1.5, 1.5);
    push_off_integers(disp, 1e-2);
    record(check_gradients("deform_conv",
                           {uniform({1, 2, 5, 5}, fresh(), -1, 1), disp,
                            uniform({1, 9, 5, 5}, fresh(), 0, 1), uniform({3, 2, 3, 3}, fresh(), -1, 1),
                            uniform({1, 3, 1, 1}, fresh(), -1, 1)},
                           [taps](Tape<double>&, const Inputs& v) {
                             return deform_conv(v[0], v[1], v[2], v[3], v[4], taps);
                           },
                           opts),
           kOpTolerance);
  }

  for (auto mode : {FdcMode::kNaive, FdcMode::kAdvanced}) {
    ParamStore<double> store;
    std::mt19937_64 rng(fresh());
    add_deform_layer(store, "f", 2, rng, 0.1);
    for (std::size_t i = 0; i < store.size(); ++i) fill_uniform(store[i].value, fresh(), -0.2, 0.2);
    auto flow = uniform({1, 2, 6, 6}, fresh(), -1.2, 1.2);
    push_off_integers(flow, 1e-2);
    record(check_gradients("fdc_" + to_string(mode),
                           {uniform({1, 2, 6, 6}, fresh(), -1, 1), uniform({1, 2, 6, 6}, fresh(), -1, 1),
                            flow},
                           [&store, mode](Tape<double>& t, const Inputs& v) {
                             return fdc(t, store, "f", v[0], v[1], v[2], mode, 0.1).aligned;
                           },
                           opts),
           kOpTolerance);
  }

  record(check_gradients("cost_volume",
                         {uniform({1, 6, 4, 5}, fresh(), -1, 1), uniform({1, 6, 4, 5}, fresh(), -1, 1)},
                         [](Tape<double>&, const Inputs& v) { return cost_volume(v[0], v[1]); }, opts),
         kOpTolerance);

  {
    SoftArgmaxOptions sa;
    sa.temperature = 0.5;
    record(check_gradients("soft_argmax_flow", {uniform({2, 20, 4, 5}, fresh(), -1, 1)},
                           [sa](Tape<double>&, const Inputs& v) { return soft_argmax_flow(v[0], sa); },
                           opts),
           kOpTolerance);
  }

  {
    ParamStore<double> store;
    std::mt19937_64 rng(fresh());
    add_refine_flow(store, "r", 2, DenseBlockConfig{2, 3}, rng, 0.1);
    fill_uniform(store.at("r.out.weight").value, fresh(), -0.3, 0.3);
    record(check_gradients("refine_flow",
                           {uniform({1, 2, 5, 5}, fresh(), -1, 1), uniform({1, 2, 5, 5}, fresh(), -1, 1),
                            uniform({1, 2, 5, 5}, fresh(), -2, 2)},
                           [&store](Tape<double>& t, const Inputs& v) {
                             return refine_flow(t, store, "r", v[0], v[1], v[2], 0.1);
                           },
                           opts),
           kOpTolerance);
  }

  {
    auto pred = uniform({1, 3, 4, 4}, fresh(), -1, 1);
    auto delta = uniform({1, 3, 4, 4}, fresh(), -0.9, 0.9);
    push_off_integers(delta, 0.05);
    Tensor4<double> target(pred.shape());
    for (std::size_t i = 0; i < pred.numel(); ++i) target[i] = pred[i] + delta[i];
    record(check_gradients("l1_loss", {pred, target},
                           [](Tape<double>&, const Inputs& v) { return l1_loss(v[0], v[1]); }, opts),
           kOpTolerance);
  }

  {
    ModelConfig cfg = ModelConfig::toy();
    cfg.c1 = cfg.c2 = 8;
    cfg.extractor_blocks = cfg.recon_blocks = 1;
    cfg.dense = DenseBlockConfig{1, 4};
    cfg.matching.temperature = 0.5;
    ParamStore<double> store;
    init_fdan(store, cfg, fresh());
    for (const char* n : {"fdm.l1.head.conv2.weight", "fdm.l2.head.conv2.weight", "refine.out.weight"})
      fill_uniform(store.at(n).value, fresh(), -0.05, 0.05);
    std::vector<Tensor4<double>> frames;
    for (int i = 0; i < cfg.num_frames; ++i) frames.push_back(make_texture<double>(8, 8, fresh()));
    const auto target = make_texture<double>(32, 32, fresh());
    GradCheckOptions e2e = opts;
    e2e.step = 1e-6;
    record(check_param_gradients(
               "fdan_end_to_end", store,
               [&](Tape<double>& t) {
                 return l1_loss(fdan_forward(t, store, cfg, frames).hr, t.constant(target));
               },
               0.01, e2e),
           kEndToEndTolerance);
  }
  return out;
}

}  // namespace flowdeform
