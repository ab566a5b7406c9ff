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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "flowdeform/train.hpp"
#include "test_util.hpp"

using namespace flowdeform;
using flowdeform::testing::random_tensor;

namespace {

TrainOptions small_run(int steps) {
  TrainOptions o;
  o.model.c1 = o.model.c2 = 8;
  o.model.extractor_blocks = o.model.recon_blocks = 1;
  o.model.dense = DenseBlockConfig{1, 4};
  o.data.lr_size = 16;
  o.data.max_disp = 1.0;
  o.steps = steps;
  o.batch = 2;
  o.texture_bank = 3;
  o.holdout_count = 2;
  o.eval_every = 2;
  return o;
}

bool same_values(const ParamStore<float>& a, const ParamStore<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].name != b[k].name || a[k].value.shape() != b[k].value.shape()) return false;
    for (std::size_t i = 0; i < a[k].value.numel(); ++i)
      if (a[k].value[i] != b[k].value[i]) {
        MESSAGE(a[k].name << " " << i << " " << a[k].value[i] << " " << b[k].value[i]);
        return false;
      }
  }
  return true;
}

}  // namespace

TEST_CASE("l1_loss: values and gradient") {
  Tape<double> t;
  const auto a = random_tensor({2, 3, 4, 4}, 1);
  CHECK(l1_loss(t.constant(a), t.constant(a)).value()[0] == 0.0);
  Tensor4<double> b = a;
  for (auto& v : b.span()) v += 0.5;
  CHECK(l1_loss(t.constant(a), t.constant(b)).value()[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK_THROWS_AS(l1_loss(t.constant(a), t.constant(random_tensor({2, 3, 4, 5}, 2))),
                  std::invalid_argument);

  auto delta = random_tensor({2, 3, 4, 4}, 3, -0.9, 0.9);
  push_off_integers(delta, 0.05);
  Tensor4<double> target(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) target[i] = a[i] + delta[i];
  const auto r = check_gradients(
      "l1", {a, target}, [](Tape<double>&, const std::vector<Var<double>>& v) { return l1_loss(v[0], v[1]); });
  CHECK(r.worst_rel_error < 1e-6);
}

TEST_CASE("adam_step: fixed point, first step, quadratic descent") {
  ParamStore<double> store;
  auto& p = store.add("p", {1, 1, 2, 3});
  for (std::size_t i = 0; i < 6; ++i) p.value[i] = 0.1 * static_cast<double>(i) - 0.2;
  const auto before = p.value;
  AdamState st;
  adam_step(store, st, 1e-2);
  for (std::size_t i = 0; i < 6; ++i) CHECK(p.value[i] == before[i]);

  ParamStore<double> s2;
  auto& q = s2.add("q", {1, 1, 1, 4});
  const double g[4] = {0.3, -2.0, 1e-3, -5e-2};
  for (int i = 0; i < 4; ++i) q.grad[i] = g[i];
  AdamState st2;
  adam_step(s2, st2, 1e-3);
  for (int i = 0; i < 4; ++i) {
    const double expected = -1e-3 * std::abs(g[i]) / (std::abs(g[i]) + 1e-8) * (g[i] > 0 ? 1 : -1);
    CHECK(q.value[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(q.value[i]) == doctest::Approx(1e-3).epsilon(1e-4));
  }
  CHECK(q.value.shape() == Shape4{1, 1, 1, 4});
  CHECK(st2.step == 1);

  // f(x) = (x - 3)^2 from x = 0; each step uses the current gradient.
  ParamStore<double> s3;
  auto& x = s3.add("x", {1, 1, 1, 1});
  AdamState st3;
  double prev = 9.0;
  for (int k = 0; k < 20; ++k) {
    x.grad[0] = 2.0 * (x.value[0] - 3.0);
    adam_step(s3, st3, 0.1);
    const double f = (x.value[0] - 3.0) * (x.value[0] - 3.0);
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("cosine_lr: endpoints, midpoint, clamp") {
  CHECK(cosine_lr(0, 300, 1e-4, 1e-6) == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(cosine_lr(300, 300, 1e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-14));
  CHECK(cosine_lr(150, 300, 1e-4, 1e-6) == doctest::Approx(5.05e-5).epsilon(1e-12));
  CHECK(cosine_lr(450, 300, 1e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-14));
  double prev = 1.0;
  for (int e = 0; e <= 300; e += 10) {
    const double lr = cosine_lr(e, 300, 1e-4, 1e-6);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS(cosine_lr(-1, 300, 1e-4, 1e-6));
  CHECK_THROWS(cosine_lr(1, 0, 1e-4, 1e-6));
}

TEST_CASE("clip_grad_norm: rescales only above the limit") {
  ParamStore<double> s;
  auto& a = s.add("a", {1, 1, 1, 2});
  auto& b = s.add("b", {1, 1, 1, 1});
  a.grad[0] = 3.0;
  a.grad[1] = 0.0;
  b.grad[0] = 4.0;
  CHECK(clip_grad_norm(s, 10.0) == doctest::Approx(5.0));
  CHECK(b.grad[0] == 4.0);
  CHECK(clip_grad_norm(s, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("stack_samples and make_holdout") {
  SynthSpec spec;
  spec.lr_size = 16;
  spec.max_disp = 1.0;
  const auto h1 = make_holdout<float>(spec, 3, 9);
  const auto h2 = make_holdout<float>(spec, 3, 9);
  REQUIRE(h1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& d = h1[i].augmentation;
    CHECK_FALSE((d.flip_x || d.flip_y || d.transpose));
    for (std::size_t k = 0; k < h1[i].hr_reference.numel(); ++k)
      REQUIRE(h1[i].hr_reference[k] == h2[i].hr_reference[k]);
  }
  const auto b = stack_samples(h1);
  REQUIRE(b.frames.size() == 7);
  CHECK(b.frames[0].shape() == Shape4{3, 3, 16, 16});
  CHECK(b.target.shape() == Shape4{3, 3, 64, 64});
  CHECK(b.flows[6].shape() == Shape4{3, 2, 16, 16});
  CHECK(b.frames[2](1, 0, 4, 5) == h1[1].lr_frames[2](0, 0, 4, 5));
}

TEST_CASE("read_train_config: keys and errors") {
  std::istringstream is(
      "# toy\nsteps = 12\nbatch=3\nseed = 9\nlr_max = 2e-4\nmotion = objects\n"
      "min_disp = 4\nmax_disp = 6\naugment = false\nc1 = 12\nfdc_mode = naive\n");
  const auto o = read_train_config(is);
  CHECK(o.steps == 12);
  CHECK(o.batch == 3);
  CHECK(o.seed == 9);
  CHECK(o.lr_max == 2e-4);
  CHECK(o.data.motion == MotionModel::kObjects);
  CHECK(o.data.min_disp == 4.0);
  CHECK(o.data.max_disp == 6.0);
  CHECK_FALSE(o.data.augment);
  CHECK(o.model.c1 == 12);
  CHECK(o.model.fdc_mode == FdcMode::kNaive);
  CHECK(o.data.num_frames == o.model.num_frames);
  std::istringstream bad1("steps = ten\n"), bad2("no_such_key = 1\n"), bad3("steps\n");
  CHECK_THROWS(read_train_config(bad1));
  CHECK_THROWS(read_train_config(bad2));
  CHECK_THROWS(read_train_config(bad3));
}

TEST_CASE("train: zero steps keeps the initialization") {
  const auto dir = std::filesystem::temp_directory_path() / "flowdeform_train_zero";
  std::filesystem::remove_all(dir);
  auto o = small_run(0);
  o.out_dir = dir.string();
  ParamStore<float> trained, init;
  const auto r = train(o, trained, {});
  init_fdan(init, o.model, o.seed);
  CHECK(same_values(trained, init));
  CHECK(r.log.empty());
  ParamStore<float> loaded;
  CHECK(load_checkpoint((dir / "checkpoint").string(), loaded) == o.model);
  CHECK(same_values(loaded, init));
  std::filesystem::remove_all(dir);
}

TEST_CASE("train: deterministic and logged") {
  const auto dir = std::filesystem::temp_directory_path() / "flowdeform_train_det";
  std::filesystem::remove_all(dir);
  auto o = small_run(4);
  o.out_dir = dir.string();
  ParamStore<float> a, b;
  const auto ra = train(o, a, {});
  o.out_dir.clear();
  const auto rb = train(o, b, {});
  REQUIRE(ra.log.size() == 4);
  REQUIRE(rb.log.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ra.log[i].loss == rb.log[i].loss);
    CHECK(ra.log[i].lr == rb.log[i].lr);
    CHECK(std::isfinite(ra.log[i].loss));
  }
  CHECK(ra.log[0].lr == doctest::Approx(o.lr_max));
  CHECK(std::isnan(ra.log[0].psnr_holdout));
  CHECK(std::isfinite(ra.log[1].psnr_holdout));
  CHECK(same_values(a, b));
  ParamStore<float> init;
  init_fdan(init, o.model, o.seed);
  CHECK_FALSE(same_values(a, init));

  std::ifstream csv(dir / "metrics.csv");
  std::string header, first;
  std::getline(csv, header);
  std::getline(csv, first);
  CHECK(header == "step,lr,loss,psnr_holdout");
  CHECK(first.rfind("1,", 0) == 0);
  CHECK(first.back() == ',');
  std::filesystem::remove_all(dir);

  auto bad = small_run(1);
  bad.data.num_frames = 5;
  ParamStore<float> c;
  CHECK_THROWS(train(bad, c, {}));
}
