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

#include "doctest.h"
#include "flowdeform/data.hpp"
#include "flowdeform/flow.hpp"
#include "flowdeform/sampling.hpp"
#include "test_util.hpp"

using namespace flowdeform;
using flowdeform::testing::random_tensor;

namespace {

// Unit vectors per location.
Tensor4<double> unit_features(int c, int h, int w, std::uint64_t seed) {
  Tape<double> tape;
  auto x = tape.constant(random_tensor({1, c, h, w}, seed));
  return l2_normalize_channels(x, 1e-12).value();
}

// out(y, x) = in((y - sy) mod h, (x - sx) mod w), so in(p) = out(p + s).
Tensor4<double> circular_shift(const Tensor4<double>& in, int sx, int sy) {
  Tensor4<double> out(in.shape());
  const int h = in.h(), w = in.w();
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out(n, c, y, x) = in(n, c, ((y - sy) % h + h) % h, ((x - sx) % w + w) % w);
  return out;
}

Tensor4<double> volume_of(const Tensor4<double>& a, const Tensor4<double>& b) {
  Tape<double> tape;
  return cost_volume(tape.constant(a), tape.constant(b)).value();
}

Tensor4<double> soft_of(const Tensor4<double>& vol, const SoftArgmaxOptions& o) {
  Tape<double> tape;
  return soft_argmax_flow(tape.constant(vol), o).value();
}

// Brute-force argmax with the same tie rule as the library.
void oracle_argmax(const Tensor4<double>& ref, const Tensor4<double>& nbr, int y, int x,
                   int& dx, int& dy) {
  double best = -1e300;
  int best_d2 = 0;
  for (int yy = 0; yy < ref.h(); ++yy)
    for (int xx = 0; xx < ref.w(); ++xx) {
      double s = 0.0;
      for (int c = 0; c < ref.c(); ++c) s += ref(0, c, y, x) * nbr(0, c, yy, xx);
      const int d2 = (xx - x) * (xx - x) + (yy - y) * (yy - y);
      if (s > best || (s == best && d2 < best_d2)) {
        best = s;
        best_d2 = d2;
        dx = xx - x;
        dy = yy - y;
      }
    }
}

double max_abs(const Tensor4<double>& t) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

}  // namespace

TEST_CASE("semantic_features: quarter resolution, unit norms, deterministic") {
  ParamStore<double> store;
  std::mt19937_64 rng(3);
  add_semantic_features(store, "sem", 128, rng, 0.1);
  auto frame = make_texture<double>(64, 64, 11);
  Tape<double> tape;
  auto a = semantic_features(tape, store, "sem", tape.constant(frame), 0.1);
  auto b = semantic_features(tape, store, "sem", tape.constant(frame), 0.1);
  CHECK(a.shape() == Shape4{1, 128, 16, 16});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      double n2 = 0.0;
      for (int c = 0; c < 128; ++c) n2 += a.value()(0, c, y, x) * a.value()(0, c, y, x);
      const double n = std::sqrt(n2);
      CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-6));
    }
  for (std::size_t i = 0; i < a.value().numel(); ++i) REQUIRE(a.value()[i] == b.value()[i]);
}

TEST_CASE("semantic_features: a mid-gray frame has no border structure") {
  // Fresh biases are zero, so any nonzero response would come from padding.
  ParamStore<double> store;
  std::mt19937_64 rng(4);
  add_semantic_features(store, "sem", 16, rng, 0.1);
  Tape<double> tape;
  auto f = semantic_features(tape, store, "sem", tape.constant(Tensor4<double>(1, 3, 32, 32, 0.5)), 0.1);
  double worst = 0.0;
  for (double v : f.value().span()) worst = std::max(worst, std::abs(v));
  CHECK(worst == 0.0);
}

TEST_CASE("semantic_features: rejects non-RGB or indivisible input") {
  ParamStore<double> store;
  std::mt19937_64 rng(3);
  add_semantic_features(store, "sem", 8, rng, 0.1);
  Tape<double> tape;
  CHECK_THROWS(semantic_features(tape, store, "sem",
                                 tape.constant(Tensor4<double>(1, 3, 30, 32)), 0.1));
  CHECK_THROWS(semantic_features(tape, store, "sem",
                                 tape.constant(Tensor4<double>(1, 2, 32, 32)), 0.1));
  std::mt19937_64 rng2(3);
  CHECK_THROWS(add_semantic_features(store, "odd", 7, rng2, 0.1));
  CHECK_THROWS(add_semantic_features(store, "even_k", 8, rng2, 0.1, 4));
}

TEST_CASE("cost_volume: self-match is maximal on the diagonal") {
  auto f = unit_features(16, 6, 7, 5);
  auto v = volume_of(f, f);
  const int I = 42;
  CHECK(v.shape() == Shape4{1, I, 6, 7});
  for (int i = 0; i < I; ++i) {
    CHECK(v.plane(0, i)[i] == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < I; ++j) {
      CHECK(v.plane(0, j)[i] <= 1.0 + 1e-12);
      CHECK(v.plane(0, j)[i] >= -1.0 - 1e-12);
    }
  }
  auto hard = hard_argmax_flow(v);
  CHECK(max_abs(hard) == 0.0);
}

TEST_CASE("cost_volume: swapping inputs transposes the volume") {
  auto a = unit_features(8, 5, 4, 1), b = unit_features(8, 5, 4, 2);
  auto ab = volume_of(a, b), ba = volume_of(b, a);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      worst = std::max(worst, std::abs(ab.plane(0, j)[i] - ba.plane(0, i)[j]));
  CHECK(worst < 1e-12);
}

TEST_CASE("cost_volume: circular shift recovered by the argmax") {
  auto ref = unit_features(32, 8, 8, 9);
  auto nbr = circular_shift(ref, 2, 0);
  auto hard = hard_argmax_flow(volume_of(ref, nbr));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      int dx, dy;
      oracle_argmax(ref, nbr, y, x, dx, dy);
      CHECK(hard(0, 0, y, x) == dx);
      CHECK(hard(0, 1, y, x) == dy);
      if (x + 2 < 8) {
        CHECK(dx == 2);
        CHECK(dy == 0);
      }
    }
}

TEST_CASE("cost_volume: shape mismatch throws") {
  Tape<double> tape;
  CHECK_THROWS(cost_volume(tape.constant(Tensor4<double>(1, 4, 3, 3)),
                           tape.constant(Tensor4<double>(1, 4, 3, 4))));
}

TEST_CASE("soft_argmax_flow: one-hot score yields its displacement") {
  const int h = 7, w = 7, I = h * w;
  Tensor4<double> v(1, I, h, w);
  const int i = 3 * w + 3;
  v.plane(0, (3 - 1) * w + (3 + 3))[i] = 1.0;
  for (auto mode : {WindowMode::kMultiply, WindowMode::kLogAdd}) {
    SoftArgmaxOptions o;
    o.mode = mode;
    o.temperature = 0.001;
    auto f = soft_of(v, o);
    CHECK(f(0, 0, 3, 3) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f(0, 1, 3, 3) == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("soft_argmax_flow: uniform window around zero gives zero flow") {
  const int h = 9, w = 9, I = h * w;
  Tensor4<double> v(1, I, h, w, 0.3);
  const int i = 4 * w + 4;
  v.plane(0, i)[i] = 0.3 + 1e-9;  // argmax at zero displacement
  for (auto mode : {WindowMode::kMultiply, WindowMode::kLogAdd}) {
    SoftArgmaxOptions o;
    o.mode = mode;
    auto f = soft_of(v, o);
    CHECK(std::abs(f(0, 0, 4, 4)) < 1e-6);
    CHECK(std::abs(f(0, 1, 4, 4)) < 1e-6);
  }
}

TEST_CASE("soft_argmax_flow: small temperature matches the hard argmax") {
  // Random scores in [-1, 0.5] with one match of score 1 per location.
  const int h = 10, w = 10, I = h * w;
  auto v = random_tensor({2, I, h, w}, 21, -1.0, 0.5);
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> pick(0, I - 1);
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < I; ++i) v.plane(b, pick(rng))[i] = 1.0;
  auto hard = hard_argmax_flow(v);
  for (auto mode : {WindowMode::kMultiply, WindowMode::kLogAdd}) {
    SoftArgmaxOptions o;
    o.mode = mode;
    o.temperature = 0.01;
    auto soft = soft_of(v, o);
    double worst = 0.0;
    for (std::size_t k = 0; k < soft.numel(); ++k)
      worst = std::max(worst, std::abs(soft[k] - hard[k]));
    CAPTURE(to_string(mode));
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("soft_argmax_flow: output stays inside the window around the argmax") {
  auto v = random_tensor({1, 36, 6, 6}, 4);
  SoftArgmaxOptions o;
  o.temperature = 5.0;
  o.window = 3;
  auto hard = hard_argmax_flow(v);
  auto soft = soft_of(v, o);
  for (std::size_t k = 0; k < soft.numel(); ++k) {
    CHECK(soft[k] <= hard[k] + 1.0 + 1e-12);
    CHECK(soft[k] >= hard[k] - 1.0 - 1e-12);
  }
}

TEST_CASE("soft_argmax_flow: bad options throw") {
  Tape<double> tape;
  auto v = tape.constant(Tensor4<double>(1, 4, 2, 2));
  SoftArgmaxOptions o;
  o.window = 4;
  CHECK_THROWS(soft_argmax_flow(v, o));
  o = {};
  o.temperature = 0.0;
  CHECK_THROWS(soft_argmax_flow(v, o));
  CHECK_THROWS(soft_argmax_flow(tape.constant(Tensor4<double>(1, 5, 2, 2))));
  CHECK(parse_window_mode(to_string(WindowMode::kLogAdd)) == WindowMode::kLogAdd);
  CHECK(parse_window_mode(to_string(WindowMode::kMultiply)) == WindowMode::kMultiply);
  CHECK_THROWS(parse_window_mode("gauss"));
}

TEST_CASE("cost_volume and soft_argmax_flow: finite differences") {
  auto a = random_tensor({1, 6, 4, 5}, 31), b = random_tensor({1, 6, 4, 5}, 32);
  auto r = check_gradients("cost_volume", {a, b},
                           [](Tape<double>&, const std::vector<Var<double>>& v) {
                             return cost_volume(v[0], v[1]);
                           });
  CHECK(r.worst_rel_error < 1e-4);
  for (auto mode : {WindowMode::kMultiply, WindowMode::kLogAdd}) {
    auto vol = random_tensor({2, 20, 4, 5}, 33);
    SoftArgmaxOptions o;
    o.mode = mode;
    o.temperature = 0.5;
    auto s = check_gradients("soft_argmax_" + to_string(mode), {vol},
                             [o](Tape<double>&, const std::vector<Var<double>>& v) {
                               return soft_argmax_flow(v[0], o);
                             });
    CAPTURE(to_string(mode));
    CHECK(s.worst_rel_error < 1e-4);
  }
}

TEST_CASE("flow_upsample: unit consistency") {
  Tape<double> tape;
  Tensor4<double> c(1, 2, 16, 16);
  for (int i = 0; i < 256; ++i) c.plane(0, 0)[i] = 1.0;
  auto up = flow_upsample(tape.constant(c)).value();
  CHECK(up.shape() == Shape4{1, 2, 64, 64});
  for (int i = 0; i < 64 * 64; ++i) {
    REQUIRE(up.plane(0, 0)[i] == 4.0);
    REQUIRE(up.plane(0, 1)[i] == 0.0);
  }
  CHECK(max_abs(flow_upsample(tape.constant(Tensor4<double>(1, 2, 16, 16))).value()) == 0.0);
  CHECK_THROWS(flow_upsample(tape.constant(Tensor4<double>(1, 3, 4, 4))));

  // Warping the full-resolution image by the fine flow and decimating equals
  // warping the decimated image by the coarse flow.
  auto hr = make_texture<double>(64, 64, 5);
  Tensor4<double> lr(1, 3, 16, 16);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) lr(0, ch, y, x) = hr(0, ch, 4 * y, 4 * x);
  Tensor4<double> coarse(1, 2, 16, 16);
  for (int i = 0; i < 256; ++i) {
    coarse.plane(0, 0)[i] = -2.0;
    coarse.plane(0, 1)[i] = 1.0;
  }
  auto fine = flow_upsample(tape.constant(coarse));
  auto hr_warp = warp(tape.constant(hr), fine).value();
  auto lr_warp = warp(tape.constant(lr), tape.constant(coarse)).value();
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        REQUIRE(hr_warp(0, ch, 4 * y, 4 * x) == doctest::Approx(lr_warp(0, ch, y, x)).epsilon(1e-14));
}

TEST_CASE("refine_flow: zero-initialized output keeps the initial flow") {
  ParamStore<double> store;
  std::mt19937_64 rng(2);
  add_refine_flow(store, "r", 4, DenseBlockConfig{3, 5}, rng, 0.1);
  CHECK(store.contains("r.dense2.weight"));
  CHECK(store.at("r.out.weight").value.shape() == Shape4{2, 4 + 4 + 2 + 15, 3, 3});
  Tape<double> tape;
  auto init = random_tensor({1, 2, 6, 6}, 3, -2.0, 2.0);
  auto out = refine_flow(tape, store, "r", tape.constant(random_tensor({1, 4, 6, 6}, 1)),
                         tape.constant(random_tensor({1, 4, 6, 6}, 2)),
                         tape.constant(init), 0.1);
  CHECK(out.shape().c == 2);
  for (std::size_t i = 0; i < init.numel(); ++i) REQUIRE(out.value()[i] == init[i]);
  CHECK_THROWS(refine_flow(tape, store, "r", tape.constant(Tensor4<double>(1, 4, 6, 6)),
                           tape.constant(Tensor4<double>(1, 4, 6, 6)),
                           tape.constant(Tensor4<double>(1, 2, 5, 6)), 0.1));
}

TEST_CASE("refine_flow: warped L1 loss reaches every dense layer") {
  ParamStore<double> store;
  std::mt19937_64 rng(4);
  add_refine_flow(store, "r", 3, DenseBlockConfig{4, 4}, rng, 0.1);
  fill_uniform(store.at("r.out.weight").value, 9, -0.05, 0.05);
  auto ref = random_tensor({1, 3, 8, 8}, 5), nbr = random_tensor({1, 3, 8, 8}, 6);
  Tape<double> tape;
  auto init = tape.constant(random_tensor({1, 2, 8, 8}, 7, -1.3, 1.3));
  auto nv = tape.constant(nbr);
  auto flow = refine_flow(tape, store, "r", tape.constant(ref), warp(nv, init), init, 0.1);
  auto loss = sum_all(leaky_relu(sub(warp(nv, flow), tape.constant(ref)), -1.0));
  tape.backward(loss);
  for (int l = 0; l < 4; ++l) {
    const auto& g = store.at("r.dense" + std::to_string(l) + ".weight").grad;
    CAPTURE(l);
    CHECK(max_abs(g) > 0.0);
  }
}

TEST_CASE("refine_flow: finite differences") {
  ParamStore<double> store;
  std::mt19937_64 rng(6);
  add_refine_flow(store, "r", 2, DenseBlockConfig{2, 3}, rng, 0.1);
  fill_uniform(store.at("r.out.weight").value, 2, -0.3, 0.3);
  auto a = random_tensor({1, 2, 5, 5}, 1), b = random_tensor({1, 2, 5, 5}, 2);
  auto f = random_tensor({1, 2, 5, 5}, 3, -2.0, 2.0);
  auto r = check_gradients("refine_flow", {a, b, f},
                           [&](Tape<double>& t, const std::vector<Var<double>>& v) {
                             return refine_flow(t, store, "r", v[0], v[1], v[2], 0.1);
                           });
  CHECK(r.worst_rel_error < 1e-4);
}

TEST_CASE("mfe: matching recovers a global shift") {
  ParamStore<float> store;
  std::mt19937_64 rng(1);
  add_semantic_features(store, "sem", 128, rng, 0.1);
  auto tex = make_texture<float>(176, 176, 77);
  struct Case {
    int dx, dy;
  };
  for (Case cs : {Case{0, 0}, Case{8, 4}, Case{-20, 12}}) {
    // nbr(p) = ref(p - d): the flow from ref into nbr is +d.
    auto ref = crop(tex, 24, 24, 128, 128);
    auto nbr = crop(tex, 24 - cs.dy, 24 - cs.dx, 128, 128);
    Tape<float> tape;
    tape.set_grad_enabled(false);
    auto dummy = tape.constant(Tensor4<float>(1, 1, 128, 128));
    auto out = mfe(tape, store, MfeNames{}, tape.constant(ref), tape.constant(nbr), dummy,
                   dummy, SoftArgmaxOptions{}, 0.1f, false);
    CHECK(out.coarse.shape() == Shape4{1, 2, 32, 32});
    CHECK(out.fine.shape() == Shape4{1, 2, 128, 128});
    double epe = 0.0;
    int count = 0;
    for (int y = 32; y < 96; ++y)
      for (int x = 32; x < 96; ++x) {
        epe += std::hypot(out.fine.value()(0, 0, y, x) - cs.dx,
                          out.fine.value()(0, 1, y, x) - cs.dy);
        ++count;
      }
    CAPTURE(cs.dx);
    CAPTURE(cs.dy);
    CHECK(epe / count < 1.0);
  }
}
