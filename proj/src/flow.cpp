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

#include "flowdeform/flow.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "flowdeform/sampling.hpp"

namespace flowdeform {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flow enters the refinement block at this scale so it is comparable to
// feature magnitudes.
constexpr double kFlowInputScale = 0.1;
constexpr double kNormEps = 1e-6;
constexpr double kPreBlurSigma = 1.5;
constexpr int kPreBlurSize = 9;

// Depthwise Gaussian as a dense conv weight with zero cross-channel taps.
template <typename T>
Tensor4<T> blur_weight(int channels) {
  Tensor4<T> w(channels, channels, kPreBlurSize, kPreBlurSize);
  const int r = kPreBlurSize / 2;
  double sum = 0.0;
  std::vector<double> g(kPreBlurSize);
  for (int i = 0; i < kPreBlurSize; ++i) {
    g[i] = std::exp(-(i - r) * (i - r) / (2.0 * kPreBlurSigma * kPreBlurSigma));
    sum += g[i];
  }
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < kPreBlurSize; ++y)
      for (int x = 0; x < kPreBlurSize; ++x)
        w(c, c, y, x) = static_cast<T>(g[y] * g[x] / (sum * sum));
  return w;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Index of the best score in column i of one batch element's volume.
template <typename T>
int argmax_column(const T* vol, int J, int I, int i, int w) {
  const int xi = i % w, yi = i / w;
  int best = 0;
  T best_s = -std::numeric_limits<T>::infinity();
  long best_d = std::numeric_limits<long>::max();
  for (int j = 0; j < J; ++j) {
    const T s = vol[static_cast<std::size_t>(j) * I + i];
    if (s < best_s) continue;
    const long dx = j % w - xi, dy = j / w - yi;
    const long d = dx * dx + dy * dy;
    if (s > best_s || d < best_d) {
      best = j;
      best_s = s;
      best_d = d;
    }
  }
  return best;
}

// Candidate set and logit scaling for one reference pixel.
template <typename T>
struct Window {
  std::vector<int> idx;
  std::vector<T> dlogit;  // d(logit)/d(score)
  std::vector<T> logit;
  std::vector<T> prob;
};

template <typename T>
void build_window(const T* vol, int I, int h, int w, int i, int center,
                  const SoftArgmaxOptions& opts, Window<T>& win) {
  const int r = opts.window / 2;
  const int cx = center % w, cy = center / w;
  const T inv_t = static_cast<T>(1.0 / opts.temperature);
  const double inv_2s2 = 1.0 / (2.0 * opts.sigma * opts.sigma);
  win.idx.clear();
  win.dlogit.clear();
  win.logit.clear();
  for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y) {
    for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x) {
      const int j = y * w + x;
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const T s = vol[static_cast<std::size_t>(j) * I + i];
      win.idx.push_back(j);
      if (opts.mode == WindowMode::kMultiply) {
        const T g = static_cast<T>(std::exp(-d2 * inv_2s2));
        win.dlogit.push_back(g * inv_t);
        win.logit.push_back(s * g * inv_t);
      } else {
        win.dlogit.push_back(inv_t);
        win.logit.push_back(s * inv_t - static_cast<T>(d2 * inv_2s2));
      }
    }
  }
  T mx = -std::numeric_limits<T>::infinity();
  for (T z : win.logit) mx = std::max(mx, z);
  win.prob.resize(win.logit.size());
  T sum = 0;
  for (std::size_t k = 0; k < win.logit.size(); ++k) {
    win.prob[k] = std::exp(win.logit[k] - mx);
    sum += win.prob[k];
  }
  for (T& p : win.prob) p /= sum;
}

}  // namespace

std::string to_string(WindowMode mode) {
  return mode == WindowMode::kMultiply ? "multiply" : "logadd";
}

WindowMode parse_window_mode(const std::string& s) {
  if (s == "multiply") return WindowMode::kMultiply;
  if (s == "logadd") return WindowMode::kLogAdd;
  throw std::invalid_argument("unknown window mode '" + s +
                              "' (expected multiply|logadd)");
}

template <typename T>
void add_semantic_features(ParamStore<T>& store, const std::string& prefix,
                           int c1, std::mt19937_64& rng, double slope,
                           int kernel) {
  require(c1 >= 2 && c1 % 2 == 0, "semantic features: c1 must be even");
  require(kernel >= 1 && kernel % 2 == 1, "semantic features: kernel must be odd");
  add_conv(store, prefix + ".conv0", 3, c1 / 2, kernel, rng, slope);
  add_conv(store, prefix + ".conv1", c1 / 2, c1, kernel, rng, slope);
  add_conv(store, prefix + ".conv2", c1, c1, kernel, rng, slope);
  add_conv(store, prefix + ".conv3", c1, c1, kernel, rng, slope);
}

template <typename T>
Var<T> semantic_features(Tape<T>& tape, ParamStore<T>& store,
                         const std::string& prefix, Var<T> frame, T slope) {
  const Shape4 s = frame.shape();
  require(s.c == 3, "semantic_features: expected RGB input, got " + s.str());
  require(s.h % 4 == 0 && s.w % 4 == 0,
          "semantic_features: frame " + s.str() + " is not divisible by 4");
  // Centered before the blur so zero padding reads as mid-gray.
  Var<T> x = add(frame, tape.constant(Tensor4<T>(s, T(-0.5))));
  x = conv2d(x, tape.constant(blur_weight<T>(3)), Var<T>{}, 1, kPreBlurSize / 2);
  x = leaky_relu(conv(tape, store, prefix + ".conv0", x, 2), slope);
  x = leaky_relu(conv(tape, store, prefix + ".conv1", x, 2), slope);
  x = leaky_relu(conv(tape, store, prefix + ".conv2", x), slope);
  x = conv(tape, store, prefix + ".conv3", x);
  return l2_normalize_channels(x, static_cast<T>(kNormEps));
}

template <typename T>
Var<T> cost_volume(Var<T> ref, Var<T> nbr) {
  require_same_shape(ref.shape(), nbr.shape(), "cost_volume");
  auto& tape = *ref.tape;
  const Shape4 s = ref.shape();
  const int P = s.h * s.w;
  Tensor4<T> out(s.n, P, s.h, s.w);
  for (int b = 0; b < s.n; ++b) {
    Eigen::Map<const MatR<T>> R(ref.value().plane(b, 0), s.c, P);
    Eigen::Map<const MatR<T>> N(nbr.value().plane(b, 0), s.c, P);
    Eigen::Map<MatR<T>> V(out.plane(b, 0), P, P);
    V.noalias() = N.transpose() * R;
  }
  return tape.record(std::move(out), {ref, nbr}, [=](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (int b = 0; b < s.n; ++b) {
      Eigen::Map<const MatR<T>> G(g.plane(b, 0), P, P);
      if (t.requires_grad(ref.id)) {
        Eigen::Map<const MatR<T>> N(t.value(nbr.id).plane(b, 0), s.c, P);
        Eigen::Map<MatR<T>> DR(t.grad(ref.id).plane(b, 0), s.c, P);
        DR.noalias() += N * G;
      }
      if (t.requires_grad(nbr.id)) {
        Eigen::Map<const MatR<T>> R(t.value(ref.id).plane(b, 0), s.c, P);
        Eigen::Map<MatR<T>> DN(t.grad(nbr.id).plane(b, 0), s.c, P);
        DN.noalias() += R * G.transpose();
      }
    }
  });
}

template <typename T>
Tensor4<T> hard_argmax_flow(const Tensor4<T>& volume) {
  const Shape4 s = volume.shape();
  const int I = s.h * s.w;
  require(s.c == I, "hard_argmax_flow: volume " + s.str() +
                        " is not (n, h*w, h, w)");
  Tensor4<T> flow(s.n, 2, s.h, s.w);
  for (int b = 0; b < s.n; ++b) {
    const T* vol = volume.plane(b, 0);
    for (int i = 0; i < I; ++i) {
      const int j = argmax_column(vol, s.c, I, i, s.w);
      flow.plane(b, 0)[i] = static_cast<T>(j % s.w - i % s.w);
      flow.plane(b, 1)[i] = static_cast<T>(j / s.w - i / s.w);
    }
  }
  return flow;
}

template <typename T>
Var<T> soft_argmax_flow(Var<T> volume, const SoftArgmaxOptions& opts) {
  require(opts.temperature > 0.0, "soft_argmax_flow: temperature must be > 0");
  require(opts.window >= 1 && opts.window % 2 == 1,
          "soft_argmax_flow: window must be a positive odd count");
  require(opts.sigma > 0.0, "soft_argmax_flow: sigma must be > 0");
  auto& tape = *volume.tape;
  const Shape4 s = volume.shape();
  const int I = s.h * s.w;
  require(s.c == I, "soft_argmax_flow: volume " + s.str() +
                        " is not (n, h*w, h, w)");
  const int h = s.h, w = s.w;
  std::vector<int> centers(static_cast<std::size_t>(s.n) * I);
  Tensor4<T> flow(s.n, 2, h, w);
  Window<T> win;
  for (int b = 0; b < s.n; ++b) {
    const T* vol = volume.value().plane(b, 0);
    for (int i = 0; i < I; ++i) {
      const int c = argmax_column(vol, I, I, i, w);
      centers[static_cast<std::size_t>(b) * I + i] = c;
      build_window(vol, I, h, w, i, c, opts, win);
      T fx = 0, fy = 0;
      for (std::size_t k = 0; k < win.idx.size(); ++k) {
        fx += win.prob[k] * static_cast<T>(win.idx[k] % w - i % w);
        fy += win.prob[k] * static_cast<T>(win.idx[k] / w - i / w);
      }
      flow.plane(b, 0)[i] = fx;
      flow.plane(b, 1)[i] = fy;
    }
  }
  return tape.record(
      std::move(flow), {volume},
      [=, centers = std::move(centers)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gv = t.grad(volume.id);
        Window<T> win;
        for (int b = 0; b < s.n; ++b) {
          const T* vol = t.value(volume.id).plane(b, 0);
          T* dvol = gv.plane(b, 0);
          for (int i = 0; i < I; ++i) {
            build_window(vol, I, h, w, i, centers[static_cast<std::size_t>(b) * I + i],
                         opts, win);
            const T gx = g.plane(b, 0)[i], gy = g.plane(b, 1)[i];
            T mean = 0;
            std::vector<T>& e = win.logit;  // reused as per-candidate projection
            for (std::size_t k = 0; k < win.idx.size(); ++k) {
              e[k] = gx * static_cast<T>(win.idx[k] % w - i % w) +
                     gy * static_cast<T>(win.idx[k] / w - i / w);
              mean += win.prob[k] * e[k];
            }
            for (std::size_t k = 0; k < win.idx.size(); ++k) {
              dvol[static_cast<std::size_t>(win.idx[k]) * I + i] +=
                  win.prob[k] * (e[k] - mean) * win.dlogit[k];
            }
          }
        }
      });
}

template <typename T>
Var<T> flow_upsample(Var<T> coarse, int factor) {
  require(coarse.shape().c == 2,
          "flow_upsample: expected a 2-channel flow, got " + coarse.shape().str());
  return scale(upsample_nearest(coarse, factor), static_cast<T>(factor));
}

template <typename T>
void add_refine_flow(ParamStore<T>& store, const std::string& prefix,
                     int channels, const DenseBlockConfig& cfg,
                     std::mt19937_64& rng, double slope) {
  require(cfg.layers >= 0 && cfg.growth > 0, "refine_flow: bad dense block config");
  int c = 2 * channels + 2;
  for (int l = 0; l < cfg.layers; ++l) {
    add_conv(store, prefix + ".dense" + std::to_string(l), c, cfg.growth, 3, rng,
             slope);
    c += cfg.growth;
  }
  add_conv(store, prefix + ".out", c, 2, 3, rng, slope, Init::kZero);
}

template <typename T>
Var<T> refine_flow(Tape<T>& tape, ParamStore<T>& store,
                   const std::string& prefix, Var<T> ref_feat,
                   Var<T> warped_nbr_feat, Var<T> initial, T slope) {
  require_same_shape(ref_feat.shape(), warped_nbr_feat.shape(), "refine_flow");
  const Shape4 fs = initial.shape();
  require(fs.c == 2 && fs.n == ref_feat.shape().n && fs.same_spatial(ref_feat.shape()),
          "refine_flow: flow " + fs.str() + " does not match features " +
              ref_feat.shape().str());
  std::vector<Var<T>> feats{ref_feat, warped_nbr_feat,
                            scale(initial, static_cast<T>(kFlowInputScale))};
  for (int l = 0; store.contains(prefix + ".dense" + std::to_string(l) + ".weight"); ++l) {
    feats.push_back(leaky_relu(
        conv(tape, store, prefix + ".dense" + std::to_string(l), concat_channels(feats)),
        slope));
  }
  return add(initial, conv(tape, store, prefix + ".out", concat_channels(feats)));
}

template <typename T>
MfeOutput<T> mfe_from_semantics(Tape<T>& tape, ParamStore<T>& store,
                                const MfeNames& names, Var<T> ref_sem,
                                Var<T> nbr_sem, Var<T> ref_feat,
                                Var<T> nbr_feat, const SoftArgmaxOptions& opts,
                                T slope, bool refine) {
  const Shape4 fs = ref_feat.shape();
  const Shape4 ss = ref_sem.shape();
  require(fs.h == 4 * ss.h && fs.w == 4 * ss.w,
          "mfe: features " + fs.str() + " are not 4x the matching resolution " +
              ss.str());
  MfeOutput<T> out;
  out.coarse = soft_argmax_flow(cost_volume(ref_sem, nbr_sem), opts);
  out.initial = flow_upsample(out.coarse, 4);
  out.fine = refine ? refine_flow(tape, store, names.refine, ref_feat,
                                  warp(nbr_feat, out.initial), out.initial, slope)
                    : out.initial;
  return out;
}

template <typename T>
MfeOutput<T> mfe(Tape<T>& tape, ParamStore<T>& store, const MfeNames& names,
                 Var<T> ref_frame, Var<T> nbr_frame, Var<T> ref_feat,
                 Var<T> nbr_feat, const SoftArgmaxOptions& opts, T slope,
                 bool refine) {
  require_same_shape(ref_frame.shape(), nbr_frame.shape(), "mfe frames");
  auto rs = semantic_features(tape, store, names.semantic, ref_frame, slope);
  auto ns = semantic_features(tape, store, names.semantic, nbr_frame, slope);
  return mfe_from_semantics(tape, store, names, rs, ns, ref_feat, nbr_feat, opts,
                            slope, refine);
}

#define FLOWDEFORM_INSTANTIATE(T)                                               \
  template void add_semantic_features<T>(ParamStore<T>&, const std::string&,    \
                                         int, std::mt19937_64&, double, int);   \
  template Var<T> semantic_features<T>(Tape<T>&, ParamStore<T>&,                \
                                       const std::string&, Var<T>, T);          \
  template Var<T> cost_volume<T>(Var<T>, Var<T>);                               \
  template Tensor4<T> hard_argmax_flow<T>(const Tensor4<T>&);                   \
  template Var<T> soft_argmax_flow<T>(Var<T>, const SoftArgmaxOptions&);        \
  template Var<T> flow_upsample<T>(Var<T>, int);                                \
  template void add_refine_flow<T>(ParamStore<T>&, const std::string&, int,     \
                                   const DenseBlockConfig&, std::mt19937_64&,   \
                                   double);                                     \
  template Var<T> refine_flow<T>(Tape<T>&, ParamStore<T>&, const std::string&,  \
                                 Var<T>, Var<T>, Var<T>, T);                    \
  template MfeOutput<T> mfe_from_semantics<T>(                                  \
      Tape<T>&, ParamStore<T>&, const MfeNames&, Var<T>, Var<T>, Var<T>,        \
      Var<T>, const SoftArgmaxOptions&, T, bool);                               \
  template MfeOutput<T> mfe<T>(Tape<T>&, ParamStore<T>&, const MfeNames&,       \
                               Var<T>, Var<T>, Var<T>, Var<T>,                  \
                               const SoftArgmaxOptions&, T, bool);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
