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

#include "flowdeform/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "flowdeform/image.hpp"
#include "flowdeform/metrics.hpp"

namespace flowdeform {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
Tensor4<T> stack(const std::vector<const Tensor4<T>*>& items) {
  const Shape4 s = items.front()->shape();
  Tensor4<T> out(static_cast<int>(items.size()), s.c, s.h, s.w);
  for (std::size_t b = 0; b < items.size(); ++b) {
    require(items[b]->shape() == s, "stack_samples: samples differ in shape");
    std::copy(items[b]->data(), items[b]->data() + items[b]->numel(),
              out.data() + b * items[b]->numel());
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> l1_loss(Var<T> pred, Var<T> target) {
  require_same_shape(pred.shape(), target.shape(), "l1_loss");
  const std::size_t n = pred.value().numel();
  double total = 0.0;
  const T* p = pred.value().data();
  const T* q = target.value().data();
  for (std::size_t i = 0; i < n; ++i) total += std::abs(static_cast<double>(p[i]) - q[i]);
  return pred.tape->record(
      Tensor4<T>(1, 1, 1, 1, static_cast<T>(total / static_cast<double>(n))), {pred, target},
      [pred, target, n](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0] / static_cast<T>(n);
        const T* p = t.value(pred.id).data();
        const T* q = t.value(target.id).data();
        T* dp = t.requires_grad(pred.id) ? t.grad(pred.id).data() : nullptr;
        T* dq = t.requires_grad(target.id) ? t.grad(target.id).data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          const T s = p[i] > q[i] ? g : (p[i] < q[i] ? -g : T(0));
          if (dp) dp[i] += s;
          if (dq) dq[i] -= s;
        }
      });
}

template <typename T>
void adam_step(ParamStore<T>& store, AdamState& state, double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < store.size(); ++k) {
    auto& p = store[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      const double m = state.beta1 * p.m[i] + (1.0 - state.beta1) * g;
      const double v = state.beta2 * p.v[i] + (1.0 - state.beta2) * g * g;
      p.m[i] = static_cast<T>(m);
      p.v[i] = static_cast<T>(v);
      p.value[i] -= static_cast<T>(lr * (m / c1) / (std::sqrt(v / c2) + state.eps));
    }
  }
}

double cosine_lr(double epoch, double period, double lr_max, double lr_min) {
  require(period > 0.0, "cosine_lr: period must be > 0");
  require(epoch >= 0.0, "cosine_lr: epoch must be >= 0");
  if (epoch >= period) return lr_min;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * epoch / period));
}

template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (std::size_t k = 0; k < store.size(); ++k)
    for (T g : store[k].grad.span()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T f = static_cast<T>(max_norm / norm);
    for (std::size_t k = 0; k < store.size(); ++k)
      for (T& g : store[k].grad.span()) g *= f;
  }
  return norm;
}

template <typename T>
Batch<T> stack_samples(const std::vector<SynthSample<T>>& samples) {
  require(!samples.empty(), "stack_samples: empty batch");
  Batch<T> b;
  const std::size_t frames = samples.front().lr_frames.size();
  for (std::size_t i = 0; i < frames; ++i) {
    std::vector<const Tensor4<T>*> fr, fl;
    for (const auto& s : samples) {
      require(s.lr_frames.size() == frames, "stack_samples: frame counts differ");
      fr.push_back(&s.lr_frames[i]);
      fl.push_back(&s.lr_flows[i]);
    }
    b.frames.push_back(stack(fr));
    b.flows.push_back(stack(fl));
  }
  std::vector<const Tensor4<T>*> hr;
  for (const auto& s : samples) hr.push_back(&s.hr_reference);
  b.target = stack(hr);
  return b;
}

template <typename T>
std::vector<SynthSample<T>> make_holdout(const SynthSpec& spec, int count, std::uint64_t seed) {
  const auto bank = make_texture_bank<T>(count, canvas_size(spec), derive_seed(seed, 0));
  std::mt19937_64 rng(derive_seed(seed, 1));
  SynthSpec s = spec;
  s.augment = false;
  std::vector<SynthSample<T>> out;
  for (int i = 0; i < count; ++i) out.push_back(synth_sequence(bank[i], s, rng));
  return out;
}

template <typename T>
HoldoutScore evaluate_holdout(ParamStore<T>& store, const ModelConfig& cfg,
                              const std::vector<SynthSample<T>>& holdout) {
  HoldoutScore score;
  if (holdout.empty()) return score;
  for (const auto& s : holdout) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    const auto out = fdan_forward(tape, store, cfg, s.lr_frames);
    score.model_psnr += evaluate_frame("", out.hr.value(), s.hr_reference).psnr_y;
    const auto bic = bicubic_upsample(s.lr_frames[s.reference_index], cfg.scale);
    score.bicubic_psnr += evaluate_frame("", bic, s.hr_reference).psnr_y;
  }
  score.model_psnr /= static_cast<double>(holdout.size());
  score.bicubic_psnr /= static_cast<double>(holdout.size());
  return score;
}

TrainResult train(const TrainOptions& opts, ParamStore<float>& store,
                  const std::function<void(const MetricsRow&)>& progress) {
  opts.model.validate();
  require(opts.steps >= 0 && opts.batch >= 1, "train: need steps >= 0 and batch >= 1");
  require(opts.data.num_frames == opts.model.num_frames,
          "train: data and model frame counts differ");
  require(store.size() == 0, "train: store must be empty");
  namespace fs = std::filesystem;
  init_fdan(store, opts.model, opts.seed);
  AdamState adam;

  const auto holdout = make_holdout<float>(opts.data, opts.holdout_count, opts.holdout_seed);
  const auto bank = make_texture_bank<float>(opts.texture_bank, canvas_size(opts.data),
                                             derive_seed(opts.seed, 2));
  std::mt19937_64 data_rng(derive_seed(opts.seed, 3));
  std::uniform_int_distribution<int> pick(0, opts.texture_bank - 1);

  std::ofstream csv;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    csv.open(fs::path(opts.out_dir) / "metrics.csv");
    if (!csv) throw std::runtime_error("train: cannot write metrics.csv in " + opts.out_dir);
    csv << "step,lr,loss,psnr_holdout\n";
  }
  auto emit = [&](const MetricsRow& r) {
    if (csv.is_open()) {
      write_metrics_csv(csv, {r});
      csv.flush();
    }
    if (progress) progress(r);
  };

  TrainResult result;
  result.initial = evaluate_holdout(store, opts.model, holdout);
  for (int step = 1; step <= opts.steps; ++step) {
    const double lr = cosine_lr(step - 1, opts.steps, opts.lr_max, opts.lr_min);
    std::vector<SynthSample<float>> samples;
    for (int b = 0; b < opts.batch; ++b)
      samples.push_back(synth_sequence(bank[pick(data_rng)], opts.data, data_rng));
    const Batch<float> batch = stack_samples(samples);

    Tape<float> tape;
    const auto out = fdan_forward(tape, store, opts.model, batch.frames);
    const Var<float> loss = l1_loss(out.hr, tape.constant(batch.target));
    const double lv = loss.value()[0];
    if (!std::isfinite(lv))
      throw std::runtime_error("train: loss became non-finite at step " + std::to_string(step) +
                               " (lr " + std::to_string(lr) + ")");
    store.zero_grad();
    tape.backward(loss);
    clip_grad_norm(store, opts.clip_norm);
    adam_step(store, adam, lr);

    MetricsRow row{step, lr, lv, std::numeric_limits<double>::quiet_NaN()};
    if ((opts.eval_every > 0 && step % opts.eval_every == 0) || step == opts.steps)
      row.psnr_holdout = evaluate_holdout(store, opts.model, holdout).model_psnr;
    result.log.push_back(row);
    emit(row);
    if (!opts.out_dir.empty() && opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0)
      save_checkpoint((fs::path(opts.out_dir) / ("checkpoint_" + std::to_string(step))).string(),
                      store, opts.model);
  }
  result.final = opts.steps > 0 ? evaluate_holdout(store, opts.model, holdout) : result.initial;
  if (!opts.out_dir.empty())
    save_checkpoint((fs::path(opts.out_dir) / "checkpoint").string(), store, opts.model);
  return result;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& log) {
  os << std::setprecision(10);
  for (const auto& r : log) {
    os << r.step << ',' << r.lr << ',' << r.loss << ',';
    if (!std::isnan(r.psnr_holdout)) os << r.psnr_holdout;
    os << '\n';
  }
}

TrainOptions read_train_config(std::istream& is) {
  TrainOptions o;
  std::string line;
  int lineno = 0;
  auto as_int = [](const std::string& k, const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(!v.empty() && used == v.size(), "config: " + k + " expects an integer, got '" + v + "'");
    return x;
  };
  auto as_double = [](const std::string& k, const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(!v.empty() && used == v.size(), "config: " + k + " expects a number, got '" + v + "'");
    return x;
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "config: line " + std::to_string(lineno) + " is not key = value");
    const std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k == "steps") o.steps = static_cast<int>(as_int(k, v));
    else if (k == "batch") o.batch = static_cast<int>(as_int(k, v));
    else if (k == "seed") o.seed = static_cast<std::uint64_t>(as_int(k, v));
    else if (k == "lr_max") o.lr_max = as_double(k, v);
    else if (k == "lr_min") o.lr_min = as_double(k, v);
    else if (k == "clip_norm") o.clip_norm = as_double(k, v);
    else if (k == "texture_bank") o.texture_bank = static_cast<int>(as_int(k, v));
    else if (k == "holdout_count") o.holdout_count = static_cast<int>(as_int(k, v));
    else if (k == "holdout_seed") o.holdout_seed = static_cast<std::uint64_t>(as_int(k, v));
    else if (k == "eval_every") o.eval_every = static_cast<int>(as_int(k, v));
    else if (k == "checkpoint_every") o.checkpoint_every = static_cast<int>(as_int(k, v));
    else if (k == "min_disp") o.data.min_disp = as_double(k, v);
    else if (k == "max_disp") o.data.max_disp = as_double(k, v);
    else if (k == "lr_size") o.data.lr_size = static_cast<int>(as_int(k, v));
    else if (k == "objects") o.data.objects = static_cast<int>(as_int(k, v));
    else if (k == "augment") {
      require(v == "true" || v == "false", "config: augment expects true/false");
      o.data.augment = v == "true";
    } else if (k == "motion") {
      require(v == "global" || v == "objects", "config: motion expects global/objects");
      o.data.motion = v == "global" ? MotionModel::kGlobal : MotionModel::kObjects;
    } else {
      o.model = parse_config_entry(o.model, k, v);
    }
  }
  o.model.validate();
  o.data.num_frames = o.model.num_frames;
  o.data.scale = o.model.scale;
  return o;
}

#define FLOWDEFORM_INSTANTIATE(T)                                                        \
  template Var<T> l1_loss<T>(Var<T>, Var<T>);                                            \
  template void adam_step<T>(ParamStore<T>&, AdamState&, double);                        \
  template double clip_grad_norm<T>(ParamStore<T>&, double);                             \
  template Batch<T> stack_samples<T>(const std::vector<SynthSample<T>>&);                \
  template std::vector<SynthSample<T>> make_holdout<T>(const SynthSpec&, int,            \
                                                       std::uint64_t);                   \
  template HoldoutScore evaluate_holdout<T>(ParamStore<T>&, const ModelConfig&,          \
                                            const std::vector<SynthSample<T>>&);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
