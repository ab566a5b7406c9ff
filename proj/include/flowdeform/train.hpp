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

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowdeform/data.hpp"
#include "flowdeform/model.hpp"

namespace flowdeform {

/// Mean absolute difference; the gradient is sign(pred - target) / count
/// (zero where equal).
template <typename T>
Var<T> l1_loss(Var<T> pred, Var<T> target);

/// Adam hyperparameters and step counter. Moments live in each Parameter.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  long step = 0;
};

/// One bias-corrected Adam update of every parameter from its grad.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState& state, double lr);

/// Cosine annealing from lr_max at epoch 0 to lr_min at `period`; epochs past
/// the period stay at lr_min.
double cosine_lr(double epoch, double period, double lr_max, double lr_min);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm);

/// A batch of windows stacked along n.
template <typename T>
struct Batch {
  std::vector<Tensor4<T>> frames;  // num_frames tensors (n, 3, h, w)
  Tensor4<T> target;               // (n, 3, 4h, 4w)
  std::vector<Tensor4<T>> flows;   // ground truth, reference -> frame i
};

template <typename T>
Batch<T> stack_samples(const std::vector<SynthSample<T>>& samples);

/// Fixed evaluation windows drawn from their own texture bank.
template <typename T>
std::vector<SynthSample<T>> make_holdout(const SynthSpec& spec, int count, std::uint64_t seed);

/// Mean Y-channel PSNR of the model (and of bicubic upsampling) on `holdout`.
struct HoldoutScore {
  double model_psnr = 0.0;
  double bicubic_psnr = 0.0;
};

template <typename T>
HoldoutScore evaluate_holdout(ParamStore<T>& store, const ModelConfig& cfg,
                              const std::vector<SynthSample<T>>& holdout);

struct TrainOptions {
  ModelConfig model = ModelConfig::toy();
  SynthSpec data{};
  int steps = 2000;
  int batch = 4;
  std::uint64_t seed = 7;
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  double clip_norm = 10.0;
  int texture_bank = 48;
  int holdout_count = 16;
  std::uint64_t holdout_seed = 20260;
  int eval_every = 250;
  /// Empty disables writing; otherwise metrics.csv and checkpoint/ go here.
  std::string out_dir;
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
};

struct MetricsRow {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double psnr_holdout = 0.0;  // NaN when not evaluated at this step
};

struct TrainResult {
  std::vector<MetricsRow> log;
  HoldoutScore initial;
  HoldoutScore final;
};

/// Deterministic training loop: the store is initialized from opts.seed.
/// Throws std::runtime_error if the loss becomes non-finite.
TrainResult train(const TrainOptions& opts, ParamStore<float>& store,
                  const std::function<void(const MetricsRow&)>& progress = {});

/// CSV with columns step, lr, loss, psnr_holdout (empty when not evaluated).
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& log);

/// Training options from `key = value` text. Model keys go to the model
/// config; the rest are the TrainOptions / SynthSpec fields.
TrainOptions read_train_config(std::istream& is);

}  // namespace flowdeform
