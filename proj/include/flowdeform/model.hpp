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
#include <iosfwd>
#include <string>
#include <vector>

#include "flowdeform/deform.hpp"
#include "flowdeform/flow.hpp"

namespace flowdeform {

// The video super-resolution network: per-frame features, flow-guided
// deformable alignment of each neighbor to the reference, attention fusion
// over time, and a residual x4 reconstruction on top of a bicubic upsample of
// the reference frame.

struct ModelConfig {
  int num_frames = 7;
  int c1 = 128;  // matching features
  int c2 = 128;  // frame features
  int extractor_blocks = 5;
  int recon_blocks = 10;
  int scale = 4;
  FdcMode fdc_mode = FdcMode::kAdvanced;
  bool flow_enabled = true;
  int semantic_kernel = 5;
  DenseBlockConfig dense{4, 32};
  SoftArgmaxOptions matching{};
  double slope = 0.1;

  /// Flow is estimated (and its parameters exist) only when it is consumed.
  bool uses_flow() const { return flow_enabled && fdc_mode != FdcMode::kNone; }
  int reference_index() const { return num_frames / 2; }
  void validate() const;

  static ModelConfig full();
  static ModelConfig toy();
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

/// Flat `key = value` text, one entry per line; '#' starts a comment.
void write_config(std::ostream& os, const ModelConfig& cfg);
/// Keys absent from the text keep the toy-preset values. Unknown keys throw.
ModelConfig read_config(std::istream& is);
ModelConfig parse_config_entry(ModelConfig cfg, const std::string& key,
                               const std::string& value);

/// Registers every parameter for `cfg`, initialized from `seed`.
template <typename T>
void init_fdan(ParamStore<T>& store, const ModelConfig& cfg, std::uint64_t seed);

/// conv + residual blocks, c2 channels at input resolution.
template <typename T>
Var<T> feature_extract(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                       Var<T> frame);

/// x + 0.1 * conv(act(conv(x))).
template <typename T>
Var<T> residual_block(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix,
                      Var<T> x, T slope);

/// Softmax over time of the channel-mean correlation with the reference,
/// used to weight each aligned feature before three fusion convs. If
/// `weights` is non-null it receives the (n, T, h, w) attention map.
template <typename T>
Var<T> temporal_fuse(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                     const std::vector<Var<T>>& aligned, Var<T> reference,
                     Var<T>* weights = nullptr);

/// Residual trunk and two x2 sub-pixel stages, added to the bicubic x4
/// upsample of `ref_frame`.
template <typename T>
Var<T> reconstruct(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                   Var<T> fused, const Tensor4<T>& ref_frame);

template <typename T>
struct FdanOutput {
  Var<T> hr;
  /// Indexed by frame; the reference entry is left empty.
  std::vector<MfeOutput<T>> flows;
  std::vector<FdmOutput<T>> alignment;
  Var<T> temporal_weights;
};

struct FdanTraceRequest {
  int frame = -1;  // neighbor whose first deformable layer is traced
  SampleTrace* trace = nullptr;
};

/// `frames` holds num_frames (n, 3, h, w) tensors in [0, 1], h and w
/// divisible by 4 when flow is used.
template <typename T>
FdanOutput<T> fdan_forward(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                           const std::vector<Tensor4<T>>& frames,
                           const FdanTraceRequest& trace = {});

/// Checkpoint directory: config.txt, manifest.txt (name n c h w per line) and
/// params/<index>.fdt4 in manifest order.
template <typename T>
void save_checkpoint(const std::string& dir, const ParamStore<T>& store,
                     const ModelConfig& cfg);

/// Rebuilds the store for the stored config and loads every tensor. Names and
/// shapes must match the manifest exactly.
template <typename T>
ModelConfig load_checkpoint(const std::string& dir, ParamStore<T>& store);

}  // namespace flowdeform
