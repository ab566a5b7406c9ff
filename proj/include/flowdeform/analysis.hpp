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

#include <iosfwd>
#include <string>
#include <vector>

#include "flowdeform/data.hpp"
#include "flowdeform/model.hpp"

namespace flowdeform {

/// Integer edges 0, 1, ..., 16 (the last bin collects [15, 16)).
std::vector<double> default_offset_edges();

struct OffsetHistogramOptions {
  std::vector<double> edges = default_offset_edges();
  int frame = 0;  // neighbor whose offsets are counted
  int layer = 0;  // 1 or 2 for one deformable layer, 0 for both
};

/// Bin fractions of |tap + learned offset| for one neighbor over every
/// window in `samples`, pooled across windows.
template <typename T>
std::vector<double> model_offset_histogram(ParamStore<T>& store, const ModelConfig& cfg,
                                           const std::vector<SynthSample<T>>& samples,
                                           const OffsetHistogramOptions& opts = {});

struct LabeledHistogram {
  std::string label;
  std::vector<double> fractions;
};

/// CSV with columns label, bin_lo, bin_hi, fraction, truncated_percent.
void write_labeled_histograms(std::ostream& os, const std::vector<double>& edges,
                              const std::vector<LabeledHistogram>& rows);

}  // namespace flowdeform
