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

#include "flowdeform/analysis.hpp"

#include <ostream>
#include <stdexcept>

namespace flowdeform {

std::vector<double> default_offset_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 16; ++i) e.push_back(i);
  return e;
}

template <typename T>
std::vector<double> model_offset_histogram(ParamStore<T>& store, const ModelConfig& cfg,
                                           const std::vector<SynthSample<T>>& samples,
                                           const OffsetHistogramOptions& opts) {
  if (samples.empty()) throw std::invalid_argument("model_offset_histogram: no samples");
  if (opts.frame < 0 || opts.frame >= cfg.num_frames || opts.frame == cfg.reference_index())
    throw std::invalid_argument("model_offset_histogram: frame must be a neighbor index");
  if (opts.layer < 0 || opts.layer > 2)
    throw std::invalid_argument("model_offset_histogram: layer must be 0, 1 or 2");
  const KernelTaps taps = KernelTaps::grid3x3();
  std::vector<double> total(opts.edges.size() - 1, 0.0);
  double parts = 0.0;
  for (const auto& s : samples) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    const auto out = fdan_forward(tape, store, cfg, s.lr_frames);
    const auto& a = out.alignment[opts.frame];
    std::vector<const Tensor4<T>*> layers;
    if (opts.layer != 2) layers.push_back(&a.first.offsets.value());
    if (opts.layer != 1) layers.push_back(&a.second.offsets.value());
    // Every layer and window has the same number of magnitudes, so the
    // pooled fraction is the plain mean.
    for (const auto* off : layers) {
      const auto f = offset_histogram(*off, taps, opts.edges);
      for (std::size_t i = 0; i < f.size(); ++i) total[i] += f[i];
      parts += 1.0;
    }
  }
  for (double& v : total) v /= parts;
  return total;
}

void write_labeled_histograms(std::ostream& os, const std::vector<double>& edges,
                              const std::vector<LabeledHistogram>& rows) {
  os << "label,bin_lo,bin_hi,fraction,truncated_percent\n";
  os.precision(10);
  for (const auto& r : rows) {
    if (r.fractions.size() + 1 != edges.size())
      throw std::invalid_argument("write_labeled_histograms: edges/fractions size mismatch");
    const auto pct = truncated_percent(r.fractions);
    for (std::size_t i = 0; i < r.fractions.size(); ++i)
      os << r.label << ',' << edges[i] << ',' << edges[i + 1] << ',' << r.fractions[i] << ','
         << pct[i] << '\n';
  }
}

#define FLOWDEFORM_INSTANTIATE(T)                                                        \
  template std::vector<double> model_offset_histogram<T>(                                \
      ParamStore<T>&, const ModelConfig&, const std::vector<SynthSample<T>>&,            \
      const OffsetHistogramOptions&);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
