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

#include "flowdeform/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace flowdeform {

namespace {

double contract(const Tensor4<double>& out, const Tensor4<double>& r) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) total += out[i] * r[i];
  return total;
}

double evaluate(const std::vector<Tensor4<double>>& inputs,
                const GraphBuilder& build, const Tensor4<double>& r) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return contract(build(tape, vars).value(), r);
}

}  // namespace

GradCheckResult check_gradients(const std::string& name,
                                const std::vector<Tensor4<double>>& inputs,
                                const GraphBuilder& build,
                                const GradCheckOptions& opts) {
  std::mt19937_64 rng(opts.seed);

  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.input(t));
  Var<double> out = build(tape, vars);

  Tensor4<double> r(out.shape());
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto& v : r.span()) v = unit(rng);
  tape.backward(out, r);

  GradCheckResult result;
  result.name = name;
  std::vector<Tensor4<double>> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (std::find(opts.skip_inputs.begin(), opts.skip_inputs.end(), k) !=
        opts.skip_inputs.end()) {
      continue;
    }
    const std::size_t numel = inputs[k].numel();
    if (numel == 0) continue;
    std::vector<std::size_t> idx(numel);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(numel, opts.samples_per_input));

    const bool has = tape.has_grad(vars[k].id);
    std::vector<double> analytic, numeric;
    for (std::size_t i : idx) {
      const double orig = work[k][i];
      work[k][i] = orig + opts.step;
      const double fp = evaluate(work, build, r);
      work[k][i] = orig - opts.step;
      const double fm = evaluate(work, build, r);
      work[k][i] = orig;
      numeric.push_back((fp - fm) / (2.0 * opts.step));
      analytic.push_back(has ? tape.grad(vars[k].id)[i] : 0.0);
    }
    double scale = 0.0;
    for (double n : numeric) scale = std::max(scale, std::abs(n));
    const double floor = std::max(opts.floor_fraction * scale, 1e-12);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double a = analytic[j];
      const double n = numeric[j];
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      const double rel = std::abs(a - n) / denom;
      if (rel > result.worst_rel_error) {
        result.worst_rel_error = rel;
        result.worst_input = k;
      }
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult check_param_gradients(const std::string& name, ParamStore<double>& store,
                                      const ScalarGraph& loss, double fraction,
                                      const GradCheckOptions& opts) {
  store.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < store.size(); ++k)
    for (std::size_t i = 0; i < store[k].value.numel(); ++i) coords.emplace_back(k, i);
  std::mt19937_64 rng(opts.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(coords.size())));
  coords.resize(std::min(coords.size(), std::max<std::size_t>(1, want)));

  auto eval = [&]() {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    return loss(tape).value()[0];
  };
  std::vector<double> analytic, numeric;
  for (const auto& [k, i] : coords) {
    double& v = store[k].value[i];
    const double orig = v;
    v = orig + opts.step;
    const double fp = eval();
    v = orig - opts.step;
    const double fm = eval();
    v = orig;
    numeric.push_back((fp - fm) / (2.0 * opts.step));
    analytic.push_back(store[k].grad[i]);
  }
  double scale = 0.0;
  for (double n : numeric) scale = std::max(scale, std::abs(n));
  const double floor = std::max(opts.floor_fraction * scale, 1e-12);
  GradCheckResult result;
  result.name = name;
  for (std::size_t j = 0; j < coords.size(); ++j) {
    const double rel = std::abs(analytic[j] - numeric[j]) /
                       std::max({std::abs(analytic[j]), std::abs(numeric[j]), floor});
    if (rel > result.worst_rel_error) {
      result.worst_rel_error = rel;
      result.worst_input = coords[j].first;
    }
    ++result.checked;
  }
  return result;
}

void fill_uniform(Tensor4<double>& t, std::uint64_t seed, double lo,
                  double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.span()) v = dist(rng);
}

void push_off_integers(Tensor4<double>& t, double margin) {
  for (auto& v : t.span()) {
    const double nearest = std::round(v);
    const double d = v - nearest;
    if (std::abs(d) < margin) v = nearest + (d < 0 ? -margin : margin);
  }
}

}  // namespace flowdeform
