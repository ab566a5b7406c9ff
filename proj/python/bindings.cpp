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

// Python bindings. Arrays cross the boundary as C-contiguous (n, c, h, w)
// float64 numpy arrays; model inference runs in float32 internally.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowdeform/data.hpp"
#include "flowdeform/flow.hpp"
#include "flowdeform/gradsuite.hpp"
#include "flowdeform/image.hpp"
#include "flowdeform/metrics.hpp"
#include "flowdeform/model.hpp"
#include "flowdeform/ops.hpp"
#include "flowdeform/sampling.hpp"
#include "flowdeform/train.hpp"

namespace py = pybind11;
using namespace flowdeform;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor4<T> to_tensor(const Array& a) {
  if (a.ndim() != 4) throw std::invalid_argument("expected a 4-d (n, c, h, w) array");
  Tensor4<T> t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
               static_cast<int>(a.shape(3)));
  std::copy(a.data(), a.data() + a.size(), t.span().begin());
  return t;
}

template <typename T>
Array to_array(const Tensor4<T>& t) {
  Array a({t.n(), t.c(), t.h(), t.w()});
  std::copy(t.span().begin(), t.span().end(), a.mutable_data());
  return a;
}

// Forward-only evaluation of a tape op on constant inputs.
template <typename F>
Array forward(F&& f) {
  Tape<double> tape;
  tape.set_grad_enabled(false);
  return to_array(f(tape).value());
}

ModelConfig preset(const std::string& name) {
  if (name == "toy") return ModelConfig::toy();
  if (name == "full") return ModelConfig::full();
  throw std::invalid_argument("unknown preset '" + name + "' (expected toy or full)");
}

std::size_t parameter_count(const ModelConfig& cfg) {
  ParamStore<float> store;
  init_fdan(store, cfg, 1);
  return store.count();
}

class Model {
 public:
  explicit Model(const std::string& checkpoint) { cfg_ = load_checkpoint(checkpoint, store_); }

  Array super_resolve(const std::vector<Array>& frames) {
    if (static_cast<int>(frames.size()) != cfg_.num_frames)
      throw std::invalid_argument("expected " + std::to_string(cfg_.num_frames) + " frames");
    std::vector<Tensor4<float>> in;
    for (const auto& f : frames) in.push_back(to_tensor<float>(f));
    Tape<float> tape;
    tape.set_grad_enabled(false);
    return to_array(fdan_forward(tape, store_, cfg_, in).hr.value());
  }

  int num_frames() const { return cfg_.num_frames; }
  std::string fdc_mode() const { return to_string(cfg_.fdc_mode); }
  std::size_t parameter_count() const { return store_.count(); }

 private:
  ParamStore<float> store_;
  ModelConfig cfg_;
};

}  // namespace

PYBIND11_MODULE(_flowdeform, m) {
  m.doc() = "Flow-guided deformable alignment for video super-resolution";

  m.def(
      "warp", [](const Array& x, const Array& flow) {
        return forward([&](Tape<double>& t) { return warp(t.constant(to_tensor<double>(x)), t.constant(to_tensor<double>(flow))); });
      },
      py::arg("x"), py::arg("flow"), "Backward warp: out(p) = x(p + flow(p)), zero outside.");
  m.def(
      "bilinear_sample", [](const Array& x, const Array& coords) {
        return forward([&](Tape<double>& t) {
          return bilinear_sample(t.constant(to_tensor<double>(x)), t.constant(to_tensor<double>(coords)));
        });
      },
      py::arg("x"), py::arg("coords"), "Bilinear reads at absolute (x, y) pixel coordinates.");
  m.def(
      "cost_volume", [](const Array& ref, const Array& nbr) {
        return forward([&](Tape<double>& t) {
          return cost_volume(t.constant(to_tensor<double>(ref)), t.constant(to_tensor<double>(nbr)));
        });
      },
      py::arg("ref"), py::arg("nbr"), "All-pairs dot products, shape (n, h*w, h, w).");
  m.def(
      "hard_argmax_flow", [](const Array& volume) { return to_array(hard_argmax_flow(to_tensor<double>(volume))); },
      py::arg("volume"));
  m.def(
      "soft_argmax_flow",
      [](const Array& volume, double temperature, int window, double sigma, const std::string& mode) {
        SoftArgmaxOptions o;
        o.temperature = temperature;
        o.window = window;
        o.sigma = sigma;
        o.mode = parse_window_mode(mode);
        return forward([&](Tape<double>& t) { return soft_argmax_flow(t.constant(to_tensor<double>(volume)), o); });
      },
      py::arg("volume"), py::arg("temperature") = 0.03, py::arg("window") = 5, py::arg("sigma") = 2.0,
      py::arg("mode") = "logadd");
  m.def(
      "pixel_shuffle", [](const Array& x, int r) {
        return forward([&](Tape<double>& t) { return pixel_shuffle(t.constant(to_tensor<double>(x)), r); });
      },
      py::arg("x"), py::arg("factor"));
  m.def(
      "pixel_unshuffle", [](const Array& x, int r) {
        return forward([&](Tape<double>& t) { return pixel_unshuffle(t.constant(to_tensor<double>(x)), r); });
      },
      py::arg("x"), py::arg("factor"));

  m.def(
      "rgb_to_y", [](const Array& rgb) { return to_array(rgb_to_y(to_tensor<double>(rgb))); }, py::arg("rgb"));
  m.def(
      "psnr", [](const Array& p, const Array& t, double peak) { return psnr(to_tensor<double>(p), to_tensor<double>(t), peak); },
      py::arg("pred"), py::arg("target"), py::arg("peak") = 1.0);
  m.def(
      "ssim", [](const Array& p, const Array& t) { return ssim(to_tensor<double>(p), to_tensor<double>(t)); },
      py::arg("pred"), py::arg("target"));
  m.def(
      "bicubic_upsample", [](const Array& x, int factor) { return to_array(bicubic_upsample(to_tensor<double>(x), factor)); },
      py::arg("x"), py::arg("factor") = 4);
  m.def(
      "degrade", [](const Array& hr, int factor, double sigma, int size) {
        return to_array(degrade(to_tensor<double>(hr), factor, sigma, size));
      },
      py::arg("hr"), py::arg("factor") = 4, py::arg("sigma") = 1.6, py::arg("size") = 13);
  m.def(
      "make_texture", [](int h, int w, std::uint64_t seed) { return to_array(make_texture<double>(h, w, seed)); },
      py::arg("h"), py::arg("w"), py::arg("seed"));
  m.def(
      "flow_to_color", [](const Array& flow, double max_mag) { return to_array(flow_to_color(to_tensor<double>(flow), max_mag)); },
      py::arg("flow"), py::arg("max_mag"));

  m.def(
      "gradient_suite", [](std::uint64_t seed) {
        py::list out;
        for (const auto& e : run_gradient_suite(seed)) {
          py::dict d;
          d["name"] = e.name;
          d["worst_rel_error"] = e.worst_rel_error;
          d["tolerance"] = e.tolerance;
          d["checked"] = e.checked;
          d["passed"] = e.pass();
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 1, "Finite-difference check of every differentiable op.");
  m.def(
      "parameter_count", [](const std::string& name) { return parameter_count(preset(name)); },
      py::arg("preset") = "toy");

  m.def(
      "train",
      [](const std::string& config_path, const std::string& out_dir, int steps, std::uint64_t seed) {
        std::ifstream is(config_path);
        if (!is) throw std::invalid_argument("cannot read " + config_path);
        TrainOptions o = read_train_config(is);
        if (steps >= 0) o.steps = steps;
        o.seed = seed;
        o.out_dir = out_dir;
        ParamStore<float> store;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(o, store);
        }
        py::dict d;
        d["bicubic_psnr"] = r.initial.bicubic_psnr;
        d["initial_psnr"] = r.initial.model_psnr;
        d["final_psnr"] = r.final.model_psnr;
        std::vector<double> losses;
        for (const auto& row : r.log) losses.push_back(row.loss);
        d["losses"] = losses;
        return d;
      },
      py::arg("config"), py::arg("out_dir") = "", py::arg("steps") = -1, py::arg("seed") = 7,
      "Train from a key = value config; returns holdout scores and the loss log.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("super_resolve", &Model::super_resolve, py::arg("frames"),
           "Upscale the middle frame of a window of (n, 3, h, w) arrays in [0, 1].")
      .def_property_readonly("num_frames", &Model::num_frames)
      .def_property_readonly("fdc_mode", &Model::fdc_mode)
      .def_property_readonly("parameter_count", &Model::parameter_count);
}
