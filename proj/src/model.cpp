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

#include "flowdeform/model.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "flowdeform/image.hpp"
#include "flowdeform/tensor_io.hpp"

namespace flowdeform {

namespace {

constexpr double kResidualScale = 0.1;
constexpr double kOutputGain = 0.1;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

const MfeNames kFlowNames{"sem", "refine"};

template <typename T>
void add_residual_block(ParamStore<T>& store, const std::string& prefix, int c,
                        std::mt19937_64& rng, double slope) {
  add_conv(store, prefix + ".conv0", c, c, 3, rng, slope);
  add_conv(store, prefix + ".conv1", c, c, 3, rng, slope);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), "config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty(), "config: " + key + " expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

}  // namespace

void ModelConfig::validate() const {
  require(num_frames >= 1 && num_frames % 2 == 1, "config: num_frames must be odd");
  require(c1 >= 2 && c1 % 2 == 0, "config: c1 must be even and >= 2");
  require(c2 >= 1, "config: c2 must be positive");
  require(extractor_blocks >= 0 && recon_blocks >= 0, "config: block counts must be >= 0");
  require(scale == 4, "config: only x4 upscaling is supported");
  require(semantic_kernel >= 1 && semantic_kernel % 2 == 1, "config: semantic_kernel must be odd");
  require(dense.layers >= 0 && dense.growth >= 1, "config: bad dense block");
  require(matching.temperature > 0.0 && matching.sigma > 0.0 && matching.window % 2 == 1,
          "config: bad matching options");
}

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.c1 = 16;
  c.c2 = 16;
  c.extractor_blocks = 2;
  c.recon_blocks = 3;
  c.dense = DenseBlockConfig{4, 16};
  return c;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  std::ostringstream sa, sb;
  write_config(sa, a);
  write_config(sb, b);
  return sa.str() == sb.str();
}

void write_config(std::ostream& os, const ModelConfig& cfg) {
  os << std::setprecision(17);
  os << "num_frames = " << cfg.num_frames << "\n"
     << "c1 = " << cfg.c1 << "\n"
     << "c2 = " << cfg.c2 << "\n"
     << "extractor_blocks = " << cfg.extractor_blocks << "\n"
     << "recon_blocks = " << cfg.recon_blocks << "\n"
     << "scale = " << cfg.scale << "\n"
     << "fdc_mode = " << to_string(cfg.fdc_mode) << "\n"
     << "flow_enabled = " << (cfg.flow_enabled ? "true" : "false") << "\n"
     << "semantic_kernel = " << cfg.semantic_kernel << "\n"
     << "dense_layers = " << cfg.dense.layers << "\n"
     << "dense_growth = " << cfg.dense.growth << "\n"
     << "match_temperature = " << cfg.matching.temperature << "\n"
     << "match_window = " << cfg.matching.window << "\n"
     << "match_sigma = " << cfg.matching.sigma << "\n"
     << "match_mode = " << to_string(cfg.matching.mode) << "\n"
     << "slope = " << cfg.slope << "\n";
}

ModelConfig parse_config_entry(ModelConfig cfg, const std::string& key,
                               const std::string& value) {
  if (key == "num_frames") cfg.num_frames = to_int(key, value);
  else if (key == "c1") cfg.c1 = to_int(key, value);
  else if (key == "c2") cfg.c2 = to_int(key, value);
  else if (key == "extractor_blocks") cfg.extractor_blocks = to_int(key, value);
  else if (key == "recon_blocks") cfg.recon_blocks = to_int(key, value);
  else if (key == "scale") cfg.scale = to_int(key, value);
  else if (key == "fdc_mode") cfg.fdc_mode = parse_fdc_mode(value);
  else if (key == "flow_enabled") cfg.flow_enabled = to_bool(key, value);
  else if (key == "semantic_kernel") cfg.semantic_kernel = to_int(key, value);
  else if (key == "dense_layers") cfg.dense.layers = to_int(key, value);
  else if (key == "dense_growth") cfg.dense.growth = to_int(key, value);
  else if (key == "match_temperature") cfg.matching.temperature = to_double(key, value);
  else if (key == "match_window") cfg.matching.window = to_int(key, value);
  else if (key == "match_sigma") cfg.matching.sigma = to_double(key, value);
  else if (key == "match_mode") cfg.matching.mode = parse_window_mode(value);
  else if (key == "slope") cfg.slope = to_double(key, value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
  return cfg;
}

ModelConfig read_config(std::istream& is) {
  ModelConfig cfg = ModelConfig::toy();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "config: line " + std::to_string(lineno) + " is not key = value");
    cfg = parse_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

template <typename T>
void init_fdan(ParamStore<T>& store, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const int c = cfg.c2;
  const double s = cfg.slope;
  add_conv(store, "fe.conv_in", 3, c, 3, rng, s);
  for (int b = 0; b < cfg.extractor_blocks; ++b)
    add_residual_block(store, "fe.block" + std::to_string(b), c, rng, s);
  if (cfg.uses_flow()) {
    add_semantic_features(store, kFlowNames.semantic, cfg.c1, rng, s, cfg.semantic_kernel);
    add_refine_flow(store, kFlowNames.refine, c, cfg.dense, rng, s);
  }
  add_fdm(store, "fdm", c, rng, s);
  add_conv(store, "fuse.conv0", cfg.num_frames * c, c, 3, rng, s);
  add_conv(store, "fuse.conv1", c, c, 3, rng, s);
  add_conv(store, "fuse.conv2", c, c, 3, rng, s);
  for (int b = 0; b < cfg.recon_blocks; ++b)
    add_residual_block(store, "recon.block" + std::to_string(b), c, rng, s);
  add_conv(store, "up.conv0", c, 4 * c, 3, rng, s);
  add_conv(store, "up.conv1", c, 4 * c, 3, rng, s);
  add_conv(store, "up.out", c, 3, 3, rng, s, Init::kKaiming, kOutputGain);
}

template <typename T>
Var<T> residual_block(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix,
                      Var<T> x, T slope) {
  Var<T> r = leaky_relu(conv(tape, store, prefix + ".conv0", x), slope);
  r = conv(tape, store, prefix + ".conv1", r);
  return add(x, scale(r, static_cast<T>(kResidualScale)));
}

template <typename T>
Var<T> feature_extract(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                       Var<T> frame) {
  require(frame.shape().c == 3, "feature_extract: expected RGB, got " + frame.shape().str());
  const T slope = static_cast<T>(cfg.slope);
  Var<T> x = leaky_relu(conv(tape, store, "fe.conv_in", frame), slope);
  for (int b = 0; b < cfg.extractor_blocks; ++b)
    x = residual_block(tape, store, "fe.block" + std::to_string(b), x, slope);
  return x;
}

template <typename T>
Var<T> temporal_fuse(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                     const std::vector<Var<T>>& aligned, Var<T> reference,
                     Var<T>* weights) {
  require(!aligned.empty(), "temporal_fuse: no frames");
  require(static_cast<int>(aligned.size()) == cfg.num_frames,
          "temporal_fuse: expected " + std::to_string(cfg.num_frames) + " frames");
  std::vector<Var<T>> scores;
  for (const auto& a : aligned) scores.push_back(channel_mean_product(a, reference));
  Var<T> w = softmax_channels(concat_channels(scores));
  if (weights) *weights = w;
  std::vector<Var<T>> weighted;
  for (std::size_t i = 0; i < aligned.size(); ++i)
    weighted.push_back(mul_channel_broadcast(aligned[i], slice_channels(w, static_cast<int>(i), 1)));
  const T slope = static_cast<T>(cfg.slope);
  Var<T> x = leaky_relu(conv(tape, store, "fuse.conv0", concat_channels(weighted)), slope);
  x = leaky_relu(conv(tape, store, "fuse.conv1", x), slope);
  return conv(tape, store, "fuse.conv2", x);
}

template <typename T>
Var<T> reconstruct(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                   Var<T> fused, const Tensor4<T>& ref_frame) {
  require(fused.shape().same_spatial(ref_frame.shape()) && fused.shape().n == ref_frame.n(),
          "reconstruct: features " + fused.shape().str() + " do not match frame " +
              ref_frame.shape().str());
  const T slope = static_cast<T>(cfg.slope);
  Var<T> x = fused;
  for (int b = 0; b < cfg.recon_blocks; ++b)
    x = residual_block(tape, store, "recon.block" + std::to_string(b), x, slope);
  x = leaky_relu(pixel_shuffle(conv(tape, store, "up.conv0", x), 2), slope);
  x = leaky_relu(pixel_shuffle(conv(tape, store, "up.conv1", x), 2), slope);
  x = conv(tape, store, "up.out", x);
  return add(x, tape.constant(bicubic_upsample(ref_frame, cfg.scale)));
}

template <typename T>
FdanOutput<T> fdan_forward(Tape<T>& tape, ParamStore<T>& store, const ModelConfig& cfg,
                           const std::vector<Tensor4<T>>& frames,
                           const FdanTraceRequest& trace) {
  require(static_cast<int>(frames.size()) == cfg.num_frames,
          "fdan_forward: expected " + std::to_string(cfg.num_frames) + " frames, got " +
              std::to_string(frames.size()));
  const Shape4 fs = frames[0].shape();
  for (const auto& f : frames)
    require(f.shape() == fs, "fdan_forward: frames differ in shape");
  const int t = cfg.reference_index();
  const T slope = static_cast<T>(cfg.slope);

  std::vector<Var<T>> inputs, feats, sems;
  for (const auto& f : frames) {
    inputs.push_back(tape.constant(f));
    feats.push_back(feature_extract(tape, store, cfg, inputs.back()));
  }
  if (cfg.uses_flow())
    for (const auto& in : inputs)
      sems.push_back(semantic_features(tape, store, kFlowNames.semantic, in, slope));

  FdanOutput<T> out;
  out.flows.resize(frames.size());
  out.alignment.resize(frames.size());
  std::vector<Var<T>> aligned(frames.size());
  const Tensor4<T> zero_flow(fs.n, 2, fs.h, fs.w);
  for (int i = 0; i < cfg.num_frames; ++i) {
    if (i == t) {
      aligned[i] = feats[t];
      continue;
    }
    Var<T> flow;
    if (cfg.uses_flow()) {
      out.flows[i] = mfe_from_semantics(tape, store, kFlowNames, sems[t], sems[i], feats[t],
                                        feats[i], cfg.matching, slope);
      flow = out.flows[i].fine;
    } else {
      flow = tape.constant(zero_flow);
    }
    SampleTrace* tr = trace.frame == i ? trace.trace : nullptr;
    out.alignment[i] = fdm(tape, store, "fdm", feats[t], feats[i], flow, cfg.fdc_mode, slope, tr);
    aligned[i] = out.alignment[i].aligned;
  }
  Var<T> fused = temporal_fuse(tape, store, cfg, aligned, feats[t], &out.temporal_weights);
  out.hr = reconstruct(tape, store, cfg, fused, frames[t]);
  return out;
}

template <typename T>
void save_checkpoint(const std::string& dir, const ParamStore<T>& store,
                     const ModelConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "params");
  {
    std::ofstream os(fs::path(dir) / "config.txt");
    write_config(os, cfg);
    if (!os) throw std::runtime_error("save_checkpoint: cannot write config in " + dir);
  }
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    const Shape4 s = p.value.shape();
    manifest << p.name << ' ' << s.n << ' ' << s.c << ' ' << s.h << ' ' << s.w << '\n';
    save_tensor((fs::path(dir) / "params" / (std::to_string(i) + ".fdt4")).string(), p.value);
  }
  if (!manifest) throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir);
}

template <typename T>
ModelConfig load_checkpoint(const std::string& dir, ParamStore<T>& store) {
  namespace fs = std::filesystem;
  require(store.size() == 0, "load_checkpoint: store must be empty");
  std::ifstream cs(fs::path(dir) / "config.txt");
  if (!cs) throw std::runtime_error("load_checkpoint: missing config.txt in " + dir);
  const ModelConfig cfg = read_config(cs);
  init_fdan(store, cfg, 0);
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw std::runtime_error("load_checkpoint: missing manifest.txt in " + dir);
  std::string name;
  Shape4 s;
  std::size_t i = 0;
  while (manifest >> name >> s.n >> s.c >> s.h >> s.w) {
    require(i < store.size() && store[i].name == name,
            "load_checkpoint: unexpected parameter " + name);
    require(store[i].value.shape() == s, "load_checkpoint: shape mismatch for " + name);
    auto t = load_tensor<T>((fs::path(dir) / "params" / (std::to_string(i) + ".fdt4")).string());
    require(t.shape() == s, "load_checkpoint: stored tensor shape mismatch for " + name);
    store[i].value = std::move(t);
    ++i;
  }
  require(i == store.size(), "load_checkpoint: manifest lists " + std::to_string(i) +
                                 " of " + std::to_string(store.size()) + " parameters");
  return cfg;
}

#define FLOWDEFORM_INSTANTIATE(T)                                                        \
  template void init_fdan<T>(ParamStore<T>&, const ModelConfig&, std::uint64_t);         \
  template Var<T> feature_extract<T>(Tape<T>&, ParamStore<T>&, const ModelConfig&,      \
                                     Var<T>);                                            \
  template Var<T> residual_block<T>(Tape<T>&, ParamStore<T>&, const std::string&,       \
                                    Var<T>, T);                                          \
  template Var<T> temporal_fuse<T>(Tape<T>&, ParamStore<T>&, const ModelConfig&,        \
                                   const std::vector<Var<T>>&, Var<T>, Var<T>*);         \
  template Var<T> reconstruct<T>(Tape<T>&, ParamStore<T>&, const ModelConfig&, Var<T>,  \
                                 const Tensor4<T>&);                                     \
  template FdanOutput<T> fdan_forward<T>(Tape<T>&, ParamStore<T>&, const ModelConfig&,  \
                                         const std::vector<Tensor4<T>>&,                 \
                                         const FdanTraceRequest&);                       \
  template void save_checkpoint<T>(const std::string&, const ParamStore<T>&,            \
                                   const ModelConfig&);                                  \
  template ModelConfig load_checkpoint<T>(const std::string&, ParamStore<T>&);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
