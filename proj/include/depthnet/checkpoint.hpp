// Model checkpoints: one container holding a config record plus every
// named parameter tensor.
#pragma once

#include "depthnet/container.hpp"
#include "depthnet/data.hpp"
#include "depthnet/model.hpp"

namespace depthnet {

namespace detail {

inline std::vector<double> encode_config(const ModelConfig& c) {
  std::vector<double> v{1.0,  // record version
                        double(c.base_channels),
                        double(c.n_bins),
                        c.d_min,
                        c.d_max,
                        c.use_glkam ? 1.0 : 0.0,
                        c.use_gbpm ? 1.0 : 0.0,
                        double(c.seed),
                        double(c.ppm_grids.size())};
  for (int g : c.ppm_grids) v.push_back(double(g));
  return v;
}

inline ModelConfig decode_config(const std::vector<double>& v) {
  if (v.size() < 9 || v[0] != 1.0)
    throw ValueError("unsupported checkpoint config record");
  ModelConfig c;
  c.base_channels = int(v[1]);
  c.n_bins = int(v[2]);
  c.d_min = v[3];
  c.d_max = v[4];
  c.use_glkam = v[5] != 0.0;
  c.use_gbpm = v[6] != 0.0;
  c.seed = uint64_t(v[7]);
  const size_t n_grids = size_t(v[8]);
  if (v.size() != 9 + n_grids) throw ValueError("malformed checkpoint config record");
  c.ppm_grids.clear();
  for (size_t i = 0; i < n_grids; ++i) c.ppm_grids.push_back(int(v[9 + i]));
  return c;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const DepthNet& model) {
  Container c;
  c.add("__config__", {int(detail::encode_config(model.config()).size())},
        detail::encode_config(model.config()));
  for (const auto& p : model.params().all())
    c.add(p.name, p.tensor.shape(), p.tensor.values());
  c.write(path);
}

inline DepthNet load_checkpoint(const std::string& path) {
  Container c = Container::read(path);
  const auto& cfg_entry = c.at("__config__");
  if (!cfg_entry.is_double()) throw ValueError("checkpoint config record must be float64");
  DepthNet model(detail::decode_config(cfg_entry.f64()));
  for (auto& p : model.params().all()) {
    const ContainerEntry& e = c.at(p.name);
    if (e.is_double() || e.shape != p.tensor.shape())
      throw ValueError("checkpoint entry " + p.name + " does not match the model parameter");
    std::copy(e.f32().begin(), e.f32().end(), p.tensor.data());
  }
  if (c.count() != model.params().count() + 1)
    throw ValueError("checkpoint holds entries unknown to the model");
  return model;
}

// Sample (or prediction) snapshots reuse the same container format.
inline void save_sample(const std::string& path, const DepthSample& s) {
  Container c;
  c.add("rgb", s.rgb.shape(), s.rgb.values());
  c.add("depth", s.depth.shape(), s.depth.values());
  c.add("mask", s.mask.shape(), s.mask.values());
  c.add("scene_seed", {1}, std::vector<double>{double(s.scene_seed)});
  c.write(path);
}

inline DepthSample load_sample(const std::string& path) {
  Container c = Container::read(path);
  DepthSample s;
  const auto& rgb = c.at("rgb");
  const auto& depth = c.at("depth");
  const auto& mask = c.at("mask");
  s.rgb = Tensor(rgb.shape, rgb.f32());
  s.depth = Tensor(depth.shape, depth.f32());
  s.mask = Tensor(mask.shape, mask.f32());
  if (const auto* seed = c.find("scene_seed"))
    s.scene_seed = uint64_t(seed->f64()[0]);
  return s;
}

}  // namespace depthnet
