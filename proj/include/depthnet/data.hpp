// Synthetic depth scenes and training-time augmentation.
//
// Scenes are a ground-plane ramp occluded by a few spheres and boxes. The
// image is rendered from the depth surface (Lambertian shading plus a
// near-is-bright depth cue under a per-object albedo, with a little sensor
// noise), so appearance genuinely carries the depth signal and a small
// model can learn the task.
#pragma once

#include "depthnet/tensor.hpp"

namespace depthnet {

struct DepthSample {
  Tensor rgb;    // [3,H,W] in [0,1]
  Tensor depth;  // [1,H,W] meters, positive on the mask
  Tensor mask;   // [1,H,W] validity, 0/1
  uint64_t scene_seed = 0;
};

// Deterministic per seed; depth lands in (d_min, d_max].
DepthSample generate_scene(uint64_t seed, int height, int width, double d_min, double d_max);

// Horizontal flip with p = 0.5, rotation uniform in +-2.5 degrees (border
// pixels leaving the frame are masked out), brightness scale uniform in
// [0.9, 1.1] on the image only.
DepthSample augment(const DepthSample& sample, Rng& rng);

// Deterministic variant with every knob pinned; angle in degrees.
DepthSample augment_with(const DepthSample& sample, bool flip, double angle_deg,
                         double brightness);

}  // namespace depthnet
