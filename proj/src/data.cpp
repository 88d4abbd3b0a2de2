#include "depthnet/data.hpp"

#include "depthnet/objective.hpp"

namespace depthnet {

namespace {

struct SceneObject {
  bool is_sphere;
  double cx, cy;      // pixel coordinates
  double rx, ry;      // half extents
  double depth;       // front depth in meters
  double albedo[3];
};

constexpr double kDeg = 0.017453292519943295;

}  // namespace

DepthSample generate_scene(uint64_t seed, int height, int width, double d_min, double d_max) {
  if (height % 32 != 0 || width % 32 != 0)
    throw ValueError("scene extent " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be divisible by 32");
  if (!(d_min < d_max)) throw ValueError("scene depth range requires d_min < d_max");
  Rng rng = Rng(seed).fork(0x5ce9e5);

  const int H = height, W = width;
  const double near_bg = d_max * rng.uniform(0.18, 0.30);
  const double far_bg = d_max * rng.uniform(0.70, 0.95);
  const double tilt = rng.uniform(-0.10, 0.10);
  double bg_albedo[3];
  for (double& a : bg_albedo) a = rng.uniform(0.30, 0.90);

  const int n_objects = 2 + int(rng.uniform_int(4));  // 2..5
  std::vector<SceneObject> objects;
  objects.reserve(size_t(n_objects));
  for (int i = 0; i < n_objects; ++i) {
    SceneObject o;
    o.is_sphere = rng.uniform() < 0.5;
    o.cx = rng.uniform(0.15, 0.85) * W;
    o.cy = rng.uniform(0.15, 0.85) * H;
    const double r = rng.uniform(0.10, 0.24) * std::min(H, W);
    o.rx = r;
    o.ry = o.is_sphere ? r : r * rng.uniform(0.55, 1.25);
    const double ramp_here = near_bg + (far_bg - near_bg) * (1.0 - o.cy / double(H - 1));
    o.depth = ramp_here * rng.uniform(0.40, 0.80);  // occluders sit nearer than the ramp
    for (double& a : o.albedo) a = rng.uniform(0.25, 0.95);
    objects.push_back(o);
  }

  std::vector<double> depth(size_t(H) * W);
  std::vector<int> owner(size_t(H) * W, -1);
  const double lo_clamp = d_min + std::max(1e-4, 0.01 * d_min);
  for (int y = 0; y < H; ++y) {
    const double ramp_row = near_bg + (far_bg - near_bg) * (1.0 - y / double(H - 1));
    for (int x = 0; x < W; ++x) {
      double d = ramp_row + tilt * (x / double(W - 1) - 0.5) * (far_bg - near_bg) * 0.3;
      int who = -1;
      for (int i = 0; i < n_objects; ++i) {
        const SceneObject& o = objects[size_t(i)];
        const double dx = (x - o.cx) / o.rx;
        const double dy = (y - o.cy) / o.ry;
        double cand;
        if (o.is_sphere) {
          const double rho2 = dx * dx + dy * dy;
          if (rho2 > 1.0) continue;
          cand = o.depth * (1.0 - 0.20 * std::sqrt(1.0 - rho2));
        } else {
          if (std::abs(dx) > 1.0 || std::abs(dy) > 1.0) continue;
          cand = o.depth * (1.0 + 0.03 * dy);
        }
        if (cand < d) {
          d = cand;
          who = i;
        }
      }
      d = std::min(std::max(d, lo_clamp), d_max);
      depth[size_t(y) * W + x] = d;
      owner[size_t(y) * W + x] = who;
    }
  }

  // light direction, unit length, pointing at the camera half-space
  double lx = rng.uniform(-0.4, 0.4), ly = rng.uniform(-0.4, 0.4), lz = 1.0;
  const double ln = std::sqrt(lx * lx + ly * ly + lz * lz);
  lx /= ln;
  ly /= ln;
  lz /= ln;

  std::vector<float> rgb(size_t(3) * H * W);
  const double span = d_max - d_min;
  const double normal_scale = 8.0 / span;  // slope-to-normal gain
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const size_t pi = size_t(y) * W + x;
      const double d = depth[pi];
      const double dxp = depth[size_t(y) * W + std::min(x + 1, W - 1)];
      const double dxm = depth[size_t(y) * W + std::max(x - 1, 0)];
      const double dyp = depth[size_t(std::min(y + 1, H - 1)) * W + x];
      const double dym = depth[size_t(std::max(y - 1, 0)) * W + x];
      double nx = -(dxp - dxm) * 0.5 * normal_scale;
      double ny = -(dyp - dym) * 0.5 * normal_scale;
      double nz = 1.0;
      const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
      const double shade = std::max(0.0, (nx * lx + ny * ly + nz * lz) / nn);
      const double cue = 1.0 - (d - d_min) / span;  // near is bright
      const double* albedo = owner[pi] >= 0 ? objects[size_t(owner[pi])].albedo : bg_albedo;
      for (int c = 0; c < 3; ++c) {
        const double v = albedo[c] * (0.18 + 0.60 * cue + 0.22 * shade) + 0.01 * rng.normal();
        rgb[size_t(c) * H * W + pi] = float(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  DepthSample s;
  s.scene_seed = seed;
  s.rgb = Tensor({3, H, W}, std::move(rgb));
  s.depth = Tensor({1, H, W}, std::vector<float>(depth.begin(), depth.end()));
  s.mask = build_validity_mask(s.depth, d_min, d_max);
  return s;
}

namespace {

Tensor flip_w(const Tensor& t) {
  NoGradGuard ng;
  return hflip(t);
}

// Inverse-mapped rotation about the image center with bilinear sampling;
// out-of-frame or invalid-source pixels become invalid.
void rotate_sample(const Tensor& rgb, const Tensor& depth, const Tensor& mask, double angle_deg,
                   Tensor& out_rgb, Tensor& out_depth, Tensor& out_mask) {
  const int H = rgb.dim(1), W = rgb.dim(2);
  const double a = angle_deg * kDeg;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = (W - 1) * 0.5, cy = (H - 1) * 0.5;
  const float* mv = mask.data();

  std::vector<float> r(size_t(3) * H * W, 0.f), d(size_t(H) * W, 0.f), m(size_t(H) * W, 0.f);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // rotate destination back into the source frame
      const double px = x - cx, py = y - cy;
      const double sx = ca * px + sa * py + cx;
      const double sy = -sa * px + ca * py + cy;
      if (sx < 0.0 || sy < 0.0 || sx > W - 1 || sy > H - 1) continue;
      const int x0 = int(sx), y0 = int(sy);
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double tx = sx - x0, ty = sy - y0;
      const size_t i00 = size_t(y0) * W + x0, i01 = size_t(y0) * W + x1;
      const size_t i10 = size_t(y1) * W + x0, i11 = size_t(y1) * W + x1;
      if (mv[i00] == 0.f || mv[i01] == 0.f || mv[i10] == 0.f || mv[i11] == 0.f) continue;
      const size_t oi = size_t(y) * W + x;
      auto lerp2 = [&](const float* plane) {
        const double top = plane[i00] + (plane[i01] - plane[i00]) * tx;
        const double bot = plane[i10] + (plane[i11] - plane[i10]) * tx;
        return float(top + (bot - top) * ty);
      };
      for (int c = 0; c < 3; ++c) r[size_t(c) * H * W + oi] = lerp2(rgb.data() + size_t(c) * H * W);
      d[oi] = lerp2(depth.data());
      m[oi] = 1.f;
    }
  }
  out_rgb = Tensor({3, H, W}, std::move(r));
  out_depth = Tensor({1, H, W}, std::move(d));
  out_mask = Tensor({1, H, W}, std::move(m));
}

}  // namespace

DepthSample augment_with(const DepthSample& sample, bool flip, double angle_deg,
                         double brightness) {
  DepthSample out;
  out.scene_seed = sample.scene_seed;
  Tensor rgb = sample.rgb, depth = sample.depth, mask = sample.mask;
  if (flip) {
    rgb = flip_w(rgb);
    depth = flip_w(depth);
    mask = flip_w(mask);
  }
  if (angle_deg != 0.0) {
    rotate_sample(rgb, depth, mask, angle_deg, out.rgb, out.depth, out.mask);
  } else {
    out.rgb = rgb;
    out.depth = depth;
    out.mask = mask;
  }
  if (brightness != 1.0) {
    std::vector<float> scaled(out.rgb.values());
    for (float& v : scaled) v = std::clamp(v * float(brightness), 0.f, 1.f);
    out.rgb = Tensor(out.rgb.shape(), std::move(scaled));
  }
  return out;
}

DepthSample augment(const DepthSample& sample, Rng& rng) {
  const bool flip = rng.uniform() < 0.5;
  const double angle = rng.uniform(-2.5, 2.5);
  const double brightness = rng.uniform(0.9, 1.1);
  return augment_with(sample, flip, angle, brightness);
}

}  // namespace depthnet
