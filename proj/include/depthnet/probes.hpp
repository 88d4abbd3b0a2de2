// Verification probes: the finite-difference sweep over every
// differentiable operation (and the fully assembled model), the
// impulse-response measurement of the attention cascades, and the ablation
// matrix. Shared by the `probe` CLI command and the acceptance suite.
#pragma once

#include "depthnet/gradcheck.hpp"
#include "depthnet/model.hpp"
#include "depthnet/train.hpp"

namespace depthnet {

template <typename S>
TensorT<S> rand_uniform(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  TensorT<S> t(shape);
  S* v = t.data();
  for (int64_t i = 0; i < t.size(); ++i) v[i] = S(rng.uniform(lo, hi));
  return t;
}

struct ProbeCheck {
  std::string name;
  double max_rel_err;
  int64_t coords;
};

// Central-difference checks for every op at tiny dims, plus the composed
// modules and the whole model. S = double is the mode the 1e-4 tolerance is
// stated for; in float32 the difference quotient through the assembled
// network is rounding-noise dominated, so callers skip the model-level
// checks there.
template <typename S>
std::vector<ProbeCheck> gradcheck_suite(double h = 1e-5, int64_t coords = 6,
                                        bool include_composites = true) {
  std::vector<ProbeCheck> out;
  Rng rng(20250801);

  using Leaves = std::vector<std::pair<std::string, TensorT<S>>>;
  auto check = [&](const std::string& name, const std::function<TensorT<S>()>& fwd,
                   Leaves leaves, int64_t max_coords = 0) {
    auto rep = gradcheck<S>(fwd, std::move(leaves), rng, h, max_coords ? max_coords : coords);
    out.push_back({name, rep.max_rel_err, rep.checked_coords});
  };
  // Random positive-weight readout makes every output coordinate matter.
  // Seeded per call site so repeated forward evaluations see identical
  // weights (finite differencing rebuilds the graph many times).
  auto readout = [](const TensorT<S>& y, uint64_t seed) {
    Rng r(seed);
    auto w = rand_uniform<S>(y.shape(), r, 0.25, 1.75);
    return sum(mul(y, w));
  };

  {  // elementwise binary, equal shapes and trailing-singleton broadcast
    auto a = rand_uniform<S>({6, 8, 8}, rng);
    auto b = rand_uniform<S>({6, 8, 8}, rng);
    check("binary.add", [&] { return readout(add(a, b), 101); }, {{"a", a}, {"b", b}});
    check("binary.sub_mul", [&] { return readout(mul(sub(a, b), a), 102); },
          {{"a", a}, {"b", b}});
    auto bias = rand_uniform<S>({6, 1, 1}, rng);
    check("binary.broadcast", [&] { return readout(mul(add(a, bias), bias), 103); },
          {{"a", a}, {"bias", bias}});
  }
  {
    auto x = rand_uniform<S>({6, 8, 8}, rng);
    check("act.sigmoid", [&] { return readout(sigmoid(x), 104); }, {{"x", x}});
    check("act.gelu", [&] { return readout(gelu(x), 105); }, {{"x", x}});
    check("act.softplus", [&] { return readout(softplus(x), 106); }, {{"x", x}});
    // relu's kink sits at 0; keep probe values away from it
    TensorT<S> xr({6, 8, 8});
    for (int64_t i = 0; i < xr.size(); ++i) {
      const double m = rng.uniform(0.2, 2.0);
      xr.data()[i] = S(rng.uniform() < 0.5 ? -m : m);
    }
    check("act.relu", [&] { return readout(relu(xr), 105); }, {{"x", xr}});
  }
  {
    auto x = rand_uniform<S>({5, 7}, rng);
    check("softmax.axis0", [&] { return readout(softmax(x, 0), 108); }, {{"x", x}});
    check("softmax.axis1", [&] { return readout(softmax(x, 1), 109); }, {{"x", x}});
  }
  {
    auto x = rand_uniform<S>({4, 6}, rng, 0.3, 3.0);
    check("map.log", [&] { return readout(log_op(x), 110); }, {{"x", x}});
    check("map.sqrt", [&] { return readout(sqrt_op(x), 111); }, {{"x", x}});
    check("map.reciprocal", [&] { return readout(reciprocal(x), 112); }, {{"x", x}});
    check("map.clamp_min", [&] { return readout(clamp_min(x, S(0.9)), 113); }, {{"x", x}});
  }
  {
    auto x = rand_uniform<S>({3, 4, 5}, rng);
    check("reduce.sum_axis0", [&] { return readout(sum_axis(x, 0), 114); }, {{"x", x}});
    check("reduce.sum_axis2", [&] { return readout(sum_axis(x, 2), 115); }, {{"x", x}});
    check("shape.reshape_hflip", [&] { return readout(hflip(reshape(x, {4, 3, 5})), 116); },
          {{"x", x}});
    auto y = rand_uniform<S>({2, 4, 5}, rng);
    check("shape.concat_slice",
          [&] {
            auto cat = concat(std::vector<TensorT<S>>{x, y}, 0);
            return readout(slice_axis0(cat, 1, 3), 117);
          },
          {{"x", x}, {"y", y}});
  }
  {
    auto x = rand_uniform<S>({5, 4}, rng);
    auto w0 = rand_uniform<S>({4, 7}, rng, -1.0, 1.0);
    auto b0 = rand_uniform<S>({7}, rng, -0.5, 0.5);
    auto w1 = rand_uniform<S>({7, 3}, rng, -1.0, 1.0);
    auto b1 = rand_uniform<S>({3}, rng, -0.5, 0.5);
    check("linear.mlp2",
          [&] { return readout(linear(gelu(linear(x, w0, b0)), w1, b1), 118); },
          {{"x", x}, {"w0", w0}, {"b0", b0}, {"w1", w1}, {"b1", b1}});
  }
  {  // conv family at C=6, H=W=8
    auto x = rand_uniform<S>({6, 8, 8}, rng);
    auto wd = rand_uniform<S>({4, 6, 3, 3}, rng, -0.5, 0.5);
    auto bd = rand_uniform<S>({4}, rng, -0.2, 0.2);
    check("conv.dense3x3",
          [&] { return readout(conv2d(x, Conv2dSpec::dense(6, 4, 3), wd, bd), 119); },
          {{"x", x}, {"w", wd}, {"b", bd}});
    auto wdw = rand_uniform<S>({6, 1, 5, 5}, rng, -0.5, 0.5);
    auto bdw = rand_uniform<S>({6}, rng, -0.2, 0.2);
    check("conv.depthwise5x5d2",
          [&] { return readout(conv2d(x, Conv2dSpec::depthwise(6, 5, 2), wdw, bdw), 120); },
          {{"x", x}, {"w", wdw}, {"b", bdw}});
    auto wpw = rand_uniform<S>({5, 6, 1, 1}, rng, -0.5, 0.5);
    check("conv.pointwise",
          [&] { return readout(conv2d(x, Conv2dSpec::pointwise(6, 5), wpw), 121); },
          {{"x", x}, {"w", wpw}});
    auto ws = rand_uniform<S>({4, 6, 3, 3}, rng, -0.5, 0.5);
    check("conv.stride2",
          [&] { return readout(conv2d(x, Conv2dSpec::dense(6, 4, 3, 2), ws), 122); },
          {{"x", x}, {"w", ws}});
  }
  {
    auto x = rand_uniform<S>({3, 8, 8}, rng);
    check("pool.avg_g3", [&] { return readout(pool2d(x, PoolKind::avg, 3), 123); }, {{"x", x}});
    check("pool.max_g2", [&] { return readout(pool2d(x, PoolKind::max, 2), 124); }, {{"x", x}});
    check("pool.global", [&] { return readout(pool2d(x, PoolKind::avg, 1), 125); }, {{"x", x}});
  }
  {
    auto x = rand_uniform<S>({6, 4, 4}, rng);
    auto g = rand_uniform<S>({6}, rng, 0.5, 1.5);
    auto b = rand_uniform<S>({6}, rng, -0.5, 0.5);
    check("norm.layer", [&] { return readout(layer_norm(x, g, b), 126); },
          {{"x", x}, {"gain", g}, {"bias", b}});
  }
  {
    auto x = rand_uniform<S>({8, 3, 3}, rng);
    check("shuffle.pixel", [&] { return readout(pixel_shuffle(x), 127); }, {{"x", x}});
    auto y = rand_uniform<S>({2, 6, 6}, rng);
    check("shuffle.unpixel", [&] { return readout(pixel_unshuffle(y), 128); }, {{"x", y}});
  }
  {
    auto x = rand_uniform<S>({2, 5, 7}, rng);
    check("resize.up", [&] { return readout(resize_bilinear(x, 9, 12), 129); }, {{"x", x}});
    check("resize.down", [&] { return readout(resize_bilinear(x, 3, 4), 130); }, {{"x", x}});
  }
  {  // width normalization and centers, through the logits
    auto logits = rand_uniform<S>({9}, rng);
    check("bins.softplus_centers",
          [&] {
            auto w = normalize_bin_widths(logits, WidthNorm::softplus_eps, 1e-3);
            return readout(bin_centers(w, 0.001, 10.0), 131);
          },
          {{"logits", logits}});
    check("bins.softmax_centers",
          [&] {
            auto w = normalize_bin_widths(logits, WidthNorm::softmax);
            return readout(bin_centers(w, 0.001, 10.0), 132);
          },
          {{"logits", logits}});
  }
  {
    auto pred = rand_uniform<S>({1, 6, 6}, rng, 0.5, 9.0);
    auto gt = rand_uniform<S>({1, 6, 6}, rng, 0.5, 9.0);
    gt.set_requires_grad(false);
    auto mask = TensorT<S>::ones({1, 6, 6});
    for (int64_t i = 0; i < 6; ++i) mask.data()[i * 5] = S(0);
    check("loss.silog", [&] { return silog_loss(pred, gt, mask); }, {{"pred", pred}});
  }
  if (include_composites) {  // attention block internals at C=6, H=W=8
    ParamStoreT<S> store;
    Rng init(99);
    auto glkam = GlkamT<S>::build("g", 6, store, init);
    auto x = rand_uniform<S>({6, 8, 8}, rng, -1.0, 1.0);
    Leaves leaves{{"x", x}};
    for (auto& p : store.all()) leaves.push_back({p.name, p.tensor});
    check("glkam.branch",
          [&] { return readout(glkam.branches[1].forward(channel_split(x, 3)[1]), 133); },
          leaves, 3);
    check("glkam.mlka", [&] { return readout(glkam.mlka(x), 134); }, leaves, 3);
    check("glkam.branch_feature", [&] { return readout(glkam.branch_feature(x), 135); },
          leaves, 3);
    check("glkam.forward", [&] { return readout(glkam.forward(x), 136); }, leaves, 3);
  }
  if (include_composites) {  // bin module at C_g=8
    ParamStoreT<S> store;
    Rng init(98);
    auto gbpm = GbpmT<S>::build("b", 8, 8, store, init);
    auto f = rand_uniform<S>({8, 4, 4}, rng, -1.0, 1.0);
    Leaves leaves{{"f", f}};
    for (auto& p : store.all()) leaves.push_back({p.name, p.tensor});
    check("gbpm.descriptors",
          [&] {
            auto [fa, fb] = gbpm.global_descriptors(f);
            return readout(add(fa, fb), 137);
          },
          leaves, 3);
    check("gbpm.fuse",
          [&] {
            auto [fa, fb] = gbpm.global_descriptors(f);
            return readout(gbpm.gated_fuse(fa, fb), 138);
          },
          leaves, 3);
    check("gbpm.widths_centers",
          [&] { return readout(bin_centers(gbpm.predict_widths(f), 0.001, 10.0), 139); },
          leaves, 3);
  }
  if (include_composites) {  // assembled model, tiny but complete: C=4, bins=8, 32x32 input
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.n_bins = 8;
    cfg.ppm_grids = {1};
    cfg.seed = 2025;
    DepthNetT<S> model(cfg);
    auto rgb = rand_uniform<S>({3, 32, 32}, rng, 0.0, 1.0);
    auto gt = rand_uniform<S>({1, 32, 32}, rng, 0.5, 9.5);
    gt.set_requires_grad(false);
    auto mask = TensorT<S>::ones({1, 32, 32});
    Leaves leaves{{"rgb", rgb}};
    for (auto& p : model.params().all()) leaves.push_back({p.name, p.tensor});
    check("model.ppm",
          [&] {
            auto pyr = model.encode(rgb);
            return readout(model.ppm_forward(pyr.e4), 140);
          },
          leaves, 2);
    check("model.forward_loss", [&] { return model.forward_loss(rgb, gt, mask); }, leaves, 2);
  }
  return out;
}

// Spatial extent of each cascade's impulse response, measured with all-ones
// weights so no cancellation can shrink the support.
inline std::array<int, 3> measure_lka_extents() {
  std::array<int, 3> extents{};
  for (size_t gi = 0; gi < 3; ++gi) {
    const LkaGroupConfig& g = lka_groups()[gi];
    LkaBranchT<float> branch;
    branch.group = g;
    branch.channels = 1;
    branch.dw_w = Tensor::ones({1, 1, g.a, g.a});
    branch.dw_b = Tensor::zeros({1});
    branch.dwd_w = Tensor::ones({1, 1, g.b, g.b});
    branch.dwd_b = Tensor::zeros({1});
    branch.pw_w = Tensor::ones({1, 1, 1, 1});
    branch.pw_b = Tensor::zeros({1});

    const int n = 2 * g.support_extent() + 7;  // room so the support cannot clip
    Tensor impulse = Tensor::zeros({1, n, n});
    impulse.data()[(n / 2) * n + n / 2] = 1.f;
    NoGradGuard ng;
    Tensor response = branch.attention_map(impulse);
    int y0 = n, y1 = -1, x0 = n, x1 = -1;
    const float* rv = response.data();
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (rv[y * n + x] != 0.f) {
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
        }
    extents[gi] = std::max(y1 - y0 + 1, x1 - x0 + 1);
  }
  return extents;
}

struct AblationResult {
  bool use_glkam;
  bool use_gbpm;
  double loss;
  MetricReport metrics;
  bool depth_in_range;
};

// Runs forward+backward+eval for all four module-toggle combinations on one
// synthetic scene.
inline std::vector<AblationResult> run_ablation_matrix(int size = 64, int channels = 8,
                                                       int n_bins = 16, uint64_t seed = 3) {
  std::vector<AblationResult> results;
  for (int glkam = 0; glkam < 2; ++glkam) {
    for (int gbpm = 0; gbpm < 2; ++gbpm) {
      ModelConfig cfg;
      cfg.base_channels = channels;
      cfg.n_bins = n_bins;
      cfg.use_glkam = glkam != 0;
      cfg.use_gbpm = gbpm != 0;
      cfg.ppm_grids = fit_ppm_grids({1, 2, 3, 6}, size, size);
      cfg.seed = seed;
      DepthNet model(cfg);
      auto scene = generate_scene(seed + 17, size, size, cfg.d_min, cfg.d_max);
      auto loss = model.forward_loss(scene.rgb, scene.depth, scene.mask);
      model.params().zero_grads();
      loss.backward();
      auto pred = model.predict(scene.rgb);
      bool in_range = true;
      for (int64_t i = 0; i < pred.size(); ++i) {
        const float v = pred.data()[i];
        if (!(v > float(cfg.d_min) && v < float(cfg.d_max))) in_range = false;
      }
      AblationResult r;
      r.use_glkam = cfg.use_glkam;
      r.use_gbpm = cfg.use_gbpm;
      r.loss = double(loss.item());
      r.metrics = compute_metrics(pred, scene.depth, scene.mask);
      r.depth_in_range = in_range;
      results.push_back(r);
    }
  }
  return results;
}

}  // namespace depthnet
