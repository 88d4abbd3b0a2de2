// End-to-end depth network assembly.
//
// A four-stage pyramid encoder (stride-2 patch merging plus residual conv
// blocks) stands in for the heavyweight transformer backbone while keeping
// its scale/channel contract: features at 1/4, 1/8, 1/16, 1/32 of the input
// with C, 2C, 4C, 8C channels. The attention blocks slot in between stages,
// a pyramid pooling module widens the bottleneck's context, the bin module
// turns the pooled bottleneck into per-image depth bins, and the decoder
// walks back up with skip connections and pixel-shuffle upsampling to a
// per-pixel distribution over bins. Depth is the distribution's expectation
// over bin centers, upsampled to the input resolution.
#pragma once

#include "depthnet/gbpm.hpp"
#include "depthnet/glkam.hpp"
#include "depthnet/objective.hpp"

namespace depthnet {

struct ModelConfig {
  int base_channels = 16;  // C; stage channels are C, 2C, 4C, 8C
  int n_bins = 32;
  double d_min = 1e-3;
  double d_max = 10.0;
  bool use_glkam = true;
  bool use_gbpm = true;
  std::string encoder_kind = "toy_pyramid";
  std::vector<int> ppm_grids = {1, 2, 3, 6};
  uint64_t seed = 1;

  void validate() const {
    if (base_channels < 4 || base_channels % 4 != 0)
      throw ValueError("base_channels must be a positive multiple of 4, got " +
                       std::to_string(base_channels));
    if (n_bins < 1) throw ValueError("n_bins must be >= 1");
    if (!(d_min < d_max)) throw ValueError("depth range requires d_min < d_max");
    if (encoder_kind != "toy_pyramid")
      throw ValueError("unknown encoder kind: " + encoder_kind);
    if (ppm_grids.empty()) throw ValueError("ppm_grids must not be empty");
    for (size_t i = 0; i < ppm_grids.size(); ++i) {
      if (ppm_grids[i] < 1) throw ValueError("ppm grids must be >= 1");
      if (i && ppm_grids[i] <= ppm_grids[i - 1])
        throw ValueError("ppm grids must strictly increase");
    }
  }
};

// Drops pooling grids that would exceed the bottleneck feature map for a
// given input size.
inline std::vector<int> fit_ppm_grids(std::vector<int> grids, int input_h, int input_w) {
  const int cap = std::min(input_h, input_w) / 32;
  std::vector<int> out;
  for (int g : grids)
    if (g <= cap) out.push_back(g);
  if (out.empty()) out.push_back(1);
  return out;
}

template <typename S>
struct FeaturePyramidT {
  TensorT<S> e1, e2, e3, e4;  // scales 1/4 .. 1/32, channels C .. 8C
};

using FeaturePyramid = FeaturePyramidT<float>;

namespace detail {

template <typename S>
struct ResBlockT {
  int channels = 0;
  TensorT<S> w0, b0, w1, b1;

  static ResBlockT build(const std::string& prefix, int channels, ParamStoreT<S>& store,
                         Rng& rng) {
    ResBlockT blk;
    blk.channels = channels;
    const int64_t fan = int64_t(channels) * 9;
    blk.w0 = store.kaiming_uniform(prefix + ".conv0.w", {channels, channels, 3, 3}, fan, rng);
    blk.b0 = store.zeros(prefix + ".conv0.b", {channels});
    blk.w1 = store.kaiming_uniform(prefix + ".conv1.w", {channels, channels, 3, 3}, fan, rng);
    blk.b1 = store.zeros(prefix + ".conv1.b", {channels});
    return blk;
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    auto y = gelu(conv2d(x, Conv2dSpec::dense(channels, channels, 3), w0, b0));
    y = conv2d(y, Conv2dSpec::dense(channels, channels, 3), w1, b1);
    return add(y, x);
  }
};

template <typename S>
struct EncoderStageT {
  int in_channels = 0, out_channels = 0;
  bool has_down = false;
  TensorT<S> down_w, down_b;
  ResBlockT<S> block0, block1;

  static EncoderStageT build(const std::string& prefix, int in_c, int out_c, bool with_down,
                             ParamStoreT<S>& store, Rng& rng) {
    EncoderStageT st;
    st.in_channels = in_c;
    st.out_channels = out_c;
    st.has_down = with_down;
    if (with_down) {
      st.down_w = store.kaiming_uniform(prefix + ".down.w", {out_c, in_c, 3, 3},
                                        int64_t(in_c) * 9, rng);
      st.down_b = store.zeros(prefix + ".down.b", {out_c});
    }
    st.block0 = ResBlockT<S>::build(prefix + ".block0", out_c, store, rng);
    st.block1 = ResBlockT<S>::build(prefix + ".block1", out_c, store, rng);
    return st;
  }

  TensorT<S> forward(TensorT<S> x) const {
    if (has_down)
      x = gelu(conv2d(x, Conv2dSpec::dense(in_channels, out_channels, 3, 2), down_w, down_b));
    return block1.forward(block0.forward(x));
  }
};

}  // namespace detail

// Per-pixel expectation over bin centers, then bilinear upsampling of the
// depth map to the requested resolution. Rejects probability volumes whose
// per-pixel mass strays from 1 by more than 1e-4.
template <typename S>
TensorT<S> predict_depth(const TensorT<S>& probs, const TensorT<S>& centers, int out_h,
                         int out_w) {
  if (probs.rank() != 3)
    throw ShapeError("probability volume must be [n_bins,h,w], got " + shape_str(probs.shape()));
  const int nb = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
  if (centers.rank() != 1 || centers.dim(0) != nb)
    throw ShapeError("centers " + shape_str(centers.shape()) + " do not match " +
                     std::to_string(nb) + " bins");
  const S* pv = probs.data();
  const int64_t plane = int64_t(h) * w;
  for (int64_t i = 0; i < plane; ++i) {
    double acc = 0.0;
    for (int k = 0; k < nb; ++k) acc += double(pv[k * plane + i]);
    if (std::abs(acc - 1.0) > 1e-4)
      throw ValueError("depth probabilities sum to " + std::to_string(acc) +
                       " at pixel " + std::to_string(i));
  }
  auto weighted = mul(probs, reshape(centers, {nb, 1, 1}));
  auto expectation = reshape(sum_axis(weighted, 0), {1, h, w});
  return resize_bilinear(expectation, out_h, out_w);
}

template <typename S>
TensorT<S> predict_depth(const TensorT<S>& probs, const BinSpec& bins, int out_h, int out_w) {
  bins.validate();
  std::vector<S> c(bins.centers.begin(), bins.centers.end());
  const int n = int(c.size());
  return predict_depth(probs, TensorT<S>(Shape{n}, std::move(c)), out_h, out_w);
}

template <typename S>
class DepthNetT {
 public:
  explicit DepthNetT(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    Rng rng(config_.seed);
    const int c = config_.base_channels;
    const int c4 = 8 * c;

    stem_w0_ = params_.kaiming_uniform("enc.stem.conv0.w", {c, 3, 3, 3}, 27, rng);
    stem_b0_ = params_.zeros("enc.stem.conv0.b", {c});
    stem_w1_ = params_.kaiming_uniform("enc.stem.conv1.w", {c, c, 3, 3}, int64_t(c) * 9, rng);
    stem_b1_ = params_.zeros("enc.stem.conv1.b", {c});
    stages_[0] = detail::EncoderStageT<S>::build("enc.stage1", c, c, false, params_, rng);
    stages_[1] = detail::EncoderStageT<S>::build("enc.stage2", c, 2 * c, true, params_, rng);
    stages_[2] = detail::EncoderStageT<S>::build("enc.stage3", 2 * c, 4 * c, true, params_, rng);
    stages_[3] = detail::EncoderStageT<S>::build("enc.stage4", 4 * c, 8 * c, true, params_, rng);
    if (config_.use_glkam)
      for (int i = 0; i < 3; ++i)
        glkam_[size_t(i)] = GlkamT<S>::build("enc.glkam" + std::to_string(i + 1),
                                             c << i, params_, rng);

    const int branch_c = 2 * c;
    for (int g : config_.ppm_grids) {
      ppm_branch_w_.push_back(params_.kaiming_uniform(
          "ppm.grid" + std::to_string(g) + ".w", {branch_c, c4, 1, 1}, c4, rng));
      ppm_branch_b_.push_back(params_.zeros("ppm.grid" + std::to_string(g) + ".b", {branch_c}));
    }
    const int fused_c = c4 + branch_c * int(config_.ppm_grids.size());
    ppm_fuse_w_ = params_.kaiming_uniform("ppm.fuse.w", {c4, fused_c, 1, 1}, fused_c, rng);
    ppm_fuse_b_ = params_.zeros("ppm.fuse.b", {c4});

    if (config_.use_gbpm)
      gbpm_ = GbpmT<S>::build("gbpm", c4, config_.n_bins, params_, rng);

    // decoder: (8C -> 4C -> 2C -> C) over three pixel-shuffle stages
    for (int k = 0; k < 3; ++k) {
      const int dc = c4 >> k;        // decoder channels entering stage k
      const int next = dc / 2;       // channels after upsampling
      const int cat_c = 2 * dc;      // decoder + same-scale skip
      dec_reduce_w_[size_t(k)] = params_.kaiming_uniform(
          "dec.stage" + std::to_string(k + 1) + ".reduce.w", {4 * next, cat_c, 1, 1}, cat_c, rng);
      dec_reduce_b_[size_t(k)] =
          params_.zeros("dec.stage" + std::to_string(k + 1) + ".reduce.b", {4 * next});
      dec_refine_w_[size_t(k)] = params_.kaiming_uniform(
          "dec.stage" + std::to_string(k + 1) + ".refine.w", {next, next, 3, 3},
          int64_t(next) * 9, rng);
      dec_refine_b_[size_t(k)] =
          params_.zeros("dec.stage" + std::to_string(k + 1) + ".refine.b", {next});
    }

    head_w_ = params_.kaiming_uniform("head.prob.w", {config_.n_bins, c, 1, 1}, c, rng);
    head_b_ = params_.zeros("head.prob.b", {config_.n_bins});
  }

  const ModelConfig& config() const { return config_; }
  ParamStoreT<S>& params() { return params_; }
  const ParamStoreT<S>& params() const { return params_; }

  FeaturePyramidT<S> encode(const TensorT<S>& rgb) const {
    if (rgb.rank() != 3 || rgb.dim(0) != 3)
      throw ShapeError("encoder expects [3,H,W], got " + shape_str(rgb.shape()));
    if (rgb.dim(1) % 32 != 0 || rgb.dim(2) % 32 != 0)
      throw ShapeError("input extent " + std::to_string(rgb.dim(1)) + "x" +
                       std::to_string(rgb.dim(2)) + " must be divisible by 32");
    const int c = config_.base_channels;
    auto x = gelu(conv2d(rgb, Conv2dSpec::dense(3, c, 3, 2), stem_w0_, stem_b0_));
    x = gelu(conv2d(x, Conv2dSpec::dense(c, c, 3, 2), stem_w1_, stem_b1_));

    FeaturePyramidT<S> pyr;
    TensorT<S>* outs[4] = {&pyr.e1, &pyr.e2, &pyr.e3, &pyr.e4};
    for (int s = 0; s < 4; ++s) {
      x = stages_[size_t(s)].forward(x);
      if (config_.use_glkam && s < 3) x = glkam_[size_t(s)].forward(x);
      *outs[s] = x;
    }
    return pyr;
  }

  // Multi-grid context aggregation on the bottleneck feature.
  TensorT<S> ppm_forward(const TensorT<S>& e4) const {
    const int c4 = 8 * config_.base_channels;
    if (e4.dim(0) != c4)
      throw ShapeError("ppm expects " + std::to_string(c4) + " channels, got " +
                       shape_str(e4.shape()));
    const int h = e4.dim(1), w = e4.dim(2);
    std::vector<TensorT<S>> parts{e4};
    for (size_t gi = 0; gi < config_.ppm_grids.size(); ++gi) {
      const int g = config_.ppm_grids[gi];
      auto pooled = pool2d(e4, PoolKind::avg, g);
      auto projected = conv2d(pooled, Conv2dSpec::pointwise(c4, 2 * config_.base_channels),
                              ppm_branch_w_[gi], ppm_branch_b_[gi]);
      parts.push_back(resize_bilinear(projected, h, w));
    }
    auto fused = concat(parts, 0);
    const int fused_c = fused.dim(0);
    return conv2d(fused, Conv2dSpec::pointwise(fused_c, c4), ppm_fuse_w_, ppm_fuse_b_);
  }

  // Per-image bin widths: learned when the bin module is on, uniform
  // otherwise (the fixed-interval baseline).
  TensorT<S> bin_widths(const TensorT<S>& ppm_out) const {
    if (config_.use_gbpm) return gbpm_.predict_widths(ppm_out);
    return TensorT<S>::full({config_.n_bins}, S(1) / S(config_.n_bins));
  }

  TensorT<S> decode(const FeaturePyramidT<S>& pyr, const TensorT<S>& ppm_out) const {
    const TensorT<S>* skips[3] = {&pyr.e4, &pyr.e3, &pyr.e2};
    TensorT<S> d = ppm_out;
    for (int k = 0; k < 3; ++k) {
      const TensorT<S>& skip = *skips[k];
      if (d.dim(1) != skip.dim(1) || d.dim(2) != skip.dim(2) || d.dim(0) != skip.dim(0))
        throw ShapeError("decoder stage " + std::to_string(k + 1) + ": feature " +
                         shape_str(d.shape()) + " does not match skip " +
                         shape_str(skip.shape()));
      const int cat_c = 2 * d.dim(0);
      const int next = d.dim(0) / 2;
      auto merged = concat(std::vector<TensorT<S>>{d, skip}, 0);
      auto packed = conv2d(merged, Conv2dSpec::pointwise(cat_c, 4 * next), dec_reduce_w_[size_t(k)],
                           dec_reduce_b_[size_t(k)]);
      auto up = pixel_shuffle(packed);
      d = gelu(conv2d(up, Conv2dSpec::dense(next, next, 3), dec_refine_w_[size_t(k)],
                      dec_refine_b_[size_t(k)]));
    }
    return d;
  }

  // 1x1 head then softmax over the bin axis; every pixel sums to one.
  TensorT<S> depth_probabilities(const TensorT<S>& d4) const {
    auto logits = conv2d(d4, Conv2dSpec::pointwise(config_.base_channels, config_.n_bins),
                         head_w_, head_b_);
    return softmax(logits, 0);
  }

  struct ForwardOutputs {
    TensorT<S> depth;    // [1,H,W], inside (d_min, d_max)
    TensorT<S> widths;   // [n_bins]
    TensorT<S> centers;  // [n_bins]
    TensorT<S> probs;    // [n_bins, H/4, W/4]
  };

  ForwardOutputs forward(const TensorT<S>& rgb) const {
    auto pyr = encode(rgb);
    auto context = ppm_forward(pyr.e4);
    ForwardOutputs out;
    out.widths = bin_widths(context);
    out.centers = bin_centers(out.widths, config_.d_min, config_.d_max);
    auto d4 = decode(pyr, context);
    out.probs = depth_probabilities(d4);
    out.depth = predict_depth(out.probs, out.centers, rgb.dim(1), rgb.dim(2));
    return out;
  }

  TensorT<S> predict(const TensorT<S>& rgb) const {
    NoGradGuard ng;
    return forward(rgb).depth;
  }

  // Mean of the straight pass and the un-flipped pass over the mirrored
  // input.
  TensorT<S> infer_flip_averaged(const TensorT<S>& rgb) const {
    NoGradGuard ng;
    auto direct = forward(rgb).depth;
    auto mirrored = hflip(forward(hflip(rgb)).depth);
    return mul_scalar(add(direct, mirrored), S(0.5));
  }

  // Full pipeline to the masked scale-invariant log loss.
  TensorT<S> forward_loss(const TensorT<S>& rgb, const TensorT<S>& depth_gt,
                          const TensorT<S>& mask, const SilogParams& silog = {}) const {
    auto out = forward(rgb);
    return silog_loss(out.depth, depth_gt, mask, silog);
  }

  BinSpec bin_spec_for(const TensorT<S>& rgb) const {
    NoGradGuard ng;
    auto pyr = encode(rgb);
    auto context = ppm_forward(pyr.e4);
    auto w = bin_widths(context);
    std::vector<double> wd(w.data(), w.data() + w.size());
    return make_bin_spec(wd, config_.d_min, config_.d_max);
  }

 private:
  ModelConfig config_;
  ParamStoreT<S> params_;

  TensorT<S> stem_w0_, stem_b0_, stem_w1_, stem_b1_;
  std::array<detail::EncoderStageT<S>, 4> stages_;
  std::array<GlkamT<S>, 3> glkam_;
  std::vector<TensorT<S>> ppm_branch_w_, ppm_branch_b_;
  TensorT<S> ppm_fuse_w_, ppm_fuse_b_;
  GbpmT<S> gbpm_;
  std::array<TensorT<S>, 3> dec_reduce_w_, dec_reduce_b_;
  std::array<TensorT<S>, 3> dec_refine_w_, dec_refine_b_;
  TensorT<S> head_w_, head_b_;
};

using DepthNet = DepthNetT<float>;

}  // namespace depthnet
