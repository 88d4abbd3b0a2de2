// Global bin prediction: dual-pooled global descriptors, a sigmoid-gated
// fuse, and an MLP head whose normalized outputs are per-image bin widths.
// Bin centers place each bin at the midpoint of its cumulative-width
// interval scaled into [d_min, d_max].
#pragma once

#include "depthnet/nn.hpp"
#include "depthnet/params.hpp"

namespace depthnet {

// Value-type view of one image's binning; widths sum to 1 and centers are
// strictly increasing inside (d_min, d_max).
struct BinSpec {
  std::vector<double> widths;
  std::vector<double> centers;
  double d_min = 0.0;
  double d_max = 0.0;

  void validate() const {
    if (widths.size() != centers.size() || widths.empty())
      throw ValueError("bin spec width/center count mismatch");
    double s = 0.0;
    for (double w : widths) {
      if (w <= 0.0) throw ValueError("bin widths must be positive");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-5)
      throw ValueError("bin widths sum to " + std::to_string(s) + ", expected 1");
    for (size_t i = 0; i + 1 < centers.size(); ++i)
      if (centers[i] >= centers[i + 1]) throw ValueError("bin centers must strictly increase");
    if (centers.front() <= d_min || centers.back() >= d_max)
      throw ValueError("bin centers must lie inside the depth range");
  }
};

// c_i = d_min + (d_max - d_min) * (w_i / 2 + sum_{j<i} w_j).
// Differentiable in the widths; rejects unnormalized or non-positive input.
template <typename S>
TensorT<S> bin_centers(const TensorT<S>& widths, double d_min, double d_max) {
  if (widths.rank() != 1) throw ShapeError("bin widths must be rank 1, got " + shape_str(widths.shape()));
  if (!(d_min < d_max)) throw ValueError("depth range requires d_min < d_max");
  const int64_t n = widths.size();
  const S* wv = widths.data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (wv[i] <= S(0)) throw ValueError("bin widths must be positive");
    total += double(wv[i]);
  }
  if (std::abs(total - 1.0) > 1e-5)
    throw ValueError("bin widths sum to " + std::to_string(total) + ", expected 1 (within 1e-5)");

  const double span = d_max - d_min;
  std::vector<S> out(size_t(n), S(0));
  double cum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    out[size_t(i)] = S(d_min + span * (double(wv[i]) * 0.5 + cum));
    cum += double(wv[i]);
  }
  return detail::make_result<S>(
      widths.shape(), std::move(out), {widths}, [n, span](NodeT<S>& node) {
        auto& p = node.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data();
        const S* go = node.grad.data();
        // dc_i/dw_j = span * (1 if j < i, 1/2 if j == i, 0 otherwise)
        S suffix = S(0);
        for (int64_t j = n - 1; j >= 0; --j) {
          g[j] += S(span) * (S(0.5) * go[j] + suffix);
          suffix += go[j];
        }
      });
}

inline BinSpec make_bin_spec(const std::vector<double>& widths, double d_min, double d_max) {
  BinSpec spec;
  spec.widths = widths;
  spec.d_min = d_min;
  spec.d_max = d_max;
  spec.centers.resize(widths.size());
  double cum = 0.0;
  for (size_t i = 0; i < widths.size(); ++i) {
    spec.centers[i] = d_min + (d_max - d_min) * (widths[i] * 0.5 + cum);
    cum += widths[i];
  }
  spec.validate();
  return spec;
}

// How raw head outputs become normalized widths. softplus_eps is the
// default; softmax is kept as the alternative normalizer (equivalent to
// eps_w = 0 in the tests that pin exp-ratio widths).
enum class WidthNorm { softplus_eps, softmax };

template <typename S>
TensorT<S> normalize_bin_widths(const TensorT<S>& logits, WidthNorm mode,
                                double eps_w = 1e-3) {
  if (logits.rank() != 1)
    throw ShapeError("bin logits must be rank 1, got " + shape_str(logits.shape()));
  if (mode == WidthNorm::softmax) return softmax(logits, 0);
  auto positive = add_scalar(softplus(logits), S(eps_w));
  auto inv_total = reciprocal(sum(positive));
  return mul(positive, inv_total);
}

template <typename S>
struct GbpmT {
  int in_channels = 0;      // feature channels entering the module
  int descriptor_dim = 0;   // C_g; equals in_channels
  int n_bins = 0;
  WidthNorm norm = WidthNorm::softplus_eps;
  double eps_w = 1e-3;

  TensorT<S> pw_avg_w, pw_avg_b;  // 1x1 conv after global average pooling
  TensorT<S> pw_max_w, pw_max_b;  // 1x1 conv after global max pooling
  TensorT<S> gate_h_w, gate_h_b;  // gate MLP hidden: 2*C_g -> C_g
  TensorT<S> gate_o_w, gate_o_b;  // gate MLP out: C_g -> C_g
  TensorT<S> width_h_w, width_h_b;  // width MLP hidden: C_g -> C_g
  TensorT<S> width_o_w, width_o_b;  // width MLP out: C_g -> n_bins

  static GbpmT build(const std::string& prefix, int channels, int n_bins,
                     ParamStoreT<S>& store, Rng& rng) {
    GbpmT m;
    m.in_channels = channels;
    m.descriptor_dim = channels;
    m.n_bins = n_bins;
    const int cg = m.descriptor_dim;
    m.pw_avg_w = store.kaiming_uniform(prefix + ".pw_avg.w", {cg, channels, 1, 1}, channels, rng);
    m.pw_avg_b = store.zeros(prefix + ".pw_avg.b", {cg});
    m.pw_max_w = store.kaiming_uniform(prefix + ".pw_max.w", {cg, channels, 1, 1}, channels, rng);
    m.pw_max_b = store.zeros(prefix + ".pw_max.b", {cg});
    m.gate_h_w = store.kaiming_uniform(prefix + ".gate_mlp.hidden.w", {2 * cg, cg}, 2 * cg, rng);
    m.gate_h_b = store.zeros(prefix + ".gate_mlp.hidden.b", {cg});
    m.gate_o_w = store.kaiming_uniform(prefix + ".gate_mlp.out.w", {cg, cg}, cg, rng);
    m.gate_o_b = store.zeros(prefix + ".gate_mlp.out.b", {cg});
    m.width_h_w = store.kaiming_uniform(prefix + ".width_mlp.hidden.w", {cg, cg}, cg, rng);
    m.width_h_b = store.zeros(prefix + ".width_mlp.hidden.b", {cg});
    m.width_o_w = store.kaiming_uniform(prefix + ".width_mlp.out.w", {cg, n_bins}, cg, rng);
    m.width_o_b = store.zeros(prefix + ".width_mlp.out.b", {n_bins});
    return m;
  }

  // f_a = PWConv(GAP(f)), f_b = PWConv(GMP(f)), flattened to vectors.
  std::pair<TensorT<S>, TensorT<S>> global_descriptors(const TensorT<S>& f) const {
    auto gap = pool2d(f, PoolKind::avg, 1);
    auto gmp = pool2d(f, PoolKind::max, 1);
    auto fa = conv2d(gap, Conv2dSpec::pointwise(in_channels, descriptor_dim), pw_avg_w, pw_avg_b);
    auto fb = conv2d(gmp, Conv2dSpec::pointwise(in_channels, descriptor_dim), pw_max_w, pw_max_b);
    return {reshape(fa, {descriptor_dim}), reshape(fb, {descriptor_dim})};
  }

  // z = sigmoid(MLP(concat(f_a, f_b))); out = f_a*z + f_b*(1-z).
  TensorT<S> gated_fuse(const TensorT<S>& fa, const TensorT<S>& fb) const {
    if (fa.shape() != fb.shape())
      throw ShapeError("gated_fuse operands differ: " + shape_str(fa.shape()) + " vs " +
                       shape_str(fb.shape()));
    auto joint = concat(std::vector<TensorT<S>>{fa, fb}, 0);
    auto hidden = gelu(linear(joint, gate_h_w, gate_h_b));
    auto z = sigmoid(linear(hidden, gate_o_w, gate_o_b));
    return add(mul(fa, z), mul(fb, sub_from_scalar(S(1), z)));
  }

  TensorT<S> width_logits(const TensorT<S>& fused) const {
    auto hidden = gelu(linear(fused, width_h_w, width_h_b));
    return linear(hidden, width_o_w, width_o_b);
  }

  // Full module: descriptors -> gated fuse -> MLP -> normalized widths.
  TensorT<S> predict_widths(const TensorT<S>& f) const {
    auto [fa, fb] = global_descriptors(f);
    auto fused = gated_fuse(fa, fb);
    return normalize_bin_widths(width_logits(fused), norm, eps_w);
  }
};

}  // namespace depthnet
