// Gated large-kernel attention block.
//
// Three parallel branches over split channel groups, each approximating a
// large kernel by an a_i x a_i depth-wise conv, a b_i x b_i depth-wise conv
// dilated by d_i, and a point-wise conv, modulated by an a_i x a_i
// depth-wise spatial gate. The branch stack sits inside LN -> MLKA -> LN ->
// FFN, and the block output is a per-position, per-channel sigmoid-gated
// blend of the block input with that feature.
#pragma once

#include <array>

#include "depthnet/nn.hpp"
#include "depthnet/params.hpp"

namespace depthnet {

struct LkaGroupConfig {
  int nominal_kernel;  // the decomposition's label, not its measured extent
  int nominal_dilation;
  int a;         // leading depth-wise kernel
  int b;         // dilated depth-wise kernel
  int dilation;  // dilation of the b stage
  int gate_kernel() const { return a; }
  // spatial support of the a-b-1 cascade's impulse response
  int support_extent() const { return (a - 1) + (b - 1) * dilation + 1; }
};

inline const std::array<LkaGroupConfig, 3>& lka_groups() {
  static const std::array<LkaGroupConfig, 3> groups{{
      {7, 2, 3, 5, 2},
      {21, 3, 5, 7, 3},
      {35, 4, 7, 9, 4},
  }};
  return groups;
}

template <typename S>
struct LkaBranchT {
  LkaGroupConfig group;
  int channels = 0;
  TensorT<S> dw_w, dw_b;      // a x a depth-wise
  TensorT<S> dwd_w, dwd_b;    // b x b depth-wise, dilated
  TensorT<S> pw_w, pw_b;      // 1 x 1
  TensorT<S> gate_w, gate_b;  // a x a depth-wise spatial gate

  static LkaBranchT build(const std::string& prefix, int channels, const LkaGroupConfig& g,
                          ParamStoreT<S>& store, Rng& rng) {
    LkaBranchT br;
    br.group = g;
    br.channels = channels;
    br.dw_w = store.kaiming_uniform(prefix + ".dw.w", {channels, 1, g.a, g.a},
                                    int64_t(g.a) * g.a, rng);
    br.dw_b = store.zeros(prefix + ".dw.b", {channels});
    br.dwd_w = store.kaiming_uniform(prefix + ".dwd.w", {channels, 1, g.b, g.b},
                                     int64_t(g.b) * g.b, rng);
    br.dwd_b = store.zeros(prefix + ".dwd.b", {channels});
    br.pw_w = store.kaiming_uniform(prefix + ".pw.w", {channels, channels, 1, 1}, channels, rng);
    br.pw_b = store.zeros(prefix + ".pw.b", {channels});
    br.gate_w = store.kaiming_uniform(prefix + ".gate.w", {channels, 1, g.a, g.a},
                                      int64_t(g.a) * g.a, rng);
    br.gate_b = store.zeros(prefix + ".gate.b", {channels});
    return br;
  }

  // a-b-1 cascade only, without the gate; the receptive-field probe
  // measures this path.
  TensorT<S> attention_map(const TensorT<S>& x) const {
    auto y = conv2d(x, Conv2dSpec::depthwise(channels, group.a), dw_w, dw_b);
    y = conv2d(y, Conv2dSpec::depthwise(channels, group.b, group.dilation), dwd_w, dwd_b);
    return conv2d(y, Conv2dSpec::pointwise(channels, channels), pw_w, pw_b);
  }

  // G_i(x) ⊗ LKA_i(x)
  TensorT<S> forward(const TensorT<S>& x) const {
    if (x.dim(0) != channels)
      throw ShapeError("lka branch expects " + std::to_string(channels) + " channels, got " +
                       shape_str(x.shape()));
    auto gate = conv2d(x, Conv2dSpec::depthwise(channels, group.gate_kernel()), gate_w, gate_b);
    return mul(gate, attention_map(x));
  }
};

template <typename S>
struct GlkamT {
  int channels = 0;        // block input = output channels
  int split_channels = 0;  // entry conv output; smallest multiple of 3 >= channels

  TensorT<S> pre_norm_g, pre_norm_b;
  TensorT<S> entry_w, entry_b;  // 1x1, channels -> split_channels
  std::array<LkaBranchT<S>, 3> branches;
  TensorT<S> exit_w, exit_b;  // 1x1, split_channels -> channels
  TensorT<S> post_norm_g, post_norm_b;
  TensorT<S> ffn_expand_w, ffn_expand_b;    // 1x1, C -> 4C
  TensorT<S> ffn_project_w, ffn_project_b;  // 1x1, 4C -> C
  TensorT<S> fuse_hidden_w, fuse_hidden_b;  // 1x1, 2C -> C
  TensorT<S> fuse_out_w, fuse_out_b;        // 1x1, C -> C

  static GlkamT build(const std::string& prefix, int channels, ParamStoreT<S>& store, Rng& rng) {
    GlkamT m;
    m.channels = channels;
    m.split_channels = ((channels + 2) / 3) * 3;
    const int sc = m.split_channels;
    const int gc = sc / 3;
    m.pre_norm_g = store.constant(prefix + ".pre_norm.gain", {channels}, S(1));
    m.pre_norm_b = store.zeros(prefix + ".pre_norm.bias", {channels});
    m.entry_w = store.kaiming_uniform(prefix + ".entry.w", {sc, channels, 1, 1}, channels, rng);
    m.entry_b = store.zeros(prefix + ".entry.b", {sc});
    for (int i = 0; i < 3; ++i)
      m.branches[size_t(i)] = LkaBranchT<S>::build(prefix + ".group" + std::to_string(i), gc,
                                                   lka_groups()[size_t(i)], store, rng);
    m.exit_w = store.kaiming_uniform(prefix + ".exit.w", {channels, sc, 1, 1}, sc, rng);
    m.exit_b = store.zeros(prefix + ".exit.b", {channels});
    m.post_norm_g = store.constant(prefix + ".post_norm.gain", {channels}, S(1));
    m.post_norm_b = store.zeros(prefix + ".post_norm.bias", {channels});
    m.ffn_expand_w =
        store.kaiming_uniform(prefix + ".ffn.expand.w", {4 * channels, channels, 1, 1},
                              channels, rng);
    m.ffn_expand_b = store.zeros(prefix + ".ffn.expand.b", {4 * channels});
    m.ffn_project_w =
        store.kaiming_uniform(prefix + ".ffn.project.w", {channels, 4 * channels, 1, 1},
                              4 * channels, rng);
    m.ffn_project_b = store.zeros(prefix + ".ffn.project.b", {channels});
    m.fuse_hidden_w =
        store.kaiming_uniform(prefix + ".fusion_mlp.hidden.w", {channels, 2 * channels, 1, 1},
                              2 * channels, rng);
    m.fuse_hidden_b = store.zeros(prefix + ".fusion_mlp.hidden.b", {channels});
    m.fuse_out_w = store.kaiming_uniform(prefix + ".fusion_mlp.out.w", {channels, channels, 1, 1},
                                         channels, rng);
    m.fuse_out_b = store.zeros(prefix + ".fusion_mlp.out.b", {channels});
    return m;
  }

  // entry 1x1 -> split into three groups -> gated LKA branches -> concat ->
  // exit 1x1. Shape-preserving.
  TensorT<S> mlka(const TensorT<S>& x) const {
    auto widened = conv2d(x, Conv2dSpec::pointwise(channels, split_channels), entry_w, entry_b);
    auto groups = channel_split(widened, 3);
    std::vector<TensorT<S>> outs;
    outs.reserve(3);
    for (int i = 0; i < 3; ++i) outs.push_back(branches[size_t(i)].forward(groups[size_t(i)]));
    auto merged = concat(outs, 0);
    return conv2d(merged, Conv2dSpec::pointwise(split_channels, channels), exit_w, exit_b);
  }

  // F_m = FFN(LN(MLKA(LN(x))))
  TensorT<S> branch_feature(const TensorT<S>& x) const {
    auto y = layer_norm(x, pre_norm_g, pre_norm_b);
    y = mlka(y);
    y = layer_norm(y, post_norm_g, post_norm_b);
    y = conv2d(y, Conv2dSpec::pointwise(channels, 4 * channels), ffn_expand_w, ffn_expand_b);
    y = gelu(y);
    return conv2d(y, Conv2dSpec::pointwise(4 * channels, channels), ffn_project_w, ffn_project_b);
  }

  // Gate from concat(F_m, x); output z*x + (1-z)*F_m, elementwise between
  // the two operands by construction.
  TensorT<S> forward(const TensorT<S>& x) const {
    if (x.dim(0) != channels)
      throw ShapeError("glkam expects " + std::to_string(channels) + " channels, got " +
                       shape_str(x.shape()));
    auto fm = branch_feature(x);
    return fuse(x, fm);
  }

  TensorT<S> fuse(const TensorT<S>& x, const TensorT<S>& fm) const {
    auto stacked = concat(std::vector<TensorT<S>>{fm, x}, 0);
    auto hidden = gelu(
        conv2d(stacked, Conv2dSpec::pointwise(2 * channels, channels), fuse_hidden_w,
               fuse_hidden_b));
    auto z = sigmoid(
        conv2d(hidden, Conv2dSpec::pointwise(channels, channels), fuse_out_w, fuse_out_b));
    auto keep = mul(z, x);
    auto inject = mul(sub_from_scalar(S(1), z), fm);
    return add(keep, inject);
  }
};

}  // namespace depthnet
