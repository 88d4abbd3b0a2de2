// Layer vocabulary over [C,H,W] maps: convolution variants, adaptive
// pooling, per-position channel layer norm, pixel shuffle, bilinear
// resampling, channel split.
//
// Kernels are single-threaded and evaluation order is fixed, so results
// are bitwise reproducible; throughput comes from batch-level concurrency
// in the training loop.
#pragma once

#include "depthnet/tensor.hpp"

namespace depthnet {

struct Conv2dSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int dilation = 1;
  int stride = 1;
  int groups = 1;  // 1 = dense, in_channels = depth-wise

  // "same" padding; demands an odd kernel.
  int padding() const { return dilation * (kernel - 1) / 2; }

  void validate() const {
    if (kernel < 1 || kernel % 2 == 0)
      throw ValueError("conv kernel must be odd and positive, got " + std::to_string(kernel));
    if (dilation < 1 || stride < 1) throw ValueError("conv dilation/stride must be >= 1");
    if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
      throw ValueError("conv channels (" + std::to_string(in_channels) + " -> " +
                       std::to_string(out_channels) + ") not divisible by groups " +
                       std::to_string(groups));
  }

  static Conv2dSpec pointwise(int in_c, int out_c) { return {in_c, out_c, 1, 1, 1, 1}; }
  static Conv2dSpec depthwise(int channels, int kernel, int dilation = 1) {
    return {channels, channels, kernel, dilation, 1, channels};
  }
  static Conv2dSpec dense(int in_c, int out_c, int kernel, int stride = 1) {
    return {in_c, out_c, kernel, 1, stride, 1};
  }
};

namespace detail {

struct ConvDims {
  int in_c, out_c, k, d, s, pad, groups, H, W, OH, OW, icpg, ocpg;
};

// Valid output-column range for one kernel tap; empty ranges yield lo > hi.
inline void conv_col_range(int W, int OW, int s, int off_x, int& lo, int& hi) {
  const int num = W - 1 - off_x;
  lo = 0;
  hi = OW - 1;
  if (num < 0) {
    hi = -1;
    return;
  }
  if (off_x < 0) lo = (-off_x + s - 1) / s;
  if (num < hi * s) hi = num / s;
}

template <typename S>
inline void conv_forward_kernel(const S* xv, const S* wv, const S* bv, S* ov,
                                const ConvDims& c) {
  const int64_t in_plane = int64_t(c.H) * c.W;
  const int64_t out_plane = int64_t(c.OH) * c.OW;
  for (int oc = 0; oc < c.out_c; ++oc) {
    const int g = oc / c.ocpg;
    S* out_ch = ov + oc * out_plane;
    for (int icg = 0; icg < c.icpg; ++icg) {
      const int ic = g * c.icpg + icg;
      const S* x_ch = xv + ic * in_plane;
      const S* w_tap = wv + (int64_t(oc) * c.icpg + icg) * c.k * c.k;
      for (int ky = 0; ky < c.k; ++ky) {
        for (int kx = 0; kx < c.k; ++kx) {
          const S w = w_tap[ky * c.k + kx];
          const int off_y = ky * c.d - c.pad;
          const int off_x = kx * c.d - c.pad;
          int lo, hi;
          conv_col_range(c.W, c.OW, c.s, off_x, lo, hi);
          if (lo > hi) continue;
          const int n = hi - lo + 1;
          for (int oy = 0; oy < c.OH; ++oy) {
            const int iy = oy * c.s + off_y;
            if (iy < 0 || iy >= c.H) continue;
            const S* xrow = x_ch + int64_t(iy) * c.W;
            S* orow = out_ch + int64_t(oy) * c.OW;
            if (c.s == 1) {
              const S* __restrict xi = xrow + lo + off_x;
              S* __restrict oo = orow + lo;
              for (int t = 0; t < n; ++t) oo[t] += w * xi[t];
            } else {
              for (int ox = lo; ox <= hi; ++ox) orow[ox] += w * xrow[ox * c.s + off_x];
            }
          }
        }
      }
    }
    if (bv) {
      const S b = bv[oc];
      for (int64_t i = 0; i < out_plane; ++i) out_ch[i] += b;
    }
  }
}

template <typename S>
inline void conv_backward_input(const S* go, const S* wv, S* gx, const ConvDims& c) {
  const int64_t in_plane = int64_t(c.H) * c.W;
  const int64_t out_plane = int64_t(c.OH) * c.OW;
  for (int ic = 0; ic < c.in_c; ++ic) {
    const int g = ic / c.icpg;
    const int icg = ic % c.icpg;
    S* gx_ch = gx + ic * in_plane;
    for (int ocg = 0; ocg < c.ocpg; ++ocg) {
      const int oc = g * c.ocpg + ocg;
      const S* go_ch = go + oc * out_plane;
      const S* w_tap = wv + (int64_t(oc) * c.icpg + icg) * c.k * c.k;
      for (int ky = 0; ky < c.k; ++ky) {
        for (int kx = 0; kx < c.k; ++kx) {
          const S w = w_tap[ky * c.k + kx];
          const int off_y = ky * c.d - c.pad;
          const int off_x = kx * c.d - c.pad;
          int lo, hi;
          conv_col_range(c.W, c.OW, c.s, off_x, lo, hi);
          if (lo > hi) continue;
          const int n = hi - lo + 1;
          for (int oy = 0; oy < c.OH; ++oy) {
            const int iy = oy * c.s + off_y;
            if (iy < 0 || iy >= c.H) continue;
            S* gx_row = gx_ch + int64_t(iy) * c.W;
            const S* go_row = go_ch + int64_t(oy) * c.OW;
            if (c.s == 1) {
              S* __restrict gi = gx_row + lo + off_x;
              const S* __restrict oo = go_row + lo;
              for (int t = 0; t < n; ++t) gi[t] += w * oo[t];
            } else {
              for (int ox = lo; ox <= hi; ++ox) gx_row[ox * c.s + off_x] += w * go_row[ox];
            }
          }
        }
      }
    }
  }
}

template <typename S>
inline void conv_backward_weight(const S* go, const S* xv, S* gw, const ConvDims& c) {
  const int64_t in_plane = int64_t(c.H) * c.W;
  const int64_t out_plane = int64_t(c.OH) * c.OW;
  for (int oc = 0; oc < c.out_c; ++oc) {
    const int g = oc / c.ocpg;
    const S* go_ch = go + oc * out_plane;
    for (int icg = 0; icg < c.icpg; ++icg) {
      const int ic = g * c.icpg + icg;
      const S* x_ch = xv + ic * in_plane;
      S* gw_tap = gw + (int64_t(oc) * c.icpg + icg) * c.k * c.k;
      for (int ky = 0; ky < c.k; ++ky) {
        for (int kx = 0; kx < c.k; ++kx) {
          const int off_y = ky * c.d - c.pad;
          const int off_x = kx * c.d - c.pad;
          int lo, hi;
          conv_col_range(c.W, c.OW, c.s, off_x, lo, hi);
          if (lo > hi) continue;
          // four accumulation lanes in a fixed interleave
          S acc0 = S(0), acc1 = S(0), acc2 = S(0), acc3 = S(0);
          for (int oy = 0; oy < c.OH; ++oy) {
            const int iy = oy * c.s + off_y;
            if (iy < 0 || iy >= c.H) continue;
            const S* xrow = x_ch + int64_t(iy) * c.W;
            const S* go_row = go_ch + int64_t(oy) * c.OW;
            if (c.s == 1) {
              const S* __restrict xi = xrow + lo + off_x;
              const S* __restrict oo = go_row + lo;
              const int n = hi - lo + 1;
              int t = 0;
              for (; t + 4 <= n; t += 4) {
                acc0 += oo[t] * xi[t];
                acc1 += oo[t + 1] * xi[t + 1];
                acc2 += oo[t + 2] * xi[t + 2];
                acc3 += oo[t + 3] * xi[t + 3];
              }
              for (; t < n; ++t) acc0 += oo[t] * xi[t];
            } else {
              for (int ox = lo; ox <= hi; ++ox) acc0 += go_row[ox] * xrow[ox * c.s + off_x];
            }
          }
          gw_tap[ky * c.k + kx] += ((acc0 + acc1) + (acc2 + acc3));
        }
      }
    }
  }
}

}  // namespace detail

// x [C_in,H,W], weight [C_out, C_in/groups, k, k], optional bias [C_out].
// Output keeps the input spatial size at stride 1 (zero "same" padding).
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const Conv2dSpec& spec, const TensorT<S>& weight,
                  const TensorT<S>& bias = {}) {
  spec.validate();
  if (x.rank() != 3 || x.dim(0) != spec.in_channels)
    throw ShapeError("conv2d input " + shape_str(x.shape()) + " does not provide " +
                     std::to_string(spec.in_channels) + " channels");
  const int icpg = spec.in_channels / spec.groups;
  const Shape expect_w{spec.out_channels, icpg, spec.kernel, spec.kernel};
  if (weight.shape() != expect_w)
    throw ShapeError("conv2d weight " + shape_str(weight.shape()) + ", expected " +
                     shape_str(expect_w));
  if (bias.defined() && bias.shape() != Shape{spec.out_channels})
    throw ShapeError("conv2d bias " + shape_str(bias.shape()) + ", expected [" +
                     std::to_string(spec.out_channels) + "]");

  detail::ConvDims c;
  c.in_c = spec.in_channels;
  c.out_c = spec.out_channels;
  c.k = spec.kernel;
  c.d = spec.dilation;
  c.s = spec.stride;
  c.pad = spec.padding();
  c.groups = spec.groups;
  c.H = x.dim(1);
  c.W = x.dim(2);
  const int eff = (c.k - 1) * c.d + 1;
  c.OH = (c.H + 2 * c.pad - eff) / c.s + 1;
  c.OW = (c.W + 2 * c.pad - eff) / c.s + 1;
  c.icpg = icpg;
  c.ocpg = c.out_c / c.groups;
  const Shape out_shape{c.out_c, c.OH, c.OW};
  if (c.k == 1 && c.s == 1) {
    // point-wise convs are a channel mix; fold the plane into one long row
    c.W = c.H * c.W;
    c.H = 1;
    c.OW = c.W;
    c.OH = 1;
  }
  if (c.OH < 1 || c.OW < 1)
    throw ShapeError("conv2d input " + shape_str(x.shape()) + " too small for kernel " +
                     std::to_string(c.k) + " dilation " + std::to_string(c.d));

  std::vector<S> out(size_t(c.out_c) * c.OH * c.OW, S(0));
  detail::conv_forward_kernel(x.data(), weight.data(), bias.defined() ? bias.data() : nullptr,
                              out.data(), c);

  const bool has_bias = bias.defined();
  std::vector<TensorT<S>> parents =
      has_bias ? std::vector<TensorT<S>>{x, weight, bias} : std::vector<TensorT<S>>{x, weight};
  return detail::make_result<S>(
      out_shape, std::move(out), std::move(parents),
      [c, has_bias](NodeT<S>& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        const S* go = n.grad.data();
        if (px->requires_grad)
          detail::conv_backward_input(go, pw->value.data(), px->ensure_grad().data(), c);
        if (pw->requires_grad)
          detail::conv_backward_weight(go, px->value.data(), pw->ensure_grad().data(), c);
        if (has_bias && n.parents[2]->requires_grad) {
          S* gb = n.parents[2]->ensure_grad().data();
          const int64_t plane = int64_t(c.OH) * c.OW;
          for (int oc = 0; oc < c.out_c; ++oc) {
            S acc = S(0);
            const S* row = go + oc * plane;
            for (int64_t i = 0; i < plane; ++i) acc += row[i];
            gb[oc] += acc;
          }
        }
      });
}

enum class PoolKind { avg, max };

// Adaptive pooling to a g-by-g grid; cell (i,j) covers input rows
// [floor(i*H/g), ceil((i+1)*H/g)) and the matching column range.
template <typename S>
TensorT<S> pool2d(const TensorT<S>& x, PoolKind kind, int grid) {
  if (x.rank() != 3) throw ShapeError("pool2d expects [C,H,W], got " + shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (grid < 1 || grid > H || grid > W)
    throw ValueError("pool grid " + std::to_string(grid) + " exceeds spatial extent " +
                     std::to_string(H) + "x" + std::to_string(W));
  const int g = grid;
  auto lo_of = [](int i, int n, int g) { return (i * n) / g; };
  auto hi_of = [](int i, int n, int g) { return ((i + 1) * n + g - 1) / g; };

  const S* xv = x.data();
  std::vector<S> out(size_t(C) * g * g);
  std::vector<int> argmax;
  if (kind == PoolKind::max) argmax.resize(out.size());
  for (int ch = 0; ch < C; ++ch) {
    const S* x_ch = xv + int64_t(ch) * H * W;
    for (int gy = 0; gy < g; ++gy) {
      const int y0 = lo_of(gy, H, g), y1 = hi_of(gy, H, g);
      for (int gx = 0; gx < g; ++gx) {
        const int x0 = lo_of(gx, W, g), x1 = hi_of(gx, W, g);
        const size_t oi = size_t(ch) * g * g + size_t(gy) * g + gx;
        if (kind == PoolKind::avg) {
          S acc = S(0);
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) acc += x_ch[y * W + xx];
          out[oi] = acc / S((y1 - y0) * (x1 - x0));
        } else {
          S best = x_ch[y0 * W + x0];
          int best_i = y0 * W + x0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx)
              if (x_ch[y * W + xx] > best) {
                best = x_ch[y * W + xx];
                best_i = y * W + xx;
              }
          out[oi] = best;
          argmax[oi] = best_i;
        }
      }
    }
  }
  return detail::make_result<S>(
      Shape{C, g, g}, std::move(out), {x},
      [kind, C, H, W, g, lo_of, hi_of, argmax = std::move(argmax)](NodeT<S>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        S* gx = p->ensure_grad().data();
        const S* go = n.grad.data();
        for (int ch = 0; ch < C; ++ch) {
          S* gx_ch = gx + int64_t(ch) * H * W;
          for (int gy = 0; gy < g; ++gy) {
            const int y0 = lo_of(gy, H, g), y1 = hi_of(gy, H, g);
            for (int gxi = 0; gxi < g; ++gxi) {
              const int x0 = lo_of(gxi, W, g), x1 = hi_of(gxi, W, g);
              const size_t oi = size_t(ch) * g * g + size_t(gy) * g + gxi;
              if (kind == PoolKind::avg) {
                const S share = go[oi] / S((y1 - y0) * (x1 - x0));
                for (int y = y0; y < y1; ++y)
                  for (int xx = x0; xx < x1; ++xx) gx_ch[y * W + xx] += share;
              } else {
                gx_ch[argmax[oi]] += go[oi];
              }
            }
          }
        }
      });
}

// Per-spatial-position normalization across channels, then affine.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias,
                      S eps = S(1e-5)) {
  if (x.rank() != 3) throw ShapeError("layer_norm expects [C,H,W], got " + shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (gain.shape() != Shape{C} || bias.shape() != Shape{C})
    throw ShapeError("layer_norm affine parameters must have shape [" + std::to_string(C) + "]");
  const int64_t plane = int64_t(H) * W;
  const S* xv = x.data();
  const S* gv = gain.data();
  const S* bv = bias.data();
  std::vector<S> out(size_t(x.size()));
  std::vector<S> inv_sigma(size_t(plane), S(0));
  std::vector<S> mu(size_t(plane), S(0));
  for (int64_t pidx = 0; pidx < plane; ++pidx) {
    S m = S(0);
    for (int ch = 0; ch < C; ++ch) m += xv[ch * plane + pidx];
    m /= S(C);
    S var = S(0);
    for (int ch = 0; ch < C; ++ch) {
      const S d = xv[ch * plane + pidx] - m;
      var += d * d;
    }
    var /= S(C);
    const S is = S(1) / std::sqrt(var + eps);
    mu[pidx] = m;
    inv_sigma[pidx] = is;
    for (int ch = 0; ch < C; ++ch)
      out[size_t(ch * plane + pidx)] = (xv[ch * plane + pidx] - m) * is * gv[ch] + bv[ch];
  }
  return detail::make_result<S>(
      x.shape(), std::move(out), {x, gain, bias},
      [C, plane, mu = std::move(mu), inv_sigma = std::move(inv_sigma)](NodeT<S>& n) {
        auto& px = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        const S* go = n.grad.data();
        const S* xv = px->value.data();
        const S* gv = pg->value.data();
        if (px->requires_grad) {
          S* gx = px->ensure_grad().data();
          for (int64_t pidx = 0; pidx < plane; ++pidx) {
            const S is = inv_sigma[pidx];
            const S m = mu[pidx];
            S mean_h = S(0), mean_hx = S(0);
            for (int ch = 0; ch < C; ++ch) {
              const S h = go[ch * plane + pidx] * gv[ch];
              const S xh = (xv[ch * plane + pidx] - m) * is;
              mean_h += h;
              mean_hx += h * xh;
            }
            mean_h /= S(C);
            mean_hx /= S(C);
            for (int ch = 0; ch < C; ++ch) {
              const S h = go[ch * plane + pidx] * gv[ch];
              const S xh = (xv[ch * plane + pidx] - m) * is;
              gx[ch * plane + pidx] += is * (h - mean_h - xh * mean_hx);
            }
          }
        }
        if (pg->requires_grad || pb->requires_grad) {
          S* gg = pg->requires_grad ? pg->ensure_grad().data() : nullptr;
          S* gb = pb->requires_grad ? pb->ensure_grad().data() : nullptr;
          for (int ch = 0; ch < C; ++ch) {
            S acc_g = S(0), acc_b = S(0);
            for (int64_t pidx = 0; pidx < plane; ++pidx) {
              const S d = go[ch * plane + pidx];
              acc_g += d * (xv[ch * plane + pidx] - mu[pidx]) * inv_sigma[pidx];
              acc_b += d;
            }
            if (gg) gg[ch] += acc_g;
            if (gb) gb[ch] += acc_b;
          }
        }
      });
}

// [4C,H,W] -> [C,2H,2W]; out[c, 2y+dy, 2x+dx] = in[4c + 2dy + dx, y, x].
template <typename S>
TensorT<S> pixel_shuffle(const TensorT<S>& x) {
  if (x.rank() != 3 || x.dim(0) % 4 != 0)
    throw ShapeError("pixel_shuffle needs channels divisible by 4, got " + shape_str(x.shape()));
  const int C = x.dim(0) / 4, H = x.dim(1), W = x.dim(2);
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int ch = 0; ch < C; ++ch)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const S* src = xv + int64_t(ch * 4 + dy * 2 + dx) * H * W;
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx)
            out[size_t(((int64_t(ch) * 2 * H + 2 * y + dy) * 2 * W) + 2 * xx + dx)] =
                src[y * W + xx];
      }
  return detail::make_result<S>(
      Shape{C, 2 * H, 2 * W}, std::move(out), {x}, [C, H, W](NodeT<S>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data();
        const S* go = n.grad.data();
        for (int ch = 0; ch < C; ++ch)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              S* dst = g + int64_t(ch * 4 + dy * 2 + dx) * H * W;
              for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                  dst[y * W + xx] +=
                      go[size_t(((int64_t(ch) * 2 * H + 2 * y + dy) * 2 * W) + 2 * xx + dx)];
            }
      });
}

// Exact inverse of pixel_shuffle: [C,2H,2W] -> [4C,H,W].
template <typename S>
TensorT<S> pixel_unshuffle(const TensorT<S>& x) {
  if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0)
    throw ShapeError("pixel_unshuffle needs even spatial extents, got " + shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2;
  const S* xv = x.data();
  std::vector<S> out(size_t(x.size()));
  for (int ch = 0; ch < C; ++ch)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        S* dst = out.data() + int64_t(ch * 4 + dy * 2 + dx) * H * W;
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx)
            dst[y * W + xx] =
                xv[size_t(((int64_t(ch) * 2 * H + 2 * y + dy) * 2 * W) + 2 * xx + dx)];
      }
  return detail::make_result<S>(
      Shape{4 * C, H, W}, std::move(out), {x}, [C, H, W](NodeT<S>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data();
        const S* go = n.grad.data();
        for (int ch = 0; ch < C; ++ch)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const S* src = go + int64_t(ch * 4 + dy * 2 + dx) * H * W;
              for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                  g[size_t(((int64_t(ch) * 2 * H + 2 * y + dy) * 2 * W) + 2 * xx + dx)] +=
                      src[y * W + xx];
            }
      });
}

namespace detail {

struct ResampleAxis {
  std::vector<int> i0, i1;
  std::vector<double> t;
};

// align-corners-false source coordinates, clamped at the borders.
inline ResampleAxis resample_axis(int in_n, int out_n) {
  ResampleAxis a;
  a.i0.resize(size_t(out_n));
  a.i1.resize(size_t(out_n));
  a.t.resize(size_t(out_n));
  const double scale = double(in_n) / double(out_n);
  for (int o = 0; o < out_n; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = int(std::floor(src));
    if (i0 > in_n - 1) i0 = in_n - 1;
    const int i1 = std::min(i0 + 1, in_n - 1);
    a.i0[size_t(o)] = i0;
    a.i1[size_t(o)] = i1;
    a.t[size_t(o)] = std::min(src - double(i0), 1.0);
  }
  return a;
}

}  // namespace detail

template <typename S>
TensorT<S> resize_bilinear(const TensorT<S>& x, int out_h, int out_w) {
  if (x.rank() != 3)
    throw ShapeError("resize_bilinear expects [C,H,W], got " + shape_str(x.shape()));
  if (out_h < 1 || out_w < 1) throw ValueError("resize target must be positive");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (out_h == H && out_w == W) {
    // identity; still a tape node so gradients pass through
    return reshape(x, x.shape());
  }
  const auto ay = detail::resample_axis(H, out_h);
  const auto ax = detail::resample_axis(W, out_w);
  const S* xv = x.data();
  std::vector<S> out(size_t(C) * out_h * out_w);
  for (int ch = 0; ch < C; ++ch) {
    const S* x_ch = xv + int64_t(ch) * H * W;
    S* o_ch = out.data() + int64_t(ch) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const int y0 = ay.i0[size_t(oy)], y1 = ay.i1[size_t(oy)];
      const S ty = S(ay.t[size_t(oy)]);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = ax.i0[size_t(ox)], x1 = ax.i1[size_t(ox)];
        const S tx = S(ax.t[size_t(ox)]);
        const S v00 = x_ch[y0 * W + x0], v01 = x_ch[y0 * W + x1];
        const S v10 = x_ch[y1 * W + x0], v11 = x_ch[y1 * W + x1];
        const S top = v00 + (v01 - v00) * tx;
        const S bot = v10 + (v11 - v10) * tx;
        o_ch[oy * out_w + ox] = top + (bot - top) * ty;
      }
    }
  }
  return detail::make_result<S>(
      Shape{C, out_h, out_w}, std::move(out), {x},
      [C, H, W, out_h, out_w, ay, ax](NodeT<S>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        S* g = p->ensure_grad().data();
        const S* go = n.grad.data();
        for (int ch = 0; ch < C; ++ch) {
          S* g_ch = g + int64_t(ch) * H * W;
          const S* go_ch = go + int64_t(ch) * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = ay.i0[size_t(oy)], y1 = ay.i1[size_t(oy)];
            const S ty = S(ay.t[size_t(oy)]);
            for (int ox = 0; ox < out_w; ++ox) {
              const int x0 = ax.i0[size_t(ox)], x1 = ax.i1[size_t(ox)];
              const S tx = S(ax.t[size_t(ox)]);
              const S d = go_ch[oy * out_w + ox];
              g_ch[y0 * W + x0] += d * (S(1) - ty) * (S(1) - tx);
              g_ch[y0 * W + x1] += d * (S(1) - ty) * tx;
              g_ch[y1 * W + x0] += d * ty * (S(1) - tx);
              g_ch[y1 * W + x1] += d * ty * tx;
            }
          }
        }
      });
}

// Contiguous channel ranges; concat(channel_split(x, p)) == x.
template <typename S>
std::vector<TensorT<S>> channel_split(const TensorT<S>& x, int parts) {
  if (x.rank() != 3) throw ShapeError("channel_split expects [C,H,W], got " + shape_str(x.shape()));
  if (parts < 1 || x.dim(0) % parts != 0)
    throw ShapeError("channel count " + std::to_string(x.dim(0)) + " not divisible into " +
                     std::to_string(parts) + " parts");
  const int per = x.dim(0) / parts;
  std::vector<TensorT<S>> out;
  out.reserve(size_t(parts));
  for (int i = 0; i < parts; ++i) out.push_back(slice_axis0(x, i * per, per));
  return out;
}

}  // namespace depthnet
