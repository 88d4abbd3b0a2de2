// Training loss and evaluation metrics over masked depth maps.
#pragma once

#include "depthnet/tensor.hpp"

namespace depthnet {

struct SilogParams {
  double lambda = 0.85;  // variance-focus weight inside the radicand
  double alpha = 10.0;   // outer scale

  void validate() const {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ValueError("silog lambda must be in (0, 1]");
    if (!(alpha > 0.0)) throw ValueError("silog alpha must be positive");
  }
};

// alpha * sqrt(mean(g^2) - lambda * mean(g)^2) with g = log(gt) - log(pred)
// over masked pixels. The radicand is clamped at 1e-12 before the root.
// Requires pred > 0 on the mask and at least one valid pixel.
template <typename S>
TensorT<S> silog_loss(const TensorT<S>& d_pred, const TensorT<S>& d_gt, const TensorT<S>& mask,
                      const SilogParams& params = {}) {
  params.validate();
  if (d_pred.shape() != d_gt.shape() || d_pred.shape() != mask.shape())
    throw ShapeError("silog operands differ: " + shape_str(d_pred.shape()) + " vs " +
                     shape_str(d_gt.shape()) + " vs " + shape_str(mask.shape()));
  double n_valid = 0.0;
  for (int64_t i = 0; i < mask.size(); ++i) n_valid += double(mask.data()[i]);
  if (n_valid < 0.5) throw ValueError("silog loss over an empty validity mask");

  // log on masked entries only; invalid pixels are patched to 1 so the
  // elementwise log stays finite, then zeroed by the mask product.
  auto one_minus_mask = sub_from_scalar(S(1), mask);
  auto safe_pred = add(mul(d_pred, mask), one_minus_mask);
  auto safe_gt = add(mul(d_gt, mask), one_minus_mask);
  auto g = mul(sub(log_op(safe_gt), log_op(safe_pred)), mask);

  const S inv_n = S(1.0 / n_valid);
  auto mean_sq = mul_scalar(sum(mul(g, g)), inv_n);
  auto mean_g = mul_scalar(sum(g), inv_n);
  auto radicand = sub(mean_sq, mul_scalar(mul(mean_g, mean_g), S(params.lambda)));
  return mul_scalar(sqrt_op(clamp_min(radicand, S(1e-12))), S(params.alpha));
}

struct MetricReport {
  double abs_rel = 0.0;
  double rmse = 0.0;
  double log10 = 0.0;
  double sq_rel = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  int64_t n_valid = 0;

  std::string to_kv_text() const;
};

// Valid iff d_min < depth <= d_max and the value is finite.
template <typename S>
TensorT<S> build_validity_mask(const TensorT<S>& d_gt, double d_min, double d_max) {
  std::vector<S> m(size_t(d_gt.size()));
  const S* g = d_gt.data();
  for (int64_t i = 0; i < d_gt.size(); ++i) {
    const double v = double(g[i]);
    m[size_t(i)] = (std::isfinite(v) && v > d_min && v <= d_max) ? S(1) : S(0);
  }
  return TensorT<S>(d_gt.shape(), std::move(m));
}

// Masked error/accuracy suite; accumulates in double.
template <typename S>
MetricReport compute_metrics(const TensorT<S>& d_pred, const TensorT<S>& d_gt,
                             const TensorT<S>& mask) {
  if (d_pred.shape() != d_gt.shape() || d_pred.shape() != mask.shape())
    throw ShapeError("metric operands differ: " + shape_str(d_pred.shape()) + " vs " +
                     shape_str(d_gt.shape()) + " vs " + shape_str(mask.shape()));
  const S* pv = d_pred.data();
  const S* gv = d_gt.data();
  const S* mv = mask.data();
  double abs_rel = 0.0, sq = 0.0, log10 = 0.0, sq_rel = 0.0;
  int64_t n = 0, d1 = 0, d2 = 0, d3 = 0;
  for (int64_t i = 0; i < d_pred.size(); ++i) {
    if (mv[i] == S(0)) continue;
    const double p = double(pv[i]);
    const double g = double(gv[i]);
    const double diff = p - g;
    abs_rel += std::abs(diff) / g;
    sq += diff * diff;
    sq_rel += diff * diff / g;
    log10 += std::abs(std::log10(p) - std::log10(g));
    const double ratio = std::max(p / g, g / p);
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
    ++n;
  }
  if (n == 0) throw ValueError("compute_metrics over an empty validity mask");
  MetricReport r;
  r.abs_rel = abs_rel / double(n);
  r.rmse = std::sqrt(sq / double(n));
  r.log10 = log10 / double(n);
  r.sq_rel = sq_rel / double(n);
  r.delta1 = double(d1) / double(n);
  r.delta2 = double(d2) / double(n);
  r.delta3 = double(d3) / double(n);
  r.n_valid = n;
  return r;
}

// Per-image mean of reports (the dataset-level aggregation used by eval).
MetricReport average_reports(const std::vector<MetricReport>& reports);

}  // namespace depthnet
