// Adam with decoupled weight decay, and the linear learning-rate schedule.
#pragma once

#include "depthnet/params.hpp"

namespace depthnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename S>
class AdamT {
 public:
  explicit AdamT(ParamStoreT<S>& store, AdamConfig cfg = {}) : store_(&store), cfg_(cfg) {
    moments_m_.resize(store.count());
    moments_v_.resize(store.count());
    for (size_t i = 0; i < store.count(); ++i) {
      const size_t n = size_t(store.all()[i].tensor.size());
      moments_m_[i].assign(n, 0.0);
      moments_v_[i].assign(n, 0.0);
    }
  }

  // One update over every parameter with a populated gradient buffer.
  void step(double lr) {
    if (lr <= 0.0) throw ValueError("adam step requires lr > 0, got " + std::to_string(lr));
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t pi = 0; pi < store_->count(); ++pi) {
      auto& param = store_->all()[pi].tensor;
      if (!param.has_grad()) continue;
      S* w = param.data();
      const S* g = param.grad().data();
      double* m = moments_m_[pi].data();
      double* v = moments_v_[pi].data();
      const int64_t n = param.size();
      for (int64_t i = 0; i < n; ++i) {
        const double gi = double(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + cfg_.eps);
        upd += cfg_.weight_decay * double(w[i]);  // decoupled decay
        w[i] = S(double(w[i]) - lr * upd);
      }
    }
  }

  int64_t step_count() const { return t_; }

 private:
  ParamStoreT<S>* store_;
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> moments_m_;
  std::vector<std::vector<double>> moments_v_;
};

using Adam = AdamT<float>;

// Linear decay over the run; the midpoint step sits exactly halfway
// between the two rates.
inline double linear_lr(double lr_start, double lr_end, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return lr_start;
  return lr_start + (lr_end - lr_start) * (double(step) / double(total_steps));
}

}  // namespace depthnet
