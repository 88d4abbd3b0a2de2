// Central finite-difference gradient checking.
//
// The oracle side only ever evaluates the forward pass, so it stays
// independent of the reverse-mode machinery it is checking.
#pragma once

#include <functional>

#include "depthnet/tensor.hpp"

namespace depthnet {

template <typename S>
struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked_coords = 0;
  std::string worst_site;
};

// forward() must rebuild the graph from the current leaf values and return a
// scalar. Leaves are perturbed in place between evaluations.
template <typename S>
GradCheckReport<S> gradcheck(const std::function<TensorT<S>()>& forward,
                             std::vector<std::pair<std::string, TensorT<S>>> leaves,
                             Rng& rng, double h = 1e-5, int64_t max_coords_per_leaf = 8) {
  for (auto& [name, leaf] : leaves) leaf.set_requires_grad(true);

  TensorT<S> loss = forward();
  for (auto& [name, leaf] : leaves) leaf.zero_grad();
  loss.backward();

  std::vector<std::vector<S>> ad_grads;
  ad_grads.reserve(leaves.size());
  for (auto& [name, leaf] : leaves) ad_grads.push_back(leaf.grad());

  GradCheckReport<S> report;
  NoGradGuard ng;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li].second;
    const int64_t n = leaf.size();
    std::vector<int64_t> coords;
    if (n <= max_coords_per_leaf) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int64_t c = 0; c < max_coords_per_leaf; ++c)
        coords.push_back(int64_t(rng.uniform_int(uint64_t(n))));
    }
    for (int64_t ci : coords) {
      S* slot = leaf.data() + ci;
      const S saved = *slot;
      *slot = saved + S(h);
      const double up = double(forward().item());
      *slot = saved - S(h);
      const double down = double(forward().item());
      *slot = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = double(ad_grads[li][size_t(ci)]);
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-3});
      const double rel = std::abs(ad - fd) / denom;
      ++report.checked_coords;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_site = leaves[li].first + "[" + std::to_string(ci) + "]";
      }
    }
  }
  return report;
}

}  // namespace depthnet
