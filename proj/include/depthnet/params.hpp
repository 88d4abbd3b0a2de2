// Named learnable parameters and their initializers.
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "depthnet/tensor.hpp"

namespace depthnet {

template <typename S>
struct ParameterT {
  std::string name;
  TensorT<S> tensor;
  std::string init_spec;
};

// Owns every learnable tensor of a model, keyed by a unique path-style name.
template <typename S>
class ParamStoreT {
 public:
  TensorT<S> kaiming_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in));
    TensorT<S> t(shape);
    S* v = t.data();
    for (int64_t i = 0; i < t.size(); ++i) v[i] = S(rng.uniform(-bound, bound));
    return insert(name, std::move(t),
                  "kaiming_uniform(fan_in=" + std::to_string(fan_in) + ")");
  }

  TensorT<S> zeros(const std::string& name, Shape shape) {
    return insert(name, TensorT<S>::zeros(std::move(shape)), "zeros");
  }

  TensorT<S> constant(const std::string& name, Shape shape, S value) {
    return insert(name, TensorT<S>::full(std::move(shape), value),
                  "constant(" + std::to_string(double(value)) + ")");
  }

  TensorT<S> insert(const std::string& name, TensorT<S> t, std::string init_spec) {
    if (index_.count(name)) throw ValueError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back(ParameterT<S>{name, t, std::move(init_spec)});
    return t;
  }

  const std::vector<ParameterT<S>>& all() const { return params_; }
  std::vector<ParameterT<S>>& all() { return params_; }
  size_t count() const { return params_.size(); }

  ParameterT<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  void zero_grads() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  // Names of parameters whose gradient is absent or identically zero.
  // A non-empty result after a backward pass means part of the model is
  // disconnected from the loss.
  std::vector<std::string> zero_grad_params() const {
    std::vector<std::string> out;
    for (const auto& p : params_) {
      bool all_zero = true;
      if (p.tensor.has_grad()) {
        for (S g : p.tensor.grad())
          if (g != S(0)) {
            all_zero = false;
            break;
          }
      }
      if (all_zero) out.push_back(p.name);
    }
    return out;
  }

 private:
  std::vector<ParameterT<S>> params_;
  std::unordered_map<std::string, size_t> index_;
};

using ParamStore = ParamStoreT<float>;

}  // namespace depthnet
