#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "snapsci/tensor.hpp"

namespace snapsci {

struct AdamOptions {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Learning rate is halved every `halve_every` epochs; 0 disables decay.
  std::size_t halve_every = 50;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t step = 0;
  std::size_t epoch = 0;
};

template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions opts = {}) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
      state_.m.emplace_back(p.numel(), T(0));
      state_.v.emplace_back(p.numel(), T(0));
    }
  }

  // Current learning rate after step decay.
  double lr() const {
    if (opts_.halve_every == 0) return opts_.lr;
    return opts_.lr * std::pow(0.5, static_cast<double>(state_.epoch / opts_.halve_every));
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // Parameters without a gradient buffer are treated as having zero gradient.
  void step() {
    ++state_.step;
    const double lr_t = lr();
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(state_.step));
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      auto& m = state_.m[k];
      auto& v = state_.v[k];
      auto w = p.data();
      const bool has = p.has_grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const T g = has ? p.grad()[i] : T(0);
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        w[i] -= static_cast<T>(lr_t * mhat / (std::sqrt(vhat) + opts_.eps));
      }
    }
  }

  void end_epoch() { ++state_.epoch; }

  const AdamState<T>& state() const { return state_; }
  AdamState<T>& state() { return state_; }
  const AdamOptions& options() const { return opts_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamOptions opts_;
  AdamState<T> state_;
};

}  // namespace snapsci
