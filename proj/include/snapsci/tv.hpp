#pragma once

// Anisotropic total-variation denoising (Chambolle dual projection) and the
// training-free GAP-TV reconstruction built on it.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "snapsci/forward_model.hpp"
#include "snapsci/gap.hpp"

namespace snapsci {

// Anisotropic TV of one H x W plane: sum of |forward differences|.
template <class T>
double total_variation(std::span<const T> img, std::size_t H, std::size_t W) {
  double tv = 0.0;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) {
      const double v = img[h * W + w];
      if (w + 1 < W) tv += std::abs(static_cast<double>(img[h * W + w + 1]) - v);
      if (h + 1 < H) tv += std::abs(static_cast<double>(img[(h + 1) * W + w]) - v);
    }
  return tv;
}

template <class T>
double total_variation(const Cube<T>& cube) {
  double tv = 0.0;
  for (std::size_t c = 0; c < cube.channels; ++c) tv += total_variation<T>(cube.channel(c), cube.height, cube.width);
  return tv;
}

namespace detail {

// argmin_u 0.5 ||u - x||^2 + lambda * TV_aniso(u) for one plane.
template <class T>
void tv_denoise_plane(std::span<const T> x, std::span<T> u, std::size_t H, std::size_t W, double lambda,
                      std::size_t iters) {
  const std::size_t n = H * W;
  std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0), d(n, 0.0);
  const double tau = 0.24;
  auto divergence = [&]() {
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const std::size_t i = h * W + w;
        double dx = (w + 1 < W ? px[i] : 0.0) - (w > 0 ? px[i - 1] : 0.0);
        double dy = (h + 1 < H ? py[i] : 0.0) - (h > 0 ? py[i - W] : 0.0);
        div[i] = dx + dy;
      }
  };
  for (std::size_t it = 0; it < iters; ++it) {
    divergence();
    for (std::size_t i = 0; i < n; ++i) d[i] = div[i] - static_cast<double>(x[i]) / lambda;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const std::size_t i = h * W + w;
        const double gx = w + 1 < W ? d[i + 1] - d[i] : 0.0;
        const double gy = h + 1 < H ? d[i + W] - d[i] : 0.0;
        px[i] = std::clamp(px[i] + tau * gx, -1.0, 1.0);
        py[i] = std::clamp(py[i] + tau * gy, -1.0, 1.0);
      }
  }
  divergence();
  for (std::size_t i = 0; i < n; ++i) u[i] = static_cast<T>(static_cast<double>(x[i]) - lambda * div[i]);
}

}  // namespace detail

// Channel-wise 2-D TV denoising.
template <class T>
Cube<T> tv_denoise(const Cube<T>& x, double lambda, std::size_t iters) {
  if (!(lambda > 0.0)) throw ContractError("tv_denoise: lambda must be positive");
  if (iters == 0) throw ContractError("tv_denoise: iters must be >= 1");
  Cube<T> out = x;
  for (std::size_t c = 0; c < x.channels; ++c)
    detail::tv_denoise_plane<T>(x.channel(c), out.channel(c), x.height, x.width, lambda, iters);
  return out;
}

template <class T>
struct GapTvResult {
  Cube<T> estimate;
  std::vector<double> residuals;  // ||y - Phi f^(s)|| right after each projection
};

// Alternates the closed-form projection with TV denoising, starting from
// Phi^T y. Zero iterations return the back-projection. `on_iteration`, if
// set, sees each denoised estimate.
template <class T>
GapTvResult<T> gap_tv_reconstruct(const Measurement<T>& meas, const MaskSet<T>& masks, double lambda,
                                  std::size_t iters, std::size_t tv_iters = 20,
                                  const std::function<void(std::size_t, const Cube<T>&)>& on_iteration = {}) {
  const SensingOp<T> op(masks);
  GapTvResult<T> result;
  result.estimate = init_input(meas, masks);
  std::span<const T> y(meas.data.data);
  Cube<T> f = result.estimate;
  for (std::size_t it = 0; it < iters; ++it) {
    gap_project_source<T>(result.estimate.data, op, y, f.data);
    const auto r = op.apply_source(f.data);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) acc += (static_cast<double>(y[i]) - r[i]) * (static_cast<double>(y[i]) - r[i]);
    result.residuals.push_back(std::sqrt(acc));
    result.estimate = tv_denoise(f, lambda, tv_iters);
    if (on_iteration) on_iteration(it + 1, result.estimate);
  }
  return result;
}

}  // namespace snapsci
