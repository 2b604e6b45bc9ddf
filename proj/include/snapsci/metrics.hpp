#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "snapsci/forward_model.hpp"

namespace snapsci {

struct MetricReport {
  std::vector<double> channel_psnr;  // +inf marks an exact channel
  double mean_psnr = 0.0;            // over finite channels only
  double mean_ssim = std::numeric_limits<double>::quiet_NaN();
  std::size_t excluded_channels = 0;
  std::size_t height = 0, width = 0, channels = 0;
};

// Channel-first PSNR: each channel uses its own ground-truth peak, and the
// channel values are averaged (not the pooled MSE).
template <class T>
MetricReport psnr(const Cube<T>& pred, const Cube<T>& gt) {
  if (!pred.same_geometry(gt)) throw DimensionError("psnr: shape mismatch");
  MetricReport rep;
  rep.height = gt.height;
  rep.width = gt.width;
  rep.channels = gt.channels;
  double acc = 0.0;
  std::size_t finite = 0;
  for (std::size_t c = 0; c < gt.channels; ++c) {
    auto g = gt.channel(c);
    auto p = pred.channel(c);
    double peak = 0.0, mse = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      peak = std::max(peak, static_cast<double>(g[i]));
      const double d = static_cast<double>(p[i]) - static_cast<double>(g[i]);
      mse += d * d;
    }
    if (!(peak > 0.0)) throw ContractError("psnr: ground-truth channel " + std::to_string(c) + " has no positive peak");
    mse /= static_cast<double>(g.size());
    if (mse == 0.0) {
      rep.channel_psnr.push_back(std::numeric_limits<double>::infinity());
      ++rep.excluded_channels;
      continue;
    }
    const double v = 10.0 * std::log10(peak * peak / mse);
    rep.channel_psnr.push_back(v);
    acc += v;
    ++finite;
  }
  if (rep.excluded_channels > 0) {
    warn("psnr: " + std::to_string(rep.excluded_channels) + " channel(s) reconstructed exactly; excluded from the mean");
  }
  rep.mean_psnr = finite ? acc / static_cast<double>(finite) : std::numeric_limits<double>::infinity();
  return rep;
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  std::vector<double> k(size);
  const double mid = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - mid;
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

inline double ssim_term(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

// Separable valid-mode filter of one plane.
inline std::vector<double> filter_valid(const std::vector<double>& img, std::size_t H, std::size_t W,
                                        const std::vector<double>& k) {
  const std::size_t K = k.size(), Ho = H - K + 1, Wo = W - K + 1;
  std::vector<double> rows(H * Wo, 0.0), out(Ho * Wo, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < Wo; ++w) {
      double acc = 0.0;
      for (std::size_t i = 0; i < K; ++i) acc += k[i] * img[h * W + w + i];
      rows[h * Wo + w] = acc;
    }
  for (std::size_t h = 0; h < Ho; ++h)
    for (std::size_t w = 0; w < Wo; ++w) {
      double acc = 0.0;
      for (std::size_t i = 0; i < K; ++i) acc += k[i] * rows[(h + i) * Wo + w];
      out[h * Wo + w] = acc;
    }
  return out;
}

}  // namespace detail

// Gaussian-windowed SSIM averaged over all valid window positions. Images
// smaller than the window fall back to a single global window.
template <class T>
double ssim(const Image<T>& pred, const Image<T>& gt, const SsimOptions& opt = {}) {
  if (pred.height != gt.height || pred.width != gt.width) throw DimensionError("ssim: shape mismatch");
  if (gt.size() == 0) throw DimensionError("ssim: empty image");
  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const std::size_t H = gt.height, W = gt.width;
  if (H < opt.window || W < opt.window) {
    warn("ssim: image smaller than the " + std::to_string(opt.window) + "x" + std::to_string(opt.window) +
         " window; using global statistics");
    const double n = static_cast<double>(gt.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      mx += pred.data[i];
      my += gt.data[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const double a = pred.data[i] - mx, b = gt.data[i] - my;
      vx += a * a;
      vy += b * b;
      cxy += a * b;
    }
    return detail::ssim_term(mx, my, vx / n, vy / n, cxy / n, c1, c2);
  }
  const auto k = detail::gaussian_kernel(opt.window, opt.sigma);
  std::vector<double> x(pred.data.begin(), pred.data.end()), y(gt.data.begin(), gt.data.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = detail::filter_valid(x, H, W, k);
  const auto my = detail::filter_valid(y, H, W, k);
  const auto sxx = detail::filter_valid(xx, H, W, k);
  const auto syy = detail::filter_valid(yy, H, W, k);
  const auto sxy = detail::filter_valid(xy, H, W, k);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    acc += detail::ssim_term(mx[i], my[i], sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i],
                             c1, c2);
  }
  return acc / static_cast<double>(mx.size());
}

template <class T>
Image<T> channel_image(const Cube<T>& cube, std::size_t c) {
  Image<T> img(cube.height, cube.width);
  auto ch = cube.channel(c);
  std::copy(ch.begin(), ch.end(), img.data.begin());
  return img;
}

// Mean SSIM over channels.
template <class T>
double ssim(const Cube<T>& pred, const Cube<T>& gt, const SsimOptions& opt = {}) {
  if (!pred.same_geometry(gt)) throw DimensionError("ssim: shape mismatch");
  double acc = 0.0;
  for (std::size_t c = 0; c < gt.channels; ++c) acc += ssim(channel_image(pred, c), channel_image(gt, c), opt);
  return acc / static_cast<double>(gt.channels);
}

template <class T>
MetricReport evaluate(const Cube<T>& pred, const Cube<T>& gt, const SsimOptions& opt = {}) {
  MetricReport rep = psnr(pred, gt);
  rep.mean_ssim = ssim(pred, gt, opt);
  return rep;
}

}  // namespace snapsci
