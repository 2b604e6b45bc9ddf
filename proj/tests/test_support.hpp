#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "snapsci/snapsci.hpp"

namespace snapsci::testing {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline Cube<double> random_cube(std::size_t H, std::size_t W, std::size_t C, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Cube<double> c(H, W, C);
  for (auto& v : c.data) v = u(rng);
  return c;
}

struct GradCheck {
  double worst = 0.0;
  std::string where;
};

// Central differences of `loss()` against the analytic gradient of every
// listed tensor. Relative error uses max(|fd|, |an|) with an absolute floor,
// so entries whose true gradient is ~0 are compared absolutely.
inline GradCheck finite_difference_check(const std::function<Tensor<double>()>& loss,
                                         const std::vector<std::pair<std::string, Tensor<double>>>& wrt,
                                         double h = 1e-6, double floor = 1e-7) {
  for (const auto& [_, t] : wrt) t.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(loss());
  }
  GradCheck out;
  NoGradScope<double> no_grad;
  for (const auto& [name, handle] : wrt) {
    Tensor<double> t = handle;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double old = t.data()[i];
      auto at = [&](double x) {
        t.data()[i] = x;
        return loss().item();
      };
      const double fd = (at(old + h) - at(old - h)) / (2.0 * h);
      t.data()[i] = old;
      const double rel = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), floor});
      if (rel > out.worst) {
        out.worst = rel;
        out.where = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

// Dense Phi built straight from the coded aperture and the shear, with the
// source cube vectorized as (C, H, W) row-major and the detector as (H, W').
inline std::vector<std::vector<double>> dense_phi(const MaskSet<double>& masks) {
  const std::size_t C = masks.channels(), H = masks.height(), Ws = masks.source_width(), Wp = masks.sensor_width();
  std::vector<std::vector<double>> phi(H * Wp, std::vector<double>(C * H * Ws, 0.0));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < Ws; ++w) {
        const std::size_t col = (c * H + h) * Ws + w;
        const std::size_t wp = w + masks.shift_step * c;
        const double m = masks.kind == SciMode::Cassi ? masks.base_mask(h, w) : masks.per_channel(h, w, c);
        phi[h * Wp + wp][col] = m;
      }
  return phi;
}

inline std::vector<double> matvec(const std::vector<std::vector<double>>& A, const std::vector<double>& x) {
  std::vector<double> y(A.size(), 0.0);
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += A[i][j] * x[j];
  return y;
}

inline std::vector<double> matvec_t(const std::vector<std::vector<double>>& A, const std::vector<double>& y) {
  std::vector<double> x(A.front().size(), 0.0);
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += A[i][j] * y[i];
  return x;
}

// Gaussian elimination with partial pivoting on a dense square system.
inline std::vector<double> dense_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = A.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A[i][k]) > std::abs(A[piv][k])) piv = i;
    std::swap(A[k], A[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = A[i][k] / A[k][k];
      for (std::size_t j = k; j < n; ++j) A[i][j] -= f * A[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= A[i][j] * x[j];
    x[i] = acc / A[i][i];
  }
  return x;
}

// v + Phi^T (Phi Phi^T)^{-1} (y - Phi v), with Phi Phi^T formed densely.
inline std::vector<double> dense_projection(const std::vector<std::vector<double>>& phi, const std::vector<double>& v,
                                            const std::vector<double>& y) {
  const std::size_t m = phi.size();
  std::vector<std::vector<double>> G(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < phi[i].size(); ++k) G[i][j] += phi[i][k] * phi[j][k];
  std::vector<double> r = matvec(phi, v);
  for (std::size_t i = 0; i < m; ++i) r[i] = y[i] - r[i];
  const std::vector<double> z = dense_solve(G, r);
  std::vector<double> f = matvec_t(phi, z);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += v[i];
  return f;
}

// Gray mask in [0.2, 1]: every detector pixel is covered, so R > 0.
inline Image<double> covered_mask(std::size_t H, std::size_t W, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Image<double> m(H, W);
  for (auto& v : m.data) v = u(rng);
  return m;
}

inline Image<double> binary_mask(std::size_t H, std::size_t W, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.5);
  Image<double> m(H, W);
  for (auto& v : m.data) v = b(rng) ? 1.0 : 0.0;
  return m;
}

// Straight-line SRN-tiny forward on raw arrays, no tape: conv by loops.
inline std::vector<double> conv_ref(const std::vector<double>& x, std::size_t C, std::size_t H, std::size_t W,
                                    const Tensor<double>& w, const Tensor<double>& b, std::size_t stride,
                                    std::size_t pad, std::size_t& Ho, std::size_t& Wo) {
  const std::size_t Co = w.dim(0), k = w.dim(2);
  Ho = (H + 2 * pad - k) / stride + 1;
  Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<double> y(Co * Ho * Wo, 0.0);
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double acc = b.data()[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t q = 0; q < k; ++q) {
              const long hi = static_cast<long>(i * stride + p) - static_cast<long>(pad);
              const long wi = static_cast<long>(j * stride + q) - static_cast<long>(pad);
              if (hi < 0 || wi < 0 || hi >= static_cast<long>(H) || wi >= static_cast<long>(W)) continue;
              acc += w(o, c, p, q) * x[(c * H + hi) * W + wi];
            }
        y[(o * Ho + i) * Wo + j] = acc;
      }
  return y;
}

}  // namespace snapsci::testing
