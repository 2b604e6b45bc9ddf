#pragma once

// Differentiable primitives for the SRN / CAE / GAP networks. All image
// tensors are N,C,H,W row-major.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "snapsci/tensor.hpp"

namespace snapsci {

namespace detail {

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

// Valid output columns [lo, hi) for kernel tap `kx`: 0 <= o*stride + kx - pad < in.
inline void tap_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t kx,
                      std::size_t pad, std::size_t& lo, std::size_t& hi) {
  const long s = static_cast<long>(stride);
  const long off = static_cast<long>(kx) - static_cast<long>(pad);
  long first = off >= 0 ? 0 : (-off + s - 1) / s;
  long last = (static_cast<long>(in) - 1 - off);
  last = last < 0 ? -1 : last / s;
  first = std::max(first, 0L);
  last = std::min(last, static_cast<long>(out) - 1);
  lo = static_cast<std::size_t>(first);
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

// How `y` combines with `x` in the binary elementwise ops.
enum class Broadcast { None, Channel };

template <class T>
Broadcast broadcast_kind(const Tensor<T>& x, const Tensor<T>& y, const char* op) {
  if (x.shape() == y.shape()) return Broadcast::None;
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  if (xs.size() == 4) {
    const bool nc = ys.size() == 2 && ys[0] == xs[0] && ys[1] == xs[1];
    const bool nc11 = ys.size() == 4 && ys[0] == xs[0] && ys[1] == xs[1] && ys[2] == 1 && ys[3] == 1;
    if (nc || nc11) return Broadcast::Channel;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(ys) + " onto " + shape_str(xs));
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t padding = 0) {
  detail::require_rank(input.shape(), 4, "conv2d input");
  detail::require_rank(weight.shape(), 4, "conv2d weight");
  const std::size_t N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Co = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != Ci) {
    throw DimensionError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                         " input channels, input has " + std::to_string(Ci));
  }
  if (weight.dim(3) != k || k % 2 == 0) throw DimensionError("conv2d: kernel must be square and odd");
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (bias.defined() && (bias.numel() != Co)) throw DimensionError("conv2d: bias size mismatch");
  if (H + 2 * padding < k || W + 2 * padding < k) throw DimensionError("conv2d: input smaller than kernel");
  const std::size_t Ho = (H + 2 * padding - k) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - k) / stride + 1;

  Tensor<T> out(Shape{N, Co, Ho, Wo});
  const T* in = input.data().data();
  const T* wt = weight.data().data();
  T* o = out.data().data();

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      T* oplane = o + (n * Co + co) * Ho * Wo;
      const T b = bias.defined() ? bias.data()[co] : T(0);
      std::fill(oplane, oplane + Ho * Wo, b);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* iplane = in + (n * Ci + ci) * H * W;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t oy0, oy1;
          detail::tap_range(Ho, H, stride, ky, padding, oy0, oy1);
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ox0, ox1;
            detail::tap_range(Wo, W, stride, kx, padding, ox0, ox1);
            const T wv = wt[((co * Ci + ci) * k + ky) * k + kx];
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const T* irow = iplane + (oy * stride + ky - padding) * W;
              T* orow = oplane + oy * Wo;
              for (std::size_t ox = ox0; ox < ox1; ++ox) {
                orow[ox] += wv * irow[ox * stride + kx - padding];
              }
            }
          }
        }
      }
    }
  }

  if (auto* tape = detail::tracking_tape<T>({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record("conv2d", {input, weight, bias}, out,
                 [input, weight, bias, out, stride, padding, N, Ci, H, W, Co, k, Ho, Wo]() mutable {
                   const T* go = out.grad().data();
                   const T* in = input.data().data();
                   const T* wt = weight.data().data();
                   T* gi = input.requires_grad() ? input.mutable_grad().data() : nullptr;
                   T* gw = weight.requires_grad() ? weight.mutable_grad().data() : nullptr;
                   if (bias.defined() && bias.requires_grad()) {
                     T* gb = bias.mutable_grad().data();
                     for (std::size_t n = 0; n < N; ++n)
                       for (std::size_t co = 0; co < Co; ++co) {
                         const T* g = go + (n * Co + co) * Ho * Wo;
                         T acc = 0;
                         for (std::size_t i = 0; i < Ho * Wo; ++i) acc += g[i];
                         gb[co] += acc;
                       }
                   }
                   if (gi == nullptr && gw == nullptr) return;
                   for (std::size_t n = 0; n < N; ++n) {
                     for (std::size_t co = 0; co < Co; ++co) {
                       const T* gplane = go + (n * Co + co) * Ho * Wo;
                       for (std::size_t ci = 0; ci < Ci; ++ci) {
                         const std::size_t ioff = (n * Ci + ci) * H * W;
                         for (std::size_t ky = 0; ky < k; ++ky) {
                           std::size_t oy0, oy1;
                           detail::tap_range(Ho, H, stride, ky, padding, oy0, oy1);
                           for (std::size_t kx = 0; kx < k; ++kx) {
                             std::size_t ox0, ox1;
                             detail::tap_range(Wo, W, stride, kx, padding, ox0, ox1);
                             const std::size_t widx = ((co * Ci + ci) * k + ky) * k + kx;
                             const T wv = wt[widx];
                             T wacc = 0;
                             for (std::size_t oy = oy0; oy < oy1; ++oy) {
                               const std::size_t irow = ioff + (oy * stride + ky - padding) * W;
                               const T* grow = gplane + oy * Wo;
                               for (std::size_t ox = ox0; ox < ox1; ++ox) {
                                 const std::size_t ii = irow + ox * stride + kx - padding;
                                 if (gi) gi[ii] += wv * grow[ox];
                                 wacc += in[ii] * grow[ox];
                               }
                             }
                             if (gw) gw[widx] += wacc;
                           }
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
  if (auto* tape = detail::tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("relu", {x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      auto xd = x.data();
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] > T(0)) gx[i] += g[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const T v = xd[i];
    if (v >= T(0)) {
      od[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      od[i] = e / (T(1) + e);
    }
  }
  if (auto* tape = detail::tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("sigmoid", {x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto s = out.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (T(1) - s[i]);
    });
  }
  return out;
}

// [N,C,H,W] -> [N,C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (HW == 0) throw DimensionError("global_avg_pool: empty spatial extent");
  Tensor<T> out(Shape{N, C});
  auto xd = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    T acc = 0;
    for (std::size_t i = 0; i < HW; ++i) acc += xd[nc * HW + i];
    out.data()[nc] = acc / static_cast<T>(HW);
  }
  if (auto* tape = detail::tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("global_avg_pool", {x}, out, [x, out, N, C, HW]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t nc = 0; nc < N * C; ++nc) {
        const T share = g[nc] / static_cast<T>(HW);
        for (std::size_t i = 0; i < HW; ++i) gx[nc * HW + i] += share;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), x.values());
  if (auto* tape = detail::tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("reshape", {x}, out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

namespace detail {

// Index map shared by pixel_shuffle and its inverse: for each element of the
// shuffled [N,C,H*r,W*r] tensor, its flat index in the [N,C*r*r,H,W] tensor.
inline std::vector<std::size_t> shuffle_map(std::size_t N, std::size_t C, std::size_t H,
                                            std::size_t W, std::size_t r) {
  std::vector<std::size_t> map(N * C * H * r * W * r);
  const std::size_t Hr = H * r, Wr = W * r;
  std::size_t idx = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < Hr; ++y)
        for (std::size_t x = 0; x < Wr; ++x) {
          const std::size_t h = y / r, i = y % r, w = x / r, j = x % r;
          const std::size_t cin = c * r * r + i * r + j;
          map[idx++] = ((n * C * r * r + cin) * H + h) * W + w;
        }
  return map;
}

template <class T>
Tensor<T> gather_op(const Tensor<T>& x, Shape shape, std::vector<std::size_t> map, bool forward,
                    const char* name) {
  Tensor<T> out(std::move(shape));
  auto xd = x.data();
  auto od = out.data();
  // forward: out[i] = x[map[i]]; inverse: out[map[i]] = x[i]
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (forward) od[i] = xd[map[i]];
    else od[map[i]] = xd[i];
  }
  if (auto* tape = tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record(name, {x}, out, [x, out, map = std::move(map), forward]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < map.size(); ++i) {
        if (forward) gx[map[i]] += g[i];
        else gx[i] += g[map[i]];
      }
    });
  }
  return out;
}

}  // namespace detail

// [N, C*r*r, H, W] -> [N, C, H*r, W*r]
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  detail::require_rank(x.shape(), 4, "pixel_shuffle");
  if (r == 0) throw ContractError("pixel_shuffle: scale must be positive");
  const std::size_t N = x.dim(0), Cr = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (Cr % (r * r) != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(Cr) + " channels not divisible by r^2 = " +
                         std::to_string(r * r));
  }
  const std::size_t C = Cr / (r * r);
  return detail::gather_op(x, Shape{N, C, H * r, W * r}, detail::shuffle_map(N, C, H, W, r), true,
                           "pixel_shuffle");
}

// [N, C, H*r, W*r] -> [N, C*r*r, H, W]
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  detail::require_rank(x.shape(), 4, "pixel_unshuffle");
  if (r == 0) throw ContractError("pixel_unshuffle: scale must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), Hr = x.dim(2), Wr = x.dim(3);
  if (Hr % r != 0 || Wr % r != 0) throw DimensionError("pixel_unshuffle: spatial size not divisible by r");
  const std::size_t H = Hr / r, W = Wr / r;
  return detail::gather_op(x, Shape{N, C * r * r, H, W}, detail::shuffle_map(N, C, H, W, r), false,
                           "pixel_unshuffle");
}

namespace detail {

template <class T, class Fwd, class GradX, class GradY>
Tensor<T> binary_op(const Tensor<T>& x, const Tensor<T>& y, const char* name, Fwd fwd, GradX gx_fn,
                    GradY gy_fn) {
  const Broadcast kind = broadcast_kind(x, y, name);
  const std::size_t plane = kind == Broadcast::Channel ? x.dim(2) * x.dim(3) : 1;
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto yd = y.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i], yd[i / plane]);
  if (auto* tape = tracking_tape<T>({&x, &y})) {
    out.set_requires_grad(true);
    tape->record(name, {x, y}, out, [x, y, out, plane, gx_fn, gy_fn]() mutable {
      auto g = out.grad();
      auto xd = x.data();
      auto yd = y.data();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gx_fn(xd[i], yd[i / plane]);
      }
      if (y.requires_grad()) {
        // Broadcast axes are summed.
        auto gy = y.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gy[i / plane] += g[i] * gy_fn(xd[i], yd[i / plane]);
      }
    });
  }
  return out;
}

}  // namespace detail

// y may match x or be an [N,C] / [N,C,1,1] per-channel tensor.
template <class T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y) {
  return detail::binary_op(
      x, y, "add", [](T a, T b) { return a + b; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& x, const Tensor<T>& y) {
  return detail::binary_op(
      x, y, "sub", [](T a, T b) { return a - b; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& x, const Tensor<T>& y) {
  return detail::binary_op(
      x, y, "mul", [](T a, T b) { return a * b; }, [](T, T b) { return b; }, [](T a, T) { return a; });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  Tensor<T> out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] * s;
  if (auto* tape = detail::tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("scale", {x}, out, [x, out, s]() mutable {
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
    });
  }
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (auto* tape = detail::tracking_tape<T>({&x})) {
    out.set_requires_grad(true);
    tape->record("sum", {x}, out, [x, out]() mutable {
      const T g = out.grad()[0];
      for (T& v : x.mutable_grad()) v += g;
    });
  }
  return out;
}

// Mean of squared differences.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred.shape(), target.shape(), "mse_loss");
  auto p = pred.data();
  auto t = target.data();
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  const T n = static_cast<T>(p.size());
  Tensor<T> out = Tensor<T>::scalar(acc / n);
  if (auto* tape = detail::tracking_tape<T>({&pred, &target})) {
    out.set_requires_grad(true);
    tape->record("mse_loss", {pred, target}, out, [pred, target, out, n]() mutable {
      const T g = out.grad()[0] * T(2) / n;
      auto p = pred.data();
      auto t = target.data();
      if (pred.requires_grad()) {
        auto gp = pred.mutable_grad();
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * (p[i] - t[i]);
      }
      if (target.requires_grad()) {
        auto gt = target.mutable_grad();
        for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= g * (p[i] - t[i]);
      }
    });
  }
  return out;
}

// Mean over the leading (batch) axis of per-sample Euclidean norms of
// pred - target. With a batch of one this is the plain L2 norm. The value is
// exact; the backward denominator is sqrt(||d||^2 + eps) so a zero residual
// yields a zero gradient instead of NaN.
template <class T>
Tensor<T> batch_l2_norm_loss(const Tensor<T>& pred, const Tensor<T>& target, T eps = T(1e-12)) {
  detail::require_same_shape(pred.shape(), target.shape(), "l2_norm_loss");
  const std::size_t batch = pred.rank() > 1 ? pred.dim(0) : 1;
  const std::size_t per = pred.numel() / batch;
  auto p = pred.data();
  auto t = target.data();
  std::vector<T> sq(batch, T(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) sq[b] += (p[i] - t[i]) * (p[i] - t[i]);
  T total = 0;
  for (T s : sq) total += std::sqrt(s);
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(batch));
  if (auto* tape = detail::tracking_tape<T>({&pred, &target})) {
    out.set_requires_grad(true);
    tape->record("l2_norm_loss", {pred, target}, out, [pred, target, out, sq, batch, per, eps]() mutable {
      const T g = out.grad()[0] / static_cast<T>(batch);
      auto p = pred.data();
      auto t = target.data();
      for (std::size_t b = 0; b < batch; ++b) {
        const T coef = g / std::sqrt(sq[b] + eps);
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
          const T d = coef * (p[i] - t[i]);
          if (pred.requires_grad()) pred.mutable_grad()[i] += d;
          if (target.requires_grad()) target.mutable_grad()[i] -= d;
        }
      }
    });
  }
  return out;
}

// Euclidean norm of the flattened difference.
template <class T>
Tensor<T> l2_norm_loss(const Tensor<T>& pred, const Tensor<T>& target, T eps = T(1e-12)) {
  detail::require_same_shape(pred.shape(), target.shape(), "l2_norm_loss");
  return batch_l2_norm_loss(reshape(pred, Shape{1, pred.numel()}),
                            reshape(target, Shape{1, target.numel()}), eps);
}

}  // namespace snapsci
