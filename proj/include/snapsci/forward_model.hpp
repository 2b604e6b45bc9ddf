#pragma once

// Snapshot compressive imaging encoders (CASSI and CACTI) and the
// structured sensing operator Phi = [D_1, ..., D_Nc].
//
// Coordinates: a cube is stored channel-major (C, H, W). CASSI shears
// channel c by shift_step * c columns along the width axis, anchored at
// channel 0, so the detector plane is H x (W + shift_step * (C - 1)).
// Vectorization concatenates the row-major flattening of each channel.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "snapsci/error.hpp"
#include "snapsci/tensor.hpp"

namespace snapsci {

template <class T>
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, T fill = T(0)) : height(h), width(w), data(h * w, fill) {}

  T& operator()(std::size_t h, std::size_t w) { return data[h * width + w]; }
  T operator()(std::size_t h, std::size_t w) const { return data[h * width + w]; }
  std::size_t size() const { return data.size(); }
};

template <class T>
struct Cube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<T> data;  // (C, H, W)
  std::vector<std::string> labels;

  Cube() = default;
  Cube(std::size_t h, std::size_t w, std::size_t c, T fill = T(0))
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  T& operator()(std::size_t h, std::size_t w, std::size_t c) { return data[(c * height + h) * width + w]; }
  T operator()(std::size_t h, std::size_t w, std::size_t c) const {
    return data[(c * height + h) * width + w];
  }

  std::span<T> channel(std::size_t c) { return std::span<T>(data).subspan(c * height * width, height * width); }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(data).subspan(c * height * width, height * width);
  }

  std::size_t size() const { return data.size(); }
  bool same_geometry(const Cube& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  // [1, C, H, W]
  Tensor<T> to_tensor() const { return Tensor<T>(Shape{1, channels, height, width}, data); }

  // Accepts [C, H, W] or [1, C, H, W]; a batched tensor selects sample `n`.
  static Cube from_tensor(const Tensor<T>& t, std::size_t n = 0) {
    if (t.rank() == 3) {
      Cube c(t.dim(1), t.dim(2), t.dim(0));
      c.data = t.values();
      return c;
    }
    if (t.rank() != 4 || n >= t.dim(0)) throw DimensionError("Cube::from_tensor: expected [N,C,H,W]");
    Cube c(t.dim(2), t.dim(3), t.dim(1));
    const auto per = c.size();
    std::copy(t.data().begin() + n * per, t.data().begin() + (n + 1) * per, c.data.begin());
    return c;
  }
};

// Stacks equally-shaped cubes into [N, C, H, W].
template <class T>
Tensor<T> stack_cubes(std::span<const Cube<T>> cubes) {
  if (cubes.empty()) throw DimensionError("stack_cubes: empty batch");
  const auto& f = cubes.front();
  Tensor<T> out(Shape{cubes.size(), f.channels, f.height, f.width});
  for (std::size_t n = 0; n < cubes.size(); ++n) {
    if (!cubes[n].same_geometry(f)) throw DimensionError("stack_cubes: mixed geometry");
    std::copy(cubes[n].data.begin(), cubes[n].data.end(), out.data().begin() + n * f.size());
  }
  return out;
}

enum class SciMode { Cassi, Cacti };

inline const char* to_string(SciMode m) { return m == SciMode::Cassi ? "cassi" : "cacti"; }

template <class T>
struct MaskSet {
  SciMode kind = SciMode::Cassi;
  std::size_t shift_step = 0;
  Image<T> base_mask;     // CASSI coded aperture, H x W (empty for CACTI)
  Cube<T> per_channel;    // H x W' x C, W' = W + shift_step * (C - 1)

  std::size_t channels() const { return per_channel.channels; }
  std::size_t height() const { return per_channel.height; }
  std::size_t sensor_width() const { return per_channel.width; }
  std::size_t source_width() const { return per_channel.width - shift_step * (channels() - 1); }
};

template <class T>
struct Measurement {
  Image<T> data;
  double noise_std = 0.0;
};

// Channel-wise Hadamard product with a single coded aperture.
template <class T>
Cube<T> modulate(const Cube<T>& cube, const Image<T>& mask) {
  if (mask.height != cube.height || mask.width != cube.width) {
    throw DimensionError("modulate: mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                         " vs cube " + std::to_string(cube.height) + "x" + std::to_string(cube.width));
  }
  Cube<T> out = cube;
  for (std::size_t c = 0; c < cube.channels; ++c) {
    auto ch = out.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] *= mask.data[i];
  }
  return out;
}

// Shears channel c right by shift_step * c columns; zero outside each support.
template <class T>
Cube<T> disperse(const Cube<T>& cube, std::size_t shift_step) {
  const std::size_t Wp = cube.width + shift_step * (cube.channels - 1);
  Cube<T> out(cube.height, Wp, cube.channels);
  out.labels = cube.labels;
  for (std::size_t c = 0; c < cube.channels; ++c)
    for (std::size_t h = 0; h < cube.height; ++h)
      for (std::size_t w = 0; w < cube.width; ++w) out(h, w + shift_step * c, c) = cube(h, w, c);
  return out;
}

// Inverse of disperse: crops each channel's support back to width `width`.
template <class T>
Cube<T> undisperse(const Cube<T>& sheared, std::size_t width, std::size_t shift_step) {
  if (sheared.width != width + shift_step * (sheared.channels - 1)) {
    throw DimensionError("undisperse: sheared width does not match geometry");
  }
  Cube<T> out(sheared.height, width, sheared.channels);
  out.labels = sheared.labels;
  for (std::size_t c = 0; c < sheared.channels; ++c)
    for (std::size_t h = 0; h < sheared.height; ++h)
      for (std::size_t w = 0; w < width; ++w) out(h, w, c) = sheared(h, w + shift_step * c, c);
  return out;
}

template <class T>
MaskSet<T> make_cassi_masks(const Image<T>& base_mask, std::size_t channels, std::size_t shift_step = 1) {
  if (channels == 0 || base_mask.height == 0 || base_mask.width == 0) {
    throw DimensionError("make_cassi_masks: empty geometry");
  }
  MaskSet<T> m;
  m.kind = SciMode::Cassi;
  m.shift_step = shift_step;
  m.base_mask = base_mask;
  Cube<T> tiled(base_mask.height, base_mask.width, channels);
  for (std::size_t c = 0; c < channels; ++c) std::copy(base_mask.data.begin(), base_mask.data.end(), tiled.channel(c).begin());
  m.per_channel = disperse(tiled, shift_step);
  return m;
}

template <class T>
MaskSet<T> make_cacti_masks(const Cube<T>& patterns) {
  if (patterns.size() == 0) throw DimensionError("make_cacti_masks: empty geometry");
  MaskSet<T> m;
  m.kind = SciMode::Cacti;
  m.shift_step = 0;
  m.per_channel = patterns;
  return m;
}

enum class MaskKind { Bernoulli, Gray };

struct MaskSpec {
  MaskKind kind = MaskKind::Bernoulli;
  double p = 0.5;      // Bernoulli probability of a transmitting pixel
  double low = 0.0;    // gray masks: uniform in [low, high]
  double high = 1.0;
};

template <class T>
Image<T> generate_mask(std::size_t height, std::size_t width, const MaskSpec& spec, std::uint64_t seed) {
  if (height == 0 || width == 0) throw ContractError("generate_mask: empty geometry");
  Image<T> mask(height, width);
  std::mt19937_64 rng(seed);
  if (spec.kind == MaskKind::Bernoulli) {
    if (!(spec.p >= 0.0 && spec.p <= 1.0)) throw ContractError("generate_mask: p must lie in [0, 1]");
    std::bernoulli_distribution draw(spec.p);
    for (auto& v : mask.data) v = draw(rng) ? T(1) : T(0);
  } else {
    if (!(spec.low >= 0.0 && spec.high <= 1.0 && spec.low <= spec.high)) {
      throw ContractError("generate_mask: gray range must satisfy 0 <= low <= high <= 1");
    }
    std::uniform_real_distribution<double> draw(spec.low, spec.high);
    for (auto& v : mask.data) v = static_cast<T>(draw(rng));
  }
  return mask;
}

// Per-sample noise level for training augmentation, uniform in [0, 0.05].
template <class Rng>
double sample_noise_std(Rng& rng) {
  std::uniform_real_distribution<double> draw(0.0, 0.05);
  return draw(rng);
}

// Phi as N_c diagonal blocks over the detector plane. The domain is the
// sheared cube (C x H x W'); the *_source variants fold the shear in and act
// on the original C x H x W cube.
template <class T>
class SensingOp {
 public:
  static constexpr double kRowFloor = 1e-8;

  SensingOp() = default;

  explicit SensingOp(const MaskSet<T>& masks)
      : channels_(masks.channels()),
        height_(masks.height()),
        sensor_width_(masks.sensor_width()),
        source_width_(masks.source_width()),
        shift_(masks.shift_step),
        diag_(masks.per_channel.data),
        rows_(height_ * sensor_width_, T(0)),
        inv_rows_(height_ * sensor_width_, T(0)) {
    const std::size_t n = pixels();
    for (std::size_t c = 0; c < channels_; ++c)
      for (std::size_t i = 0; i < n; ++i) rows_[i] += diag_[c * n + i] * diag_[c * n + i];
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<double>(rows_[i]) > kRowFloor) inv_rows_[i] = T(1) / rows_[i];
      else ++uncovered_;
    }
  }

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t sensor_width() const { return sensor_width_; }
  std::size_t source_width() const { return source_width_; }
  std::size_t shift_step() const { return shift_; }
  // Detector pixels n = H * W'.
  std::size_t pixels() const { return height_ * sensor_width_; }
  std::size_t sheared_size() const { return pixels() * channels_; }
  std::size_t source_size() const { return height_ * source_width_ * channels_; }

  std::span<const T> diagonal(std::size_t c) const {
    return std::span<const T>(diag_).subspan(c * pixels(), pixels());
  }
  // diag(Phi Phi^T)
  std::span<const T> row_norms() const { return rows_; }
  // Detector pixels no mask ever samples (R below the floor).
  std::size_t uncovered() const { return uncovered_; }

  std::vector<T> apply(std::span<const T> f) const {
    check(f.size(), sheared_size(), "apply");
    const std::size_t n = pixels();
    std::vector<T> y(n, T(0));
    for (std::size_t c = 0; c < channels_; ++c)
      for (std::size_t i = 0; i < n; ++i) y[i] += diag_[c * n + i] * f[c * n + i];
    return y;
  }

  std::vector<T> adjoint(std::span<const T> y) const {
    check(y.size(), pixels(), "adjoint");
    const std::size_t n = pixels();
    std::vector<T> f(sheared_size());
    for (std::size_t c = 0; c < channels_; ++c)
      for (std::size_t i = 0; i < n; ++i) f[c * n + i] = diag_[c * n + i] * y[i];
    return f;
  }

  void apply_source(std::span<const T> f, std::span<T> y) const {
    check(f.size(), source_size(), "apply_source");
    check(y.size(), pixels(), "apply_source");
    std::fill(y.begin(), y.end(), T(0));
    for (std::size_t c = 0; c < channels_; ++c)
      for (std::size_t h = 0; h < height_; ++h) {
        const T* src = f.data() + (c * height_ + h) * source_width_;
        const std::size_t row = h * sensor_width_ + shift_ * c;
        const T* d = diag_.data() + c * pixels() + row;
        T* out = y.data() + row;
        for (std::size_t w = 0; w < source_width_; ++w) out[w] += d[w] * src[w];
      }
  }

  void adjoint_source(std::span<const T> y, std::span<T> f) const {
    check(y.size(), pixels(), "adjoint_source");
    check(f.size(), source_size(), "adjoint_source");
    for (std::size_t c = 0; c < channels_; ++c)
      for (std::size_t h = 0; h < height_; ++h) {
        T* dst = f.data() + (c * height_ + h) * source_width_;
        const std::size_t row = h * sensor_width_ + shift_ * c;
        const T* d = diag_.data() + c * pixels() + row;
        const T* in = y.data() + row;
        for (std::size_t w = 0; w < source_width_; ++w) dst[w] = d[w] * in[w];
      }
  }

  std::vector<T> apply_source(std::span<const T> f) const {
    std::vector<T> y(pixels());
    apply_source(f, y);
    return y;
  }

  std::vector<T> adjoint_source(std::span<const T> y) const {
    std::vector<T> f(source_size());
    adjoint_source(y, f);
    return f;
  }

  // (Phi Phi^T)^{-1} applied in place; uncovered pixels are zeroed.
  void scale_by_inverse_rows(std::span<T> r) const {
    check(r.size(), pixels(), "scale_by_inverse_rows");
    for (std::size_t i = 0; i < r.size(); ++i) r[i] *= inv_rows_[i];
  }

 private:
  static void check(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
      throw DimensionError(std::string("SensingOp::") + what + ": length " + std::to_string(got) +
                           ", expected " + std::to_string(want));
    }
  }

  std::size_t channels_ = 0, height_ = 0, sensor_width_ = 0, source_width_ = 0, shift_ = 0;
  std::vector<T> diag_;
  std::vector<T> rows_;
  std::vector<T> inv_rows_;
  std::size_t uncovered_ = 0;
};

template <class T>
SensingOp<T> build_sensing_op(const MaskSet<T>& masks) {
  return SensingOp<T>(masks);
}

template <class T>
void check_geometry(const Cube<T>& cube, const MaskSet<T>& masks, const char* what) {
  if (cube.channels != masks.channels() || cube.height != masks.height() ||
      cube.width != masks.source_width()) {
    throw DimensionError(std::string(what) + ": cube " + std::to_string(cube.height) + "x" +
                         std::to_string(cube.width) + "x" + std::to_string(cube.channels) +
                         " does not match masks " + std::to_string(masks.height()) + "x" +
                         std::to_string(masks.source_width()) + "x" + std::to_string(masks.channels()));
  }
}

// Y = sum_c disperse(F)_c * M_c + G, G ~ N(0, noise_std^2) i.i.d.
template <class T>
Measurement<T> measure(const Cube<T>& cube, const MaskSet<T>& masks, double noise_std = 0.0,
                       std::uint64_t seed = 0) {
  check_geometry(cube, masks, "measure");
  if (noise_std < 0.0) throw ContractError("measure: noise_std must be non-negative");
  const Cube<T> sheared = disperse(cube, masks.shift_step);
  Measurement<T> m;
  m.noise_std = noise_std;
  m.data = Image<T>(masks.height(), masks.sensor_width());
  const std::size_t n = m.data.size();
  for (std::size_t c = 0; c < cube.channels; ++c) {
    auto f = sheared.channel(c);
    auto d = masks.per_channel.channel(c);
    for (std::size_t i = 0; i < n; ++i) m.data.data[i] += f[i] * d[i];
  }
  if (noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& v : m.data.data) v += static_cast<T>(noise(rng));
  }
  return m;
}

// Network input: each channel is the measurement times that channel's
// shifted mask, shifted back onto the H x W source grid (= crop of Phi^T y).
template <class T>
Cube<T> init_input(const Measurement<T>& meas, const MaskSet<T>& masks) {
  if (meas.data.height != masks.height() || meas.data.width != masks.sensor_width()) {
    throw DimensionError("init_input: measurement " + std::to_string(meas.data.height) + "x" +
                         std::to_string(meas.data.width) + " vs mask detector plane " +
                         std::to_string(masks.height()) + "x" + std::to_string(masks.sensor_width()));
  }
  Cube<T> out(masks.height(), masks.source_width(), masks.channels());
  for (std::size_t c = 0; c < out.channels; ++c)
    for (std::size_t h = 0; h < out.height; ++h)
      for (std::size_t w = 0; w < out.width; ++w) {
        const std::size_t col = w + masks.shift_step * c;
        out(h, w, c) = masks.per_channel(h, col, c) * meas.data(h, col);
      }
  return out;
}

}  // namespace snapsci
