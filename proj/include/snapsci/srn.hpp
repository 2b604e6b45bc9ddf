#pragma once

// Stacked residual network: head conv, a stack of CONV-ReLU-CONV residual
// blocks (optionally with channel attention), a global CONV(F_Y) branch and
// a tail conv, with optional stride/pixel-shuffle rescaling pairs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "snapsci/npy.hpp"
#include "snapsci/ops.hpp"

namespace snapsci {

// v1: no rescaling pair; v2: one pair around the block stack; v3: v2 plus an
// inner pair around the middle `inner_blocks` blocks.
enum class SrnVariant { V1, V2, V3 };

inline const char* to_string(SrnVariant v) {
  switch (v) {
    case SrnVariant::V1: return "v1";
    case SrnVariant::V2: return "v2";
    case SrnVariant::V3: return "v3";
  }
  return "?";
}

inline SrnVariant parse_variant(const std::string& s) {
  if (s == "v1") return SrnVariant::V1;
  if (s == "v2") return SrnVariant::V2;
  if (s == "v3") return SrnVariant::V3;
  throw ContractError("unknown SRN variant '" + s + "'");
}

struct SrnConfig {
  std::size_t in_channels = 28;
  std::size_t width = 64;
  std::size_t num_blocks = 16;
  std::size_t kernel = 3;
  bool use_cae = false;
  std::size_t cae_reduction = 2;
  SrnVariant variant = SrnVariant::V1;
  std::size_t rescale_scale = 2;
  std::size_t inner_blocks = 8;

  // Two blocks, eight features: the scale used for gradient checks.
  static SrnConfig tiny(std::size_t in_channels, bool cae = false) {
    SrnConfig c;
    c.in_channels = in_channels;
    c.width = 8;
    c.num_blocks = 2;
    c.use_cae = cae;
    return c;
  }

  void validate() const {
    if (in_channels == 0) throw ContractError("SrnConfig: in_channels must be positive");
    if (width < in_channels) throw ContractError("SrnConfig: width must be >= in_channels");
    if (num_blocks == 0) throw ContractError("SrnConfig: num_blocks must be >= 1");
    if (kernel % 2 == 0) throw ContractError("SrnConfig: kernel must be odd");
    if (use_cae && (cae_reduction == 0 || width % cae_reduction != 0)) {
      throw ContractError("SrnConfig: width must be divisible by cae_reduction");
    }
    if (variant != SrnVariant::V1 && rescale_scale < 2) throw ContractError("SrnConfig: rescale_scale must be >= 2");
    if (variant == SrnVariant::V3 && (inner_blocks == 0 || inner_blocks > num_blocks)) {
      throw ContractError("SrnConfig: inner_blocks must satisfy 0 < K <= num_blocks");
    }
  }

  // First block wrapped by the v3 inner pair.
  std::size_t inner_begin() const { return (num_blocks - inner_blocks) / 2; }
  std::size_t inner_end() const { return inner_begin() + inner_blocks; }

  // Input H and W must be multiples of this.
  std::size_t spatial_divisor() const {
    switch (variant) {
      case SrnVariant::V1: return 1;
      case SrnVariant::V2: return rescale_scale;
      case SrnVariant::V3: return rescale_scale * rescale_scale;
    }
    return 1;
  }

  bool operator==(const SrnConfig&) const = default;
};

inline nlohmann::json to_json(const SrnConfig& c) {
  return {{"in_channels", c.in_channels}, {"width", c.width},
          {"num_blocks", c.num_blocks},   {"kernel", c.kernel},
          {"use_cae", c.use_cae},         {"cae_reduction", c.cae_reduction},
          {"variant", to_string(c.variant)}, {"rescale_scale", c.rescale_scale},
          {"inner_blocks", c.inner_blocks}};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ContractError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ContractError(where + ": unknown key '" + key + "'");
  }
}

template <class V>
void read_key(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline SrnConfig srn_config_from_json(const nlohmann::json& j, const std::string& where = "srn") {
  detail::reject_unknown_keys(j, {"in_channels", "width", "num_blocks", "kernel", "use_cae", "cae_reduction",
                                  "variant", "rescale_scale", "inner_blocks"},
                              where);
  SrnConfig c;
  detail::read_key(j, "in_channels", c.in_channels, where);
  detail::read_key(j, "width", c.width, where);
  detail::read_key(j, "num_blocks", c.num_blocks, where);
  detail::read_key(j, "kernel", c.kernel, where);
  detail::read_key(j, "use_cae", c.use_cae, where);
  detail::read_key(j, "cae_reduction", c.cae_reduction, where);
  std::string variant = to_string(c.variant);
  detail::read_key(j, "variant", variant, where);
  c.variant = parse_variant(variant);
  detail::read_key(j, "rescale_scale", c.rescale_scale, where);
  detail::read_key(j, "inner_blocks", c.inner_blocks, where);
  c.validate();
  return c;
}

template <class T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride_ = 1)
      : weight(Shape{out, in, k, k}), bias(Shape{out}), stride(stride_), padding(k / 2) {
    weight.set_requires_grad(true);
    bias.set_requires_grad(true);
  }

  // Weights and biases uniform in +-sqrt(1 / fan_in) (the common framework default).
  void init(std::mt19937_64& rng) {
    const std::size_t fan_in = weight.dim(1) * weight.dim(2) * weight.dim(3);
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> draw(-bound, bound);
    for (auto& w : weight.data()) w = static_cast<T>(draw(rng));
    for (auto& b : bias.data()) b = static_cast<T>(draw(rng));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
  std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

// Squeeze-excite style gate: a = sigmoid(W2 relu(W1 gap(r))), z = a * r.
template <class T>
struct ChannelAttention {
  Conv2d<T> squeeze;
  Conv2d<T> excite;

  ChannelAttention() = default;
  ChannelAttention(std::size_t width, std::size_t reduction)
      : squeeze(width, width / reduction, 1), excite(width / reduction, width, 1) {}

  Tensor<T> weights(const Tensor<T>& r) const {
    const Tensor<T> pooled = reshape(global_avg_pool(r), Shape{r.dim(0), r.dim(1), 1, 1});
    return sigmoid(excite(relu(squeeze(pooled))));
  }

  Tensor<T> operator()(const Tensor<T>& r) const { return mul(r, weights(r)); }
};

template <class T>
struct ResidualBlock {
  Conv2d<T> conv1;
  Conv2d<T> conv2;
  std::optional<ChannelAttention<T>> cae;

  ResidualBlock() = default;
  ResidualBlock(std::size_t width, std::size_t k, bool use_cae, std::size_t reduction)
      : conv1(width, width, k), conv2(width, width, k) {
    if (use_cae) cae.emplace(width, reduction);
  }

  Tensor<T> residual(const Tensor<T>& f) const {
    Tensor<T> r = conv2(relu(conv1(f)));
    return cae ? (*cae)(r) : r;
  }

  Tensor<T> operator()(const Tensor<T>& f) const {
    if (f.dim(1) != conv1.weight.dim(1)) {
      throw DimensionError("residual block: expected " + std::to_string(conv1.weight.dim(1)) +
                           " channels, got " + std::to_string(f.dim(1)));
    }
    return add(residual(f), f);
  }
};

// Strided-conv downsampler matched with a conv + pixel-shuffle upsampler.
template <class T>
struct RescalingPair {
  Conv2d<T> down;
  Conv2d<T> up;
  std::size_t scale = 2;

  RescalingPair() = default;
  RescalingPair(std::size_t width, std::size_t k, std::size_t r)
      : down(width, width, k, r), up(width, width * r * r, k), scale(r) {
    if (r < 2) throw ContractError("rescaling pair: scale must be >= 2");
  }

  Tensor<T> downsample(const Tensor<T>& x) const {
    if (x.dim(2) % scale != 0 || x.dim(3) % scale != 0) {
      throw DimensionError("rescaling pair: spatial size " + std::to_string(x.dim(2)) + "x" +
                           std::to_string(x.dim(3)) + " not divisible by " + std::to_string(scale));
    }
    return down(x);
  }
  Tensor<T> upsample(const Tensor<T>& x) const { return pixel_shuffle(up(x), scale); }
};

template <class T>
RescalingPair<T> build_rescaling_pair(std::size_t width, std::size_t scale, std::size_t kernel = 3) {
  return RescalingPair<T>(width, kernel, scale);
}

template <class T>
class SrnModel {
 public:
  explicit SrnModel(SrnConfig config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    const auto& c = config_;
    head_ = Conv2d<T>(c.in_channels, c.width, c.kernel);
    global_ = Conv2d<T>(c.in_channels, c.width, c.kernel);
    for (std::size_t m = 0; m < c.num_blocks; ++m) blocks_.emplace_back(c.width, c.kernel, c.use_cae, c.cae_reduction);
    if (c.variant != SrnVariant::V1) outer_.emplace(c.width, c.kernel, c.rescale_scale);
    if (c.variant == SrnVariant::V3) inner_.emplace(c.width, c.kernel, c.rescale_scale);
    tail_ = Conv2d<T>(c.width, c.in_channels, c.kernel);
    reinitialize(seed);
  }

  const SrnConfig& config() const { return config_; }

  void reinitialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto* conv : convs()) conv->init(rng);
  }

  // F_hat = tail(blocks(head(F_Y)) + global(F_Y)), with rescaling pairs
  // wrapped around the blocks as the variant dictates.
  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 4) throw DimensionError("srn_forward: expected [N,C,H,W], got " + shape_str(x.shape()));
    if (x.dim(1) != config_.in_channels) {
      throw DimensionError("srn_forward: expected " + std::to_string(config_.in_channels) + " channels, got " +
                           std::to_string(x.dim(1)));
    }
    const std::size_t div = config_.spatial_divisor();
    if (x.dim(2) % div != 0) {
      throw DimensionError("srn_forward: height " + std::to_string(x.dim(2)) + " not divisible by " + std::to_string(div));
    }
    if (x.dim(3) % div != 0) {
      throw DimensionError("srn_forward: width " + std::to_string(x.dim(3)) + " not divisible by " + std::to_string(div));
    }
    Tensor<T> f = head_(x);
    if (outer_) f = outer_->downsample(f);
    for (std::size_t m = 0; m < blocks_.size(); ++m) {
      if (inner_ && m == config_.inner_begin()) f = inner_->downsample(f);
      f = blocks_[m](f);
      if (inner_ && m + 1 == config_.inner_end()) f = inner_->upsample(f);
    }
    if (outer_) f = outer_->upsample(f);
    return tail_(add(f, global_(x)));
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return forward(x); }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto push = [&](const std::string& name, const Conv2d<T>& conv) {
      out.emplace_back(name + ".weight", conv.weight);
      out.emplace_back(name + ".bias", conv.bias);
    };
    push("head", head_);
    push("global", global_);
    for (std::size_t m = 0; m < blocks_.size(); ++m) {
      const std::string b = "blocks." + std::to_string(m);
      push(b + ".conv1", blocks_[m].conv1);
      push(b + ".conv2", blocks_[m].conv2);
      if (blocks_[m].cae) {
        push(b + ".cae.squeeze", blocks_[m].cae->squeeze);
        push(b + ".cae.excite", blocks_[m].cae->excite);
      }
    }
    if (outer_) {
      push("outer.down", outer_->down);
      push("outer.up", outer_->up);
    }
    if (inner_) {
      push("inner.down", inner_->down);
      push("inner.up", inner_->up);
    }
    push("tail", tail_);
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [_, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : parameters()) n += t.numel();
    return n;
  }

  // Mutable layer access for tests and weight surgery.
  Conv2d<T>& head() { return head_; }
  Conv2d<T>& global_branch() { return global_; }
  Conv2d<T>& tail() { return tail_; }
  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }
  const std::vector<ResidualBlock<T>>& blocks() const { return blocks_; }
  std::optional<RescalingPair<T>>& outer_pair() { return outer_; }
  std::optional<RescalingPair<T>>& inner_pair() { return inner_; }

 private:
  std::vector<Conv2d<T>*> convs() {
    std::vector<Conv2d<T>*> out{&head_, &global_};
    for (auto& b : blocks_) {
      out.push_back(&b.conv1);
      out.push_back(&b.conv2);
      if (b.cae) {
        out.push_back(&b.cae->squeeze);
        out.push_back(&b.cae->excite);
      }
    }
    if (outer_) {
      out.push_back(&outer_->down);
      out.push_back(&outer_->up);
    }
    if (inner_) {
      out.push_back(&inner_->down);
      out.push_back(&inner_->up);
    }
    out.push_back(&tail_);
    return out;
  }

  SrnConfig config_;
  Conv2d<T> head_;
  Conv2d<T> global_;
  std::vector<ResidualBlock<T>> blocks_;
  std::optional<RescalingPair<T>> outer_;
  std::optional<RescalingPair<T>> inner_;
  Conv2d<T> tail_;
};

// Weights directory: one NPY per tensor plus manifest.json with the config
// and the layer table.
template <class T>
void save_model(const SrnModel<T>& model, const std::filesystem::path& dir) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& [name, t] : model.named_parameters()) {
    const std::string file = name + ".npy";
    write_npy(dir / file, t);
    layers.push_back({{"name", name}, {"shape", t.shape()}, {"file", file}});
  }
  nlohmann::json manifest = {{"format", "snapsci-srn"}, {"version", 1},
                             {"config", to_json(model.config())}, {"layers", layers}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

template <class T>
SrnModel<T> load_model(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "snapsci-srn") throw IoError(dir.string() + ": not an SRN weight directory");
  SrnModel<T> model(srn_config_from_json(manifest.at("config"), "manifest.config"));
  for (auto& [name, t] : model.named_parameters()) {
    const Tensor<T> loaded = read_npy<T>(dir / (name + ".npy"));
    if (loaded.shape() != t.shape()) {
      throw DimensionError("load_model: " + name + " has shape " + shape_str(loaded.shape()) + ", config expects " +
                           shape_str(t.shape()));
    }
    Tensor<T> dst = t;
    std::copy(loaded.data().begin(), loaded.data().end(), dst.data().begin());
  }
  return model;
}

}  // namespace snapsci
