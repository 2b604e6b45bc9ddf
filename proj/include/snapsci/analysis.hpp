#pragma once

// Static architecture analysis of an SRN configuration: parameter count,
// FLOPs and receptive field, computed from the layer plan alone (no weights).
//
// FLOPs use the multiply-accumulate convention: a conv costs
// C_out * C_in * k^2 * H_out * W_out, and elementwise, pooling and shuffle
// layers cost one operation per output element.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "snapsci/srn.hpp"

namespace snapsci {

struct LayerRow {
  std::string name;
  std::string kind;  // conv, relu, add, mul, gap, sigmoid, shuffle
  std::size_t params = 0;
  std::uint64_t flops = 0;
  std::size_t out_channels = 0;
  std::size_t out_height = 0;
  std::size_t out_width = 0;
  std::size_t rf = 0;  // receptive field along the main path after this layer
};

struct ArchProfile {
  SrnConfig config;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::size_t params = 0;
  std::uint64_t flops = 0;
  std::size_t rf_height = 0;
  std::size_t rf_width = 0;
  std::vector<LayerRow> layers;
};

namespace detail {

class PlanWalker {
 public:
  PlanWalker(ArchProfile& p, std::size_t c, std::size_t h, std::size_t w) : p_(p), c_(c), h_(h), w_(w) {}

  void conv(const std::string& name, std::size_t cout, std::size_t k, std::size_t stride = 1) {
    const std::size_t pad = k / 2;
    const std::size_t ho = (h_ + 2 * pad - k) / stride + 1;
    const std::size_t wo = (w_ + 2 * pad - k) / stride + 1;
    LayerRow r;
    r.name = name;
    r.kind = "conv";
    r.params = cout * c_ * k * k + cout;
    r.flops = static_cast<std::uint64_t>(cout) * c_ * k * k * ho * wo;
    rf_ += (k - 1) * jump_;
    jump_ *= stride;
    c_ = cout;
    h_ = ho;
    w_ = wo;
    push(std::move(r));
  }

  void elementwise(const std::string& name, const std::string& kind) {
    LayerRow r;
    r.name = name;
    r.kind = kind;
    r.flops = static_cast<std::uint64_t>(c_) * h_ * w_;
    push(std::move(r));
  }

  void shuffle(const std::string& name, std::size_t scale) {
    if (jump_ % scale != 0) throw ContractError("analysis: pixel shuffle finer than the input grid");
    c_ /= scale * scale;
    h_ *= scale;
    w_ *= scale;
    jump_ /= scale;
    elementwise(name, "shuffle");
  }

  // Channel attention: pooled vector through two 1x1 convs, then a gate.
  void attention(const std::string& name, std::size_t width, std::size_t reduction) {
    const std::size_t h = h_, w = w_, rf = rf_, jump = jump_;
    LayerRow pool;
    pool.name = name + ".gap";
    pool.kind = "gap";
    pool.flops = width;
    c_ = width;
    h_ = w_ = 1;
    push(std::move(pool));
    conv(name + ".squeeze", width / reduction, 1);
    elementwise(name + ".relu", "relu");
    conv(name + ".excite", width, 1);
    elementwise(name + ".sigmoid", "sigmoid");
    h_ = h;
    w_ = w;
    // Pooling touches the whole map; the receptive field tracked here is the
    // convolutional one.
    rf_ = rf;
    jump_ = jump;
    elementwise(name + ".scale", "mul");
  }

  void join_global(std::size_t global_rf) {
    rf_ = std::max(rf_, global_rf);
    elementwise("global_add", "add");
  }

  std::size_t rf() const { return rf_; }
  std::size_t channels() const { return c_; }

 private:
  void push(LayerRow r) {
    r.out_channels = c_;
    r.out_height = h_;
    r.out_width = w_;
    r.rf = rf_;
    p_.params += r.params;
    p_.flops += r.flops;
    p_.layers.push_back(std::move(r));
  }

  ArchProfile& p_;
  std::size_t c_, h_, w_;
  std::size_t rf_ = 1;
  std::size_t jump_ = 1;
};

}  // namespace detail

inline ArchProfile analyze_architecture(const SrnConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  const std::size_t div = cfg.spatial_divisor();
  if (height % div != 0 || width % div != 0) {
    throw DimensionError("analyze: input " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by " + std::to_string(div));
  }
  ArchProfile p;
  p.config = cfg;
  p.input_height = height;
  p.input_width = width;
  const std::size_t k = cfg.kernel, r = cfg.rescale_scale;

  // Global branch conv runs on F_Y in parallel with the main path.
  detail::PlanWalker global(p, cfg.in_channels, height, width);
  global.conv("global", cfg.width, k);
  const std::size_t global_rf = global.rf();

  detail::PlanWalker main(p, cfg.in_channels, height, width);
  main.conv("head", cfg.width, k);
  const bool outer = cfg.variant != SrnVariant::V1;
  const bool inner = cfg.variant == SrnVariant::V3;
  if (outer) main.conv("outer.down", cfg.width, k, r);
  for (std::size_t m = 0; m < cfg.num_blocks; ++m) {
    if (inner && m == cfg.inner_begin()) main.conv("inner.down", cfg.width, k, r);
    const std::string b = "blocks." + std::to_string(m);
    main.conv(b + ".conv1", cfg.width, k);
    main.elementwise(b + ".relu", "relu");
    main.conv(b + ".conv2", cfg.width, k);
    if (cfg.use_cae) main.attention(b + ".cae", cfg.width, cfg.cae_reduction);
    main.elementwise(b + ".skip", "add");
    if (inner && m + 1 == cfg.inner_end()) {
      main.conv("inner.up", cfg.width * r * r, k);
      main.shuffle("inner.shuffle", r);
    }
  }
  if (outer) {
    main.conv("outer.up", cfg.width * r * r, k);
    main.shuffle("outer.shuffle", r);
  }
  main.join_global(global_rf);
  main.conv("tail", cfg.in_channels, k);
  p.rf_height = p.rf_width = main.rf();
  return p;
}

inline std::size_t count_params(const SrnConfig& cfg) {
  const std::size_t div = cfg.spatial_divisor();
  return analyze_architecture(cfg, div, div).params;
}

inline std::uint64_t count_flops(const SrnConfig& cfg, std::size_t height, std::size_t width) {
  return analyze_architecture(cfg, height, width).flops;
}

inline std::pair<std::size_t, std::size_t> receptive_field(const SrnConfig& cfg) {
  const std::size_t div = cfg.spatial_divisor();
  const auto p = analyze_architecture(cfg, div, div);
  return {p.rf_height, p.rf_width};
}

struct ConvPlacement {
  std::string name;
  std::size_t height = 0;
  std::size_t width = 0;
};

// Output spatial size of every conv layer, in execution order.
inline std::vector<ConvPlacement> srn_variant_flops_profile(const SrnConfig& cfg, std::size_t height,
                                                            std::size_t width) {
  std::vector<ConvPlacement> out;
  for (const auto& row : analyze_architecture(cfg, height, width).layers) {
    if (row.kind == "conv") out.push_back({row.name, row.out_height, row.out_width});
  }
  return out;
}

inline std::string profile_csv(const ArchProfile& p) {
  std::ostringstream os;
  os << "layer,kind,params,flops,out_channels,out_height,out_width,rf\n";
  for (const auto& r : p.layers) {
    os << r.name << ',' << r.kind << ',' << r.params << ',' << r.flops << ',' << r.out_channels << ','
       << r.out_height << ',' << r.out_width << ',' << r.rf << '\n';
  }
  os << "total,,"<< p.params << ',' << p.flops << ",,,," << p.rf_height << '\n';
  return os.str();
}

inline std::string model_label(const SrnConfig& c) {
  return std::string(c.use_cae ? "CAE-SRN " : "SRN ") + to_string(c.variant);
}

// Table rows: method, #params (M), FLOPs (G), RF.
inline std::string summary_table(const std::vector<ArchProfile>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "Method" << std::right << std::setw(14) << "#params (M)" << std::setw(12)
     << "FLOPs (G)" << std::setw(10) << "RF" << '\n';
  os << std::fixed;
  for (const auto& p : rows) {
    os << std::left << std::setw(14) << model_label(p.config) << std::right << std::setw(14) << std::setprecision(2)
       << static_cast<double>(p.params) / 1e6 << std::setw(12) << static_cast<double>(p.flops) / 1e9 << std::setw(10)
       << (std::to_string(p.rf_height) + "x" + std::to_string(p.rf_width)) << '\n';
  }
  return os.str();
}

}  // namespace snapsci
