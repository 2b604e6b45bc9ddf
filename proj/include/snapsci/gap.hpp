#pragma once

// Generalized alternating projection unfolded with learned denoisers.
//
//   f^(s)  = v^(s-1) + Phi^T (Phi Phi^T)^{-1} (y - Phi v^(s-1))
//   v^(s)  = D_s(f^(s)),        v^(0) = Phi^T y
//
// Phi Phi^T is diagonal, so the projection is elementwise in O(n * Nc).

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapsci/forward_model.hpp"
#include "snapsci/ops.hpp"
#include "snapsci/srn.hpp"

namespace snapsci {

struct GapConfig {
  std::size_t stages = 9;
  SrnConfig denoiser;
  std::array<double, 3> loss_weights{1.0, 0.5, 0.5};
  bool share_weights = false;

  void validate() const {
    if (stages == 0) throw ContractError("GapConfig: stages must be >= 1");
    for (double a : loss_weights)
      if (!(a >= 0.0)) throw ContractError("GapConfig: loss weights must be non-negative");
    denoiser.validate();
  }
  bool operator==(const GapConfig&) const = default;
};

inline nlohmann::json to_json(const GapConfig& g) {
  return {{"stages", g.stages},
          {"denoiser", to_json(g.denoiser)},
          {"loss_weights", g.loss_weights},
          {"share_weights", g.share_weights}};
}

inline GapConfig gap_config_from_json(const nlohmann::json& j, const std::string& where = "gap") {
  detail::reject_unknown_keys(j, {"stages", "denoiser", "loss_weights", "share_weights"}, where);
  GapConfig g;
  detail::read_key(j, "stages", g.stages, where);
  if (j.contains("denoiser")) g.denoiser = srn_config_from_json(j.at("denoiser"), where + ".denoiser");
  detail::read_key(j, "loss_weights", g.loss_weights, where);
  detail::read_key(j, "share_weights", g.share_weights, where);
  g.validate();
  return g;
}

// Projection on the sheared domain: f = v + Phi^T ((y - Phi v) / R).
// Detector pixels with R below the floor get no correction.
template <class T>
std::vector<T> gap_project(std::span<const T> v, const SensingOp<T>& op, std::span<const T> y) {
  std::vector<T> r = op.apply(v);
  if (y.size() != r.size()) throw DimensionError("gap_project: measurement length mismatch");
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = y[i] - r[i];
  op.scale_by_inverse_rows(r);
  std::vector<T> f = op.adjoint(r);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += v[i];
  return f;
}

// Same projection acting on an unsheared C x H x W cube.
template <class T>
void gap_project_source(std::span<const T> v, const SensingOp<T>& op, std::span<const T> y, std::span<T> out) {
  std::vector<T> r = op.apply_source(v);
  if (y.size() != r.size()) throw DimensionError("gap_project: measurement length mismatch");
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = y[i] - r[i];
  op.scale_by_inverse_rows(r);
  op.adjoint_source(r, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
}

namespace detail {

template <class T>
const SensingOp<T>& op_for(std::span<const SensingOp<T>> ops, std::size_t n) {
  return ops.size() == 1 ? ops[0] : ops[n];
}

template <class T>
void check_batch(const Tensor<T>& v, std::span<const SensingOp<T>> ops, const Tensor<T>& y, const char* what) {
  if (ops.empty()) throw DimensionError(std::string(what) + ": no sensing operator");
  if (v.rank() != 4) throw DimensionError(std::string(what) + ": expected [N,C,H,W], got " + shape_str(v.shape()));
  const std::size_t N = v.dim(0);
  if (ops.size() != 1 && ops.size() != N) throw DimensionError(std::string(what) + ": operator count vs batch");
  const auto& op = ops[0];
  if (v.dim(1) != op.channels() || v.dim(2) != op.height() || v.dim(3) != op.source_width()) {
    throw DimensionError(std::string(what) + ": cube " + shape_str(v.shape()) + " does not match sensing geometry");
  }
  if (y.numel() != N * op.pixels()) throw DimensionError(std::string(what) + ": measurement size mismatch");
}

}  // namespace detail

// Differentiable batched projection. v: [N,C,H,W]; y: N measurements of
// H x W' (any shape with that many elements). The map is affine in v with
// Jacobian I - Phi^T R^{-1} Phi, which is symmetric.
template <class T>
Tensor<T> gap_project(const Tensor<T>& v, std::span<const SensingOp<T>> ops, const Tensor<T>& y) {
  detail::check_batch(v, ops, y, "gap_project");
  const std::size_t N = v.dim(0);
  const std::size_t per = v.numel() / N;
  const std::size_t npix = ops[0].pixels();
  Tensor<T> out(v.shape());
  for (std::size_t n = 0; n < N; ++n) {
    gap_project_source<T>(v.data().subspan(n * per, per), detail::op_for(ops, n), y.data().subspan(n * npix, npix),
                          out.data().subspan(n * per, per));
  }
  if (auto* tape = detail::tracking_tape<T>({&v})) {
    out.set_requires_grad(true);
    std::vector<SensingOp<T>> held(ops.begin(), ops.end());
    tape->record("gap_project", {v}, out, [v, out, held = std::move(held), N, per]() mutable {
      auto g = out.grad();
      auto gv = v.mutable_grad();
      std::span<const SensingOp<T>> ops(held);
      for (std::size_t n = 0; n < N; ++n) {
        const auto& op = detail::op_for(ops, n);
        auto gn = g.subspan(n * per, per);
        std::vector<T> r = op.apply_source(gn);
        op.scale_by_inverse_rows(r);
        const std::vector<T> back = op.adjoint_source(r);
        for (std::size_t i = 0; i < per; ++i) gv[n * per + i] += gn[i] - back[i];
      }
    });
  }
  return out;
}

// v^(0) = Phi^T y on the source grid, [N,C,H,W].
template <class T>
Tensor<T> back_project(std::span<const SensingOp<T>> ops, const Tensor<T>& y, std::size_t batch) {
  if (ops.empty()) throw DimensionError("back_project: no sensing operator");
  const auto& op0 = ops[0];
  Tensor<T> out(Shape{batch, op0.channels(), op0.height(), op0.source_width()});
  detail::check_batch(out, ops, y, "back_project");
  const std::size_t per = op0.source_size(), npix = op0.pixels();
  for (std::size_t n = 0; n < batch; ++n) {
    detail::op_for(ops, n).adjoint_source(y.data().subspan(n * npix, npix), out.data().subspan(n * per, per));
  }
  return out;
}

// ||y - Phi v|| summed in quadrature over the batch.
template <class T>
double measurement_residual(const Tensor<T>& v, std::span<const SensingOp<T>> ops, const Tensor<T>& y) {
  detail::check_batch(v, ops, y, "measurement_residual");
  const std::size_t N = v.dim(0), per = v.numel() / N, npix = ops[0].pixels();
  double acc = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const auto r = detail::op_for(ops, n).apply_source(v.data().subspan(n * per, per));
    for (std::size_t i = 0; i < npix; ++i) {
      const double d = static_cast<double>(y.data()[n * npix + i]) - static_cast<double>(r[i]);
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

template <class T>
struct GapState {
  std::vector<Tensor<T>> projected;  // f^(1..S)
  std::vector<Tensor<T>> outputs;    // v^(1..S); the last is the reconstruction
  std::vector<double> residuals;     // ||y - Phi v^(s)|| per stage
  std::size_t stage = 0;
};

template <class T>
using CubeDenoiser = std::function<Tensor<T>(const Tensor<T>&)>;

template <class T>
GapState<T> gap_unfold(const Tensor<T>& y, std::span<const SensingOp<T>> ops,
                       std::span<const CubeDenoiser<T>> denoisers, std::size_t batch = 1) {
  GapState<T> state;
  Tensor<T> v = back_project(ops, y, batch);
  for (std::size_t s = 0; s < denoisers.size(); ++s) {
    try {
      Tensor<T> f = gap_project(v, ops, y);
      v = denoisers[s](f);
      if (v.shape() != f.shape()) {
        throw DimensionError("denoiser changed shape " + shape_str(f.shape()) + " -> " + shape_str(v.shape()));
      }
      state.projected.push_back(f);
      state.outputs.push_back(v);
      state.residuals.push_back(measurement_residual(v, ops, y));
      state.stage = s + 1;
    } catch (const DimensionError& e) {
      throw DimensionError("stage " + std::to_string(s + 1) + ": " + e.what());
    }
  }
  return state;
}

// Weighted L2 loss over the last three stage outputs; fewer stages use the
// available prefix of the weights.
template <class T>
Tensor<T> gap_loss(std::span<const Tensor<T>> outputs, const Tensor<T>& truth,
                   const std::array<double, 3>& weights = {1.0, 0.5, 0.5}) {
  if (outputs.empty()) throw ContractError("gap_loss: no stage outputs");
  const std::size_t S = outputs.size();
  Tensor<T> total;
  for (std::size_t i = 0; i < 3 && i < S; ++i) {
    const Tensor<T> term = scale(batch_l2_norm_loss(outputs[S - 1 - i], truth), static_cast<T>(weights[i]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <class T>
class GapSrn {
 public:
  explicit GapSrn(GapConfig config, std::uint64_t seed = 0) : config_(std::move(config)) {
    config_.validate();
    const std::size_t distinct = config_.share_weights ? 1 : config_.stages;
    for (std::size_t s = 0; s < distinct; ++s) models_.emplace_back(config_.denoiser, seed + s);
  }

  const GapConfig& config() const { return config_; }
  std::vector<SrnModel<T>>& models() { return models_; }
  const std::vector<SrnModel<T>>& models() const { return models_; }
  const SrnModel<T>& stage_model(std::size_t s) const { return models_[config_.share_weights ? 0 : s]; }

  GapState<T> forward(const Tensor<T>& y, std::span<const SensingOp<T>> ops, std::size_t batch = 1) const {
    std::vector<CubeDenoiser<T>> den;
    for (std::size_t s = 0; s < config_.stages; ++s) {
      const SrnModel<T>* m = &stage_model(s);
      den.emplace_back([m](const Tensor<T>& x) { return m->forward(x); });
    }
    return gap_unfold<T>(y, ops, den, batch);
  }

  Tensor<T> loss(const GapState<T>& state, const Tensor<T>& truth) const {
    return gap_loss<T>(state.outputs, truth, config_.loss_weights);
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& m : models_)
      for (auto& t : m.parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : models_) n += m.parameter_count();
    return n;
  }

 private:
  GapConfig config_;
  std::vector<SrnModel<T>> models_;
};

inline std::string stage_dir_name(std::size_t s) {
  std::string n = std::to_string(s);
  return "stage_" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

template <class T>
void save_gap_model(const GapSrn<T>& gap, const std::filesystem::path& dir) {
  for (std::size_t s = 0; s < gap.models().size(); ++s) save_model(gap.models()[s], dir / stage_dir_name(s));
  nlohmann::json manifest = {{"format", "snapsci-gap-srn"}, {"version", 1}, {"config", to_json(gap.config())}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

template <class T>
GapSrn<T> load_gap_model(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "snapsci-gap-srn") throw IoError(dir.string() + ": not a GAP-SRN weight directory");
  GapSrn<T> gap(gap_config_from_json(manifest.at("config"), "manifest.config"));
  for (std::size_t s = 0; s < gap.models().size(); ++s) {
    SrnModel<T> loaded = load_model<T>(dir / stage_dir_name(s));
    if (!(loaded.config() == gap.config().denoiser)) throw IoError("load_gap_model: stage config mismatch");
    gap.models()[s] = loaded;
  }
  return gap;
}

}  // namespace snapsci
