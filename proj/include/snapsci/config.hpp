#pragma once

// Experiment configuration: one JSON document driving every CLI subcommand.
// Parsing rejects unknown keys at every level; missing keys keep defaults.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "snapsci/adam.hpp"
#include "snapsci/forward_model.hpp"
#include "snapsci/gap.hpp"
#include "snapsci/scene.hpp"
#include "snapsci/srn.hpp"
#include "snapsci/train.hpp"

namespace snapsci {

enum class Method { Srn, CaeSrn, GapSrn, GapTv, BackProjection };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Srn: return "srn";
    case Method::CaeSrn: return "cae-srn";
    case Method::GapSrn: return "gap-srn";
    case Method::GapTv: return "gap-tv";
    case Method::BackProjection: return "backprojection";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "srn") return Method::Srn;
  if (s == "cae-srn") return Method::CaeSrn;
  if (s == "gap-srn") return Method::GapSrn;
  if (s == "gap-tv") return Method::GapTv;
  if (s == "backprojection") return Method::BackProjection;
  throw ContractError("unknown method '" + s + "' (expected srn, cae-srn, gap-srn, gap-tv, backprojection)");
}

inline bool is_learned(Method m) { return m == Method::Srn || m == Method::CaeSrn || m == Method::GapSrn; }

inline const char* to_string(MaskKind k) { return k == MaskKind::Bernoulli ? "bernoulli" : "gray"; }

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "bernoulli") return MaskKind::Bernoulli;
  if (s == "gray") return MaskKind::Gray;
  throw ContractError("unknown mask kind '" + s + "'");
}

struct Geometry {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 4;
  std::size_t shift_step = 1;  // hsi only; video forces 0
  bool operator==(const Geometry&) const = default;
};

struct MaskConfig {
  MaskSpec spec;
  std::uint64_t seed = 7;
  std::string file;  // external NPY mask (H x W for hsi, H x W x C for video); overrides generation
  bool operator==(const MaskConfig& o) const {
    return spec.kind == o.spec.kind && spec.p == o.spec.p && spec.low == o.spec.low && spec.high == o.spec.high &&
           seed == o.seed && file == o.file;
  }
};

struct SceneConfig {
  SceneKind kind = SceneKind::MovingDisks;
  std::size_t objects = 3;
  std::size_t samples = 1;  // cubes generated for a synthetic training set
  std::string file;         // external NPY cube (H x W x C); overrides generation
  bool operator==(const SceneConfig&) const = default;
};

struct TrainConfig {
  double lr = 4e-4;
  std::size_t halve_every = 50;
  std::size_t batch_size = 4;
  std::size_t epochs = 1;
  std::size_t steps = 0;  // when > 0, overrides epochs
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  bool noise_augment = false;
  bool operator==(const TrainConfig&) const = default;
};

struct TvConfig {
  double lambda = 0.05;
  std::size_t iterations = 50;
  std::size_t inner_iterations = 20;
  bool operator==(const TvConfig&) const = default;
};

struct ExperimentConfig {
  SciMode mode = SciMode::Cassi;
  Geometry geometry;
  MaskConfig mask;
  SceneConfig scene;
  double noise_std = 0.0;
  Method method = Method::BackProjection;
  SrnConfig srn;
  GapConfig gap;
  TrainConfig train;
  TvConfig tv;
  std::uint64_t seed = 0;
  std::string out = "out";

  ExperimentConfig() {
    srn.in_channels = geometry.channels;
    gap.denoiser = srn;
  }

  std::size_t shift() const { return mode == SciMode::Cassi ? geometry.shift_step : 0; }

  // Denoiser actually used for srn / cae-srn.
  SrnConfig model_config() const {
    SrnConfig c = srn;
    c.use_cae = method == Method::CaeSrn;
    return c;
  }

  void validate() const {
    if (geometry.height == 0 || geometry.width == 0 || geometry.channels == 0) {
      throw ContractError("config.geometry: height, width and channels must be positive");
    }
    if (mode == SciMode::Cassi && geometry.shift_step < 1) throw ContractError("config: hsi mode needs shift_step >= 1");
    if (mode == SciMode::Cacti && geometry.shift_step != 0) throw ContractError("config: video mode needs shift_step = 0");
    if (!(mask.spec.p >= 0.0 && mask.spec.p <= 1.0)) throw ContractError("config.mask.p must lie in [0, 1]");
    if (!(noise_std >= 0.0)) throw ContractError("config.noise_std must be non-negative");
    if (srn.in_channels != geometry.channels) {
      throw ContractError("config.srn.in_channels (" + std::to_string(srn.in_channels) +
                          ") must equal geometry.channels (" + std::to_string(geometry.channels) + ")");
    }
    if (gap.denoiser.in_channels != geometry.channels) {
      throw ContractError("config.gap.denoiser.in_channels must equal geometry.channels");
    }
    srn.validate();
    gap.validate();
    if (!(train.lr >= 0.0)) throw ContractError("config.train.lr must be non-negative");
    if (train.batch_size == 0) throw ContractError("config.train.batch_size must be positive");
    if (scene.samples == 0) throw ContractError("config.scene.samples must be positive");
    if (!(tv.lambda > 0.0) || tv.inner_iterations == 0) throw ContractError("config.tv: lambda and inner_iterations must be positive");
  }

  bool operator==(const ExperimentConfig&) const = default;
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"mode", c.mode == SciMode::Cassi ? "hsi" : "video"},
      {"geometry",
       {{"height", c.geometry.height},
        {"width", c.geometry.width},
        {"channels", c.geometry.channels},
        {"shift_step", c.geometry.shift_step}}},
      {"mask",
       {{"kind", to_string(c.mask.spec.kind)},
        {"p", c.mask.spec.p},
        {"low", c.mask.spec.low},
        {"high", c.mask.spec.high},
        {"seed", c.mask.seed},
        {"file", c.mask.file}}},
      {"scene",
       {{"kind", to_string(c.scene.kind)},
        {"objects", c.scene.objects},
        {"samples", c.scene.samples},
        {"file", c.scene.file}}},
      {"noise_std", c.noise_std},
      {"method", to_string(c.method)},
      {"srn", to_json(c.srn)},
      {"gap", to_json(c.gap)},
      {"train",
       {{"lr", c.train.lr},
        {"halve_every", c.train.halve_every},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"steps", c.train.steps},
        {"checkpoint_every", c.train.checkpoint_every},
        {"noise_augment", c.train.noise_augment}}},
      {"tv", {{"lambda", c.tv.lambda}, {"iterations", c.tv.iterations}, {"inner_iterations", c.tv.inner_iterations}}},
      {"seed", c.seed},
      {"out", c.out},
  };
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using detail::read_key;
  using detail::reject_unknown_keys;
  reject_unknown_keys(j, {"mode", "geometry", "mask", "scene", "noise_std", "method", "srn", "gap", "train", "tv", "seed", "out"},
                      "config");
  ExperimentConfig c;
  std::string s = "hsi";
  read_key(j, "mode", s, "config");
  if (s == "hsi") {
    c.mode = SciMode::Cassi;
  } else if (s == "video") {
    c.mode = SciMode::Cacti;
    c.geometry.shift_step = 0;
  } else {
    throw ContractError("config.mode: expected 'hsi' or 'video', got '" + s + "'");
  }
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    reject_unknown_keys(g, {"height", "width", "channels", "shift_step"}, "config.geometry");
    read_key(g, "height", c.geometry.height, "config.geometry");
    read_key(g, "width", c.geometry.width, "config.geometry");
    read_key(g, "channels", c.geometry.channels, "config.geometry");
    read_key(g, "shift_step", c.geometry.shift_step, "config.geometry");
  }
  if (j.contains("mask")) {
    const auto& m = j.at("mask");
    reject_unknown_keys(m, {"kind", "p", "low", "high", "seed", "file"}, "config.mask");
    std::string kind = to_string(c.mask.spec.kind);
    read_key(m, "kind", kind, "config.mask");
    c.mask.spec.kind = parse_mask_kind(kind);
    read_key(m, "p", c.mask.spec.p, "config.mask");
    read_key(m, "low", c.mask.spec.low, "config.mask");
    read_key(m, "high", c.mask.spec.high, "config.mask");
    read_key(m, "seed", c.mask.seed, "config.mask");
    read_key(m, "file", c.mask.file, "config.mask");
  }
  if (j.contains("scene")) {
    const auto& sc = j.at("scene");
    reject_unknown_keys(sc, {"kind", "objects", "samples", "file"}, "config.scene");
    std::string kind = to_string(c.scene.kind);
    read_key(sc, "kind", kind, "config.scene");
    c.scene.kind = parse_scene_kind(kind);
    read_key(sc, "objects", c.scene.objects, "config.scene");
    read_key(sc, "samples", c.scene.samples, "config.scene");
    read_key(sc, "file", c.scene.file, "config.scene");
  }
  read_key(j, "noise_std", c.noise_std, "config");
  std::string method = to_string(c.method);
  read_key(j, "method", method, "config");
  c.method = parse_method(method);

  // Denoiser channel counts follow the geometry unless given explicitly.
  nlohmann::json srn = j.value("srn", nlohmann::json::object());
  if (srn.is_object() && !srn.contains("in_channels")) srn["in_channels"] = c.geometry.channels;
  c.srn = srn_config_from_json(srn, "config.srn");
  nlohmann::json gap = j.value("gap", nlohmann::json::object());
  if (gap.is_object()) {
    if (!gap.contains("denoiser")) gap["denoiser"] = to_json(c.srn);
    if (gap["denoiser"].is_object() && !gap["denoiser"].contains("in_channels")) {
      gap["denoiser"]["in_channels"] = c.geometry.channels;
    }
  }
  c.gap = gap_config_from_json(gap, "config.gap");

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown_keys(t, {"lr", "halve_every", "batch_size", "epochs", "steps", "checkpoint_every", "noise_augment"},
                        "config.train");
    read_key(t, "lr", c.train.lr, "config.train");
    read_key(t, "halve_every", c.train.halve_every, "config.train");
    read_key(t, "batch_size", c.train.batch_size, "config.train");
    read_key(t, "epochs", c.train.epochs, "config.train");
    read_key(t, "steps", c.train.steps, "config.train");
    read_key(t, "checkpoint_every", c.train.checkpoint_every, "config.train");
    read_key(t, "noise_augment", c.train.noise_augment, "config.train");
  }
  if (j.contains("tv")) {
    const auto& t = j.at("tv");
    reject_unknown_keys(t, {"lambda", "iterations", "inner_iterations"}, "config.tv");
    read_key(t, "lambda", c.tv.lambda, "config.tv");
    read_key(t, "iterations", c.tv.iterations, "config.tv");
    read_key(t, "inner_iterations", c.tv.inner_iterations, "config.tv");
  }
  read_key(j, "seed", c.seed, "config");
  read_key(j, "out", c.out, "config");
  c.validate();
  return c;
}

inline ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError(origin + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path), path.string());
}

inline TrainOptions train_options(const ExperimentConfig& c) {
  TrainOptions o;
  o.adam.lr = c.train.lr;
  o.adam.halve_every = c.train.halve_every;
  o.batch_size = c.train.batch_size;
  o.seed = c.seed;
  o.noise_augment = c.train.noise_augment;
  return o;
}

}  // namespace snapsci
