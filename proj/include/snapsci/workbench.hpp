#pragma once

// Subcommand implementations behind the `snapsci` CLI. Each function takes a
// parsed ExperimentConfig plus paths, writes its artifacts atomically and
// returns the text the CLI prints.
//
// On-disk layout of a simulation directory:
//   truth.npy        (H, W, C) ground-truth cube
//   mask.npy         (H, W) coded aperture (hsi) or (H, W, C) patterns (video)
//   measurement.npy  (H, W') snapshot
//   scene.json       descriptor: kind, shift_step, noise_std, seed, labels, ...
//
// StageTrace rows: stage, ||y - Phi v^(s)||, PSNR of v^(s) (blank without truth).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapsci/analysis.hpp"
#include "snapsci/config.hpp"
#include "snapsci/forward_model.hpp"
#include "snapsci/gap.hpp"
#include "snapsci/metrics.hpp"
#include "snapsci/npy.hpp"
#include "snapsci/png.hpp"
#include "snapsci/scene.hpp"
#include "snapsci/srn.hpp"
#include "snapsci/train.hpp"
#include "snapsci/tv.hpp"

namespace snapsci {

namespace fs = std::filesystem;
using real = double;

// Cubes live in memory as (C, H, W) and on disk as (H, W, C).
template <class T>
void save_cube(const fs::path& path, const Cube<T>& cube) {
  std::vector<T> hwc(cube.size());
  for (std::size_t h = 0; h < cube.height; ++h)
    for (std::size_t w = 0; w < cube.width; ++w)
      for (std::size_t c = 0; c < cube.channels; ++c) hwc[(h * cube.width + w) * cube.channels + c] = cube(h, w, c);
  write_npy<T>(path, Shape{cube.height, cube.width, cube.channels}, hwc);
}

template <class T>
Cube<T> load_cube(const fs::path& path) {
  const Tensor<T> t = read_npy<T>(path);
  if (t.rank() != 2 && t.rank() != 3) {
    throw DimensionError(path.string() + ": expected an (H, W) or (H, W, C) array, got " + shape_str(t.shape()));
  }
  const std::size_t H = t.dim(0), W = t.dim(1), C = t.rank() == 3 ? t.dim(2) : 1;
  Cube<T> cube(H, W, C);
  const auto d = t.data();
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c) cube(h, w, c) = d[(h * W + w) * C + c];
  return cube;
}

template <class T>
void save_image(const fs::path& path, const Image<T>& img) {
  write_npy<T>(path, Shape{img.height, img.width}, img.data);
}

template <class T>
Image<T> load_image(const fs::path& path) {
  const Tensor<T> t = read_npy<T>(path);
  if (t.rank() != 2) throw DimensionError(path.string() + ": expected an (H, W) array, got " + shape_str(t.shape()));
  Image<T> img(t.dim(0), t.dim(1));
  img.data = t.values();
  return img;
}

inline std::vector<std::string> channel_labels(SciMode mode, std::size_t channels) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < channels; ++c) {
    std::ostringstream os;
    os << (mode == SciMode::Cassi ? "band_" : "frame_") << std::setw(2) << std::setfill('0') << c;
    out.push_back(os.str());
  }
  return out;
}

inline MaskSet<real> masks_from_array(SciMode mode, const Cube<real>& arr, std::size_t channels, std::size_t shift) {
  if (mode == SciMode::Cassi) {
    if (arr.channels != 1) throw DimensionError("hsi mask must be (H, W), got " + std::to_string(arr.channels) + " planes");
    Image<real> base(arr.height, arr.width);
    base.data = arr.data;
    return make_cassi_masks(base, channels, shift);
  }
  if (arr.channels != channels) {
    throw DimensionError("video mask has " + std::to_string(arr.channels) + " frames, expected " + std::to_string(channels));
  }
  return make_cacti_masks(arr);
}

inline MaskSet<real> build_masks(const ExperimentConfig& cfg) {
  const auto& g = cfg.geometry;
  if (!cfg.mask.file.empty()) {
    const Cube<real> arr = load_cube<real>(cfg.mask.file);
    if (arr.height != g.height || arr.width != g.width) {
      throw DimensionError(cfg.mask.file + ": mask is " + std::to_string(arr.height) + "x" + std::to_string(arr.width) +
                           ", geometry is " + std::to_string(g.height) + "x" + std::to_string(g.width));
    }
    return masks_from_array(cfg.mode, arr, g.channels, cfg.shift());
  }
  if (cfg.mode == SciMode::Cassi) {
    return make_cassi_masks(generate_mask<real>(g.height, g.width, cfg.mask.spec, cfg.mask.seed), g.channels, cfg.shift());
  }
  Cube<real> patterns(g.height, g.width, g.channels);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const auto m = generate_mask<real>(g.height, g.width, cfg.mask.spec, cfg.mask.seed + c);
    std::copy(m.data.begin(), m.data.end(), patterns.channel(c).begin());
  }
  return make_cacti_masks(patterns);
}

inline Cube<real> scene_cube(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto& g = cfg.geometry;
  Cube<real> cube;
  if (!cfg.scene.file.empty()) {
    cube = load_cube<real>(cfg.scene.file);
  } else {
    SceneSpec spec;
    spec.kind = cfg.scene.kind;
    spec.height = g.height;
    spec.width = g.width;
    spec.channels = g.channels;
    spec.objects = cfg.scene.objects;
    spec.seed = seed;
    cube = generate_scene<real>(spec);
  }
  if (cube.height != g.height || cube.width != g.width || cube.channels != g.channels) {
    throw DimensionError("scene cube is " + std::to_string(cube.height) + "x" + std::to_string(cube.width) + "x" +
                         std::to_string(cube.channels) + ", geometry expects " + std::to_string(g.height) + "x" +
                         std::to_string(g.width) + "x" + std::to_string(g.channels));
  }
  cube.labels = channel_labels(cfg.mode, g.channels);
  return cube;
}

struct Simulation {
  SciMode mode = SciMode::Cassi;
  Cube<real> truth;  // empty when the directory carries no ground truth
  MaskSet<real> masks;
  Measurement<real> measurement;
  nlohmann::json descriptor;
};

inline Simulation load_simulation(const fs::path& dir) {
  Simulation sim;
  try {
    sim.descriptor = nlohmann::json::parse(read_file(dir / "scene.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "scene.json").string() + ": " + e.what());
  }
  const auto& d = sim.descriptor;
  std::size_t channels = 0, shift = 0;
  try {
    sim.mode = d.at("kind").get<std::string>() == "cacti" ? SciMode::Cacti : SciMode::Cassi;
    channels = d.at("channels").get<std::size_t>();
    shift = d.at("shift_step").get<std::size_t>();
    sim.measurement.noise_std = d.at("noise_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "scene.json").string() + ": " + e.what());
  }
  sim.masks = masks_from_array(sim.mode, load_cube<real>(dir / "mask.npy"), channels, shift);
  sim.measurement.data = load_image<real>(dir / "measurement.npy");
  if (fs::exists(dir / "truth.npy")) {
    sim.truth = load_cube<real>(dir / "truth.npy");
    check_geometry(sim.truth, sim.masks, "simulation");
    if (d.contains("labels")) sim.truth.labels = d.at("labels").get<std::vector<std::string>>();
  }
  return sim;
}

// Simulates one snapshot from the configured scene and mask.
inline std::string cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  const MaskSet<real> masks = build_masks(cfg);
  const Cube<real> truth = scene_cube(cfg, cfg.seed);
  const Measurement<real> meas = measure(truth, masks, cfg.noise_std, cfg.seed ^ 0x9e3779b97f4a7c15ull);
  save_cube(out / "truth.npy", truth);
  if (masks.kind == SciMode::Cassi) {
    save_image(out / "mask.npy", masks.base_mask);
  } else {
    save_cube(out / "mask.npy", masks.per_channel);
  }
  save_image(out / "measurement.npy", meas.data);
  nlohmann::json d = {{"kind", to_string(cfg.mode)},
                      {"mode", cfg.mode == SciMode::Cassi ? "hsi" : "video"},
                      {"height", truth.height},
                      {"width", truth.width},
                      {"channels", truth.channels},
                      {"shift_step", masks.shift_step},
                      {"sensor_width", masks.sensor_width()},
                      {"noise_std", cfg.noise_std},
                      {"seed", cfg.seed},
                      {"mask_seed", cfg.mask.seed},
                      {"scene", cfg.scene.file.empty() ? to_string(cfg.scene.kind) : "file"},
                      {"labels", truth.labels}};
  write_file_atomic(out / "scene.json", d.dump(2) + "\n");
  std::ostringstream os;
  os << "simulated " << to_string(cfg.mode) << ' ' << truth.height << 'x' << truth.width << 'x' << truth.channels
     << " -> measurement " << meas.data.height << 'x' << meas.data.width << " in " << out.string() << '\n';
  return os.str();
}

inline std::string metrics_csv(const Cube<real>& pred, const Cube<real>& truth, const SsimOptions& opt = {}) {
  const MetricReport rep = evaluate(pred, truth, opt);
  std::ostringstream os;
  os << std::setprecision(10);
  os << "channel,label,psnr_db,ssim\n";
  for (std::size_t c = 0; c < truth.channels; ++c) {
    const std::string label = c < truth.labels.size() ? truth.labels[c] : std::to_string(c);
    os << c << ',' << label << ',' << rep.channel_psnr[c] << ','
       << ssim(channel_image(pred, c), channel_image(truth, c), opt) << '\n';
  }
  os << "mean,," << rep.mean_psnr << ',' << rep.mean_ssim << '\n';
  return os.str();
}

// Per-iteration trace for the GAP methods: ||y - Phi v^(s)|| of each stage
// output and, when ground truth is present, its PSNR.
class StageTrace {
 public:
  explicit StageTrace(const Simulation& sim) : sim_(sim), op_(sim.masks) {}

  void record(std::size_t stage, const Cube<real>& v) {
    const auto r = op_.apply_source(v.data);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double d = sim_.measurement.data.data[i] - r[i];
      acc += d * d;
    }
    os_ << std::setprecision(10) << stage << ',' << std::sqrt(acc) << ',';
    if (sim_.truth.size() > 0) os_ << psnr(v, sim_.truth).mean_psnr;
    os_ << '\n';
  }

  std::string csv() const { return "stage,residual,psnr_db\n" + os_.str(); }

 private:
  const Simulation& sim_;
  SensingOp<real> op_;
  std::ostringstream os_;
};

// `trace`, if given, receives the per-stage CSV for gap-tv and gap-srn.
inline Cube<real> reconstruct(const ExperimentConfig& cfg, const Simulation& sim, const fs::path& weights,
                              std::string* trace = nullptr) {
  switch (cfg.method) {
    case Method::BackProjection:
      return init_input(sim.measurement, sim.masks);
    case Method::GapTv: {
      StageTrace tr(sim);
      auto result = gap_tv_reconstruct<real>(sim.measurement, sim.masks, cfg.tv.lambda, cfg.tv.iterations,
                                             cfg.tv.inner_iterations,
                                             [&](std::size_t s, const Cube<real>& v) { tr.record(s, v); });
      if (trace) *trace = tr.csv();
      return result.estimate;
    }
    case Method::Srn:
    case Method::CaeSrn: {
      const SrnModel<real> model = load_model<real>(weights);
      if (model.config().use_cae != (cfg.method == Method::CaeSrn)) {
        throw ContractError("reconstruct: weights in " + weights.string() + " are " + model_label(model.config()) +
                            ", method is " + to_string(cfg.method));
      }
      NoGradScope<real> no_grad;
      return Cube<real>::from_tensor(model.forward(init_input(sim.measurement, sim.masks).to_tensor()));
    }
    case Method::GapSrn: {
      const GapSrn<real> gap = load_gap_model<real>(weights);
      const SensingOp<real> op(sim.masks);
      const auto& y = sim.measurement.data;
      NoGradScope<real> no_grad;
      const auto state = gap.forward(Tensor<real>(Shape{1, y.height, y.width}, y.data), std::span(&op, 1), 1);
      if (trace) {
        StageTrace tr(sim);
        for (std::size_t s = 0; s < state.outputs.size(); ++s) tr.record(s + 1, Cube<real>::from_tensor(state.outputs[s]));
        *trace = tr.csv();
      }
      return Cube<real>::from_tensor(state.outputs.back());
    }
  }
  throw ContractError("reconstruct: unsupported method");
}

// Writes reconstruction.npy, metrics.csv when ground truth is present,
// trace.csv for the GAP methods and, if requested, a PNG grid.
inline std::string cmd_reconstruct(const ExperimentConfig& cfg, const fs::path& data, const fs::path& weights,
                                   const fs::path& out, bool png = false) {
  if (is_learned(cfg.method) && weights.empty()) {
    throw ContractError(std::string("reconstruct: method ") + to_string(cfg.method) + " needs --weights");
  }
  const Simulation sim = load_simulation(data);
  std::string trace;
  Cube<real> rec = reconstruct(cfg, sim, weights, &trace);
  rec.labels = sim.truth.labels;
  save_cube(out / "reconstruction.npy", rec);
  if (!trace.empty()) write_file_atomic(out / "trace.csv", trace);
  std::ostringstream os;
  os << "method " << to_string(cfg.method) << ": reconstruction " << rec.height << 'x' << rec.width << 'x'
     << rec.channels << " -> " << (out / "reconstruction.npy").string() << '\n';
  if (sim.truth.size() > 0) {
    const std::string csv = metrics_csv(rec, sim.truth);
    write_file_atomic(out / "metrics.csv", csv);
    const MetricReport rep = evaluate(rec, sim.truth);
    os << std::fixed << std::setprecision(2) << "PSNR " << rep.mean_psnr << " dB, SSIM " << std::setprecision(4)
       << rep.mean_ssim << '\n';
  }
  if (png) export_png(rec, out / "png");
  return os.str();
}

inline Dataset<real> load_dataset(const ExperimentConfig& cfg, const fs::path& data) {
  Dataset<real> ds;
  if (data.empty()) {
    ds.masks = build_masks(cfg);
    for (std::size_t i = 0; i < cfg.scene.samples; ++i) ds.cubes.push_back(scene_cube(cfg, cfg.seed + i));
    return ds;
  }
  if (fs::exists(data / "scene.json")) {
    Simulation sim = load_simulation(data);
    if (sim.truth.size() == 0) throw ContractError("train: " + data.string() + " has no truth.npy");
    ds.masks = sim.masks;
    ds.cubes.push_back(sim.truth);
    return ds;
  }
  if (!fs::is_directory(data)) throw IoError("train: " + data.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(data))
    if (e.is_regular_file() && e.path().extension() == ".npy") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ds.cubes.push_back(load_cube<real>(f));
  if (ds.cubes.empty()) throw ContractError("train: dataset " + data.string() + " contains no .npy cubes");
  ds.masks = build_masks(cfg);
  return ds;
}

inline std::string loss_csv(const std::vector<double>& losses, std::size_t batches_per_epoch) {
  std::ostringstream os;
  os << std::setprecision(17) << "step,epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) os << i << ',' << i / batches_per_epoch << ',' << losses[i] << '\n';
  return os.str();
}

namespace detail {

template <class Model, class SaveFn>
std::string train_loop(const ExperimentConfig& cfg, Model& model, LossFn<real> loss, const Dataset<real>& ds,
                       const fs::path& out, const fs::path& resume, SaveFn save) {
  Trainer<real> trainer(model.parameters(), std::move(loss), ds, train_options(cfg));
  if (!resume.empty()) trainer.load_state(resume / "state");
  const std::size_t per = trainer.batches_per_epoch();
  const std::size_t total = cfg.train.steps > 0 ? cfg.train.steps : cfg.train.epochs * per;
  try {
    while (trainer.step_count() < total) {
      trainer.step();
      const std::size_t done = trainer.step_count();
      if (cfg.train.checkpoint_every > 0 && done % per == 0 && (done / per) % cfg.train.checkpoint_every == 0) {
        std::ostringstream name;
        name << "epoch_" << std::setw(4) << std::setfill('0') << done / per;
        const fs::path ck = out / "checkpoints" / name.str();
        save(model, ck / "weights");
        trainer.save_state(ck / "state");
      }
    }
  } catch (const NumericalError&) {
    write_file_atomic(out / "loss.csv", loss_csv(trainer.losses(), per));
    throw;
  }
  save(model, out / "weights");
  trainer.save_state(out / "state");
  write_file_atomic(out / "loss.csv", loss_csv(trainer.losses(), per));
  write_file_atomic(out / "config.json", to_json(cfg).dump(2) + "\n");
  std::ostringstream os;
  os << "trained " << to_string(cfg.method) << " for " << trainer.step_count() << " steps";
  if (!trainer.losses().empty()) os << std::setprecision(6) << ", final loss " << trainer.losses().back();
  os << "; weights in " << (out / "weights").string() << '\n';
  return os.str();
}

}  // namespace detail

// Trains the configured learned method. Without `data`, scene.samples
// synthetic cubes are generated; `resume` points at a previous output or
// checkpoint directory holding weights/ and state/.
inline std::string cmd_train(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out,
                             const fs::path& resume = {}) {
  if (!is_learned(cfg.method)) {
    throw ContractError(std::string("train: method ") + to_string(cfg.method) + " has no trainable parameters");
  }
  const Dataset<real> ds = load_dataset(cfg, data);
  for (const auto& c : ds.cubes) check_geometry(c, ds.masks, "train");
  if (cfg.method == Method::GapSrn) {
    GapSrn<real> gap = resume.empty() ? GapSrn<real>(cfg.gap, cfg.seed) : load_gap_model<real>(resume / "weights");
    if (!(gap.config() == cfg.gap)) throw ContractError("train: resumed weights do not match config.gap");
    return detail::train_loop(cfg, gap, gap_srn_loss(gap, ds.masks), ds, out, resume,
                              [](const GapSrn<real>& m, const fs::path& p) { save_gap_model(m, p); });
  }
  SrnModel<real> model = resume.empty() ? SrnModel<real>(cfg.model_config(), cfg.seed) : load_model<real>(resume / "weights");
  if (!(model.config() == cfg.model_config())) throw ContractError("train: resumed weights do not match config.srn");
  return detail::train_loop(cfg, model, srn_mse_loss(model, ds.masks), ds, out, resume,
                            [](const SrnModel<real>& m, const fs::path& p) { save_model(m, p); });
}

// Six-row table: v1/v2/v3 x {SRN, CAE-SRN} built from cfg.srn at the
// configured spatial size.
inline std::vector<ArchProfile> variant_profiles(const SrnConfig& base, std::size_t height, std::size_t width) {
  std::vector<ArchProfile> rows;
  for (bool cae : {false, true})
    for (SrnVariant v : {SrnVariant::V1, SrnVariant::V2, SrnVariant::V3}) {
      SrnConfig c = base;
      c.use_cae = cae;
      c.variant = v;
      rows.push_back(analyze_architecture(c, height, width));
    }
  return rows;
}

inline std::string cmd_analyze(const ExperimentConfig& cfg, const fs::path& out) {
  const auto rows = variant_profiles(cfg.srn, cfg.geometry.height, cfg.geometry.width);
  std::ostringstream csv;
  csv << "model,variant,cae,params,flops,rf_height,rf_width\n";
  for (const auto& p : rows) {
    csv << model_label(p.config) << ',' << to_string(p.config.variant) << ',' << (p.config.use_cae ? 1 : 0) << ','
        << p.params << ',' << p.flops << ',' << p.rf_height << ',' << p.rf_width << '\n';
    const std::string name =
        std::string("profile_") + to_string(p.config.variant) + (p.config.use_cae ? "_cae" : "") + ".csv";
    write_file_atomic(out / name, profile_csv(p));
  }
  write_file_atomic(out / "analysis.csv", csv.str());
  std::ostringstream os;
  os << "input " << cfg.geometry.height << 'x' << cfg.geometry.width << 'x' << cfg.srn.in_channels << ", width "
     << cfg.srn.width << ", " << cfg.srn.num_blocks << " blocks";
  os << " (v3 inner pair around " << cfg.srn.inner_blocks << ")";
  os << '\n' << summary_table(rows);
  return os.str();
}

inline std::string cmd_metrics(const fs::path& pred_path, const fs::path& truth_path, const fs::path& out) {
  const Cube<real> pred = load_cube<real>(pred_path);
  const Cube<real> truth = load_cube<real>(truth_path);
  if (!pred.same_geometry(truth)) {
    throw DimensionError("metrics: prediction is " + std::to_string(pred.height) + "x" + std::to_string(pred.width) + "x" +
                         std::to_string(pred.channels) + ", ground truth is " + std::to_string(truth.height) + "x" +
                         std::to_string(truth.width) + "x" + std::to_string(truth.channels));
  }
  const std::string csv = metrics_csv(pred, truth);
  if (!out.empty()) write_file_atomic(out / "metrics.csv", csv);
  return csv;
}

inline std::string cmd_export_png(const fs::path& cube_path, const std::vector<std::size_t>& channels,
                                  const fs::path& out) {
  const auto written = export_png(load_cube<real>(cube_path), out, channels);
  std::ostringstream os;
  os << "wrote " << written.size() << " PNG file(s) to " << out.string() << '\n';
  return os.str();
}

}  // namespace snapsci
