// snapsci: command-line workbench for snapshot compressive imaging.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snapsci/snapsci.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kNumerical = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
};

void add_common(CLI::App* sub, CommonFlags& f, bool with_method) {
  sub->add_option("--config", f.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "override the config seed");
  sub->add_option("--out", f.out, "output directory (default: config 'out')");
  if (with_method) {
    sub->add_option("--method", f.method, "srn, cae-srn, gap-srn, gap-tv or backprojection");
  }
}

snapsci::ExperimentConfig resolve(const CommonFlags& f) {
  snapsci::ExperimentConfig cfg = f.config.empty() ? snapsci::ExperimentConfig{} : snapsci::load_experiment_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.method.empty()) cfg.method = snapsci::parse_method(f.method);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"snapsci - snapshot compressive imaging workbench"};
  app.require_subcommand(1);

  CommonFlags sim_f, rec_f, train_f, an_f;
  auto* simulate = app.add_subcommand("simulate", "generate a scene, mask and snapshot measurement");
  add_common(simulate, sim_f, false);

  auto* reconstruct = app.add_subcommand("reconstruct", "reconstruct a cube from a simulated measurement");
  add_common(reconstruct, rec_f, true);
  std::string rec_data, rec_weights;
  bool rec_png = false;
  reconstruct->add_option("--data", rec_data, "simulation directory")->required()->check(CLI::ExistingDirectory);
  reconstruct->add_option("--weights", rec_weights, "weight directory for learned methods");
  reconstruct->add_flag("--png", rec_png, "also export a PNG grid of the reconstruction");

  auto* train = app.add_subcommand("train", "train srn, cae-srn or gap-srn");
  add_common(train, train_f, true);
  std::string train_data, train_resume;
  std::optional<std::size_t> train_steps;
  train->add_option("--data", train_data, "simulation directory or directory of (H, W, C) cubes");
  train->add_option("--resume", train_resume, "directory with weights/ and state/ to continue from")
      ->check(CLI::ExistingDirectory);
  train->add_option("--steps", train_steps, "override train.steps");

  auto* analyze = app.add_subcommand("analyze", "parameter, FLOP and receptive-field table");
  add_common(analyze, an_f, false);
  std::optional<std::size_t> an_h, an_w;
  analyze->add_option("--height", an_h, "input height (default: geometry.height)");
  analyze->add_option("--width", an_w, "input width (default: geometry.width)");

  auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM of a cube against ground truth");
  std::string m_pred, m_truth, m_out;
  metrics->add_option("--pred", m_pred, "reconstructed cube (H, W, C) .npy")->required()->check(CLI::ExistingFile);
  metrics->add_option("--truth", m_truth, "ground-truth cube (H, W, C) .npy")->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", m_out, "directory for metrics.csv");

  auto* png = app.add_subcommand("export-png", "write 8-bit PNGs of cube channels plus a contact sheet");
  std::string p_cube, p_out = "png";
  std::vector<std::size_t> p_channels;
  png->add_option("--cube", p_cube, "(H, W, C) .npy cube")->required()->check(CLI::ExistingFile);
  png->add_option("--channels", p_channels, "channel indices (default: all)")->delimiter(',');
  png->add_option("--out", p_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (simulate->parsed()) {
      const auto cfg = resolve(sim_f);
      std::cout << snapsci::cmd_simulate(cfg, cfg.out);
    } else if (reconstruct->parsed()) {
      const auto cfg = resolve(rec_f);
      std::cout << snapsci::cmd_reconstruct(cfg, rec_data, rec_weights, cfg.out, rec_png);
    } else if (train->parsed()) {
      auto cfg = resolve(train_f);
      if (train_steps) cfg.train.steps = *train_steps;
      std::cout << snapsci::cmd_train(cfg, train_data, cfg.out, train_resume);
    } else if (analyze->parsed()) {
      auto cfg = resolve(an_f);
      if (an_h) cfg.geometry.height = *an_h;
      if (an_w) cfg.geometry.width = *an_w;
      std::cout << snapsci::cmd_analyze(cfg, cfg.out);
    } else if (metrics->parsed()) {
      std::cout << snapsci::cmd_metrics(m_pred, m_truth, m_out);
    } else if (png->parsed()) {
      std::cout << snapsci::cmd_export_png(p_cube, p_channels, p_out);
    }
  } catch (const snapsci::ContractError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const snapsci::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const snapsci::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return 0;
}
