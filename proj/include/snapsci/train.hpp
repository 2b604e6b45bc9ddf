#pragma once

// End-to-end training of SRN (MSE on the mask-initialized input) and
// GAP-SRN (weighted stage loss) with Adam and measurements synthesized on
// the fly. The batch schedule and noise draws are pure functions of
// (seed, step), so a resumed run replays the uninterrupted trajectory.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "snapsci/adam.hpp"
#include "snapsci/forward_model.hpp"
#include "snapsci/gap.hpp"
#include "snapsci/npy.hpp"
#include "snapsci/srn.hpp"

namespace snapsci {

template <class T>
struct Dataset {
  std::vector<Cube<T>> cubes;
  MaskSet<T> masks;  // shared by every sample
};

struct TrainOptions {
  AdamOptions adam;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  // Per-sample measurement noise std drawn from U[0, 0.05].
  bool noise_augment = false;
};

template <class T>
struct Batch {
  Tensor<T> truth;        // [N,C,H,W]
  Tensor<T> measurement;  // [N,H,W']
  std::vector<Measurement<T>> measurements;
};

template <class T>
using LossFn = std::function<Tensor<T>(const Batch<T>&)>;

template <class T>
class Trainer {
 public:
  Trainer(std::vector<Tensor<T>> params, LossFn<T> loss, const Dataset<T>& data, TrainOptions opts)
      : adam_(std::move(params), opts.adam), loss_(std::move(loss)), data_(data), opts_(opts) {
    if (data_.cubes.empty()) throw ContractError("train: empty dataset");
    if (opts_.batch_size == 0) throw ContractError("train: batch size must be positive");
    for (const auto& c : data_.cubes) check_geometry(c, data_.masks, "train");
  }

  std::size_t batches_per_epoch() const { return (data_.cubes.size() + opts_.batch_size - 1) / opts_.batch_size; }
  std::size_t step_count() const { return step_; }
  std::size_t epoch() const { return step_ / batches_per_epoch(); }
  const std::vector<double>& losses() const { return losses_; }
  Adam<T>& optimizer() { return adam_; }

  // Sample indices for global step `step`.
  std::vector<std::size_t> batch_indices(std::size_t step) const {
    const std::size_t per = batches_per_epoch();
    const std::size_t e = step / per, b = step % per;
    std::vector<std::size_t> order(data_.cubes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(opts_.seed), static_cast<std::uint32_t>(opts_.seed >> 32),
                      static_cast<std::uint32_t>(e), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t lo = b * opts_.batch_size, hi = std::min(order.size(), lo + opts_.batch_size);
    return {order.begin() + lo, order.begin() + hi};
  }

  Batch<T> make_batch(std::size_t step) const {
    const auto idx = batch_indices(step);
    Batch<T> batch;
    std::vector<Cube<T>> cubes;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& cube = data_.cubes[idx[k]];
      std::seed_seq seq{static_cast<std::uint32_t>(opts_.seed), static_cast<std::uint32_t>(step),
                        static_cast<std::uint32_t>(k), 0x0153u};
      std::mt19937_64 rng(seq);
      const double sigma = opts_.noise_augment ? sample_noise_std(rng) : 0.0;
      batch.measurements.push_back(measure(cube, data_.masks, sigma, rng()));
      cubes.push_back(cube);
    }
    batch.truth = stack_cubes<T>(cubes);
    const auto& m0 = batch.measurements.front().data;
    batch.measurement = Tensor<T>(Shape{idx.size(), m0.height, m0.width});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& d = batch.measurements[k].data.data;
      std::copy(d.begin(), d.end(), batch.measurement.data().begin() + k * m0.size());
    }
    return batch;
  }

  // One Adam update on the next batch; returns the pre-update loss.
  double step() {
    adam_.state().epoch = epoch();
    const Batch<T> batch = make_batch(step_);
    Tape<T> tape;
    double value;
    {
      TapeScope<T> scope(tape);
      const Tensor<T> loss = loss_(batch);
      value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw NumericalError("train: non-finite loss at step " + std::to_string(step_) + " (epoch " +
                             std::to_string(epoch()) + ", lr " + std::to_string(adam_.lr()) + ")");
      }
      adam_.zero_grad();
      tape.backward(loss);
    }
    adam_.step();
    losses_.push_back(value);
    ++step_;
    return value;
  }

  void run(std::size_t steps) {
    for (std::size_t i = 0; i < steps; ++i) step();
  }

  // Optimizer moments and step counter; weights are saved by the caller.
  void save_state(const std::filesystem::path& dir) const {
    const auto& st = adam_.state();
    for (std::size_t k = 0; k < st.m.size(); ++k) {
      write_npy<T>(dir / ("adam_m_" + std::to_string(k) + ".npy"), Shape{st.m[k].size()}, st.m[k]);
      write_npy<T>(dir / ("adam_v_" + std::to_string(k) + ".npy"), Shape{st.v[k].size()}, st.v[k]);
    }
    nlohmann::json j = {{"step", step_}, {"adam_step", st.step}, {"tensors", st.m.size()}, {"losses", losses_}};
    write_file_atomic(dir / "trainer.json", j.dump(2) + "\n");
  }

  void load_state(const std::filesystem::path& dir) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(dir / "trainer.json"));
    } catch (const nlohmann::json::exception& e) {
      throw IoError((dir / "trainer.json").string() + ": " + e.what());
    }
    auto& st = adam_.state();
    if (j.at("tensors").get<std::size_t>() != st.m.size()) throw IoError("load_state: parameter count mismatch");
    for (std::size_t k = 0; k < st.m.size(); ++k) {
      const auto m = read_npy<T>(dir / ("adam_m_" + std::to_string(k) + ".npy"));
      const auto v = read_npy<T>(dir / ("adam_v_" + std::to_string(k) + ".npy"));
      if (m.numel() != st.m[k].size() || v.numel() != st.v[k].size()) throw IoError("load_state: moment size mismatch");
      st.m[k] = m.values();
      st.v[k] = v.values();
    }
    st.step = j.at("adam_step").get<std::size_t>();
    step_ = j.at("step").get<std::size_t>();
    losses_ = j.at("losses").get<std::vector<double>>();
  }

 private:
  Adam<T> adam_;
  LossFn<T> loss_;
  const Dataset<T>& data_;
  TrainOptions opts_;
  std::size_t step_ = 0;
  std::vector<double> losses_;
};

// Mask-initialized input F_Y for a batch, [N,C,H,W].
template <class T>
Tensor<T> initialized_input(const Batch<T>& batch, const MaskSet<T>& masks) {
  std::vector<Cube<T>> inputs;
  for (const auto& m : batch.measurements) inputs.push_back(init_input(m, masks));
  return stack_cubes<T>(inputs);
}

template <class T>
LossFn<T> srn_mse_loss(const SrnModel<T>& model, const MaskSet<T>& masks) {
  return [&model, &masks](const Batch<T>& batch) {
    return mse_loss(model.forward(initialized_input(batch, masks)), batch.truth);
  };
}

template <class T>
LossFn<T> gap_srn_loss(const GapSrn<T>& gap, const MaskSet<T>& masks) {
  auto op = std::make_shared<SensingOp<T>>(masks);
  return [&gap, op](const Batch<T>& batch) {
    const auto state = gap.forward(batch.measurement, std::span<const SensingOp<T>>(op.get(), 1), batch.truth.dim(0));
    return gap.loss(state, batch.truth);
  };
}

}  // namespace snapsci
