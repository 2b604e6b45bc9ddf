#pragma once

// Synthetic ground-truth cubes with known spectral/temporal structure.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <random>
#include <string>

#include "snapsci/forward_model.hpp"

namespace snapsci {

enum class SceneKind { MovingDisks, GradientRamps, CheckerDrift };

inline const char* to_string(SceneKind k) {
  switch (k) {
    case SceneKind::MovingDisks: return "moving-disks";
    case SceneKind::GradientRamps: return "gradient-ramps";
    case SceneKind::CheckerDrift: return "checker-drift";
  }
  return "?";
}

inline SceneKind parse_scene_kind(const std::string& s) {
  if (s == "moving-disks") return SceneKind::MovingDisks;
  if (s == "gradient-ramps") return SceneKind::GradientRamps;
  if (s == "checker-drift") return SceneKind::CheckerDrift;
  throw ContractError("unknown scene kind '" + s + "'");
}

struct SceneSpec {
  SceneKind kind = SceneKind::MovingDisks;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 4;
  std::size_t objects = 3;
  std::uint64_t seed = 0;
};

template <class T>
Cube<T> generate_scene(const SceneSpec& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) throw ContractError("generate_scene: empty geometry");
  Cube<T> cube(spec.height, spec.width, spec.channels);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);
  const double C = static_cast<double>(spec.channels);

  switch (spec.kind) {
    case SceneKind::MovingDisks: {
      // Each disk drifts linearly across channels and carries a smooth
      // per-channel intensity profile.
      struct Disk {
        double y, x, vy, vx, radius, level, slope;
      };
      std::vector<Disk> disks;
      for (std::size_t k = 0; k < spec.objects; ++k) {
        Disk d;
        d.radius = (0.12 + 0.12 * unit(rng)) * std::min(H, W);
        d.y = d.radius + unit(rng) * (H - 2 * d.radius);
        d.x = d.radius + unit(rng) * (W - 2 * d.radius);
        d.vy = (unit(rng) - 0.5) * 2.0;
        d.vx = (unit(rng) - 0.5) * 2.0;
        d.level = 0.5 + 0.4 * unit(rng);
        d.slope = (unit(rng) - 0.5) * 0.6;
        disks.push_back(d);
      }
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double t = static_cast<double>(c);
        const double tn = spec.channels > 1 ? t / (C - 1) - 0.5 : 0.0;
        for (std::size_t h = 0; h < spec.height; ++h)
          for (std::size_t w = 0; w < spec.width; ++w) {
            double v = 0.05 + 0.05 * static_cast<double>(h) / H;
            for (const auto& d : disks) {
              const double dy = static_cast<double>(h) - (d.y + d.vy * t);
              const double dx = static_cast<double>(w) - (d.x + d.vx * t);
              if (dy * dy + dx * dx <= d.radius * d.radius) v = std::max(v, d.level + d.slope * tn);
            }
            cube(h, w, c) = static_cast<T>(std::clamp(v, 0.0, 1.0));
          }
      }
      break;
    }
    case SceneKind::GradientRamps: {
      const double a0 = unit(rng) * 2.0 * std::numbers::pi;
      const double spin = (unit(rng) - 0.5) * 0.8;
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double a = a0 + spin * static_cast<double>(c);
        const double ca = std::cos(a), sa = std::sin(a);
        for (std::size_t h = 0; h < spec.height; ++h)
          for (std::size_t w = 0; w < spec.width; ++w) {
            const double u = (static_cast<double>(h) / H - 0.5) * sa + (static_cast<double>(w) / W - 0.5) * ca;
            cube(h, w, c) = static_cast<T>(std::clamp(0.5 + 0.7 * u, 0.0, 1.0));
          }
      }
      break;
    }
    case SceneKind::CheckerDrift: {
      const std::size_t period = 4 + static_cast<std::size_t>(unit(rng) * 5.0);
      const double lo = 0.1 + 0.2 * unit(rng), hi = 0.7 + 0.3 * unit(rng);
      for (std::size_t c = 0; c < spec.channels; ++c)
        for (std::size_t h = 0; h < spec.height; ++h)
          for (std::size_t w = 0; w < spec.width; ++w) {
            const bool on = (((h / period) + ((w + c) / period)) % 2) == 0;
            cube(h, w, c) = static_cast<T>(on ? hi : lo);
          }
      break;
    }
  }
  return cube;
}

}  // namespace snapsci
