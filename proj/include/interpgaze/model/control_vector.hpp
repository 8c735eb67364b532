#pragma once

#include <array>
#include <cmath>
#include <string>

#include "interpgaze/core/error.hpp"

namespace interpgaze {

/// Branch order of the controller: head pose, gaze yaw, gaze pitch, other.
enum class Branch : int { pose = 0, yaw = 1, pitch = 2, other = 3 };

inline constexpr int kBranchCount = 4;
inline constexpr int kPrimaryAttributes = 3;

/// Per-branch mixing strengths v = (P, H, V, O).
struct ControlVector {
  std::array<double, kBranchCount> v{0.0, 0.0, 0.0, 0.0};

  ControlVector() = default;
  ControlVector(double p, double h, double vv, double o) : v{p, h, vv, o} {}

  static ControlVector zero() { return {}; }
  /// Full move on the three primary attributes with the given O strength.
  static ControlVector full_move(double o = 0.0) { return {1.0, 1.0, 1.0, o}; }

  double& operator[](int k) { return v[k]; }
  double operator[](int k) const { return v[k]; }
  double operator[](Branch b) const { return v[int(b)]; }

  bool is_zero() const { return v[0] == 0 && v[1] == 0 && v[2] == 0 && v[3] == 0; }
  double max_component() const {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    return m;
  }

  /// Training-time range check: every component in [0, 1].
  void require_training_range() const { require_range(1.0); }
  /// Inference-time range check: every component in [0, v_max].
  void require_range(double v_max) const {
    for (int k = 0; k < kBranchCount; ++k) {
      if (!std::isfinite(v[k]) || v[k] < 0.0 || v[k] > v_max)
        throw RangeError("control component " + std::to_string(k) + " = " +
                         std::to_string(v[k]) + " outside [0, " + std::to_string(v_max) +
                         "] (v_max = " + std::to_string(v_max) + ")");
    }
  }

  friend bool operator==(const ControlVector&, const ControlVector&) = default;
};

}  // namespace interpgaze
