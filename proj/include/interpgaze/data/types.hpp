#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "interpgaze/core/error.hpp"
#include "interpgaze/core/tensor.hpp"

namespace interpgaze {

/// RGB eye-region image, channel-major [3, H, W], values in [-1, 1].
struct EyePatch {
  int height = 0;
  int width = 0;
  Eigen::ArrayXf pixels;

  EyePatch() = default;
  EyePatch(int h, int w) : height(h), width(w), pixels(Eigen::ArrayXf::Zero(3 * h * w)) {}

  float& at(int c, int y, int x) { return pixels[(c * height + y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[(c * height + y) * width + x]; }

  /// Throws unless the patch has the given geometry and in-range values.
  void validate(int h, int w) const;

  friend bool operator==(const EyePatch& a, const EyePatch& b) {
    return a.height == b.height && a.width == b.width &&
           a.pixels.size() == b.pixels.size() && (a.pixels == b.pixels).all();
  }
};

/// Head pose and gaze angles in degrees plus the subject they belong to.
struct AttributeLabel {
  double pose_deg = 0.0;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  std::string subject_id;

  /// Attribute by controller branch index (0 = pose, 1 = yaw, 2 = pitch).
  double primary(int k) const { return k == 0 ? pose_deg : (k == 1 ? yaw_deg : pitch_deg); }
  double& primary(int k) { return k == 0 ? pose_deg : (k == 1 ? yaw_deg : pitch_deg); }

  bool same_angles(const AttributeLabel& o) const {
    return pose_deg == o.pose_deg && yaw_deg == o.yaw_deg && pitch_deg == o.pitch_deg;
  }
  friend bool operator==(const AttributeLabel&, const AttributeLabel&) = default;
};

/// Angle limits for synthetic data.
struct AngleBounds {
  double pose = 30.0;
  double yaw = 45.0;
  double pitch = 35.0;
};

/// Inputs of the procedural renderer. Nuisance fields describe appearance
/// (the "other" attribute axis).
struct SyntheticEyeParams {
  double pose_deg = 0.0;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double iris_hue = 0.6;
  double skin_tone = 0.5;
  double eyelid_aperture = 1.0;
  bool has_glasses = false;
  double brightness = 1.0;
  double light_angle_deg = 0.0;  ///< direction of the illumination gradient, [0, 360)
  std::uint64_t seed = 0;

  void validate(const AngleBounds& bounds = {}) const;
  friend bool operator==(const SyntheticEyeParams&, const SyntheticEyeParams&) = default;
};

/// A labelled image, optionally carrying the renderer inputs that produced it.
struct Sample {
  std::string name;
  EyePatch image;
  AttributeLabel label;
  std::optional<SyntheticEyeParams> params;
};

using Dataset = std::vector<Sample>;

/// Source/target pair drawn by the pair sampler.
struct PairSample {
  const Sample* source = nullptr;
  const Sample* target = nullptr;

  const EyePatch& source_image() const { return source->image; }
  const EyePatch& target_image() const { return target->image; }
  const AttributeLabel& source_attrs() const { return source->label; }
  const AttributeLabel& target_attrs() const { return target->label; }
};

/// Discrete bin centres per primary attribute (defaults: the Columbia-style
/// label sets).
struct Binning {
  std::vector<double> pose{-30, -15, 0, 15, 30};
  std::vector<double> yaw{-45, -35, -25, -15, -10, -5, 0, 5, 10, 15, 25, 35, 45};
  std::vector<double> pitch{-35, -25, -15, -10, 0, 10, 15, 25, 35};

  const std::vector<double>& centres(int k) const {
    return k == 0 ? pose : (k == 1 ? yaw : pitch);
  }
  std::array<int, 3> sizes() const { return {int(pose.size()), int(yaw.size()), int(pitch.size())}; }
  int total() const { return int(pose.size() + yaw.size() + pitch.size()); }
};

using BinIndices = std::array<int, 3>;

/// Nearest bin per attribute, ties toward the lower index.
BinIndices attrs_to_bins(const AttributeLabel& a, const Binning& binning = {});

/// Stacks patches into an [n, 3, H, W] tensor.
template <typename Scalar = float>
Tensor<Scalar> to_batch(const std::vector<const EyePatch*>& patches) {
  if (patches.empty()) return {};
  const int h = patches.front()->height, w = patches.front()->width;
  Tensor<Scalar> t(Shape{int(patches.size()), 3, h, w});
  for (int i = 0; i < int(patches.size()); ++i) {
    if (patches[i]->height != h || patches[i]->width != w)
      throw ShapeError("to_batch: mixed patch sizes");
    t.sample(i) = patches[i]->pixels.template cast<Scalar>();
  }
  return t;
}

template <typename Scalar>
EyePatch from_batch(const Tensor<Scalar>& t, int i) {
  const Shape s = t.shape();
  if (s.c != 3) throw ShapeError("from_batch: expected 3 channels, got " + s.str());
  EyePatch p(s.h, s.w);
  p.pixels = t.sample(i).template cast<float>();
  return p;
}

}  // namespace interpgaze
