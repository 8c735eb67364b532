#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "interpgaze/core/rng.hpp"
#include "interpgaze/data/types.hpp"

namespace interpgaze {

/// Fixed geometry of the procedural renderer (pixel units unless noted).
struct RenderGeometry {
  int height = 32;
  int width = 64;
  double margin_x = 7.0;  ///< iris travel at |yaw| = 45 is width/2 - margin_x
  double margin_y = 5.0;  ///< iris travel at |pitch| = 35 is height/2 - margin_y
  double pose_shift = 3.0;  ///< extra iris shift at |pose| = 30
  double iris_radius = 3.5;
  double pupil_radius = 1.6;
  double opening_half_width = 31.0;
  double opening_half_height = 15.5;  ///< at eyelid_aperture = 1
  double opening_exponent = 10.0;     ///< superellipse exponent of the eye opening
  double shear_at_30 = 0.35;          ///< horizontal shear (dx per dy) at |pose| = 30
  int supersample = 4;

  double max_dx() const { return width / 2.0 - margin_x; }
  double max_dy() const { return height / 2.0 - margin_y; }
};

/// Iris centre offset from the patch centre; +dy is up.
std::pair<double, double> iris_offset(double pose_deg, double yaw_deg, double pitch_deg,
                                      const RenderGeometry& g = {});

/// Inverse of iris_offset for a known pose.
std::pair<double, double> angles_from_offset(double dx, double dy, double pose_deg,
                                             const RenderGeometry& g = {});

/// Deterministic anti-aliased render of one eye patch.
EyePatch render_synthetic(const SyntheticEyeParams& params, const RenderGeometry& g = {},
                          const AngleBounds& bounds = {});

/// Iris centroid (x, y) in pixel coordinates, estimated by darkness-weighted
/// segmentation. Throws EstimationError when no iris is visible.
std::pair<double, double> iris_centroid(const EyePatch& img);

/// Recovers (yaw, pitch) in degrees from a rendered patch and its head pose.
std::pair<double, double> oracle_gaze_from_image(const EyePatch& img, double pose_deg,
                                                 const RenderGeometry& g = {});

/// Unit 3D gaze vector for (yaw, pitch) in degrees.
std::array<double, 3> gaze_vector(double yaw_deg, double pitch_deg);
/// Angle in degrees between two gaze directions.
double angular_error_deg(double yaw_a, double pitch_a, double yaw_b, double pitch_b);

/// Appearance of one synthetic subject (the "other" attribute axis).
struct SubjectAppearance {
  std::string subject_id;
  double iris_hue = 0.6;
  double skin_tone = 0.5;
  bool has_glasses = false;
  double brightness = 1.0;
  double light_angle_deg = 0.0;
  double aperture_lo = 0.95;
  double aperture_hi = 1.0;
};

/// Recipe for a synthetic dataset. Angles are drawn from the bin grid so
/// every label has an exact class.
struct SyntheticDatasetSpec {
  int subjects = 60;
  int images_per_subject = 50;
  std::uint64_t seed = 1;
  std::string subject_prefix = "s";
  double glasses_probability = 0.3;

  int count() const { return subjects * images_per_subject; }
  void validate() const;
};
void to_json(nlohmann::json& j, const SyntheticDatasetSpec& s);
void from_json(const nlohmann::json& j, SyntheticDatasetSpec& s);

SubjectAppearance sample_appearance(Rng& rng, const std::string& subject_id,
                                    double glasses_probability = 0.3);

/// Render parameters for `app` with the given angles; the seed drives skin noise.
SyntheticEyeParams make_params(const SubjectAppearance& app, double pose, double yaw,
                               double pitch, double aperture, std::uint64_t seed);

/// Random grid angles for one image.
AttributeLabel sample_grid_angles(Rng& rng, const Binning& binning = {});

Dataset generate_synthetic_dataset(const SyntheticDatasetSpec& spec, const Binning& binning = {});

/// Same subject appearance and nuisance seed, different angles: the exact
/// ground-truth image of a redirection.
Sample rerender(const Sample& s, const AttributeLabel& angles);

/// Writes `{index}.png` files plus manifest.json (params per file).
void export_dataset(const Dataset& data, const std::string& dir);

/// Re-renders a directory written by export_dataset from its manifest.
Dataset load_synthetic_dir(const std::string& dir, const RenderGeometry& g = {});

nlohmann::json params_to_json(const SyntheticEyeParams& p);
SyntheticEyeParams params_from_json(const nlohmann::json& j);

}  // namespace interpgaze
