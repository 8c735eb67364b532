#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interpgaze/data/sampler.hpp"
#include "interpgaze/data/synthetic.hpp"
#include "interpgaze/model/bundle.hpp"

namespace interpgaze {

/// Mean squared error after mapping [-1, 1] to the 0..255 scale.
double mse_metric(const EyePatch& a, const EyePatch& b);

/// Perceptual distance proxy: per pyramid level, activations are unit
/// normalised across channels at every location; the squared difference is
/// summed over channels, averaged over locations, then averaged over levels.
double perceptual_distance(const FeaturePyramid<float>& psi, const EyePatch& a, const EyePatch& b);

struct GazeErrorReport {
  double mean_deg = 0.0;
  double median_deg = 0.0;
  int n = 0;         ///< successful oracle readings
  int failures = 0;  ///< oracle failures (excluded from the mean)
  std::vector<double> errors;
  nlohmann::json to_json() const;
};

/// Produces the redirected image for (source, reference, v).
using Redirector = std::function<EyePatch(const Sample&, const Sample&, const ControlVector&)>;

/// Mean angular error between the commanded gaze src + v (ref - src) and the
/// oracle reading of the redirected output (read at the commanded pose).
GazeErrorReport gaze_error_eval(const Redirector& gen, const std::vector<PairSample>& pairs,
                                const ControlVector& v = ControlVector::full_move(0.0));

/// Spearman rank correlation with average ranks for ties. `degenerate` is set
/// (and 0 returned) when either input is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y,
                bool* degenerate = nullptr);

struct MonotonicityResult {
  double rho = 0.0;
  bool degenerate = false;  ///< constant readings: rho undefined, reported as 0
  int failures = 0;
  std::vector<double> readings;
};

/// Rank correlation between frame index and the oracle reading of `branch`
/// (yaw or pitch) for each frame; frame f is read at pose poses[f]. Throws
/// EstimationError when the oracle fails on more than 20% of frames.
MonotonicityResult monotonicity_diagnostic(const std::vector<EyePatch>& frames, Branch branch,
                                           const std::vector<double>& poses);

/// Same diagnostic on readings that are already available.
MonotonicityResult monotonicity_from_readings(const std::vector<double>& readings);

/// Grid layout: a label column of kGridLabelWidth pixels on the left, a
/// label row of kGridLabelHeight pixels on top, kGridSeparator-pixel gaps
/// between cells. Width = kGridLabelWidth + cols*W + (cols-1)*kGridSeparator.
inline constexpr int kGridLabelWidth = 56;
inline constexpr int kGridLabelHeight = 16;
inline constexpr int kGridSeparator = 2;

struct GridSize {
  int width = 0;
  int height = 0;
};
GridSize grid_size(int rows, int cols, int patch_h, int patch_w);

/// Writes the montage as one PNG. Throws ShapeError on a ragged matrix.
void emit_grid(const std::vector<std::vector<EyePatch>>& images,
               const std::vector<std::string>& row_labels,
               const std::vector<std::string>& col_labels, const std::string& path);

struct EvalReport {
  double mse = 0.0;
  double perceptual = 0.0;
  double gaze_error_deg = 0.0;
  double monotonicity_rho = 0.0;
  int n_samples = 0;
  nlohmann::json to_json() const;
};

/// Held-out evaluation of a trained model on synthetic data.
struct DeskEvalConfig {
  int redirect_pairs = 200;
  int sweeps = 50;
  int sweep_frames = 9;
  double min_sweep_yaw = 20.0;  ///< sweeps use pairs whose yaw differs at least this much
  int oneshot_pairs = 100;
  std::uint64_t seed = 99;
};

struct DeskEvalResult {
  GazeErrorReport redirect;        ///< v = (1,1,1,0), same subject
  GazeErrorReport autoencode;      ///< v = 0 against the source label (baseline row)
  double redirect_mse = 0.0;       ///< against the exact rendering
  double redirect_perceptual = 0.0;
  std::vector<double> sweep_rhos;
  double sweep_rho_median = 0.0;
  int sweep_failures = 0;
  std::vector<double> feature_ratios;
  double feature_ratio_median = 0.0;
  double classifier_accuracy = 0.0;
  std::array<double, 3> classifier_head_accuracy{};
  double oneshot_closer_to_source = 0.0;  ///< fraction of pairs
  GazeErrorReport oneshot;
  nlohmann::json to_json() const;
  EvalReport summary() const;
};

DeskEvalResult run_desk_evaluation(const ModelBundle<float>& m, const Dataset& heldout,
                                   const DeskEvalConfig& cfg = {});

}  // namespace interpgaze
