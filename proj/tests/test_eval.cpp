#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"

#include "interpgaze/eval/metrics.hpp"
#include "interpgaze/io/image_io.hpp"

using namespace interpgaze;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

EyePatch constant_patch(float v) {
  EyePatch p(32, 64);
  p.pixels.setConstant(v);
  return p;
}

}  // namespace

TEST_CASE("mse: scale endpoints") {
  const auto a = constant_patch(-1.0f), b = constant_patch(1.0f);
  CHECK(mse_metric(a, a) == 0.0);
  CHECK(mse_metric(a, b) == doctest::Approx(255.0 * 255.0));
  CHECK_THROWS_AS(mse_metric(a, EyePatch(16, 64)), ShapeError);
}

TEST_CASE("spearman: perfect, reversed, and constant") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman(x, {2, 4, 6, 8, 10}) == doctest::Approx(1.0));
  CHECK(spearman(x, {5, 3, 2, 1, -7}) == doctest::Approx(-1.0));
  bool degenerate = false;
  CHECK(spearman(x, {3, 3, 3, 3, 3}, &degenerate) == 0.0);
  CHECK(degenerate);
  // Ties get average ranks; a monotone step is still positively correlated.
  CHECK(spearman(x, {0, 0, 1, 1, 1}) > 0.8);
  const auto m = monotonicity_from_readings({-20, -10, 0, 10, 20});
  CHECK(m.rho == doctest::Approx(1.0));
}

TEST_CASE("grid: layout arithmetic and stable output") {
  const auto one = grid_size(1, 1, 32, 64);
  CHECK(one.width == kGridLabelWidth + 64);
  CHECK(one.height == kGridLabelHeight + 32);
  const auto big = grid_size(4, 8, 32, 64);
  CHECK(big.width == kGridLabelWidth + 8 * 64 + 7 * kGridSeparator);
  CHECK(big.height == kGridLabelHeight + 4 * 32 + 3 * kGridSeparator);

  const fs::path dir = fs::temp_directory_path() / "interpgaze_grid";
  fs::create_directories(dir);
  std::vector<std::vector<EyePatch>> cells(2, std::vector<EyePatch>(3, constant_patch(0.2f)));
  cells[1][2] = constant_patch(-0.6f);
  emit_grid(cells, {"a", "b"}, {"src", "mid", "tgt"}, (dir / "g1.png").string());
  emit_grid(cells, {"a", "b"}, {"src", "mid", "tgt"}, (dir / "g2.png").string());
  CHECK(slurp(dir / "g1.png") == slurp(dir / "g2.png"));
  const auto size = grid_size(2, 3, 32, 64);
  const EyePatch back = load_image((dir / "g1.png").string(), size.height, size.width);
  CHECK(back.height == size.height);

  cells[1].pop_back();
  CHECK_THROWS_AS(emit_grid(cells, {"a", "b"}, {"src", "mid", "tgt"}, (dir / "g3.png").string()),
                  ShapeError);
}

TEST_CASE("gaze error: a perfect generator scores below one degree") {
  SyntheticDatasetSpec spec;
  spec.subjects = 4;
  spec.images_per_subject = 10;
  spec.seed = 77;
  const Dataset d = generate_synthetic_dataset(spec);
  const PairSampler sampler(d);
  Rng rng(3);
  std::vector<PairSample> pairs;
  for (int i = 0; i < 40; ++i) pairs.push_back(sampler.sample(rng, PairMode::train));

  const Redirector perfect = [](const Sample& s, const Sample& r, const ControlVector& v) {
    AttributeLabel a = s.label;
    a.pose_deg += v[0] * (r.label.pose_deg - s.label.pose_deg);
    a.yaw_deg += v[1] * (r.label.yaw_deg - s.label.yaw_deg);
    a.pitch_deg += v[2] * (r.label.pitch_deg - s.label.pitch_deg);
    return rerender(s, a).image;
  };
  const auto full = gaze_error_eval(perfect, pairs);
  CHECK(full.failures == 0);
  CHECK(full.mean_deg < 1.0);
  const auto half = gaze_error_eval(perfect, pairs, ControlVector(0.5, 0.5, 0.5, 0));
  CHECK(half.mean_deg < 1.0);

  // Returning the unchanged source is wrong by the full angular offset.
  const Redirector lazy = [](const Sample& s, const Sample&, const ControlVector&) { return s.image; };
  CHECK(gaze_error_eval(lazy, pairs).mean_deg > 5.0);
}

TEST_CASE("monotonicity: a perfect sweep and the failure threshold") {
  SyntheticDatasetSpec spec;
  spec.subjects = 1;
  spec.images_per_subject = 1;
  const Dataset d = generate_synthetic_dataset(spec);
  std::vector<EyePatch> frames;
  std::vector<double> poses;
  for (int f = 0; f < 9; ++f) {
    AttributeLabel a = d[0].label;
    a.yaw_deg = -40.0 + 10.0 * f;
    frames.push_back(rerender(d[0], a).image);
    poses.push_back(a.pose_deg);
  }
  const auto r = monotonicity_diagnostic(frames, Branch::yaw, poses);
  CHECK(r.rho == doctest::Approx(1.0));
  CHECK(r.failures == 0);

  // Two unreadable frames out of nine exceed the 20% budget.
  frames[2] = constant_patch(0.8f);
  frames[6] = constant_patch(0.8f);
  CHECK_THROWS_AS(monotonicity_diagnostic(frames, Branch::yaw, poses), EstimationError);
  frames[6] = frames[5];
  const auto one = monotonicity_diagnostic(frames, Branch::yaw, poses);
  CHECK(one.failures == 1);
}

TEST_CASE("perceptual distance: zero on identical images, positive otherwise") {
  const auto m = ModelBundle<float>::create(ModelConfig{}, 1);
  SyntheticDatasetSpec spec;
  spec.subjects = 1;
  spec.images_per_subject = 2;
  const Dataset d = generate_synthetic_dataset(spec);
  CHECK(perceptual_distance(m.psi, d[0].image, d[0].image) == 0.0);
  CHECK(perceptual_distance(m.psi, d[0].image, d[1].image) > 0.0);
}
