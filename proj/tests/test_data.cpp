#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "interpgaze/data/columbia.hpp"
#include "interpgaze/data/sampler.hpp"
#include "interpgaze/data/synthetic.hpp"
#include "interpgaze/io/image_io.hpp"

using namespace interpgaze;
namespace fs = std::filesystem;

namespace {

SyntheticEyeParams centred() {
  SyntheticEyeParams p;
  p.iris_hue = 0.6;
  p.skin_tone = 0.3;
  p.brightness = 1.0;
  p.seed = 11;
  return p;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("interpgaze_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Sample labelled(const std::string& subject, double pose, double yaw, double pitch) {
  Sample s;
  s.name = subject;
  s.label = {pose, yaw, pitch, subject};
  s.image = EyePatch(32, 64);
  return s;
}

}  // namespace

TEST_CASE("renderer: centred gaze puts the iris at the patch centre") {
  const auto [x, y] = iris_centroid(render_synthetic(centred()));
  CHECK(std::abs(x - 32.0) <= 0.5);
  CHECK(std::abs(y - 16.0) <= 0.5);
}

TEST_CASE("renderer: yaw 45 at pose 0 moves the iris by W/2 - margin") {
  const RenderGeometry g;
  // Independent evaluation of the affine law: dx = (W/2 - margin) * yaw/45 * cos(pose) + shift(pose).
  const double expected = (g.width / 2.0 - g.margin_x) * 45.0 / 45.0 * std::cos(0.0) + 0.0;
  CHECK(iris_offset(0, 45, 0).first == doctest::Approx(expected).epsilon(1e-12));
  auto p = centred();
  p.yaw_deg = 45;
  const auto [x, y] = iris_centroid(render_synthetic(p));
  CHECK(x - g.width / 2.0 == doctest::Approx(expected).epsilon(0.02));
  CHECK(std::abs(y - 16.0) <= 0.5);
}

TEST_CASE("renderer: deterministic and validated") {
  auto p = centred();
  p.yaw_deg = 12.5;
  p.pose_deg = -15;
  p.has_glasses = true;
  p.light_angle_deg = 200;
  CHECK(render_synthetic(p) == render_synthetic(p));
  p.yaw_deg = 46;
  CHECK_THROWS_AS(render_synthetic(p), ValidationError);
  p.yaw_deg = 0;
  p.brightness = 1.31;
  CHECK_THROWS_AS(render_synthetic(p), ValidationError);
  p.brightness = 1.0;
  p.eyelid_aperture = 0.0;
  CHECK_THROWS_AS(render_synthetic(p), ValidationError);
}

TEST_CASE("renderer: pixels stay in [-1, 1]") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto app = sample_appearance(rng, "s", 0.5);
    const auto a = sample_grid_angles(rng);
    const EyePatch img = render_synthetic(make_params(app, a.pose_deg, a.yaw_deg, a.pitch_deg, 1.0, i));
    CHECK_NOTHROW(img.validate(32, 64));
  }
}

TEST_CASE("oracle: round trips and failure contract") {
  auto p = centred();
  p.yaw_deg = 10;
  auto [yaw, pitch] = oracle_gaze_from_image(render_synthetic(p), 0.0);
  CHECK(std::abs(yaw - 10.0) <= 1.0);
  CHECK(std::abs(pitch) <= 1.0);

  p.yaw_deg = 0;
  std::tie(yaw, pitch) = oracle_gaze_from_image(render_synthetic(p), 0.0);
  CHECK(std::abs(yaw) <= 1.0);
  CHECK(std::abs(pitch) <= 1.0);

  p.eyelid_aperture = 1e-3;
  CHECK_THROWS_AS(oracle_gaze_from_image(render_synthetic(p), 0.0), EstimationError);

  EyePatch blank(32, 64);
  blank.pixels.setConstant(0.8f);
  CHECK_THROWS_AS(iris_centroid(blank), EstimationError);
}

TEST_CASE("oracle: within 1 degree on a rendered dataset") {
  SyntheticDatasetSpec spec;
  spec.subjects = 10;
  spec.images_per_subject = 20;
  spec.seed = 21;
  const Dataset d = generate_synthetic_dataset(spec);
  int ok = 0;
  for (const auto& s : d) {
    const auto [yaw, pitch] = oracle_gaze_from_image(s.image, s.label.pose_deg);
    ok += angular_error_deg(yaw, pitch, s.label.yaw_deg, s.label.pitch_deg) <= 1.0;
  }
  CHECK(ok >= int(0.99 * double(d.size())));
}

TEST_CASE("angular error") {
  CHECK(angular_error_deg(10, 0, 10, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(angular_error_deg(0, 0, 30, 0) == doctest::Approx(30.0));
  CHECK(angular_error_deg(0, 0, 0, -20) == doctest::Approx(20.0));
}

TEST_CASE("dataset: subjects, names and grid labels") {
  SyntheticDatasetSpec spec;
  spec.subjects = 3;
  spec.images_per_subject = 4;
  spec.seed = 5;
  const Dataset d = generate_synthetic_dataset(spec);
  REQUIRE(d.size() == 12);
  CHECK(d[0].name == "s000_000");
  CHECK(d[5].label.subject_id == "s001");
  const Binning b;
  for (const auto& s : d) {
    CHECK(std::find(b.yaw.begin(), b.yaw.end(), s.label.yaw_deg) != b.yaw.end());
    CHECK(s.params.has_value());
    CHECK(render_synthetic(*s.params) == s.image);
  }
  CHECK(generate_synthetic_dataset(spec)[7].image == d[7].image);
}

TEST_CASE("dataset: rerender keeps appearance and moves the gaze") {
  SyntheticDatasetSpec spec;
  spec.subjects = 1;
  spec.images_per_subject = 2;
  const Dataset d = generate_synthetic_dataset(spec);
  const Sample same = rerender(d[0], d[0].label);
  CHECK(same.image == d[0].image);
  AttributeLabel a = d[0].label;
  a.yaw_deg = -a.yaw_deg + 5;
  const Sample moved = rerender(d[0], a);
  CHECK(moved.label.yaw_deg == a.yaw_deg);
  CHECK(moved.params->brightness == d[0].params->brightness);
  Sample bare = d[0];
  bare.params.reset();
  CHECK_THROWS_AS(rerender(bare, a), DataError);
}

TEST_CASE("dataset: export and reload") {
  SyntheticDatasetSpec spec;
  spec.subjects = 2;
  spec.images_per_subject = 3;
  const Dataset d = generate_synthetic_dataset(spec);
  const fs::path dir = scratch("export");
  export_dataset(d, dir.string());
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "s000_000.png"));
  const Dataset back = load_synthetic_dir(dir.string());
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].label == d[i].label);
    CHECK(*back[i].params == *d[i].params);
    CHECK(back[i].image == d[i].image);
  }
  // The PNG is an 8-bit quantisation of the same render.
  const EyePatch png = load_image((dir / "s000_000.png").string(), 32, 64);
  CHECK((png.pixels - d[0].image.pixels).abs().maxCoeff() <= 2.0f / 255.0f + 1e-6f);
}

TEST_CASE("bins: Table 1 sets and the tie rule") {
  const Binning b;
  CHECK(b.pose == std::vector<double>{-30, -15, 0, 15, 30});
  CHECK(b.yaw == std::vector<double>{-45, -35, -25, -15, -10, -5, 0, 5, 10, 15, 25, 35, 45});
  CHECK(b.pitch == std::vector<double>{-35, -25, -15, -10, 0, 10, 15, 25, 35});
  CHECK(attrs_to_bins({-15, 0, 0, ""})[0] == 1);
  CHECK(attrs_to_bins({0, 7.5, 0, ""})[1] == 7);  // 7.5 sits between 5 (index 7) and 10
  CHECK(attrs_to_bins({0, 0, -35, ""})[2] == 0);
  CHECK_THROWS_AS(attrs_to_bins({0, 50, 0, ""}), RangeError);
  CHECK_THROWS_AS(attrs_to_bins({-31, 0, 0, ""}), RangeError);
}

TEST_CASE("columbia: file-name grammar") {
  const auto a = parse_columbia_name("0042_2m_-15P_10V_5H.jpg");
  REQUIRE(a.has_value());
  CHECK(a->subject_id == "0042");
  CHECK(a->pose_deg == -15);
  CHECK(a->pitch_deg == 10);
  CHECK(a->yaw_deg == 5);
  CHECK(parse_columbia_name("0042_2m_0P_0V_0H.PNG").has_value());
  CHECK_FALSE(parse_columbia_name("0042_3m_0P_0V_0H.png").has_value());
  CHECK_FALSE(parse_columbia_name("notes.txt").has_value());
}

TEST_CASE("columbia: directory loading") {
  const fs::path dir = scratch("columbia");
  CHECK_THROWS_AS(load_columbia_dir(dir.string()), DataError);
  std::ofstream(dir / "readme.txt") << "x";
  CHECK_THROWS_AS(load_columbia_dir(dir.string()), DataError);

  auto p = centred();
  p.yaw_deg = 5;
  EyePatch img = render_synthetic(p);
  save_png(img, (dir / "0001_2m_0P_0V_5H.png").string());
  save_png(img, (dir / "0001_2m_15P_10V_-5H.png").string());
  const auto report = load_columbia_dir(dir.string());
  CHECK(report.records.size() == 2);
  CHECK(report.skipped == 1);
  // Records come back in file-name order.
  CHECK(report.records[0].label.yaw_deg == 5);
  CHECK(report.records[1].label.pose_deg == 15);
  CHECK(report.records[1].label.yaw_deg == -5);
}

TEST_CASE("sampler: modes and determinism") {
  SUBCASE("single subject, two distinct images -> that pair") {
    Dataset d{labelled("a", 0, 0, 0), labelled("a", 0, 5, 0)};
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
      const auto p = sample_pair(d, rng, PairMode::train);
      CHECK(p.source->label.subject_id == p.target->label.subject_id);
      CHECK_FALSE(p.source->label.same_angles(p.target->label));
    }
  }
  SUBCASE("identical attributes -> error") {
    Dataset d{labelled("a", 0, 0, 0), labelled("a", 0, 0, 0)};
    Rng rng(1);
    CHECK_THROWS_AS(sample_pair(d, rng, PairMode::train), DataError);
    CHECK_THROWS_AS(sample_pair(d, rng, PairMode::redirect), DataError);
  }
  SUBCASE("redirect may cross subjects; cross-subject sampler always does") {
    Dataset d{labelled("a", 0, 0, 0), labelled("b", 0, 5, 0), labelled("b", 15, 5, 0)};
    const PairSampler s(d);
    Rng rng(2);
    bool crossed = false;
    for (int i = 0; i < 50; ++i) {
      const auto p = s.sample(rng, PairMode::redirect);
      crossed = crossed || p.source->label.subject_id != p.target->label.subject_id;
      const auto q = s.sample_cross_subject(rng);
      CHECK(q.source->label.subject_id != q.target->label.subject_id);
    }
    CHECK(crossed);
  }
  SUBCASE("fixed seed -> identical sequence") {
    SyntheticDatasetSpec spec;
    spec.subjects = 4;
    spec.images_per_subject = 5;
    const Dataset d = generate_synthetic_dataset(spec);
    const PairSampler s(d);
    Rng a(9), b(9);
    for (int i = 0; i < 20; ++i) {
      const auto pa = s.sample(a, PairMode::interp), pb = s.sample(b, PairMode::interp);
      CHECK(pa.source == pb.source);
      CHECK(pa.target == pb.target);
    }
  }
  CHECK(parse_pair_mode("interp") == PairMode::interp);
  CHECK_THROWS_AS(parse_pair_mode("other"), ValidationError);
}
