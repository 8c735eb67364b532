#include "doctest.h"

#include "interpgaze/control/control.hpp"

using namespace interpgaze;

namespace {

AttributeLabel attrs(double p, double v, double h) { return {p, h, v, ""}; }

}  // namespace

TEST_CASE("control vector: the worked examples") {
  const auto src = attrs(-15, 0, 15), tgt = attrs(15, 0, -15);
  const auto v1 = compute_control_vector(src, tgt, attrs(0, 0, -5));
  CHECK(v1[0] == 0.5);
  CHECK(v1[1] == doctest::Approx(0.667).epsilon(1e-3));
  CHECK(v1[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(v1[2] == 0.0);
  CHECK(v1[3] == 0.0);
  // The reference at (0P, 0V, -5H) is fully adopted.
  const auto v2 = compute_control_vector(src, attrs(0, 0, -5), attrs(0, 0, -5));
  CHECK(v2 == ControlVector(1.0, 1.0, 0.0, 0.0));
  CHECK(compute_control_vector(src, tgt, src).is_zero());
}

TEST_CASE("control vector: unreachable attributes and clamping") {
  const auto src = attrs(0, 0, 10), tgt = attrs(15, 0, 20);
  CHECK_THROWS_AS(compute_control_vector(src, tgt, attrs(0, 10, 10)), ValidationError);
  std::vector<std::string> warnings;
  const auto v = compute_control_vector(src, tgt, attrs(-15, 0, 40), 1.5, &warnings);
  CHECK(v[0] == 0.0);  // opposite direction clamps to 0
  CHECK(v[1] == 1.5);  // 3x the offset clamps to v_max
  CHECK(warnings.size() == 2);
}

TEST_CASE("attribute triples") {
  const auto a = parse_attribute_triple("P=0,V=0,H=-5");
  CHECK(a.pose_deg == 0);
  CHECK(a.pitch_deg == 0);
  CHECK(a.yaw_deg == -5);
  const auto b = parse_attribute_triple("h=7", attrs(15, 10, 0));
  CHECK(b.pose_deg == 15);
  CHECK(b.pitch_deg == 10);
  CHECK(b.yaw_deg == 7);
  CHECK_THROWS_AS(parse_attribute_triple("P=0,P=1"), ValidationError);
  CHECK_THROWS_AS(parse_attribute_triple("X=3"), ValidationError);
  CHECK_THROWS_AS(parse_attribute_triple("P=abc"), ValidationError);
  CHECK_THROWS_AS(parse_attribute_triple("P0"), ValidationError);
}

TEST_CASE("interpolation schedules") {
  SUBCASE("two joint frames are the endpoints") {
    InterpSchedule s;
    s.steps = 2;
    s.o_strength = 0.4;
    const auto v = s.vectors();
    REQUIRE(v.size() == 2);
    CHECK(v[0] == ControlVector(0, 0, 0, 0.4));
    CHECK(v[1] == ControlVector(1, 1, 1, 0.4));
  }
  SUBCASE("PHV ramps one attribute at a time") {
    InterpSchedule s;
    s.steps = 7;
    s.order = "PHV";
    const auto v = s.vectors();
    REQUIRE(v.size() == 7);
    int done_p = -1, done_h = -1, done_v = -1;
    for (int f = 0; f < 7; ++f) {
      if (f > 0)
        for (int k = 0; k < 3; ++k) CHECK(v[f][k] >= v[f - 1][k]);
      if (done_p < 0 && v[f][0] == 1.0) done_p = f;
      if (done_h < 0 && v[f][1] == 1.0) done_h = f;
      if (done_v < 0 && v[f][2] == 1.0) done_v = f;
      if (v[f][1] > 0) CHECK(v[f][0] == 1.0);
      if (v[f][2] > 0) CHECK(v[f][1] == 1.0);
    }
    CHECK(done_p < done_h);
    CHECK(done_h < done_v);
    CHECK(v.back() == ControlVector(1, 1, 1, 0));
    CHECK(v.front().is_zero());
  }
  SUBCASE("invalid schedules") {
    InterpSchedule s;
    s.steps = 1;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.steps = 5;
    s.order = "PPV";
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.order = "VHP";
    s.o_strength = 2.0;
    CHECK_THROWS_AS(s.validate(1.5), RangeError);
  }
}

TEST_CASE("redirect / extrapolate contracts on an untrained model") {
  auto m = ModelBundle<float>::create(ModelConfig{}, 3);
  EyePatch xs(32, 64), xr(32, 64);
  Rng rng(4);
  for (Eigen::Index i = 0; i < xs.pixels.size(); ++i) {
    xs.pixels[i] = float(rng.uniform(-1, 1));
    xr.pixels[i] = float(rng.uniform(-1, 1));
  }
  const auto ae = from_batch(m.decoder.decode(m.encoder.encode(to_batch<float>({&xs}))), 0);
  CHECK(redirect(m, xs, xr, ControlVector::zero()) == ae);
  CHECK_THROWS_AS(extrapolate(m, xs, xr, ControlVector(1.6, 0, 0, 0)), RangeError);
  CHECK_NOTHROW(extrapolate(m, xs, xr, ControlVector(1.2, 0, 0, 0)));
  try {
    extrapolate(m, xs, xr, ControlVector(1.6, 0, 0, 0));
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find("v_max") != std::string::npos);
  }
  const auto frames = interpolation_sequence(m, xs, xr, InterpSchedule{});
  CHECK(frames.size() == 9);
  CHECK(frames.front() == ae);
  ModelBundle<float> empty;
  CHECK_THROWS_AS(redirect(empty, xs, xr, ControlVector::zero()), ValidationError);
  CHECK_THROWS_AS(redirect(m, EyePatch(16, 64), xr, ControlVector::zero()), ShapeError);
}
