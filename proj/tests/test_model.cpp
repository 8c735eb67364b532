#include <set>

#include "doctest.h"

#include "support.hpp"
#include "suites.hpp"

using namespace interpgaze;
using testing::random_tensor;

TEST_CASE("encoder: shape, determinism, finiteness") {
  const auto m = ModelBundle<float>::create(ModelConfig{}, 1);
  Rng rng(2);
  const auto x = testing::random_images<float>(2, m.config, rng);
  const auto f = m.encoder.encode(x);
  CHECK(f.shape() == Shape{2, 256, 4, 8});
  CHECK(m.encoder.encode(x).array().isApprox(f.array(), 0.0f));
  const auto z = m.encoder.encode(Tensor<float>(Shape{1, 3, 32, 64}));
  CHECK(z.all_finite());
  CHECK_THROWS_AS(m.encoder.encode(Tensor<float>(Shape{1, 3, 32, 32})), ShapeError);
}

TEST_CASE("decoder: bounded output of the image shape") {
  const auto m = ModelBundle<float>::create(ModelConfig{}, 1);
  Rng rng(3);
  const auto f = random_tensor<float>(Shape{2, 256, 4, 8}, rng, 3.0);
  const auto x = m.decoder.decode(f);
  CHECK(x.shape() == Shape{2, 3, 32, 64});
  CHECK((x.array().abs() <= 1.0f).all());
}

TEST_CASE("controller: branch transform contract") {
  const auto m = ModelBundle<float>::create(ModelConfig{}, 4);
  const Tensor<float> zero(Shape{1, 256, 4, 8});
  for (int k = 1; k <= 4; ++k) CHECK(m.controller.branch_transform(k, zero).array().matrix().norm() <= 1e-6f);
  CHECK_THROWS_AS(m.controller.branch_transform(5, zero), ValidationError);
  CHECK_THROWS_AS(m.controller.branch_transform(0, zero), ValidationError);
}

TEST_CASE("controller: mixing rule closed forms") {
  Rng rng(5);
  const auto fi = random_tensor<double>(Shape{3, 4, 2, 2}, rng);
  const auto fj = random_tensor<double>(Shape{3, 4, 2, 2}, rng);
  const auto id = Controller<double>::identity(4);
  CHECK(id.mix(fi, fj, ControlVector::zero()).array().isApprox(fi.array(), 0.0));
  const auto quarter = id.mix(fi, fj, ControlVector(0.25, 0.25, 0.25, 0.25));
  CHECK((quarter.array() - fj.array()).abs().maxCoeff() <= 1e-12);
  // Per-row vectors: a zero row is untouched even when others move.
  std::vector<ControlVector> vs{ControlVector::zero(), ControlVector(1, 0, 0, 0), ControlVector::zero()};
  const auto mixed = id.mix(fi, fj, vs);
  CHECK((mixed.sample(0) == fi.sample(0)).all());
  CHECK((mixed.sample(1) - fj.sample(1)).abs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(id.mix(fi, random_tensor<double>(Shape{3, 4, 2, 3}, rng), ControlVector::zero()), ShapeError);
  CHECK_THROWS_AS(id.mix(fi, fj, std::vector<ControlVector>(2)), ShapeError);
}

TEST_CASE("controller: v = 0 identity and affinity in v") {
  const auto id = testing::control_identity_suite(10, 7);
  CHECK(id.exact == id.trials);
  const auto sp = testing::superposition_suite(20, 8);
  CHECK(sp.passed == sp.trials);
}

TEST_CASE("critic: one score per element") {
  auto m = ModelBundle<float>::create(ModelConfig{}, 1);
  Rng rng(6);
  const auto s = m.critic.score(random_tensor<float>(Shape{5, 256, 4, 8}, rng));
  CHECK(s.size() == 5);
  CHECK(s.allFinite());
}

TEST_CASE("classifier: three normalised heads") {
  auto m = ModelBundle<float>::create(ModelConfig{}, 1);
  Rng rng(7);
  const auto d = m.classifier.classify(random_tensor<float>(Shape{3, 256, 4, 8}, rng));
  REQUIRE(d.size() == 3);
  for (const auto& x : d) {
    CHECK(x.is_normalized(1e-5));
    CHECK(x.heads[0].size() == 5);
    CHECK(x.heads[1].size() == 13);
    CHECK(x.heads[2].size() == 9);
  }
}

TEST_CASE("psi: frozen pyramid with decreasing resolution") {
  auto m = ModelBundle<float>::create(ModelConfig{}, 1);
  Rng rng(8);
  const auto x = testing::random_images<float>(1, m.config, rng);
  const auto a = m.psi.extract(x);
  REQUIRE(a.size() == 4);
  for (int l = 1; l < 4; ++l) CHECK(a[l].shape().h < a[l - 1].shape().h);
  const auto b = m.psi.extract(x);
  for (int l = 0; l < 4; ++l) CHECK((a[l].array() == b[l].array()).all());
  // The pyramid does not depend on the model seed and is not trainable.
  auto other = ModelBundle<float>::create(ModelConfig{}, 99);
  CHECK((other.psi.extract(x)[3].array() == a[3].array()).all());
  for (auto* p : m.trainable_parameters()) CHECK(p->name.rfind("psi.", 0) != 0);
}

TEST_CASE("bundle: parameter budget and seeding") {
  auto a = ModelBundle<float>::create(ModelConfig{}, 1);
  auto b = ModelBundle<float>::create(ModelConfig{}, 1);
  auto c = ModelBundle<float>::create(ModelConfig{}, 2);
  CHECK(a.trainable_count() <= 2'000'000);
  CHECK(hash_parameters(a.trainable_parameters()) == hash_parameters(b.trainable_parameters()));
  CHECK(hash_parameters(a.trainable_parameters()) != hash_parameters(c.trainable_parameters()));
  std::set<std::string> names;
  for (const auto& [name, p] : a.named_parameters()) CHECK(names.insert(name).second);
}

TEST_CASE("config: validation and JSON round trip") {
  ModelConfig c;
  c.height = 30;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ModelConfig{};
  c.critic_on = CriticInput::images;
  const nlohmann::json j = c;
  const auto back = j.get<ModelConfig>();
  CHECK(nlohmann::json(back) == j);
  nlohmann::json bad = j;
  bad["mystery"] = 1;
  CHECK_THROWS_AS(bad.get<ModelConfig>(), ValidationError);
}
