#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"

#include "interpgaze/trainer/trainer.hpp"

using namespace interpgaze;
namespace fs = std::filesystem;

namespace {

TrainConfig small_run(long long steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 2;
  c.n_critic = 1;
  c.checkpoint_interval = 10;
  c.data.synthetic.subjects = 3;
  c.data.synthetic.images_per_subject = 6;
  c.data.synthetic.seed = 31;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("interpgaze_trainer_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("control vector sampling") {
  Rng rng(5);
  int full = 0;
  for (int i = 0; i < 4000; ++i) {
    const auto v = sample_control_vector(rng, 0.25);
    for (int k = 0; k < 4; ++k) {
      CHECK(v[k] >= 0.0);
      CHECK(v[k] <= 1.0);
    }
    full += v[0] == 1.0 && v[1] == 1.0 && v[2] == 1.0;
  }
  CHECK(full > 900);
  CHECK(full < 1100);
}

TEST_CASE("train config: validation and JSON round trip") {
  TrainConfig c = small_run(7);
  c.weights.lambda_C_isp = 2.5;
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.hash() == c.hash());
  c.n_critic = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  nlohmann::json bad = j;
  bad["unknown_field"] = true;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ValidationError);
}

TEST_CASE("train config: learning-rate decay and partial overrides") {
  TrainConfig c;
  c.steps = 100;
  c.lr_decay_start = 0.5;
  CHECK(c.lr_scale(0) == 1.0);
  CHECK(c.lr_scale(49) == 1.0);
  CHECK(c.lr_scale(50) == 1.0);
  CHECK(c.lr_scale(75) == doctest::Approx(0.5));
  CHECK(c.lr_scale(99) == doctest::Approx(0.02));
  CHECK(c.lr_scale(100) == 0.0);
  c.lr_decay_start = 1.0;
  CHECK(c.lr_scale(99) == 1.0);
  c.lr_decay_start = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);

  const auto patched = nlohmann::json::parse(R"({"weights": {"lambda_p": 3}, "model": {"v_max": 1.2}})")
                           .get<TrainConfig>();
  CHECK(patched.weights.lambda_p == 3.0);
  CHECK(patched.weights.lambda_distill == default_train_weights().lambda_distill);
  CHECK(patched.model.v_max == 1.2);
  CHECK(patched.model.critic_on == default_train_model().critic_on);
}

TEST_CASE("trainer: each update touches only its own parameters") {
  const TrainConfig cfg = small_run(1);
  const Dataset data = load_training_data(cfg.data, cfg.model);
  Trainer t(cfg, data);
  const BatchBuilder bb(data, t.model().binning, cfg.p_full, cfg.cross_fraction);
  const auto batch = bb.next(t.rng(), 2, true);

  auto& m = t.model();
  const auto g0 = hash_parameters(m.generator_parameters());
  const auto d0 = hash_parameters(m.critic_parameters());
  const auto critic = t.train_step_critic(batch);
  CHECK(std::isfinite(critic.L_D));
  CHECK(hash_parameters(m.generator_parameters()) == g0);
  const auto d1 = hash_parameters(m.critic_parameters());
  CHECK(d1 != d0);

  const auto gen = t.train_step_generator(batch);
  CHECK(std::isfinite(gen.L_E));
  CHECK(std::isfinite(gen.L_G));
  CHECK(hash_parameters(m.critic_parameters()) == d1);
  CHECK(hash_parameters(m.generator_parameters()) != g0);
}

TEST_CASE("fit: checkpoints, logs, and resume equals an unbroken run") {
  const TrainConfig cfg = small_run(25);
  const Dataset data = load_training_data(cfg.data, cfg.model);
  const fs::path a = scratch("a"), b = scratch("b");

  FitOptions oa;
  oa.out_dir = a.string();
  const auto ra = fit(cfg, data, oa);
  CHECK(ra.step == 25);
  REQUIRE(ra.checkpoints.size() == 3);
  CHECK(fs::path(ra.checkpoints[0]).filename() == "ckpt_000010.igz");
  CHECK(fs::path(ra.checkpoints[1]).filename() == "ckpt_000020.igz");
  CHECK(fs::path(ra.checkpoints[2]).filename() == "ckpt_000025.igz");
  for (const auto& r : ra.reports) {
    CHECK(std::isfinite(r.L_E));
    CHECK(std::isfinite(r.L_G));
    CHECK(std::isfinite(r.L_D));
    CHECK(std::isfinite(r.L_C));
  }
  std::ifstream log(a / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) CHECK(nlohmann::json::parse(line).is_object());
  CHECK(lines == 25);

  FitOptions ob;
  ob.out_dir = b.string();
  ob.resume = ra.checkpoints[0];
  const auto rb = fit(cfg, data, ob);
  CHECK(rb.step == 25);
  CHECK(rb.reports.size() == 15);
  CHECK(slurp(rb.final_checkpoint) == slurp(ra.final_checkpoint));

  // Weights reload into a usable model.
  const auto m = load_model(ra.final_checkpoint);
  CHECK(nlohmann::json(m.config) == nlohmann::json(cfg.model));

  TrainConfig other = cfg;
  other.seed = 2;
  Trainer t(other, data);
  CHECK_THROWS_AS(t.load_checkpoint(ra.checkpoints[0]), ValidationError);
}
