// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when all of them pass.
//
//   interpgaze_acceptance [--work DIR] [--skip-training] [--reuse]
//
// --reuse picks up finished training runs already present in DIR. The
// report lines are also written to DIR/acceptance_report.txt.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "CLI11.hpp"

#include "interpgaze/control/control.hpp"
#include "interpgaze/eval/metrics.hpp"
#include "interpgaze/trainer/trainer.hpp"
#include "suites.hpp"

using namespace interpgaze;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;
std::ofstream report_file;

void report(int n, bool ok, const std::string& detail) {
  failures += !ok;
  std::ostringstream line;
  line << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << "  " << detail;
  std::cout << line.str() << std::endl;
  report_file << line.str() << std::endl;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void criterion_identity() {
  const auto r = testing::control_identity_suite(100, 101);
  report(1, r.exact == r.trials && r.seconds < 10.0,
         std::to_string(r.exact) + "/" + std::to_string(r.trials) + " bitwise, " +
             fmt("%.2f s", r.seconds));
}

void criterion_superposition() {
  const auto r = testing::superposition_suite(100, 102, 1e-6);
  report(2, r.passed == r.trials,
         std::to_string(r.passed) + "/" + std::to_string(r.trials) + ", worst " + fmt("%.2e", r.worst));
}

void criterion_worked_examples() {
  const AttributeLabel src{-15, 15, 0, ""}, tgt{15, -15, 0, ""}, ref{0, -5, 0, ""};
  const auto v1 = compute_control_vector(src, tgt, ref);
  const auto v2 = compute_control_vector(src, ref, ref);
  // Hand-computed: (0 - -15) / (15 - -15) and (-5 - 15) / (-15 - 15).
  const ControlVector e1(15.0 / 30.0, 20.0 / 30.0, 0.0, 0.0), e2(1.0, 1.0, 0.0, 0.0);
  const bool ok1 = v1 == e1 && std::abs(v1[1] - 0.667) < 5e-4;
  const bool ok2 = v2 == e2;
  std::ostringstream s;
  s << "v1 = [" << v1[0] << ", " << v1[1] << ", " << v1[2] << ", " << v1[3] << "], v2 = [" << v2[0]
    << ", " << v2[1] << ", " << v2[2] << ", " << v2[3] << "]";
  report(3, ok1 && ok2, s.str());
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto checks = testing::gradient_suite(104, 40);
  const double secs = seconds_since(t0);
  bool ok = secs < 300.0;
  std::string worst_name;
  double worst_rate = 1.0;
  int total = 0;
  for (const auto& [name, c] : checks) {
    total += c.checked;
    ok = ok && c.checked > 0 && c.pass_rate() >= 0.95;
    if (c.pass_rate() <= worst_rate) {
      worst_rate = c.pass_rate();
      worst_name = name;
    }
  }
  report(4, ok,
         std::to_string(checks.size()) + " terms, " + std::to_string(total) + " coordinates, lowest pass rate " +
             fmt("%.3f", worst_rate) + " (" + worst_name + "), " + fmt("%.1f s", secs));
}

void criterion_penalty() {
  const auto r = testing::penalty_analytics(105, 10.0);
  const bool ok = std::abs(r.penalty_norm1) <= 1e-6 && std::abs(r.penalty_norm2 - 1.0) <= 1e-6 &&
                  std::abs(r.weighted_norm1) <= 1e-6 && std::abs(r.weighted_norm2 - 10.0) <= 1e-6;
  report(5, ok,
         "penalties " + fmt("%.3e", r.penalty_norm1) + " / " + fmt("%.9f", r.penalty_norm2) +
             ", weighted " + fmt("%.3e", r.weighted_norm1) + " / " + fmt("%.9f", r.weighted_norm2));
}

void criterion_invariants() {
  const auto r = testing::invariant_suite(1000, 106);
  std::ostringstream s;
  s << r.trials << " trials: asymmetric " << r.gram_asymmetric << ", not PSD " << r.gram_not_psd
    << ", unnormalised " << r.soft_label_unnormalized << ", Gibbs " << r.gibbs_violations;
  report(6, r.violations() == 0, s.str());
}

struct Run {
  FitResult fit;
  double seconds = 0.0;
  bool finite = true;
  std::string error;
};

Run train(const TrainConfig& cfg, const Dataset& data, const fs::path& dir, bool reuse) {
  Run run;
  char tag[32];
  std::snprintf(tag, sizeof tag, "ckpt_%06lld.igz", cfg.steps);
  const fs::path final_ckpt = dir / tag;
  if (reuse && fs::exists(final_ckpt)) {
    run.fit.step = cfg.steps;
    run.fit.final_checkpoint = final_ckpt.string();
    std::ifstream timing(dir / "seconds.txt");
    timing >> run.seconds;
    std::cout << "reusing " << final_ckpt << std::endl;
    return run;
  }
  fs::remove_all(dir);
  FitOptions opts;
  opts.out_dir = dir.string();
  const auto t0 = Clock::now();
  try {
    run.fit = fit(cfg, data, opts);
  } catch (const NonFiniteError& e) {
    run.finite = false;
    run.error = e.what();
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  std::ofstream(dir / "seconds.txt") << run.seconds << '\n';
  std::cout << "training run in " << dir << ": " << fmt("%.0f s", run.seconds)
            << (run.error.empty() ? "" : " error: " + run.error) << std::endl;
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interpgaze acceptance runner"};
  std::string work = "acceptance";
  bool skip_training = false, reuse = false;
  app.add_option("--work", work, "scratch directory for training runs");
  app.add_flag("--skip-training", skip_training, "only run criteria 1-6");
  app.add_flag("--reuse", reuse, "reuse finished training runs in --work");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  report_file.open(fs::path(work) / "acceptance_report.txt");

  criterion_identity();
  criterion_superposition();
  criterion_worked_examples();
  criterion_gradients();
  criterion_penalty();
  criterion_invariants();

  if (skip_training) {
    std::cout << "criteria 7-9 skipped" << std::endl;
    report_file << "criteria 7-9 skipped" << std::endl;
    return failures == 0 ? 0 : 1;
  }

  TrainConfig cfg;  // default config: 60 subjects x 50 images = 3000 patches
  cfg.deterministic = true;
  const Dataset data = load_training_data(cfg.data, cfg.model);
  std::cout << "training set: " << data.size() << " patches, " << cfg.steps << " steps" << std::endl;

  const Run first = train(cfg, data, fs::path(work) / "run_a", reuse);
  const bool trained = first.error.empty() && !first.fit.final_checkpoint.empty();

  // Held-out subjects never seen in training.
  SyntheticDatasetSpec held_spec;
  held_spec.subjects = 20;
  held_spec.images_per_subject = 20;
  held_spec.seed = 4242;
  held_spec.subject_prefix = "h";
  const Dataset heldout = generate_synthetic_dataset(held_spec);

  DeskEvalResult ev;
  if (trained) {
    const auto model = load_model(first.fit.final_checkpoint);
    ev = run_desk_evaluation(model, heldout, DeskEvalConfig{});
    std::ofstream(fs::path(work) / "desk_eval.json") << ev.to_json().dump(2) << '\n';
  }

  {
    const bool budget = trained && first.finite && first.seconds <= 3600.0;
    const bool a = trained && ev.redirect.failures == 0 && ev.redirect.n == 200 && ev.redirect.mean_deg <= 5.0;
    const bool b = trained && ev.sweep_rho_median >= 0.9;
    const bool c = trained && ev.feature_ratio_median <= 0.5;
    const bool d = trained && ev.classifier_accuracy >= 0.9;
    std::ostringstream s;
    s << data.size() << " patches, " << fmt("%.0f s", first.seconds)
      << (first.finite ? "" : ", non-finite loss") << (first.error.empty() ? "" : ", " + first.error)
      << " | (a) gaze " << fmt("%.2f deg", ev.redirect.mean_deg) << " over " << ev.redirect.n << " ("
      << ev.redirect.failures << " unreadable) " << (a ? "ok" : "miss") << " | (b) median rho "
      << fmt("%.3f", ev.sweep_rho_median) << " over " << ev.sweep_rhos.size() << " " << (b ? "ok" : "miss")
      << " | (c) feature ratio " << fmt("%.3f", ev.feature_ratio_median) << " " << (c ? "ok" : "miss")
      << " | (d) classifier " << fmt("%.3f", ev.classifier_accuracy) << " " << (d ? "ok" : "miss");
    report(7, budget && a && b && c && d, s.str());
  }

  {
    const Run second = train(cfg, data, fs::path(work) / "run_b", reuse);
    const bool same = trained && second.error.empty() && !second.fit.final_checkpoint.empty() &&
                      slurp(first.fit.final_checkpoint) == slurp(second.fit.final_checkpoint);
    report(8, same,
           same ? "final checkpoints byte-identical (" + fs::path(first.fit.final_checkpoint).filename().string() + ")"
                : "final checkpoints differ or a run failed");
  }

  {
    const bool closer = trained && ev.oneshot_closer_to_source >= 0.9;
    const bool tracks = trained && ev.oneshot.n > 0 && ev.oneshot.failures == 0 && ev.oneshot.mean_deg <= 6.0;
    report(9, closer && tracks,
           "closer to source on " + fmt("%.0f%%", 100.0 * ev.oneshot_closer_to_source) + " of 100 pairs, gaze vs reference " +
               fmt("%.2f deg", ev.oneshot.mean_deg) + " (" + std::to_string(ev.oneshot.failures) + " unreadable)");
  }

  const std::string summary = failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed";
  std::cout << summary << std::endl;
  report_file << summary << std::endl;
  return failures == 0 ? 0 : 1;
}
