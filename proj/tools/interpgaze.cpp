// interpgaze command line: synth, train, redirect, interp, extrapolate, eval, grid.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "interpgaze/control/control.hpp"
#include "interpgaze/data/columbia.hpp"
#include "interpgaze/eval/metrics.hpp"
#include "interpgaze/io/image_io.hpp"
#include "interpgaze/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace interpgaze;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kValidation = 3,
  kShape = 4,
  kRange = 5,
  kEstimation = 6,
  kData = 7,
  kNonFinite = 8,
  kIo = 9,
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw ValidationError("--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create '" + out + "': " + ec.message());
  return fs::path(out);
}

nlohmann::json label_json(const AttributeLabel& a) {
  return {{"P", a.pose_deg}, {"H", a.yaw_deg}, {"V", a.pitch_deg}};
}

nlohmann::json v_json(const ControlVector& v) { return {v[0], v[1], v[2], v[3]}; }

// Labels come from --*-attrs when given, otherwise from a Columbia-style name.
AttributeLabel resolve_attrs(const std::string& image, const std::string& attrs, const char* what) {
  if (!attrs.empty()) return parse_attribute_triple(attrs);
  if (auto a = parse_columbia_name(fs::path(image).filename().string())) return *a;
  throw ValidationError(std::string("labels of the ") + what + " are unknown: pass --" + what +
                        "-attrs P=..,V=..,H=.. or use a {subject}_2m_{P}P_{V}V_{H}H file name");
}

ControlVector parse_v(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  ControlVector v;
  int k = 0;
  while (std::getline(ss, item, ',')) {
    if (k >= kBranchCount) throw ValidationError("--v takes four comma-separated values");
    try {
      std::size_t used = 0;
      v[k] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--v: bad number '" + item + "'");
    }
    ++k;
  }
  if (k != kBranchCount) throw ValidationError("--v takes four comma-separated values");
  return v;
}

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  std::string config;
};

void add_common(CLI::App* app, Common& c, bool with_config) {
  app->add_option("--seed", c.seed, "Seed of every random draw")->capture_default_str();
  app->add_option("--out", c.out, "Output directory")->required();
  if (with_config) app->add_option("--config", c.config, "JSON file overriding the defaults")->check(CLI::ExistingFile);
}

TrainConfig load_train_config(const Common& c) {
  TrainConfig cfg;
  if (!c.config.empty()) cfg = read_json(c.config).get<TrainConfig>();
  return cfg;
}

Dataset heldout_set(const std::string& data_dir, int subjects, int per_subject, std::uint64_t seed) {
  if (!data_dir.empty()) return load_synthetic_dir(data_dir);
  SyntheticDatasetSpec spec;
  spec.subjects = subjects;
  spec.images_per_subject = per_subject;
  spec.seed = seed;
  spec.subject_prefix = "h";
  return generate_synthetic_dataset(spec);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Controllable gaze redirection: synthesis, training, redirection, interpolation, evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // ---- synth
  Common synth_c;
  int synth_count = 3000, synth_per_subject = 50;
  double synth_glasses = 0.3;
  auto* synth = app.add_subcommand("synth", "Render a labelled synthetic eye-patch dataset");
  add_common(synth, synth_c, false);
  synth->add_option("--count", synth_count, "Number of images")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--per-subject", synth_per_subject, "Images per subject")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--glasses-prob", synth_glasses, "Probability that a subject wears glasses")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));

  // ---- train
  Common train_c;
  std::string train_data, train_kind = "synthetic_dir", train_resume;
  long long train_steps = 0;
  auto* train = app.add_subcommand("train", "Train all networks; writes checkpoints and train_log.jsonl");
  add_common(train, train_c, true);
  train->add_option("--data", train_data, "Dataset directory (default: render the configured synthetic set)");
  train->add_option("--data-kind", train_kind, "synthetic_dir or columbia")
      ->capture_default_str()->check(CLI::IsMember({"synthetic_dir", "columbia"}));
  train->add_option("--steps", train_steps, "Generator iterations (overrides the config)")->check(CLI::PositiveNumber);
  train->add_option("--resume", train_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  // ---- redirect
  Common red_c;
  std::string red_ckpt, red_src, red_ref, red_desired = "ref", red_src_attrs, red_ref_attrs;
  double red_o = 0.0;
  auto* red = app.add_subcommand("redirect", "Redirect the source towards the reference's attributes");
  add_common(red, red_c, false);
  red->add_option("--ckpt", red_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  red->add_option("--source", red_src, "Source image")->required()->check(CLI::ExistingFile);
  red->add_option("--reference", red_ref, "Reference image (may show another person)")->required()->check(CLI::ExistingFile);
  red->add_option("--desired", red_desired, "'ref' or a triple such as P=0,V=0,H=-5")->capture_default_str();
  red->add_option("--source-attrs", red_src_attrs, "Source labels P=..,V=..,H=.. (default: from the file name)");
  red->add_option("--reference-attrs", red_ref_attrs, "Reference labels (default: from the file name)");
  red->add_option("--o-strength", red_o, "Strength of the appearance branch")->capture_default_str();

  // ---- interp
  Common int_c;
  std::string int_ckpt, int_src, int_tgt;
  InterpSchedule sched;
  auto* interp = app.add_subcommand("interp", "Write an interpolation sequence between two images");
  add_common(interp, int_c, false);
  interp->add_option("--ckpt", int_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  interp->add_option("--source", int_src, "Source image")->required()->check(CLI::ExistingFile);
  interp->add_option("--target", int_tgt, "Target image")->required()->check(CLI::ExistingFile);
  interp->add_option("--steps", sched.steps, "Number of frames")->capture_default_str();
  interp->add_option("--order", sched.order, "'joint' or a permutation of PHV")->capture_default_str();
  interp->add_option("--o-strength", sched.o_strength, "Strength of the appearance branch")->capture_default_str();

  // ---- extrapolate
  Common ext_c;
  std::string ext_ckpt, ext_src, ext_tgt, ext_v = "1.2,1.2,1.2,0";
  auto* ext = app.add_subcommand("extrapolate", "Redirect with control components above 1");
  add_common(ext, ext_c, false);
  ext->add_option("--ckpt", ext_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ext->add_option("--source", ext_src, "Source image")->required()->check(CLI::ExistingFile);
  ext->add_option("--target", ext_tgt, "Target image")->required()->check(CLI::ExistingFile);
  ext->add_option("--v", ext_v, "Control vector P,H,V,O (each in [0, v_max])")->capture_default_str();

  // ---- eval
  Common ev_c;
  std::string ev_ckpt, ev_data;
  int ev_subjects = 20, ev_per_subject = 20;
  DeskEvalConfig ev_cfg;
  auto* ev = app.add_subcommand("eval", "Held-out evaluation on synthetic data; writes eval_report.json");
  add_common(ev, ev_c, false);
  ev->add_option("--ckpt", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Synthetic dataset directory (default: render a held-out set from --seed)");
  ev->add_option("--subjects", ev_subjects, "Held-out subjects when rendering")->capture_default_str();
  ev->add_option("--per-subject", ev_per_subject, "Held-out images per subject when rendering")->capture_default_str();
  ev->add_option("--pairs", ev_cfg.redirect_pairs, "Redirection pairs")->capture_default_str();
  ev->add_option("--sweeps", ev_cfg.sweeps, "Interpolation sweeps")->capture_default_str();
  ev->add_option("--oneshot-pairs", ev_cfg.oneshot_pairs, "Cross-subject pairs")->capture_default_str();

  // ---- grid
  Common grid_c;
  std::string grid_ckpt, grid_data;
  int grid_rows = 6;
  InterpSchedule grid_sched;
  auto* grid = app.add_subcommand("grid", "Montage of interpolation rows (source, frames, target) as grid.png");
  add_common(grid, grid_c, false);
  grid->add_option("--ckpt", grid_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  grid->add_option("--data", grid_data, "Synthetic dataset directory (default: render a held-out set from --seed)");
  grid->add_option("--rows", grid_rows, "Number of pairs")->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--steps", grid_sched.steps, "Frames per row")->capture_default_str();
  grid->add_option("--order", grid_sched.order, "'joint' or a permutation of PHV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  if (synth->parsed()) {
    const fs::path out = prepare_out(synth_c.out);
    SyntheticDatasetSpec spec;
    spec.images_per_subject = std::min(synth_per_subject, synth_count);
    spec.subjects = (synth_count + spec.images_per_subject - 1) / spec.images_per_subject;
    spec.seed = synth_c.seed;
    spec.glasses_probability = synth_glasses;
    Dataset data = generate_synthetic_dataset(spec);
    data.resize(std::size_t(synth_count));
    export_dataset(data, out.string());
    std::cout << "wrote " << data.size() << " images to " << out.string() << '\n';
  } else if (train->parsed()) {
    TrainConfig cfg = load_train_config(train_c);
    cfg.seed = train_c.seed;
    if (train_steps > 0) cfg.steps = train_steps;
    if (deterministic_env()) cfg.deterministic = true;
    if (!train_data.empty()) {
      cfg.data.kind = train_kind;
      cfg.data.path = train_data;
    }
    const Dataset data = load_training_data(cfg.data, cfg.model);
    FitOptions opts;
    opts.out_dir = prepare_out(train_c.out).string();
    if (!train_resume.empty()) opts.resume = train_resume;
    opts.log = &std::cout;
    const FitResult r = fit(cfg, data, opts);
    std::cerr << "finished at step " << r.step << "; final checkpoint " << r.final_checkpoint << '\n';
  } else if (red->parsed()) {
    const fs::path out = prepare_out(red_c.out);
    const auto m = load_model(red_ckpt);
    const EyePatch xs = load_image(red_src, m.config.height, m.config.width);
    const EyePatch xr = load_image(red_ref, m.config.height, m.config.width);
    ControlVector v = ControlVector::full_move(red_o);
    std::vector<std::string> warnings;
    nlohmann::json info{{"source", red_src}, {"reference", red_ref}, {"desired", red_desired}};
    if (red_desired != "ref") {
      const AttributeLabel s = resolve_attrs(red_src, red_src_attrs, "source");
      const AttributeLabel t = resolve_attrs(red_ref, red_ref_attrs, "reference");
      const AttributeLabel d = parse_attribute_triple(red_desired, s);
      v = compute_control_vector(s, t, d, m.config.v_max, &warnings);
      v[3] = red_o;
      info["source_attrs"] = label_json(s);
      info["reference_attrs"] = label_json(t);
      info["desired_attrs"] = label_json(d);
    }
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    save_png(redirect(m, xs, xr, v), (out / "redirected.png").string());
    info["v"] = v_json(v);
    info["warnings"] = warnings;
    info["output"] = (out / "redirected.png").string();
    write_json(out / "redirect.json", info);
  } else if (interp->parsed()) {
    const fs::path out = prepare_out(int_c.out);
    const auto m = load_model(int_ckpt);
    const EyePatch xs = load_image(int_src, m.config.height, m.config.width);
    const EyePatch xt = load_image(int_tgt, m.config.height, m.config.width);
    sched.validate(m.config.v_max);
    const auto vs = sched.vectors();
    const auto frames = redirect_many(m, xs, xt, vs);
    nlohmann::json manifest{{"source", int_src}, {"target", int_tgt}, {"steps", sched.steps},
                            {"order", sched.order}, {"o_strength", sched.o_strength},
                            {"frames", nlohmann::json::array()}};
    for (std::size_t f = 0; f < frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.png", f);
      save_png(frames[f], (out / name).string());
      manifest["frames"].push_back({{"file", name}, {"v", v_json(vs[f])}});
    }
    write_json(out / "manifest.json", manifest);
  } else if (ext->parsed()) {
    const fs::path out = prepare_out(ext_c.out);
    const auto m = load_model(ext_ckpt);
    const EyePatch xs = load_image(ext_src, m.config.height, m.config.width);
    const EyePatch xt = load_image(ext_tgt, m.config.height, m.config.width);
    const ControlVector v = parse_v(ext_v);
    save_png(extrapolate(m, xs, xt, v), (out / "extrapolated.png").string());
    write_json(out / "extrapolate.json", {{"source", ext_src}, {"target", ext_tgt}, {"v", v_json(v)},
                                          {"output", (out / "extrapolated.png").string()}});
  } else if (ev->parsed()) {
    const fs::path out = prepare_out(ev_c.out);
    const auto m = load_model(ev_ckpt);
    const Dataset held = heldout_set(ev_data, ev_subjects, ev_per_subject, ev_c.seed);
    ev_cfg.seed = ev_c.seed;
    const DeskEvalResult r = run_desk_evaluation(m, held, ev_cfg);
    nlohmann::json j = r.summary().to_json();
    j["details"] = r.to_json();
    write_json(out / "eval_report.json", j);
    std::cout << j.dump(2) << '\n';
  } else if (grid->parsed()) {
    const fs::path out = prepare_out(grid_c.out);
    const auto m = load_model(grid_ckpt);
    const Dataset held = heldout_set(grid_data, 10, 10, grid_c.seed);
    grid_sched.validate(m.config.v_max);
    const PairSampler sampler(held);
    Rng rng(grid_c.seed);
    std::vector<std::vector<EyePatch>> rows;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels{"src"};
    for (const auto& v : grid_sched.vectors()) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.2f", (v[0] + v[1] + v[2]) / 3.0);
      col_labels.push_back(buf);
    }
    col_labels.push_back("tgt");
    for (int r = 0; r < grid_rows; ++r) {
      const PairSample p = sampler.sample(rng, PairMode::interp);
      std::vector<EyePatch> row{p.source_image()};
      for (auto& f : redirect_many(m, p.source_image(), p.target_image(), grid_sched.vectors()))
        row.push_back(std::move(f));
      row.push_back(p.target_image());
      rows.push_back(std::move(row));
      row_labels.push_back(p.source_attrs().subject_id);
    }
    emit_grid(rows, row_labels, col_labels, (out / "grid.png").string());
  }
  return kOk;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kShape;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << '\n';
    return kRange;
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << '\n';
    return kEstimation;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NonFiniteError& e) {
    std::cerr << "non-finite loss (" << e.term() << "): " << e.what() << '\n';
    return kNonFinite;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
