#include "interpgaze/trainer/trainer.hpp"

#include <algorithm>

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "interpgaze/data/columbia.hpp"

namespace interpgaze {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'I', 'G', 'Z', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void check_gradients(const std::vector<nn::Parameter<float>*>& params) {
  for (const auto* p : params)
    if (!p->grad.allFinite())
      throw NonFiniteError("grad:" + p->name, "non-finite gradient for '" + p->name + "'");
}

}  // namespace

// ----------------------------------------------------------------- config --

void TrainConfig::validate() const {
  if (steps <= 0) throw ValidationError("train: steps must be > 0");
  if (batch_size < 2) throw ValidationError("train: batch_size must be >= 2");
  if (n_critic < 1) throw ValidationError("train: n_critic must be >= 1");
  if (!(lr_critic > 0 && lr_generator > 0)) throw ValidationError("train: learning rates must be > 0");
  if (!(lr_decay_start >= 0 && lr_decay_start <= 1))
    throw ValidationError("train: lr_decay_start outside [0, 1]");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw ValidationError("train: betas must be in [0, 1)");
  if (!(p_full >= 0 && p_full <= 1)) throw ValidationError("train: p_full outside [0, 1]");
  if (!(cross_fraction >= 0 && cross_fraction <= 1))
    throw ValidationError("train: cross_fraction outside [0, 1]");
  if (checkpoint_interval < 0 || eval_interval < 0)
    throw ValidationError("train: intervals must be >= 0");
  weights.validate();
  model.validate();
}

double TrainConfig::lr_scale(long long done) const {
  const double start = lr_decay_start * double(steps);
  if (double(done) < start) return 1.0;
  return std::max(0.0, (double(steps) - double(done)) / (double(steps) - start));
}

std::uint64_t TrainConfig::hash() const {
  nlohmann::json j = *this;
  return fnv1a(j.dump());
}

void to_json(nlohmann::json& j, const DatasetSource& d) {
  j = {{"kind", d.kind}, {"synthetic", d.synthetic}, {"path", d.path}};
}

void from_json(const nlohmann::json& j, DatasetSource& d) {
  d.kind = j.value("kind", d.kind);
  if (j.contains("synthetic")) d.synthetic = j.at("synthetic").get<SyntheticDatasetSpec>();
  d.path = j.value("path", d.path);
  if (d.kind != "synthetic" && d.kind != "synthetic_dir" && d.kind != "columbia")
    throw ValidationError("data.kind must be synthetic|synthetic_dir|columbia");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"n_critic", c.n_critic},
       {"lr_critic", c.lr_critic},
       {"lr_generator", c.lr_generator},
       {"lr_decay_start", c.lr_decay_start},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"seed", c.seed},
       {"p_full", c.p_full},
       {"cross_fraction", c.cross_fraction},
       {"weights", c.weights},
       {"model", c.model},
       {"data", c.data},
       {"checkpoint_interval", c.checkpoint_interval},
       {"eval_interval", c.eval_interval},
       {"deterministic", c.deterministic}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const char* known[] = {"steps", "batch_size", "n_critic", "lr_critic", "lr_generator",
                                "lr_decay_start", "beta1", "beta2", "seed", "p_full", "cross_fraction", "weights",
                                "model", "data", "checkpoint_interval", "eval_interval",
                                "deterministic"};
  for (const auto& [key, _] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw ValidationError("train config: unknown key '" + key + "'");
  }
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.n_critic = j.value("n_critic", c.n_critic);
  c.lr_critic = j.value("lr_critic", c.lr_critic);
  c.lr_generator = j.value("lr_generator", c.lr_generator);
  c.lr_decay_start = j.value("lr_decay_start", c.lr_decay_start);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.seed = j.value("seed", c.seed);
  c.p_full = j.value("p_full", c.p_full);
  c.cross_fraction = j.value("cross_fraction", c.cross_fraction);
  // Partial weight and model objects override the training defaults key by key.
  if (j.contains("weights")) j.at("weights").get_to(c.weights);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("data")) c.data = j.at("data").get<DatasetSource>();
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.deterministic = j.value("deterministic", c.deterministic);
}

bool deterministic_env() {
  const char* v = std::getenv("INTERPGAZE_DETERMINISTIC");
  return v != nullptr && std::strcmp(v, "1") == 0;
}

ControlVector sample_control_vector(Rng& rng, double p_full) {
  ControlVector v;
  for (int k = 0; k < kBranchCount; ++k) v[k] = rng.uniform();
  if (rng.bernoulli(p_full))
    for (int k = 0; k < kPrimaryAttributes; ++k) v[k] = 1.0;
  return v;
}

Dataset load_training_data(const DatasetSource& src, const ModelConfig& model) {
  if (src.kind == "synthetic") {
    RenderGeometry g;
    if (g.height != model.height || g.width != model.width)
      throw ValidationError("synthetic data is rendered at 32x64; model expects " +
                            std::to_string(model.height) + "x" + std::to_string(model.width));
    return generate_synthetic_dataset(src.synthetic);
  }
  if (src.kind == "synthetic_dir") return load_synthetic_dir(src.path);
  if (src.kind == "columbia") return load_columbia_dir(src.path, model.height, model.width).records;
  throw ValidationError("unknown dataset kind '" + src.kind + "'");
}

// ------------------------------------------------------------- batches --

BatchBuilder::BatchBuilder(const Dataset& data, const Binning& binning, double p_full,
                           double cross_fraction)
    : data_(&data), sampler_(data), binning_(binning), p_full_(p_full),
      cross_fraction_(cross_fraction) {
  can_render_ = true;
  for (const auto& s : data) can_render_ = can_render_ && s.params.has_value();
  bool two_subjects = false;
  for (const auto& s : data) two_subjects = two_subjects || s.label.subject_id != data[0].label.subject_id;
  can_cross_ = can_render_ && two_subjects && cross_fraction_ > 0.0;
}

PairBatch<float> BatchBuilder::next(Rng& rng, int batch_size, bool with_targets) const {
  PairBatch<float> b;
  std::vector<const EyePatch*> xs, xt;
  std::vector<EyePatch> gts;
  for (int r = 0; r < batch_size; ++r) {
    const bool cross = can_cross_ && rng.bernoulli(cross_fraction_);
    const PairSample p = cross ? sampler_.sample_cross_subject(rng) : sampler_.sample(rng, PairMode::train);
    ControlVector v = sample_control_vector(rng, p_full_);
    if (cross) v[3] = 0.0;
    xs.push_back(&p.source_image());
    xt.push_back(&p.target_image());
    b.v.push_back(v);
    b.cross.push_back(cross);
    b.bins_s.push_back(attrs_to_bins(p.source_attrs(), binning_));
    b.bins_t.push_back(attrs_to_bins(p.target_attrs(), binning_));
    if (!with_targets) continue;
    if (can_render_) {
      AttributeLabel angles = p.source_attrs();
      for (int k = 0; k < kPrimaryAttributes; ++k)
        angles.primary(k) += v[k] * (p.target_attrs().primary(k) - p.source_attrs().primary(k));
      gts.push_back(rerender(*p.source, angles).image);
      b.gt_rows.push_back(r);
    } else if (!cross && b.full_move(r)) {
      gts.push_back(p.target_image());
      b.gt_rows.push_back(r);
    }
  }
  b.x_s = to_batch<float>(xs);
  b.x_t = to_batch<float>(xt);
  if (!gts.empty()) {
    std::vector<const EyePatch*> ptrs;
    for (const auto& g : gts) ptrs.push_back(&g);
    b.gt = to_batch<float>(ptrs);
  }
  return b;
}

// ------------------------------------------------------------- trainer --

struct Trainer::Snapshot {
  std::vector<nn::RowMatrix<float>> values, cm, cv, gm, gv;
  long long critic_steps = 0, generator_steps = 0, step = 0;
  std::string rng;
  LossTerms last_critic;
};

Trainer::Trainer(const TrainConfig& cfg, const Dataset& data)
    : cfg_(cfg),
      batches_((cfg.validate(), data), Binning{}, cfg.p_full, cfg.cross_fraction) {
  Rng root(cfg.seed);
  model_ = ModelBundle<float>::create(cfg.model, root.next_u64());
  rng_ = root.fork();
  opt_critic_ = std::make_unique<nn::Adam<float>>(
      model_.critic_parameters(), nn::AdamConfig{cfg.lr_critic, cfg.beta1, cfg.beta2, 1e-8});
  opt_generator_ = std::make_unique<nn::Adam<float>>(
      model_.generator_parameters(), nn::AdamConfig{cfg.lr_generator, cfg.beta1, cfg.beta2, 1e-8});
  for (const auto& s : data) s.image.validate(cfg.model.height, cfg.model.width);
}

LossReport Trainer::train_step_critic(const PairBatch<float>& batch) {
  opt_critic_->zero_grad();
  LossTerms t = critic_objective(model_, batch, cfg_.weights, rng_, true);
  LossReport r = total_losses(t, cfg_.weights);
  check_gradients(opt_critic_->parameters());
  opt_critic_->step();
  last_critic_ = t;
  r.step = step_;
  return r;
}

LossReport Trainer::train_step_generator(const PairBatch<float>& batch) {
  opt_generator_->zero_grad();
  LossTerms t = generator_objective(model_, batch, cfg_.weights, true);
  t.gan_D = last_critic_.gan_D;
  t.gp = last_critic_.gp;
  LossReport r = total_losses(t, cfg_.weights);
  check_gradients(opt_generator_->parameters());
  opt_generator_->step();
  r.step = step_;
  return r;
}

Trainer::Snapshot Trainer::snapshot() {
  Snapshot s;
  for (auto* p : model_.trainable_parameters()) s.values.push_back(p->value);
  s.cm = opt_critic_->first_moments();
  s.cv = opt_critic_->second_moments();
  s.gm = opt_generator_->first_moments();
  s.gv = opt_generator_->second_moments();
  s.critic_steps = opt_critic_->steps();
  s.generator_steps = opt_generator_->steps();
  s.step = step_;
  s.rng = rng_.state();
  s.last_critic = last_critic_;
  return s;
}

void Trainer::restore(const Snapshot& s) {
  auto params = model_.trainable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.values[i];
  opt_critic_->first_moments() = s.cm;
  opt_critic_->second_moments() = s.cv;
  opt_generator_->first_moments() = s.gm;
  opt_generator_->second_moments() = s.gv;
  opt_critic_->set_steps(s.critic_steps);
  opt_generator_->set_steps(s.generator_steps);
  step_ = s.step;
  rng_.set_state(s.rng);
  last_critic_ = s.last_critic;
}

LossReport Trainer::iteration() {
  const Snapshot snap = snapshot();
  const double scale = cfg_.lr_scale(step_);
  opt_critic_->set_learning_rate(cfg_.lr_critic * scale);
  opt_generator_->set_learning_rate(cfg_.lr_generator * scale);
  try {
    for (int i = 0; i < cfg_.n_critic; ++i)
      train_step_critic(batches_.next(rng_, cfg_.batch_size, false));
    LossReport r = train_step_generator(batches_.next(rng_, cfg_.batch_size, true));
    r.step = ++step_;
    return r;
  } catch (const NonFiniteError&) {
    restore(snap);
    throw;
  }
}

// ---------------------------------------------------------- checkpoints --

const nn::RowMatrix<float>& CheckpointBundle::array(const std::string& name) const {
  for (const auto& [n, a] : arrays)
    if (n == name) return a;
  throw IoError("checkpoint has no array '" + name + "'");
}

void write_checkpoint(const std::string& path, const CheckpointBundle& ckpt) {
  nlohmann::json meta = ckpt.metadata;
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, a] : ckpt.arrays) {
    index.push_back({{"name", name}, {"rows", a.rows()}, {"cols", a.cols()}, {"offset", offset}});
    offset += std::uint64_t(a.size());
  }
  meta["arrays"] = index;
  meta["dtype"] = "float32-le";
  const std::string text = meta.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint '" + path + "'");
    os.write(kMagic, sizeof kMagic);
    put_u64(os, text.size());
    os.write(text.data(), std::streamsize(text.size()));
    for (const auto& [name, a] : ckpt.arrays) {
      std::vector<std::uint32_t> words(std::size_t(a.size()));
      for (std::size_t i = 0; i < words.size(); ++i) {
        std::uint32_t w;
        std::memcpy(&w, a.data() + i, 4);
        words[i] = to_le(w);
      }
      os.write(reinterpret_cast<const char*>(words.data()), std::streamsize(words.size() * 4));
    }
    if (!os) throw IoError("short write on checkpoint '" + path + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

CheckpointBundle read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("'" + path + "' is not a checkpoint");
  const std::uint64_t len = get_u64(is);
  if (!is || len > (1ULL << 30)) throw IoError("corrupt checkpoint header in '" + path + "'");
  std::string text(len, '\0');
  is.read(text.data(), std::streamsize(len));
  CheckpointBundle ckpt;
  try {
    ckpt.metadata = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint metadata: " + std::string(e.what()));
  }
  for (const auto& entry : ckpt.metadata.at("arrays")) {
    const auto rows = entry.at("rows").get<Eigen::Index>(), cols = entry.at("cols").get<Eigen::Index>();
    nn::RowMatrix<float> a(rows, cols);
    std::vector<std::uint32_t> words(std::size_t(rows * cols));
    is.read(reinterpret_cast<char*>(words.data()), std::streamsize(words.size() * 4));
    if (!is) throw IoError("truncated checkpoint '" + path + "'");
    for (std::size_t i = 0; i < words.size(); ++i) {
      const std::uint32_t w = to_le(words[i]);
      std::memcpy(a.data() + i, &w, 4);
    }
    ckpt.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(a));
  }
  return ckpt;
}

void Trainer::save_checkpoint(const std::string& path) const {
  auto& self = const_cast<Trainer&>(*this);
  CheckpointBundle ckpt;
  ckpt.metadata = {{"format", "interpgaze-checkpoint"},
                   {"version", 1},
                   {"step", step_},
                   {"config_hash", hex64(cfg_.hash())},
                   {"config", cfg_},
                   {"deterministic", cfg_.deterministic || deterministic_env()},
                   {"rng_state", rng_.state()},
                   {"adam_steps", {{"critic", opt_critic_->steps()}, {"generator", opt_generator_->steps()}}},
                   {"last_critic", {{"gan_D", last_critic_.gan_D}, {"gp", last_critic_.gp}}}};
  for (const auto& [name, p] : self.model_.named_parameters()) ckpt.arrays.emplace_back(name, p->value);
  const auto add_moments = [&](const char* tag, nn::Adam<float>& opt) {
    for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
      const std::string& n = opt.parameters()[i]->name;
      ckpt.arrays.emplace_back(std::string("adam.") + tag + ".m/" + n, opt.first_moments()[i]);
      ckpt.arrays.emplace_back(std::string("adam.") + tag + ".v/" + n, opt.second_moments()[i]);
    }
  };
  add_moments("critic", *self.opt_critic_);
  add_moments("generator", *self.opt_generator_);
  write_checkpoint(path, ckpt);
}

namespace {

void assign(nn::RowMatrix<float>& dst, const nn::RowMatrix<float>& src, const std::string& name) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols())
    throw ShapeError("checkpoint array '" + name + "' has the wrong shape");
  dst = src;
}

void load_weights(ModelBundle<float>& m, const CheckpointBundle& ckpt) {
  for (auto& [name, p] : m.named_parameters()) assign(p->value, ckpt.array(name), name);
}

}  // namespace

void Trainer::load_checkpoint(const std::string& path) {
  const CheckpointBundle ckpt = read_checkpoint(path);
  const auto& meta = ckpt.metadata;
  if (meta.at("config_hash").get<std::string>() != hex64(cfg_.hash()))
    throw ValidationError("checkpoint '" + path + "' was written with a different config");
  load_weights(model_, ckpt);
  const auto load_moments = [&](const char* tag, nn::Adam<float>& opt) {
    for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
      const std::string& n = opt.parameters()[i]->name;
      const std::string m = std::string("adam.") + tag + ".m/" + n;
      const std::string v = std::string("adam.") + tag + ".v/" + n;
      assign(opt.first_moments()[i], ckpt.array(m), m);
      assign(opt.second_moments()[i], ckpt.array(v), v);
    }
  };
  load_moments("critic", *opt_critic_);
  load_moments("generator", *opt_generator_);
  opt_critic_->set_steps(meta.at("adam_steps").at("critic").get<long long>());
  opt_generator_->set_steps(meta.at("adam_steps").at("generator").get<long long>());
  rng_.set_state(meta.at("rng_state").get<std::string>());
  step_ = meta.at("step").get<long long>();
  last_critic_.gan_D = meta.at("last_critic").at("gan_D").get<double>();
  last_critic_.gp = meta.at("last_critic").at("gp").get<double>();
}

ModelBundle<float> load_model(const std::string& path) {
  const CheckpointBundle ckpt = read_checkpoint(path);
  const auto cfg = ckpt.metadata.at("config").get<TrainConfig>();
  auto m = ModelBundle<float>::create(cfg.model, 0);
  load_weights(m, ckpt);
  if (!m.all_finite()) throw NonFiniteError("weights", "checkpoint '" + path + "' has non-finite weights");
  return m;
}

// ------------------------------------------------------------------ fit --

FitResult fit(const TrainConfig& cfg, const Dataset& data, const FitOptions& opts) {
  if (opts.out_dir.empty()) throw ValidationError("fit: output directory required");
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create '" + opts.out_dir + "': " + ec.message());

  Trainer trainer(cfg, data);
  if (opts.resume) trainer.load_checkpoint(*opts.resume);
  std::ofstream log(fs::path(opts.out_dir) / "train_log.jsonl",
                    opts.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open training log in '" + opts.out_dir + "'");
  const auto emit = [&](const std::string& line) {
    log << line << '\n';
    log.flush();
    if (opts.log) *opts.log << line << '\n';
  };
  const auto ckpt_path = [&](const std::string& tag) {
    return (fs::path(opts.out_dir) / ("ckpt_" + tag + ".igz")).string();
  };

  FitResult result;
  while (trainer.step() < cfg.steps) {
    LossReport r;
    try {
      r = trainer.iteration();
    } catch (const NonFiniteError& e) {
      const std::string path = ckpt_path("last_good");
      trainer.save_checkpoint(path);
      emit(nlohmann::json{{"step", trainer.step() + 1}, {"error", e.what()}, {"term", e.term()},
                          {"checkpoint", path}}
               .dump());
      throw;
    }
    emit(r.to_json_line());
    result.reports.push_back(r);
    const long long step = trainer.step();
    if ((cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) || step == cfg.steps) {
      char tag[32];
      std::snprintf(tag, sizeof tag, "%06lld", step);
      const std::string path = ckpt_path(tag);
      trainer.save_checkpoint(path);
      result.checkpoints.push_back(path);
      result.final_checkpoint = path;
    }
    if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0 && opts.evaluate)
      emit(nlohmann::json{{"step", step}, {"eval", opts.evaluate(trainer.model())}}.dump());
  }
  result.step = trainer.step();
  return result;
}

}  // namespace interpgaze
