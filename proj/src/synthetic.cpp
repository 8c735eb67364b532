#include "interpgaze/data/synthetic.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "interpgaze/io/image_io.hpp"

namespace interpgaze {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = (h - std::floor(h)) * 6.0;
  const int i = int(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

// Skin tone also sets the sclera tint, so appearance is visible across the
// whole patch rather than in the eye corners only.
const Rgb kScleraLight{0.95, 0.94, 0.93};
const Rgb kScleraDark{0.74, 0.60, 0.46};
const Rgb kPupil{0.05, 0.05, 0.06};
const Rgb kSkinLight{0.96, 0.82, 0.72};
const Rgb kSkinDark{0.82, 0.62, 0.50};
const Rgb kFrame{0.80, 0.80, 0.84};
const Rgb kLensTint{0.80, 0.90, 1.00};
constexpr double kShading = 0.04;   // +-relative brightness ramp at |pose| = 30
constexpr double kSkinNoise = 0.015;
constexpr double kLightGradient = 0.32;  // +-relative brightness across the patch

// Oracle thresholds on luminance relative to the fitted background.
constexpr double kIrisRelHigh = 0.60;
constexpr double kIrisRelLow = 0.40;
constexpr double kMinIrisMass = 10.0;

void check_range(double v, double lo, double hi, const char* what) {
  if (!std::isfinite(v) || v < lo || v > hi)
    throw ValidationError(std::string(what) + " = " + std::to_string(v) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

}  // namespace

void SyntheticEyeParams::validate(const AngleBounds& b) const {
  check_range(pose_deg, -b.pose, b.pose, "pose_deg");
  check_range(yaw_deg, -b.yaw, b.yaw, "yaw_deg");
  check_range(pitch_deg, -b.pitch, b.pitch, "pitch_deg");
  check_range(iris_hue, 0.0, 1.0, "iris_hue");
  check_range(skin_tone, 0.0, 1.0, "skin_tone");
  check_range(brightness, 0.7, 1.3, "brightness");
  if (!std::isfinite(light_angle_deg) || light_angle_deg < 0.0 || light_angle_deg >= 360.0)
    throw ValidationError("light_angle_deg = " + std::to_string(light_angle_deg) + " outside [0, 360)");
  if (!std::isfinite(eyelid_aperture) || eyelid_aperture <= 0.0 || eyelid_aperture > 1.0)
    throw ValidationError("eyelid_aperture = " + std::to_string(eyelid_aperture) +
                          " outside (0, 1]");
}

void EyePatch::validate(int h, int w) const {
  if (height != h || width != w || pixels.size() != 3 * h * w)
    throw ShapeError("eye patch is " + std::to_string(height) + "x" + std::to_string(width) +
                     ", expected " + std::to_string(h) + "x" + std::to_string(w));
  if (!pixels.isFinite().all() || (pixels.abs() > 1.0f).any())
    throw ValidationError("eye patch pixels outside [-1, 1]");
}

BinIndices attrs_to_bins(const AttributeLabel& a, const Binning& binning) {
  BinIndices out{};
  for (int k = 0; k < 3; ++k) {
    const auto& c = binning.centres(k);
    const double v = a.primary(k);
    if (c.empty() || !std::isfinite(v) || v < c.front() || v > c.back())
      throw RangeError("attribute " + std::to_string(k) + " = " + std::to_string(v) +
                       " outside the bin range");
    int best = 0;
    for (int i = 1; i < int(c.size()); ++i)
      if (std::abs(v - c[i]) < std::abs(v - c[best])) best = i;
    out[k] = best;
  }
  return out;
}

std::pair<double, double> iris_offset(double pose, double yaw, double pitch,
                                      const RenderGeometry& g) {
  const double dx = g.max_dx() * yaw / 45.0 * std::cos(pose * kDeg) + g.pose_shift * pose / 30.0;
  const double dy = g.max_dy() * pitch / 35.0;
  return {dx, dy};
}

std::pair<double, double> angles_from_offset(double dx, double dy, double pose,
                                             const RenderGeometry& g) {
  const double yaw = 45.0 * (dx - g.pose_shift * pose / 30.0) / (g.max_dx() * std::cos(pose * kDeg));
  const double pitch = 35.0 * dy / g.max_dy();
  return {yaw, pitch};
}

EyePatch render_synthetic(const SyntheticEyeParams& p, const RenderGeometry& g,
                          const AngleBounds& bounds) {
  p.validate(bounds);
  const int H = g.height, W = g.width, S = g.supersample;
  const double cx = W / 2.0, cy = H / 2.0;
  const auto [dx, dy] = iris_offset(p.pose_deg, p.yaw_deg, p.pitch_deg, g);
  const double icx = cx + dx, icy = cy - dy;
  const double shear = g.shear_at_30 * p.pose_deg / 30.0;
  const double hw = g.opening_half_width, hh = g.opening_half_height * p.eyelid_aperture;
  const double ir2 = g.iris_radius * g.iris_radius, pr2 = g.pupil_radius * g.pupil_radius;
  const Rgb skin = lerp(kSkinLight, kSkinDark, p.skin_tone);
  const Rgb sclera = lerp(kScleraLight, kScleraDark, p.skin_tone);
  const Rgb iris = hsv_to_rgb(p.iris_hue, 0.55, 0.28);
  const double lx = std::cos(p.light_angle_deg * kDeg), ly = std::sin(p.light_angle_deg * kDeg);
  Rng noise(p.seed ^ 0x6a09e667f3bcc908ULL);

  EyePatch out(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      Rgb acc{0, 0, 0};
      int skin_hits = 0;
      for (int sy = 0; sy < S; ++sy) {
        for (int sx = 0; sx < S; ++sx) {
          const double px = x + (sx + 0.5) / S, py = y + (sy + 0.5) / S;
          const double u = px - cx + shear * (py - cy), v = py - cy;
          const bool open = std::pow(std::abs(u) / hw, g.opening_exponent) +
                                std::pow(std::abs(v) / hh, g.opening_exponent) <= 1.0;
          const Rgb* c = &skin;
          if (open) {
            const double r2 = (px - icx) * (px - icx) + (py - icy) * (py - icy);
            c = r2 <= pr2 ? &kPupil : (r2 <= ir2 ? &iris : &sclera);
          } else {
            ++skin_hits;
          }
          for (int ch = 0; ch < 3; ++ch) acc[ch] += (*c)[ch];
        }
      }
      const double nx = (x + 0.5 - cx) / cx, ny = (y + 0.5 - cy) / cy;
      const double shade = p.brightness * (1.0 + kShading * (p.pose_deg / 30.0) * nx +
                                           kLightGradient * (lx * nx + ly * ny));
      const double n = noise.normal() * kSkinNoise * double(skin_hits) / (S * S);
      const bool frame = p.has_glasses && (y == 0 || y == H - 1 || x == 0 || x == W - 1);
      for (int ch = 0; ch < 3; ++ch) {
        double val = acc[ch] / (S * S) * shade + n;
        if (p.has_glasses) val = frame ? kFrame[ch] * p.brightness : val * kLensTint[ch];
        out.at(ch, y, x) = float(2.0 * std::clamp(val, 0.0, 1.0) - 1.0);
      }
    }
  }
  return out;
}

std::pair<double, double> iris_centroid(const EyePatch& img) {
  const int H = img.height, W = img.width;
  if (H <= 0 || W <= 0 || img.pixels.size() != 3 * H * W)
    throw ShapeError("oracle: malformed eye patch");
  std::vector<double> lum(std::size_t(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double r = (img.at(0, y, x) + 1.0) / 2.0, gg = (img.at(1, y, x) + 1.0) / 2.0,
                   b = (img.at(2, y, x) + 1.0) / 2.0;
      lum[std::size_t(y) * W + x] = 0.299 * r + 0.587 * gg + 0.114 * b;
    }
  // Background model: a least-squares plane through the bright pixels, so
  // that illumination gradients do not leak into the iris weights.
  std::vector<double> sorted = lum;
  const auto k = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
  double cut = sorted[k];
  if (!(cut > 1e-3)) throw EstimationError("oracle: image has no bright background");
  Eigen::Vector3d plane(cut, 0.0, 0.0);
  auto background = [&](int x, int y) {
    return plane[0] + plane[1] * (x + 0.5 - W / 2.0) + plane[2] * (y + 0.5 - H / 2.0);
  };
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double l = lum[std::size_t(y) * W + x];
        if (pass == 0 ? l < cut : l < 0.8 * background(x, y)) continue;
        const Eigen::Vector3d row(1.0, x + 0.5 - W / 2.0, y + 0.5 - H / 2.0);
        ata += row * row.transpose();
        atb += row * l;
      }
    if (ata(0, 0) < 3) throw EstimationError("oracle: image has no bright background");
    plane = ata.ldlt().solve(atb);
  }
  double mass = 0, mx = 0, my = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double ref = background(x, y);
      if (!(ref > 1e-3)) throw EstimationError("oracle: background model is not positive");
      const double rel = lum[std::size_t(y) * W + x] / ref;
      const double w = std::clamp((kIrisRelHigh - rel) / (kIrisRelHigh - kIrisRelLow), 0.0, 1.0);
      mass += w;
      mx += w * (x + 0.5);
      my += w * (y + 0.5);
    }
  if (mass < kMinIrisMass)
    throw EstimationError("oracle: no iris region found (mass " + std::to_string(mass) + ")");
  return {mx / mass, my / mass};
}

std::pair<double, double> oracle_gaze_from_image(const EyePatch& img, double pose_deg,
                                                 const RenderGeometry& g) {
  const auto [x, y] = iris_centroid(img);
  return angles_from_offset(x - img.width / 2.0, img.height / 2.0 - y, pose_deg, g);
}

std::array<double, 3> gaze_vector(double yaw, double pitch) {
  const double a = yaw * kDeg, b = pitch * kDeg;
  return {std::cos(b) * std::sin(a), std::sin(b), std::cos(b) * std::cos(a)};
}

double angular_error_deg(double yaw_a, double pitch_a, double yaw_b, double pitch_b) {
  const auto u = gaze_vector(yaw_a, pitch_a), v = gaze_vector(yaw_b, pitch_b);
  // atan2 stays accurate for nearly parallel vectors, where acos does not.
  const double cx = u[1] * v[2] - u[2] * v[1], cy = u[2] * v[0] - u[0] * v[2],
               cz = u[0] * v[1] - u[1] * v[0];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / kDeg;
}

void SyntheticDatasetSpec::validate() const {
  if (subjects < 1 || images_per_subject < 1)
    throw ValidationError("synthetic dataset needs >= 1 subject and >= 1 image per subject");
  if (!(glasses_probability >= 0.0 && glasses_probability <= 1.0))
    throw ValidationError("glasses_probability outside [0, 1]");
}

void to_json(nlohmann::json& j, const SyntheticDatasetSpec& s) {
  j = {{"subjects", s.subjects},
       {"images_per_subject", s.images_per_subject},
       {"seed", s.seed},
       {"subject_prefix", s.subject_prefix},
       {"glasses_probability", s.glasses_probability}};
}

void from_json(const nlohmann::json& j, SyntheticDatasetSpec& s) {
  s.subjects = j.value("subjects", s.subjects);
  s.images_per_subject = j.value("images_per_subject", s.images_per_subject);
  s.seed = j.value("seed", s.seed);
  s.subject_prefix = j.value("subject_prefix", s.subject_prefix);
  s.glasses_probability = j.value("glasses_probability", s.glasses_probability);
}

SubjectAppearance sample_appearance(Rng& rng, const std::string& id, double glasses_probability) {
  SubjectAppearance a;
  a.subject_id = id;
  a.iris_hue = rng.uniform();
  a.skin_tone = rng.uniform();
  a.has_glasses = rng.bernoulli(glasses_probability);
  a.brightness = rng.uniform(0.7, 1.3);
  a.light_angle_deg = rng.uniform(0.0, 360.0);
  return a;
}

SyntheticEyeParams make_params(const SubjectAppearance& app, double pose, double yaw,
                               double pitch, double aperture, std::uint64_t seed) {
  SyntheticEyeParams p;
  p.pose_deg = pose;
  p.yaw_deg = yaw;
  p.pitch_deg = pitch;
  p.iris_hue = app.iris_hue;
  p.skin_tone = app.skin_tone;
  p.eyelid_aperture = aperture;
  p.has_glasses = app.has_glasses;
  p.brightness = app.brightness;
  p.light_angle_deg = app.light_angle_deg;
  p.seed = seed;
  return p;
}

AttributeLabel sample_grid_angles(Rng& rng, const Binning& binning) {
  AttributeLabel a;
  for (int k = 0; k < 3; ++k) {
    const auto& c = binning.centres(k);
    a.primary(k) = c[rng.below(c.size())];
  }
  return a;
}

Dataset generate_synthetic_dataset(const SyntheticDatasetSpec& spec, const Binning& binning) {
  spec.validate();
  Rng root(spec.seed);
  Dataset out;
  out.reserve(std::size_t(spec.count()));
  for (int s = 0; s < spec.subjects; ++s) {
    Rng rng = root.fork();
    char id[32];
    std::snprintf(id, sizeof id, "%03d", s);
    const auto app = sample_appearance(rng, spec.subject_prefix + id, spec.glasses_probability);
    for (int i = 0; i < spec.images_per_subject; ++i) {
      AttributeLabel label = sample_grid_angles(rng, binning);
      label.subject_id = app.subject_id;
      const double aperture = rng.uniform(app.aperture_lo, app.aperture_hi);
      const auto params = make_params(app, label.pose_deg, label.yaw_deg, label.pitch_deg,
                                      aperture, rng.next_u64());
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d", app.subject_id.c_str(), i);
      out.push_back(Sample{name, render_synthetic(params), label, params});
    }
  }
  return out;
}

Sample rerender(const Sample& s, const AttributeLabel& angles) {
  if (!s.params) throw DataError("rerender: sample '" + s.name + "' has no render parameters");
  Sample out = s;
  out.params->pose_deg = angles.pose_deg;
  out.params->yaw_deg = angles.yaw_deg;
  out.params->pitch_deg = angles.pitch_deg;
  out.label.pose_deg = angles.pose_deg;
  out.label.yaw_deg = angles.yaw_deg;
  out.label.pitch_deg = angles.pitch_deg;
  out.image = render_synthetic(*out.params);
  return out;
}

nlohmann::json params_to_json(const SyntheticEyeParams& p) {
  return {{"pose_deg", p.pose_deg},   {"yaw_deg", p.yaw_deg},
          {"pitch_deg", p.pitch_deg}, {"iris_hue", p.iris_hue},
          {"skin_tone", p.skin_tone}, {"eyelid_aperture", p.eyelid_aperture},
          {"has_glasses", p.has_glasses}, {"brightness", p.brightness},
          {"light_angle_deg", p.light_angle_deg},
          {"seed", p.seed}};
}

SyntheticEyeParams params_from_json(const nlohmann::json& j) {
  SyntheticEyeParams p;
  p.pose_deg = j.at("pose_deg").get<double>();
  p.yaw_deg = j.at("yaw_deg").get<double>();
  p.pitch_deg = j.at("pitch_deg").get<double>();
  p.iris_hue = j.at("iris_hue").get<double>();
  p.skin_tone = j.at("skin_tone").get<double>();
  p.eyelid_aperture = j.at("eyelid_aperture").get<double>();
  p.has_glasses = j.at("has_glasses").get<bool>();
  p.brightness = j.at("brightness").get<double>();
  p.light_angle_deg = j.value("light_angle_deg", 0.0);
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

void export_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  nlohmann::json files = nlohmann::json::array();
  for (const auto& s : data) {
    const std::string file = s.name + ".png";
    save_png(s.image, (fs::path(dir) / file).string());
    nlohmann::json entry{{"file", file},
                         {"subject_id", s.label.subject_id},
                         {"pose_deg", s.label.pose_deg},
                         {"yaw_deg", s.label.yaw_deg},
                         {"pitch_deg", s.label.pitch_deg}};
    if (s.params) entry["params"] = params_to_json(*s.params);
    files.push_back(std::move(entry));
  }
  const int h = data.empty() ? 0 : data.front().image.height;
  const int w = data.empty() ? 0 : data.front().image.width;
  const nlohmann::json manifest{{"count", data.size()}, {"height", h}, {"width", w}, {"files", files}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw IoError("cannot write manifest in '" + dir + "'");
  os << manifest.dump(2) << '\n';
}

Dataset load_synthetic_dir(const std::string& dir, const RenderGeometry& g) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw IoError("no manifest.json in '" + dir + "'");
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest in '" + dir + "': " + e.what());
  }
  Dataset out;
  for (const auto& entry : manifest.at("files")) {
    if (!entry.contains("params")) throw DataError("manifest entry without params");
    Sample s;
    s.name = fs::path(entry.at("file").get<std::string>()).stem().string();
    s.params = params_from_json(entry.at("params"));
    s.label = {s.params->pose_deg, s.params->yaw_deg, s.params->pitch_deg,
               entry.at("subject_id").get<std::string>()};
    s.image = render_synthetic(*s.params, g);
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("manifest in '" + dir + "' lists no files");
  return out;
}

}  // namespace interpgaze
