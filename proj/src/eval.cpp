#include "interpgaze/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "interpgaze/control/control.hpp"

namespace interpgaze {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<int> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

void finish(GazeErrorReport& r) {
  r.n = int(r.errors.size());
  r.mean_deg = mean(r.errors);
  r.median_deg = median(r.errors);
}

void read_gaze(GazeErrorReport& r, const EyePatch& img, const AttributeLabel& want) {
  try {
    const auto [yaw, pitch] = oracle_gaze_from_image(img, want.pose_deg);
    r.errors.push_back(angular_error_deg(yaw, pitch, want.yaw_deg, want.pitch_deg));
  } catch (const EstimationError&) {
    ++r.failures;
  }
}

AttributeLabel commanded(const AttributeLabel& s, const AttributeLabel& t, const ControlVector& v) {
  AttributeLabel out = s;
  for (int k = 0; k < kPrimaryAttributes; ++k)
    out.primary(k) = s.primary(k) + v[k] * (t.primary(k) - s.primary(k));
  return out;
}

cv::Vec3b to_bgr(const EyePatch& p, int y, int x) {
  auto q = [](float v) { return uchar(std::lround(std::clamp((v + 1.0f) * 127.5f, 0.0f, 255.0f))); };
  return {q(p.at(2, y, x)), q(p.at(1, y, x)), q(p.at(0, y, x))};
}

}  // namespace

double mse_metric(const EyePatch& a, const EyePatch& b) {
  if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size())
    throw ShapeError("mse: patch sizes differ");
  if (a.pixels.size() == 0) throw ShapeError("mse: empty patch");
  const Eigen::ArrayXd d = (a.pixels.cast<double>() - b.pixels.cast<double>()) * 127.5;
  return d.square().mean();
}

double perceptual_distance(const FeaturePyramid<float>& psi, const EyePatch& a, const EyePatch& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("perceptual: patch sizes differ");
  const auto fa = psi.extract(to_batch<float>({&a}));
  const auto fb = psi.extract(to_batch<float>({&b}));
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const Shape s = fa[l].shape();
    const Eigen::MatrixXd pa = fa[l].planes(0).template cast<double>();
    const Eigen::MatrixXd pb = fb[l].planes(0).template cast<double>();
    double level = 0.0;
    for (Eigen::Index j = 0; j < s.plane(); ++j) {
      const Eigen::VectorXd ua = pa.col(j) / (pa.col(j).norm() + 1e-10);
      const Eigen::VectorXd ub = pb.col(j) / (pb.col(j).norm() + 1e-10);
      level += (ua - ub).squaredNorm();
    }
    total += level / double(s.plane());
  }
  return total / double(fa.size());
}

nlohmann::json GazeErrorReport::to_json() const {
  return {{"mean_deg", mean_deg}, {"median_deg", median_deg}, {"n", n}, {"failures", failures}};
}

GazeErrorReport gaze_error_eval(const Redirector& gen, const std::vector<PairSample>& pairs,
                                const ControlVector& v) {
  GazeErrorReport r;
  for (const auto& p : pairs) {
    const EyePatch out = gen(*p.source, *p.target, v);
    read_gaze(r, out, commanded(p.source_attrs(), p.target_attrs(), v));
  }
  finish(r);
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
  if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
  if (x.size() < 2) throw ValidationError("spearman: need at least two points");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  const bool flat = sxx == 0 || syy == 0;
  if (degenerate) *degenerate = flat;
  return flat ? 0.0 : sxy / std::sqrt(sxx * syy);
}

MonotonicityResult monotonicity_from_readings(const std::vector<double>& readings) {
  MonotonicityResult r;
  r.readings = readings;
  std::vector<double> frames(readings.size());
  std::iota(frames.begin(), frames.end(), 0.0);
  r.rho = spearman(frames, readings, &r.degenerate);
  return r;
}

MonotonicityResult monotonicity_diagnostic(const std::vector<EyePatch>& frames, Branch branch,
                                           const std::vector<double>& poses) {
  if (branch != Branch::yaw && branch != Branch::pitch)
    throw ValidationError("monotonicity: the oracle reads yaw and pitch only");
  if (poses.size() != frames.size()) throw ShapeError("monotonicity: one pose per frame required");
  std::vector<double> idx, readings;
  int failures = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    try {
      const auto [yaw, pitch] = oracle_gaze_from_image(frames[f], poses[f]);
      idx.push_back(double(f));
      readings.push_back(branch == Branch::yaw ? yaw : pitch);
    } catch (const EstimationError&) {
      ++failures;
    }
  }
  if (failures * 5 > int(frames.size()))
    throw EstimationError("monotonicity: oracle failed on " + std::to_string(failures) + " of " +
                          std::to_string(frames.size()) + " frames");
  MonotonicityResult r;
  r.failures = failures;
  r.readings = readings;
  r.rho = spearman(idx, readings, &r.degenerate);
  return r;
}

GridSize grid_size(int rows, int cols, int patch_h, int patch_w) {
  if (rows < 1 || cols < 1) throw ShapeError("grid: needs at least one cell");
  return {kGridLabelWidth + cols * patch_w + (cols - 1) * kGridSeparator,
          kGridLabelHeight + rows * patch_h + (rows - 1) * kGridSeparator};
}

void emit_grid(const std::vector<std::vector<EyePatch>>& images,
               const std::vector<std::string>& row_labels,
               const std::vector<std::string>& col_labels, const std::string& path) {
  if (images.empty() || images.front().empty()) throw ShapeError("grid: empty image matrix");
  const std::size_t cols = images.front().size();
  const int h = images.front().front().height, w = images.front().front().width;
  for (const auto& row : images) {
    if (row.size() != cols) throw ShapeError("grid: ragged image matrix");
    for (const auto& p : row)
      if (p.height != h || p.width != w) throw ShapeError("grid: mixed patch sizes");
  }
  if (!row_labels.empty() && row_labels.size() != images.size())
    throw ShapeError("grid: one row label per row required");
  if (!col_labels.empty() && col_labels.size() != cols)
    throw ShapeError("grid: one column label per column required");

  const GridSize size = grid_size(int(images.size()), int(cols), h, w);
  cv::Mat canvas(size.height, size.width, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto font = cv::FONT_HERSHEY_PLAIN;
  for (std::size_t r = 0; r < images.size(); ++r) {
    const int y0 = kGridLabelHeight + int(r) * (h + kGridSeparator);
    if (!row_labels.empty())
      cv::putText(canvas, row_labels[r], {2, y0 + h / 2 + 4}, font, 0.7, cv::Scalar(0, 0, 0));
    for (std::size_t c = 0; c < cols; ++c) {
      const int x0 = kGridLabelWidth + int(c) * (w + kGridSeparator);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) canvas.at<cv::Vec3b>(y0 + y, x0 + x) = to_bgr(images[r][c], y, x);
    }
  }
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    const int x0 = kGridLabelWidth + int(c) * (w + kGridSeparator);
    cv::putText(canvas, col_labels[c], {x0 + 2, kGridLabelHeight - 4}, font, 0.7, cv::Scalar(0, 0, 0));
  }
  if (!cv::imwrite(path, canvas)) throw IoError("grid: cannot write " + path);
}

nlohmann::json EvalReport::to_json() const {
  return {{"mse", mse},
          {"perceptual", perceptual},
          {"gaze_error_deg", gaze_error_deg},
          {"monotonicity_rho", monotonicity_rho},
          {"n_samples", n_samples}};
}

nlohmann::json DeskEvalResult::to_json() const {
  return {{"redirect", redirect.to_json()},
          {"autoencode", autoencode.to_json()},
          {"redirect_mse", redirect_mse},
          {"redirect_perceptual", redirect_perceptual},
          {"sweep_rho_median", sweep_rho_median},
          {"sweeps", sweep_rhos.size()},
          {"sweep_failures", sweep_failures},
          {"feature_ratio_median", feature_ratio_median},
          {"classifier_accuracy", classifier_accuracy},
          {"classifier_head_accuracy", classifier_head_accuracy},
          {"oneshot_closer_to_source", oneshot_closer_to_source},
          {"oneshot", oneshot.to_json()}};
}

EvalReport DeskEvalResult::summary() const {
  return {redirect_mse, redirect_perceptual, redirect.mean_deg, sweep_rho_median, redirect.n + redirect.failures};
}

DeskEvalResult run_desk_evaluation(const ModelBundle<float>& m, const Dataset& heldout,
                                   const DeskEvalConfig& cfg) {
  detail::require_model(m);
  for (const auto& s : heldout)
    if (!s.params) throw DataError("desk evaluation needs synthetic samples with render parameters");
  const PairSampler sampler(heldout);
  Rng rng(cfg.seed);
  DeskEvalResult out;
  const ControlVector full = ControlVector::full_move(0.0);

  // (a) same-subject redirection, (c) feature convergence.
  std::vector<double> mses, percs;
  for (int i = 0; i < cfg.redirect_pairs; ++i) {
    const PairSample p = sampler.sample(rng, PairMode::train);
    const auto f_s = m.encoder.encode(to_batch<float>({&p.source_image()}));
    const auto f_t = m.encoder.encode(to_batch<float>({&p.target_image()}));
    const auto c1 = m.controller.mix(f_s, f_t, full);
    const EyePatch x = from_batch(m.decoder.decode(c1), 0);
    read_gaze(out.redirect, x, p.target_attrs());
    read_gaze(out.autoencode, from_batch(m.decoder.decode(f_s), 0), p.source_attrs());
    const Sample gt = rerender(*p.source, p.target_attrs());
    mses.push_back(mse_metric(x, gt.image));
    percs.push_back(perceptual_distance(m.psi, x, gt.image));
    const double denom = (f_s.array() - f_t.array()).matrix().norm();
    if (denom > 0)
      out.feature_ratios.push_back((c1.array() - f_t.array()).matrix().norm() / denom);
  }
  finish(out.redirect);
  finish(out.autoencode);
  out.redirect_mse = mean(mses);
  out.redirect_perceptual = mean(percs);
  out.feature_ratio_median = median(out.feature_ratios);

  // (b) joint sweeps over pairs with a clear yaw change.
  InterpSchedule sched;
  sched.steps = cfg.sweep_frames;
  const auto vs = sched.vectors();
  int guard = 0;
  while (int(out.sweep_rhos.size()) < cfg.sweeps) {
    if (++guard > 1000 * std::max(1, cfg.sweeps))
      throw DataError("desk evaluation: not enough pairs with a yaw change of " +
                      std::to_string(cfg.min_sweep_yaw) + " degrees");
    const PairSample p = sampler.sample(rng, PairMode::interp);
    const double dyaw = p.target_attrs().yaw_deg - p.source_attrs().yaw_deg;
    if (std::abs(dyaw) < cfg.min_sweep_yaw) continue;
    const auto frames = redirect_many(m, p.source_image(), p.target_image(), vs);
    std::vector<double> poses;
    for (const auto& v : vs) poses.push_back(commanded(p.source_attrs(), p.target_attrs(), v).pose_deg);
    try {
      const auto r = monotonicity_diagnostic(frames, Branch::yaw, poses);
      out.sweep_rhos.push_back(dyaw > 0 ? r.rho : -r.rho);
    } catch (const EstimationError&) {
      ++out.sweep_failures;
      out.sweep_rhos.push_back(-1.0);  // an unreadable sweep counts as the worst case
    }
  }
  out.sweep_rho_median = median(out.sweep_rhos);

  // (d) classifier on the encoded endpoints.
  std::array<int, 3> correct{};
  int n = 0;
  for (std::size_t i = 0; i < heldout.size(); i += 32) {
    std::vector<const EyePatch*> batch;
    for (std::size_t j = i; j < std::min(heldout.size(), i + 32); ++j) batch.push_back(&heldout[j].image);
    const auto dists = m.classifier.classify(m.encoder.encode(to_batch<float>(batch)));
    for (std::size_t j = 0; j < dists.size(); ++j) {
      const auto truth = attrs_to_bins(heldout[i + j].label, m.binning);
      const auto pred = dists[j].argmax();
      for (int k = 0; k < 3; ++k) correct[k] += pred[k] == truth[k];
      ++n;
    }
  }
  for (int k = 0; k < 3; ++k) out.classifier_head_accuracy[k] = double(correct[k]) / n;
  out.classifier_accuracy =
      (out.classifier_head_accuracy[0] + out.classifier_head_accuracy[1] + out.classifier_head_accuracy[2]) / 3.0;

  // One-shot: the reference shows another identity.
  int closer = 0;
  for (int i = 0; i < cfg.oneshot_pairs; ++i) {
    const PairSample p = sampler.sample_cross_subject(rng);
    const EyePatch x = redirect(m, p.source_image(), p.target_image(), full);
    closer += mse_metric(x, p.source_image()) < mse_metric(x, p.target_image());
    read_gaze(out.oneshot, x, p.target_attrs());
  }
  finish(out.oneshot);
  out.oneshot_closer_to_source = cfg.oneshot_pairs ? double(closer) / cfg.oneshot_pairs : 0.0;
  return out;
}

}  // namespace interpgaze
