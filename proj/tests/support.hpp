#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "interpgaze/core/rng.hpp"
#include "interpgaze/model/bundle.hpp"
#include "interpgaze/trainer/objective.hpp"

namespace testing {

using namespace interpgaze;

/// A model small enough for double-precision finite differences.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.height = 8;
  c.width = 16;
  c.encoder_channels = {3, 4, 4, 5};
  c.branch_hidden = 3;
  c.decoder_channels = {4, 3, 3};
  c.critic_channels = 3;
  c.classifier_channels = 3;
  c.psi_channels = {2, 3, 3, 3};
  return c;
}

template <typename Scalar>
Tensor<Scalar> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<Scalar> t(s);
  for (Eigen::Index i = 0; i < t.array().size(); ++i) t.array()[i] = Scalar(scale * rng.normal());
  return t;
}

template <typename Scalar>
Tensor<Scalar> random_images(int n, const ModelConfig& c, Rng& rng) {
  Tensor<Scalar> t(Shape{n, 3, c.height, c.width});
  for (Eigen::Index i = 0; i < t.array().size(); ++i) t.array()[i] = Scalar(rng.uniform(-0.9, 0.9));
  return t;
}

inline BinIndices random_bins(Rng& rng, const Binning& b = {}) {
  return {int(rng.below(b.pose.size())), int(rng.below(b.yaw.size())), int(rng.below(b.pitch.size()))};
}

/// Outcome of a finite-difference comparison over sampled coordinates.
struct GradCheck {
  int checked = 0;
  int passed = 0;
  double worst = 0.0;
  std::string worst_where;

  double pass_rate() const { return checked ? double(passed) / checked : 0.0; }
  void merge(const GradCheck& o) {
    checked += o.checked;
    passed += o.passed;
    if (o.worst > worst) {
      worst = o.worst;
      worst_where = o.worst_where;
    }
  }
};

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

inline void record(GradCheck& out, double analytic, double numeric, double tol, const std::string& where) {
  const double e = relative_error(analytic, numeric);
  ++out.checked;
  if (e <= tol) ++out.passed;
  if (e > out.worst) {
    out.worst = e;
    out.worst_where = where;
  }
}

/// Central differences on sampled entries of `values`, compared with the
/// matching entries of `analytic`.
template <typename Matrix>
GradCheck check_entries(Matrix& values, const Matrix& analytic, const std::function<double()>& loss,
                        Rng& rng, int samples, const std::string& name, double h = 1e-6,
                        double tol = 1e-4) {
  GradCheck out;
  const Eigen::Index size = values.size();
  const int count = int(std::min<Eigen::Index>(samples, size));
  for (int s = 0; s < count; ++s) {
    const Eigen::Index i = count == size ? s : Eigen::Index(rng.below(std::uint64_t(size)));
    const double keep = values.data()[i];
    values.data()[i] = keep + h;
    const double up = loss();
    values.data()[i] = keep - h;
    const double down = loss();
    values.data()[i] = keep;
    record(out, analytic.data()[i], (up - down) / (2 * h), tol, name + "[" + std::to_string(i) + "]");
  }
  return out;
}

/// Checks every parameter's accumulated `grad` against `loss`.
inline GradCheck check_parameters(const std::vector<nn::Parameter<double>*>& params,
                                  const std::function<double()>& loss, Rng& rng, int per_param = 6,
                                  double h = 1e-6, double tol = 1e-4) {
  GradCheck out;
  for (auto* p : params) out.merge(check_entries(p->value, p->grad, loss, rng, per_param, p->name, h, tol));
  return out;
}

inline GradCheck check_tensor(Tensor<double>& x, const Tensor<double>& analytic,
                              const std::function<double()>& loss, Rng& rng, int samples,
                              const std::string& name, double h = 1e-6, double tol = 1e-4) {
  return check_entries(x.array(), analytic.array(), loss, rng, samples, name, h, tol);
}

/// A same-subject pair batch on random images (no rendered targets).
inline PairBatch<double> random_batch(int n, const ModelConfig& c, Rng& rng, bool with_gt = true) {
  PairBatch<double> b;
  b.x_s = random_images<double>(n, c, rng);
  b.x_t = random_images<double>(n, c, rng);
  for (int r = 0; r < n; ++r) {
    ControlVector v(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
    if (r % 2 == 0) v = ControlVector::full_move(rng.uniform());
    b.v.push_back(v);
    b.bins_s.push_back(random_bins(rng));
    b.bins_t.push_back(random_bins(rng));
    b.cross.push_back(false);
    if (with_gt) b.gt_rows.push_back(r);
  }
  if (with_gt) b.gt = random_images<double>(n, c, rng);
  return b;
}

}  // namespace testing
