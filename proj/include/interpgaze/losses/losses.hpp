#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interpgaze/model/networks.hpp"

namespace interpgaze {

/// Weights of every objective term. Defaults: lambda_gp = 10, lambda_C_path = 0
/// (the latent-path term is opt-in), all others 1.
struct LossWeights {
  double lambda_gp = 10.0;
  double lambda_gan_E = 1.0;
  double lambda_E_recon = 1.0;
  double lambda_distill = 1.0;
  double lambda_p = 1.0;
  double lambda_G_recon = 1.0;
  double lambda_gan_D = 1.0;
  double lambda_gan_C = 1.0;
  double lambda_C_isp = 1.0;
  double lambda_C_t = 1.0;
  double lambda_C_path = 0.0;

  void validate() const;
};
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Raw (unweighted) values of the objective terms.
struct LossTerms {
  double gan_D = 0.0;   ///< E[D(F_hat)] - E[D(F)] + lambda_gp * gp
  double gp = 0.0;      ///< gradient penalty (unweighted)
  double gan_EC = 0.0;  ///< E[D(F)] - E[D(F_hat)]
  double content = 0.0;
  double style = 0.0;
  double perceptual = 0.0;
  double recon = 0.0;
  double distill = 0.0;
  double isp = 0.0;
  double feature_target = 0.0;
  double latent_path = 0.0;
};

/// Named terms and weighted totals of one logging step.
struct LossReport {
  long long step = 0;
  std::map<std::string, double> terms;
  double L_E = 0.0;
  double L_G = 0.0;
  double L_D = 0.0;
  double L_C = 0.0;

  nlohmann::json to_json() const;
  std::string to_json_line() const;
};

/// Combines terms into L_E, L_G, L_D and L_C. Throws NonFiniteError naming
/// the first non-finite term.
LossReport total_losses(const LossTerms& terms, const LossWeights& weights);

namespace losses {

template <typename Scalar>
using T = Tensor<Scalar>;
template <typename Scalar>
using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------- Gram ----

/// Normalised Gram matrix of sample `n`: G(c, c') = sum_hw a_c a_c' / (H W C).
template <typename Scalar>
nn::RowMatrix<Scalar> gram_matrix(const Tensor<Scalar>& act, int n = 0) {
  const Shape s = act.shape();
  if (s.per_sample() == 0 || n < 0 || n >= s.n)
    throw ShapeError("gram_matrix: empty activation map " + s.str());
  const auto planes = act.planes(n);
  // Rank update fills one triangle; mirroring it keeps G exactly symmetric.
  nn::RowMatrix<Scalar> g = nn::RowMatrix<Scalar>::Zero(s.c, s.c);
  g.template selfadjointView<Eigen::Lower>().rankUpdate(planes, Scalar(1) / Scalar(s.per_sample()));
  g.template triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

// ---------------------------------------------------------- perceptual ----

template <typename Scalar>
struct PerceptualResult {
  Scalar content = 0;
  Scalar style = 0;
  Tensor<Scalar> grad;  ///< d(content + style)/d(x_gen), empty unless requested
  Scalar total() const { return content + style; }
};

/// Content loss at `content_level` and style loss over all pyramid levels,
/// both averaged over the batch. Gradients flow to x_gen only.
template <typename Scalar>
PerceptualResult<Scalar> perceptual(FeaturePyramid<Scalar>& psi, const T<Scalar>& x_gen,
                                    const T<Scalar>& x_ref, int content_level, bool want_grad,
                                    Scalar content_weight = 1, Scalar style_weight = 1) {
  x_gen.require_same(x_ref, "perceptual");
  const auto tg = psi.trace(x_gen);
  const auto tr = psi.trace(x_ref);
  const int batch = x_gen.batch();
  PerceptualResult<Scalar> out;
  std::map<int, T<Scalar>> grads;

  {
    const auto& a = psi.level(tg, content_level);
    const auto& b = psi.level(tr, content_level);
    const Scalar norm = Scalar(a.shape().per_sample());
    const auto diff = (a.array() - b.array()).eval();
    out.content = diff.square().sum() / norm / Scalar(batch);
    if (want_grad)
      grads[content_level] = T<Scalar>(a.shape(), content_weight * Scalar(2) * diff / norm / Scalar(batch));
  }
  for (int level = 1; level <= psi.levels(); ++level) {
    const auto& a = psi.level(tg, level);
    const auto& b = psi.level(tr, level);
    const Scalar norm = Scalar(a.shape().per_sample());
    T<Scalar> ga(a.shape());
    for (int n = 0; n < batch; ++n) {
      const nn::RowMatrix<Scalar> d = gram_matrix(a, n) - gram_matrix(b, n);
      out.style += d.squaredNorm() / Scalar(batch);
      if (want_grad)
        ga.planes(n) = style_weight * Scalar(4) * d * a.planes(n) / norm / Scalar(batch);
    }
    if (want_grad) {
      if (auto it = grads.find(level); it != grads.end())
        it->second += ga;
      else
        grads.emplace(level, std::move(ga));
    }
  }
  if (want_grad) out.grad = psi.backward(tg, grads);
  return out;
}

template <typename Scalar>
Scalar loss_content(FeaturePyramid<Scalar>& psi, const T<Scalar>& x_gen, const T<Scalar>& x_ref,
                    int content_level) {
  return perceptual(psi, x_gen, x_ref, content_level, false).content;
}
template <typename Scalar>
Scalar loss_style(FeaturePyramid<Scalar>& psi, const T<Scalar>& x_gen, const T<Scalar>& x_ref) {
  return perceptual(psi, x_gen, x_ref, 1, false).style;
}
template <typename Scalar>
Scalar loss_perceptual(FeaturePyramid<Scalar>& psi, const T<Scalar>& x_gen,
                       const T<Scalar>& x_ref, int content_level) {
  return perceptual(psi, x_gen, x_ref, content_level, false).total();
}

// ------------------------------------------------------- reconstruction ----

template <typename Scalar>
struct PairLoss {
  Scalar value = 0;
  Tensor<Scalar> grad_a;  ///< gradient w.r.t. the first argument
  Tensor<Scalar> grad_b;  ///< gradient w.r.t. the second argument
};

/// Mean squared error over all elements.
template <typename Scalar>
PairLoss<Scalar> loss_reconstruction(const T<Scalar>& x_s, const T<Scalar>& x_cycle) {
  x_s.require_same(x_cycle, "loss_reconstruction");
  PairLoss<Scalar> out;
  const auto diff = (x_cycle.array() - x_s.array()).eval();
  const Scalar count = Scalar(diff.size());
  out.value = diff.square().sum() / count;
  out.grad_b = T<Scalar>(x_s.shape(), Scalar(2) * diff / count);
  out.grad_a = out.grad_b * Scalar(-1);
  return out;
}

// ---------------------------------------------------------- distillation ----

/// Nearest-neighbour resampling of each plane to (h, w).
template <typename Scalar>
T<Scalar> resize_nearest(const T<Scalar>& x, int h, int w) {
  const Shape s = x.shape();
  if (s.h == h && s.w == w) return x;
  T<Scalar> y(Shape{s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
          y.at(n, c, yy, xx) = x.at(n, c, yy * s.h / h, xx * s.w / w);
  return y;
}

template <typename Scalar>
T<Scalar> resize_nearest_adjoint(const T<Scalar>& dy, const Shape& in) {
  const Shape s = dy.shape();
  if (s.h == in.h && s.w == in.w) return dy;
  T<Scalar> dx(in);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx)
          dx.at(n, c, yy * in.h / s.h, xx * in.w / s.w) += dy.at(n, c, yy, xx);
  return dx;
}

template <typename Scalar>
struct DistillResult {
  Scalar value = 0;
  std::map<int, T<Scalar>> encoder_level_grads;  ///< keyed by 1-based level
};

/// sum_t ||E_t(x) - A_t(psi_t(x))||_2, averaged over the batch. When
/// `accumulate` is set, adapter weight gradients are added and the encoder
/// tap gradients are returned for the caller to back-propagate.
template <typename Scalar>
DistillResult<Scalar> loss_distill(const Encoder<Scalar>& encoder, const Trace<Scalar>& enc_trace,
                                   const FeaturePyramid<Scalar>& psi,
                                   const Trace<Scalar>& psi_trace, Adapters<Scalar>& adapters,
                                   bool accumulate, Scalar weight = 1) {
  DistillResult<Scalar> out;
  std::vector<int> levels;
  for (const auto& entry : adapters.all()) levels.push_back(entry.first);
  for (int level : levels) {
    auto& adapter = adapters.at(level);
    const auto& e = encoder.level(enc_trace, level);
    const auto a_tr = adapter.trace(psi.level(psi_trace, level));
    const auto a = resize_nearest(a_tr.output(), e.shape().h, e.shape().w);
    e.require_same(a, "loss_distill");
    const T<Scalar> d = e - a;
    const int batch = e.batch();
    T<Scalar> ge(e.shape());
    for (int n = 0; n < batch; ++n) {
      const Scalar norm = d.sample(n).matrix().norm();
      out.value += norm / Scalar(batch);
      if (norm > Scalar(0)) ge.sample(n) = weight * d.sample(n) / norm / Scalar(batch);
    }
    if (accumulate) {
      const T<Scalar> ga = resize_nearest_adjoint(ge * Scalar(-1), a_tr.output().shape());
      adapter.backward(a_tr, ga, true);
      out.encoder_level_grads.emplace(level, std::move(ge));
    }
  }
  return out;
}

// ------------------------------------------------------------ adversarial ----

/// F_tilde = eps * real + (1 - eps) * fake with one eps ~ U[0,1) per sample.
template <typename Scalar>
T<Scalar> interpolate_samples(const T<Scalar>& real, const T<Scalar>& fake, Rng& rng) {
  real.require_same(fake, "gradient_penalty");
  T<Scalar> mixed(real.shape());
  for (int n = 0; n < real.batch(); ++n) {
    const Scalar eps = Scalar(rng.uniform());
    mixed.sample(n) = eps * real.sample(n) + (Scalar(1) - eps) * fake.sample(n);
  }
  return mixed;
}

/// Mean over the batch of (||grad_x D(x)||_2 - 1)^2 at the points `mixed`.
/// With `scale` != 0 adds scale * d(penalty)/d(weights) into D's gradients.
template <typename Scalar>
Scalar penalty_at(Critic<Scalar>& critic, const T<Scalar>& mixed, Scalar scale) {
  const auto tr = critic.trace(mixed);
  const T<Scalar> g = critic.input_gradient(tr);
  const int batch = mixed.batch();
  const Vec<Scalar> norms = sample_norms(g);
  const Scalar penalty = (norms - Scalar(1)).square().sum() / Scalar(batch);
  if (scale != Scalar(0)) {
    T<Scalar> u(g.shape());
    for (int n = 0; n < batch; ++n)
      if (norms[n] > Scalar(0))
        u.sample(n) = scale * Scalar(2) * (norms[n] - Scalar(1)) / norms[n] / Scalar(batch) * g.sample(n);
    critic.accumulate_input_gradient_pullback(tr, u);
  }
  return penalty;
}

template <typename Scalar>
Scalar gradient_penalty(Critic<Scalar>& critic, const T<Scalar>& real, const T<Scalar>& fake,
                        Rng& rng) {
  return penalty_at(critic, interpolate_samples(real, fake, rng), Scalar(0));
}

template <typename Scalar>
struct AdversarialLosses {
  Scalar L_D = 0;   ///< critic objective including lambda_gp * gp
  Scalar L_EC = 0;  ///< encoder/controller objective
  Scalar gp = 0;
};

/// Value of both Wasserstein objectives.
template <typename Scalar>
AdversarialLosses<Scalar> loss_adversarial(Critic<Scalar>& critic, const T<Scalar>& real,
                                           const T<Scalar>& mixed, Scalar lambda_gp, Rng& rng) {
  AdversarialLosses<Scalar> out;
  const Scalar d_real = critic.score(real).mean();
  const Scalar d_fake = critic.score(mixed).mean();
  out.gp = lambda_gp != Scalar(0) ? gradient_penalty(critic, real, mixed, rng) : Scalar(0);
  out.L_D = d_fake - d_real + lambda_gp * out.gp;
  out.L_EC = d_real - d_fake;
  return out;
}

/// Critic update: adds scale * dL_D/d(weights) into the critic gradients.
template <typename Scalar>
AdversarialLosses<Scalar> accumulate_critic_loss(Critic<Scalar>& critic, const T<Scalar>& real,
                                                 const T<Scalar>& mixed, Scalar lambda_gp,
                                                 Rng& rng, Scalar scale = 1) {
  AdversarialLosses<Scalar> out;
  const int batch = real.batch();
  const auto tr_real = critic.trace(real);
  const auto tr_fake = critic.trace(mixed);
  const Scalar d_real = Critic<Scalar>::scores(tr_real).mean();
  const Scalar d_fake = Critic<Scalar>::scores(tr_fake).mean();
  critic.backward(tr_fake, Vec<Scalar>::Constant(batch, scale / Scalar(batch)), true);
  critic.backward(tr_real, Vec<Scalar>::Constant(batch, -scale / Scalar(batch)), true);
  if (lambda_gp != Scalar(0))
    out.gp = penalty_at(critic, interpolate_samples(real, mixed, rng), scale * lambda_gp);
  out.L_D = d_fake - d_real + lambda_gp * out.gp;
  out.L_EC = d_real - d_fake;
  return out;
}

template <typename Scalar>
struct GeneratorAdversarial {
  Scalar L_EC = 0;
  Tensor<Scalar> grad_real;   ///< d(scale * L_EC)/dF
  Tensor<Scalar> grad_mixed;  ///< d(scale * L_EC)/dF_hat
};

/// Encoder/controller side: feature gradients of L_EC; critic untouched.
template <typename Scalar>
GeneratorAdversarial<Scalar> generator_adversarial(Critic<Scalar>& critic, const T<Scalar>& real,
                                                   const T<Scalar>& mixed, Scalar scale = 1) {
  GeneratorAdversarial<Scalar> out;
  const int batch = real.batch();
  const auto tr_real = critic.trace(real);
  const auto tr_fake = critic.trace(mixed);
  out.L_EC = Critic<Scalar>::scores(tr_real).mean() - Critic<Scalar>::scores(tr_fake).mean();
  out.grad_real = critic.backward(tr_real, Vec<Scalar>::Constant(batch, scale / Scalar(batch)), false);
  out.grad_mixed = critic.backward(tr_fake, Vec<Scalar>::Constant(batch, -scale / Scalar(batch)), false);
  return out;
}

// ------------------------------------------------------------ isomorphism ----

/// Per primary attribute: (1 - v^k) onehot(bins_i^k) + v^k onehot(bins_j^k).
/// The O branch carries no label and contributes no target.
AttributeDistribution soft_label(const BinIndices& bins_i, const BinIndices& bins_j,
                                 const ControlVector& v, const Binning& binning = {});

/// Shannon entropy (natural log) summed over the three heads.
double entropy(const AttributeDistribution& d);

/// Cross-entropy summed over heads with probabilities clamped at 1e-12.
double cross_entropy(const AttributeDistribution& target, const AttributeDistribution& predicted);

inline constexpr double kProbabilityFloor = 1e-12;

template <typename Scalar>
struct IsomorphismResult {
  Scalar value = 0;
  Tensor<Scalar> grad_logits;
};

/// Cross-entropy between soft targets and the classifier's softmax heads,
/// summed over heads and averaged over the batch.
template <typename Scalar>
IsomorphismResult<Scalar> isomorphism_from_logits(const Classifier<Scalar>& classifier,
                                                  const T<Scalar>& logits,
                                                  const std::vector<AttributeDistribution>& targets,
                                                  Scalar scale = 1) {
  IsomorphismResult<Scalar> out;
  const int batch = logits.batch();
  if (int(targets.size()) != batch) throw ShapeError("isomorphism: target count != batch");
  out.grad_logits = T<Scalar>(logits.shape());
  const Scalar floor = Scalar(kProbabilityFloor);
  for (int n = 0; n < batch; ++n) {
    for (int k = 0; k < 3; ++k) {
      const auto p = classifier.head_probabilities(logits, n, k);
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> t = targets[n].heads[k].template cast<Scalar>();
      // With clamping, only unclamped entries depend on the logits:
      // dCE/dz_j = p_j * sum_{i unclamped} t_i - t_j [j unclamped].
      Scalar live_mass = 0;
      for (int i = 0; i < p.size(); ++i) {
        if (p[i] > floor) {
          out.value -= t[i] * std::log(p[i]) / Scalar(batch);
          live_mass += t[i];
        } else {
          out.value -= t[i] * std::log(floor) / Scalar(batch);
        }
      }
      auto g = out.grad_logits.sample(n).segment(classifier.head_offset(k), p.size());
      for (int j = 0; j < p.size(); ++j)
        g[j] = scale * (p[j] * live_mass - (p[j] > floor ? t[j] : Scalar(0))) / Scalar(batch);
    }
  }
  return out;
}

/// Cross-entropy of I'(C_v(F_i, F_j)) against soft_label(bins_i, bins_j, v).
template <typename Scalar>
Scalar loss_isomorphism(const T<Scalar>& fi, const T<Scalar>& fj,
                        const std::vector<ControlVector>& v, const std::vector<BinIndices>& bins_i,
                        const std::vector<BinIndices>& bins_j, const Controller<Scalar>& controller,
                        const Classifier<Scalar>& classifier, const Binning& binning = {}) {
  std::vector<AttributeDistribution> targets;
  for (int n = 0; n < fi.batch(); ++n) targets.push_back(soft_label(bins_i[n], bins_j[n], v[n], binning));
  const T<Scalar> mixed = controller.mix(fi, fj, v);
  return isomorphism_from_logits(classifier, classifier.logits(mixed), targets).value;
}

// --------------------------------------------------------- feature target ----

/// ||C - F_target||^2 summed over the feature map, averaged over the batch.
template <typename Scalar>
PairLoss<Scalar> loss_feature_target(const T<Scalar>& mixed, const T<Scalar>& target) {
  mixed.require_same(target, "loss_feature_target");
  PairLoss<Scalar> out;
  const auto diff = (mixed.array() - target.array()).eval();
  const Scalar count = Scalar(mixed.batch());
  out.value = diff.square().sum() / count;
  out.grad_a = T<Scalar>(mixed.shape(), Scalar(2) * diff / count);
  out.grad_b = out.grad_a * Scalar(-1);
  return out;
}

// ---------------------------------------------------------- latent path ----

template <typename Scalar>
struct PathLoss {
  Scalar value = 0;
  T<Scalar> grad_mixed, grad_target, grad_fs, grad_ft;
};

/// Keeps interpolation on a straight latent path: per row,
/// ||C_v(F_s, F_t) - E(x_v)||^2 / (||F_t - F_s||^2 + eps), averaged over the
/// batch, where x_v shows the source at the interpolated angles. Dividing by
/// the endpoint distance makes the term invariant to the feature scale, so
/// shrinking all features does not lower it.
template <typename Scalar>
PathLoss<Scalar> loss_latent_path(const T<Scalar>& mixed, const T<Scalar>& target,
                                  const T<Scalar>& f_s, const T<Scalar>& f_t,
                                  Scalar eps = Scalar(1e-6)) {
  mixed.require_same(target, "loss_latent_path");
  mixed.require_same(f_s, "loss_latent_path");
  mixed.require_same(f_t, "loss_latent_path");
  PathLoss<Scalar> out;
  const int n = mixed.batch();
  out.grad_mixed = T<Scalar>(mixed.shape());
  out.grad_ft = T<Scalar>(mixed.shape());
  for (int r = 0; r < n; ++r) {
    const auto diff = (mixed.sample(r) - target.sample(r)).eval();
    const auto delta = (f_t.sample(r) - f_s.sample(r)).eval();
    const Scalar denom = delta.square().sum() + eps;
    const Scalar ratio = diff.square().sum() / denom;
    out.value += ratio / Scalar(n);
    out.grad_mixed.sample(r) = Scalar(2) * diff / (denom * Scalar(n));
    out.grad_ft.sample(r) = Scalar(-2) * ratio * delta / (denom * Scalar(n));
  }
  out.grad_target = out.grad_mixed * Scalar(-1);
  out.grad_fs = out.grad_ft * Scalar(-1);
  return out;
}

}  // namespace losses
}  // namespace interpgaze
