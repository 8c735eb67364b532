#pragma once

#include <optional>
#include <vector>

#include "interpgaze/losses/losses.hpp"
#include "interpgaze/model/bundle.hpp"

namespace interpgaze {

/// One training batch of image pairs with everything the objectives need.
template <typename Scalar>
struct PairBatch {
  Tensor<Scalar> x_s;  ///< sources [n,3,H,W]
  Tensor<Scalar> x_t;  ///< targets / references [n,3,H,W]
  std::vector<ControlVector> v;
  std::vector<BinIndices> bins_s, bins_t;
  /// Exact rendering of G(C_v(F_s, F_t)) for rows listed in gt_rows (the
  /// source subject at the interpolated angles).
  std::vector<int> gt_rows;
  Tensor<Scalar> gt;
  /// Rows whose target comes from another subject: their feature target is
  /// E(gt) rather than F_t.
  std::vector<bool> cross;

  int size() const { return x_s.batch(); }
  bool full_move(int r) const { return v[r][0] == 1.0 && v[r][1] == 1.0 && v[r][2] == 1.0; }
};

/// The cycle pass's backward vector: fully adopt the reference's primary
/// attributes, leave "other" untouched.
inline ControlVector cycle_back_vector() { return {1.0, 1.0, 1.0, 0.0}; }

/// x_cycle = G(C_(1,1,1,0)(E(G(C_v(E x_s, E x_t))), E x_s)).
template <typename Scalar>
Tensor<Scalar> cycle_pass(const ModelBundle<Scalar>& m, const Tensor<Scalar>& x_s,
                          const Tensor<Scalar>& x_t, const std::vector<ControlVector>& v) {
  const auto f_s = m.encoder.encode(x_s);
  const auto f_g = m.controller.mix(f_s, m.encoder.encode(x_t), v);
  const auto x_g = m.decoder.decode(f_g);
  const std::vector<ControlVector> back(v.size(), cycle_back_vector());
  return m.decoder.decode(m.controller.mix(m.encoder.encode(x_g), f_s, back));
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& t, const std::vector<int>& rows) {
  Tensor<Scalar> out(t.shape().with_batch(int(rows.size())));
  for (int i = 0; i < int(rows.size()); ++i) out.sample(i) = t.sample(rows[i]);
  return out;
}

template <typename Scalar>
void scatter_add_rows(Tensor<Scalar>& dst, const Tensor<Scalar>& src, const std::vector<int>& rows) {
  for (int i = 0; i < int(rows.size()); ++i) dst.sample(rows[i]) += src.sample(i);
}

}  // namespace detail

/// Critic objective on one batch: real F_t versus fake C_v(F_s, F_t) (or the
/// decoded images when the critic looks at images). With `accumulate`,
/// adds dL_D/dD into the critic gradients.
template <typename Scalar>
LossTerms critic_objective(ModelBundle<Scalar>& m, const PairBatch<Scalar>& b,
                           const LossWeights& w, Rng& rng, bool accumulate) {
  auto f_s = m.encoder.encode(b.x_s);
  auto f_t = m.encoder.encode(b.x_t);
  auto mixed = m.controller.mix(f_s, f_t, b.v);
  Tensor<Scalar> real = f_t, fake = mixed;
  if (m.config.critic_on == CriticInput::images) {
    real = b.x_t;
    fake = m.decoder.decode(mixed);
  }
  LossTerms t;
  const auto gp_weight = Scalar(w.lambda_gp);
  const auto adv = accumulate
                       ? losses::accumulate_critic_loss(m.critic, real, fake, gp_weight, rng,
                                                        Scalar(w.lambda_gan_D))
                       : losses::loss_adversarial(m.critic, real, fake, gp_weight, rng);
  t.gan_D = double(adv.L_D);
  t.gp = double(adv.gp);
  t.gan_EC = double(adv.L_EC);
  return t;
}

/// Generator-side objective L_E + L_G + L_C on one batch. With `accumulate`,
/// adds its gradient into E, T^k, G, I' and the adapters (never D).
///
/// The feature-target term updates T^k only and stops at the features, so it
/// cannot pull E towards F_s = F_t. The isomorphism and adversarial terms
/// reach E as well: E has to keep the attributes readable.
template <typename Scalar>
LossTerms generator_objective(ModelBundle<Scalar>& m, const PairBatch<Scalar>& b,
                              const LossWeights& w, bool accumulate) {
  using T = Tensor<Scalar>;
  const int n = b.size();
  const auto S = [](double x) { return Scalar(x); };
  LossTerms terms;

  // Forward: encode both images and mix.
  const auto tr_s = m.encoder.trace(b.x_s);
  const auto tr_t = m.encoder.trace(b.x_t);
  const T& f_s = tr_s.output();
  const T& f_t = tr_t.output();
  MixTrace<Scalar> mix_tr;
  const T mixed = m.controller.mix_traced(f_s, f_t, b.v, mix_tr);

  // Decode the autoencoded source and the redirected image.
  const auto tr_ae = m.decoder.trace(f_s);
  const auto tr_g = m.decoder.trace(mixed);
  const T& x_g = tr_g.output();

  T d_fs(f_s.shape()), d_ft(f_t.shape()), d_mixed(mixed.shape()), d_xg(x_g.shape());
  T d_mixed_c(mixed.shape());  // feature target: controller only

  // Adversarial term (same value enters L_E and L_C).
  const double w_gan = w.lambda_gan_E + w.lambda_gan_C;
  if (m.config.critic_on == CriticInput::features) {
    auto adv = losses::generator_adversarial(m.critic, f_t, mixed, S(w_gan));
    terms.gan_EC = double(adv.L_EC);
    d_ft += adv.grad_real;
    d_mixed += adv.grad_mixed;
  } else {
    auto adv = losses::generator_adversarial(m.critic, b.x_t, x_g, S(w_gan));
    terms.gan_EC = double(adv.L_EC);
    d_xg += adv.grad_mixed;
  }

  // Perceptual: autoencoded source against itself, redirected output
  // against its exact rendering where one exists.
  const int content = m.config.content_level;
  auto p_ae = losses::perceptual(m.psi, tr_ae.output(), b.x_s, content, accumulate,
                                 S(w.lambda_p), S(w.lambda_p));
  terms.content = double(p_ae.content);
  terms.style = double(p_ae.style);
  T d_xae = accumulate ? p_ae.grad : T(tr_ae.output().shape());
  if (!b.gt_rows.empty()) {
    const T x_sel = detail::gather_rows(x_g, b.gt_rows);
    auto p_gt = losses::perceptual(m.psi, x_sel, b.gt, content, accumulate, S(w.lambda_p),
                                   S(w.lambda_p));
    terms.content += double(p_gt.content);
    terms.style += double(p_gt.style);
    if (accumulate) detail::scatter_add_rows(d_xg, p_gt.grad, b.gt_rows);
  }
  terms.perceptual = terms.content + terms.style;

  // Cycle reconstruction.
  const auto tr_xg = m.encoder.trace(x_g);
  MixTrace<Scalar> back_tr;
  const std::vector<ControlVector> back(n, cycle_back_vector());
  const T mixed_back = m.controller.mix_traced(tr_xg.output(), f_s, back, back_tr);
  const auto tr_cyc = m.decoder.trace(mixed_back);
  auto rec = losses::loss_reconstruction(b.x_s, tr_cyc.output());
  terms.recon = double(rec.value);

  // Distillation on the source encoding.
  const auto psi_tr = m.psi.trace(b.x_s);
  auto dist = losses::loss_distill(m.encoder, tr_s, m.psi, psi_tr, m.adapters, accumulate,
                                   S(w.lambda_distill));
  terms.distill = double(dist.value);

  // Isomorphism cross-entropy on the mixed features.
  const auto tr_cls = m.classifier.trace(mixed);
  std::vector<AttributeDistribution> targets;
  for (int r = 0; r < n; ++r)
    targets.push_back(losses::soft_label(b.bins_s[r], b.bins_t[r], b.v[r], m.binning));
  auto iso = losses::isomorphism_from_logits(m.classifier, tr_cls.output(), targets,
                                             S(w.lambda_C_isp));
  terms.isp = double(iso.value);

  // Feature target on full-move rows.
  std::vector<int> full_rows;
  for (int r = 0; r < n; ++r)
    if (b.full_move(r)) full_rows.push_back(r);
  T ft_target;
  if (!full_rows.empty()) {
    ft_target = detail::gather_rows(f_t, full_rows);  // constant for the controller
    std::vector<int> gt_pos(n, -1);
    for (int i = 0; i < int(b.gt_rows.size()); ++i) gt_pos[b.gt_rows[i]] = i;
    for (int i = 0; i < int(full_rows.size()); ++i) {
      const int r = full_rows[i];
      if (!b.cross[r]) continue;
      if (gt_pos[r] < 0) throw DataError("cross-subject row without a rendered target");
      const T gt_row = slice_batch(b.gt, gt_pos[r], 1);
      ft_target.sample(i) = m.encoder.encode(gt_row).sample(0);
    }
    auto ft = losses::loss_feature_target(detail::gather_rows(mixed, full_rows), ft_target);
    terms.feature_target = double(ft.value);
    if (accumulate) detail::scatter_add_rows(d_mixed_c, ft.grad_a * S(w.lambda_C_t), full_rows);
  }

  // Latent path on rows with a rendering x_v at the interpolated angles;
  // reaches E through both endpoints and E(x_v). x_v is also autoencoded so
  // that G can decode the path it is pulled onto.
  losses::PathLoss<Scalar> path;
  std::optional<nn::Trace<Scalar>> tr_gt, tr_gt_ae;
  T d_gt_ae;
  if (w.lambda_C_path > 0.0 && !b.gt_rows.empty()) {
    tr_gt = m.encoder.trace(b.gt);
    path = losses::loss_latent_path(detail::gather_rows(mixed, b.gt_rows), tr_gt->output(),
                                    detail::gather_rows(f_s, b.gt_rows),
                                    detail::gather_rows(f_t, b.gt_rows));
    terms.latent_path = double(path.value);
    tr_gt_ae = m.decoder.trace(tr_gt->output());
    auto p_v = losses::perceptual(m.psi, tr_gt_ae->output(), b.gt, content, accumulate,
                                  S(w.lambda_p), S(w.lambda_p));
    terms.content += double(p_v.content);
    terms.style += double(p_v.style);
    terms.perceptual = terms.content + terms.style;
    if (accumulate) d_gt_ae = p_v.grad;
  }

  if (!accumulate) return terms;

  if (tr_gt) {
    const Scalar wp = S(w.lambda_C_path);
    detail::scatter_add_rows(d_mixed, path.grad_mixed * wp, b.gt_rows);
    detail::scatter_add_rows(d_fs, path.grad_fs * wp, b.gt_rows);
    detail::scatter_add_rows(d_ft, path.grad_ft * wp, b.gt_rows);
    T d_gt = path.grad_target * wp;
    d_gt += m.decoder.backward(*tr_gt_ae, d_gt_ae, true);
    m.encoder.backward(*tr_gt, d_gt, true);
  }

  // Backward, deepest consumers first.
  const Scalar w_rec = S(w.lambda_E_recon + w.lambda_G_recon);
  T d_back = m.decoder.backward(tr_cyc, rec.grad_b * w_rec, true);
  auto [d_fg, d_fs_back] = m.controller.backward(back_tr, d_back, true);
  d_fs += d_fs_back;
  d_xg += m.encoder.backward(tr_xg, d_fg, true);

  d_mixed += m.decoder.backward(tr_g, d_xg, true);
  d_mixed += m.classifier.backward(tr_cls, iso.grad_logits, true);
  auto [d_fs_mix, d_ft_mix] = m.controller.backward(mix_tr, d_mixed, true);
  d_fs += d_fs_mix;
  d_ft += d_ft_mix;
  m.controller.backward(mix_tr, d_mixed_c, true);

  d_fs += m.decoder.backward(tr_ae, d_xae, true);
  m.encoder.backward(tr_s, d_fs, true, dist.encoder_level_grads);
  m.encoder.backward(tr_t, d_ft, true);
  return terms;
}

/// Scalar value of L_E + L_G + L_C for a term set (used by gradient checks).
inline double generator_total(const LossTerms& t, const LossWeights& w) {
  const auto r = total_losses(t, w);
  return r.L_E + r.L_G + r.L_C;
}

}  // namespace interpgaze
