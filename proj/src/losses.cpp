#include "interpgaze/losses/losses.hpp"

#include <cmath>
#include <utility>

namespace interpgaze {

LossReport total_losses(const LossTerms& t, const LossWeights& w) {
  w.validate();
  LossReport r;
  const std::pair<const char*, double> named[] = {
      {"gan_D", t.gan_D},     {"gp", t.gp},       {"gan_EC", t.gan_EC},
      {"content", t.content}, {"style", t.style}, {"perceptual", t.perceptual},
      {"recon", t.recon},     {"distill", t.distill}, {"isp", t.isp},
      {"feature_target", t.feature_target}, {"latent_path", t.latent_path}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value))
      throw NonFiniteError(name, std::string("non-finite loss term '") + name + "'");
    r.terms[name] = value;
  }
  r.L_E = w.lambda_gan_E * t.gan_EC + w.lambda_E_recon * t.recon + w.lambda_distill * t.distill;
  r.L_G = w.lambda_p * t.perceptual + w.lambda_G_recon * t.recon;
  r.L_D = w.lambda_gan_D * t.gan_D;
  r.L_C = w.lambda_gan_C * t.gan_EC + w.lambda_C_isp * t.isp + w.lambda_C_t * t.feature_target +
          w.lambda_C_path * t.latent_path;
  const std::pair<const char*, double> totals[] = {
      {"L_E", r.L_E}, {"L_G", r.L_G}, {"L_D", r.L_D}, {"L_C", r.L_C}};
  for (const auto& [name, value] : totals)
    if (!std::isfinite(value))
      throw NonFiniteError(name, std::string("non-finite loss total '") + name + "'");
  return r;
}

nlohmann::json LossReport::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  for (const auto& [k, v] : terms) j[k] = v;
  j["L_E"] = L_E;
  j["L_G"] = L_G;
  j["L_D"] = L_D;
  j["L_C"] = L_C;
  return j;
}

std::string LossReport::to_json_line() const { return to_json().dump(); }

namespace losses {

AttributeDistribution soft_label(const BinIndices& bins_i, const BinIndices& bins_j,
                                 const ControlVector& v, const Binning& binning) {
  AttributeDistribution d;
  const auto sizes = binning.sizes();
  for (int k = 0; k < 3; ++k) {
    if (bins_i[k] < 0 || bins_i[k] >= sizes[k] || bins_j[k] < 0 || bins_j[k] >= sizes[k])
      throw ValidationError("soft_label: bin index out of range");
    if (!(v[k] >= 0.0 && v[k] <= 1.0))
      throw RangeError("soft_label: v component outside [0, 1]");
    d.heads[k] = Eigen::VectorXd::Zero(sizes[k]);
    d.heads[k][bins_i[k]] += 1.0 - v[k];
    d.heads[k][bins_j[k]] += v[k];
  }
  return d;
}

double entropy(const AttributeDistribution& d) {
  double h = 0.0;
  for (const auto& head : d.heads)
    for (Eigen::Index i = 0; i < head.size(); ++i)
      if (head[i] > 0.0) h -= head[i] * std::log(head[i]);
  return h;
}

double cross_entropy(const AttributeDistribution& target, const AttributeDistribution& predicted) {
  double ce = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (target.heads[k].size() != predicted.heads[k].size())
      throw ShapeError("cross_entropy: head size mismatch");
    for (Eigen::Index i = 0; i < target.heads[k].size(); ++i)
      ce -= target.heads[k][i] * std::log(std::max(predicted.heads[k][i], kProbabilityFloor));
  }
  return ce;
}

}  // namespace losses
}  // namespace interpgaze
