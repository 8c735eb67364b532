#include <cmath>
#include <string>

#include "interpgaze/losses/losses.hpp"
#include "interpgaze/model/config.hpp"

namespace interpgaze {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

void ModelConfig::validate() const {
  require(height > 0 && width > 0 && height % 8 == 0 && width % 8 == 0,
          "model: height and width must be positive multiples of 8");
  for (int c : encoder_channels) require(c > 0, "model: encoder channels must be positive");
  for (int c : decoder_channels) require(c > 0, "model: decoder channels must be positive");
  for (int c : psi_channels) require(c > 0, "model: psi channels must be positive");
  require(branch_hidden > 0 && critic_channels > 0 && classifier_channels > 0,
          "model: channel widths must be positive");
  for (int l : distill_levels) require(l >= 1 && l <= 3, "model: distill levels must be in 1..3");
  require(content_level >= 1 && content_level <= 4, "model: content_level must be in 1..4");
  require(leaky_slope >= 0.0 && leaky_slope < 1.0, "model: leaky_slope must be in [0, 1)");
  require(std::isfinite(v_max) && v_max >= 1.0, "model: v_max must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"height", c.height},
                     {"width", c.width},
                     {"encoder_channels", c.encoder_channels},
                     {"branch_hidden", c.branch_hidden},
                     {"decoder_channels", c.decoder_channels},
                     {"critic_channels", c.critic_channels},
                     {"critic_on", c.critic_on == CriticInput::features ? "features" : "images"},
                     {"classifier_channels", c.classifier_channels},
                     {"psi_channels", c.psi_channels},
                     {"distill_levels", c.distill_levels},
                     {"content_level", c.content_level},
                     {"leaky_slope", c.leaky_slope},
                     {"v_max", c.v_max},
                     {"psi_seed", c.psi_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"height", "width", "encoder_channels", "branch_hidden",
                                  "decoder_channels", "critic_channels", "critic_on",
                                  "classifier_channels", "psi_channels", "distill_levels",
                                  "content_level", "leaky_slope", "v_max", "psi_seed"};
    bool found = false;
    for (const char* k : known) found = found || key == k;
    require(found, "model config: unknown key '" + key + "'");
  }
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
  c.branch_hidden = j.value("branch_hidden", c.branch_hidden);
  c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
  c.critic_channels = j.value("critic_channels", c.critic_channels);
  if (j.contains("critic_on")) {
    const auto s = j.at("critic_on").get<std::string>();
    require(s == "features" || s == "images", "model config: critic_on must be features|images");
    c.critic_on = s == "features" ? CriticInput::features : CriticInput::images;
  }
  c.classifier_channels = j.value("classifier_channels", c.classifier_channels);
  c.psi_channels = j.value("psi_channels", c.psi_channels);
  c.distill_levels = j.value("distill_levels", c.distill_levels);
  c.content_level = j.value("content_level", c.content_level);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.v_max = j.value("v_max", c.v_max);
  c.psi_seed = j.value("psi_seed", c.psi_seed);
}

void LossWeights::validate() const {
  const double all[] = {lambda_gp,      lambda_gan_E, lambda_E_recon, lambda_distill,
                        lambda_p,       lambda_G_recon, lambda_gan_D, lambda_gan_C,
                        lambda_C_isp,   lambda_C_t,     lambda_C_path};
  for (double w : all) require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and >= 0");
}

#define IG_WEIGHT_FIELDS(X)                                                                   \
  X(lambda_gp) X(lambda_gan_E) X(lambda_E_recon) X(lambda_distill) X(lambda_p)               \
      X(lambda_G_recon) X(lambda_gan_D) X(lambda_gan_C) X(lambda_C_isp) X(lambda_C_t) \
      X(lambda_C_path)

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json::object();
#define X(f) j[#f] = w.f;
  IG_WEIGHT_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  for (const auto& [key, _] : j.items()) {
    bool found = false;
#define X(f) found = found || key == #f;
    IG_WEIGHT_FIELDS(X)
#undef X
    require(found, "loss weights: unknown key '" + key + "'");
  }
#define X(f) w.f = j.value(#f, w.f);
  IG_WEIGHT_FIELDS(X)
#undef X
}

}  // namespace interpgaze
