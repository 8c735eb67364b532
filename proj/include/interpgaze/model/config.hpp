#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace interpgaze {

/// Where the critic looks: on latent features (as in the objective) or on
/// decoded images.
enum class CriticInput { features, images };

/// Architecture hyper-parameters shared by all networks.
struct ModelConfig {
  int height = 32;
  int width = 64;
  std::array<int, 4> encoder_channels{32, 64, 128, 256};
  int branch_hidden = 32;
  std::array<int, 3> decoder_channels{128, 64, 32};
  int critic_channels = 64;
  CriticInput critic_on = CriticInput::features;
  int classifier_channels = 64;
  std::array<int, 4> psi_channels{16, 32, 64, 64};
  std::vector<int> distill_levels{1, 2, 3};
  int content_level = 3;
  double leaky_slope = 0.2;
  double v_max = 1.5;
  unsigned long long psi_seed = 0x5eed0f9a11ULL;

  int feature_channels() const { return encoder_channels[3]; }
  int feature_height() const { return height / 8; }
  int feature_width() const { return width / 8; }

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace interpgaze
