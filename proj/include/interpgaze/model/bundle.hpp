#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "interpgaze/model/networks.hpp"

namespace interpgaze {

/// Every network of the model plus the architecture it was built from.
template <typename Scalar>
struct ModelBundle {
  ModelConfig config;
  Binning binning;
  Encoder<Scalar> encoder;
  Controller<Scalar> controller;
  Decoder<Scalar> decoder;
  Critic<Scalar> critic;
  Classifier<Scalar> classifier;
  FeaturePyramid<Scalar> psi;
  Adapters<Scalar> adapters;

  static ModelBundle create(const ModelConfig& cfg, std::uint64_t seed, const Binning& binning = {}) {
    cfg.validate();
    Rng root(seed);
    ModelBundle b;
    b.config = cfg;
    b.binning = binning;
    Rng r_enc = root.fork(), r_ctl = root.fork(), r_dec = root.fork(), r_crit = root.fork(),
        r_cls = root.fork(), r_ada = root.fork();
    b.encoder = Encoder<Scalar>(cfg, r_enc);
    b.controller = Controller<Scalar>(cfg, r_ctl);
    b.decoder = Decoder<Scalar>(cfg, r_dec);
    b.critic = Critic<Scalar>(cfg, r_crit);
    b.classifier = Classifier<Scalar>(cfg, binning, r_cls);
    b.psi = FeaturePyramid<Scalar>(cfg);
    b.adapters = Adapters<Scalar>(cfg, r_ada);
    return b;
  }

  /// Weights updated by the generator-side step (E, T^k, G, I', A_t).
  std::vector<nn::Parameter<Scalar>*> generator_parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto* p : encoder.parameters()) out.push_back(p);
    for (auto* p : controller.parameters()) out.push_back(p);
    for (auto* p : decoder.parameters()) out.push_back(p);
    for (auto* p : classifier.parameters()) out.push_back(p);
    for (auto* p : adapters.parameters()) out.push_back(p);
    return out;
  }
  std::vector<nn::Parameter<Scalar>*> critic_parameters() { return critic.parameters(); }

  /// Every trainable weight (excludes the frozen pyramid).
  std::vector<nn::Parameter<Scalar>*> trainable_parameters() {
    auto out = generator_parameters();
    for (auto* p : critic_parameters()) out.push_back(p);
    return out;
  }

  std::size_t trainable_count() {
    std::size_t n = 0;
    for (auto* p : trainable_parameters()) n += std::size_t(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto* p : trainable_parameters()) p->zero_grad();
  }

  bool all_finite() {
    for (auto* p : trainable_parameters())
      if (!p->value.allFinite()) return false;
    return true;
  }

  /// Named weight arrays, including the frozen pyramid.
  std::map<std::string, nn::Parameter<Scalar>*> named_parameters() {
    std::map<std::string, nn::Parameter<Scalar>*> out;
    for (auto* p : trainable_parameters()) out.emplace(p->name, p);
    for (auto* p : psi.parameters()) out.emplace(p->name, p);
    return out;
  }
};

/// FNV-1a over the raw bytes of a parameter list (used to assert which
/// networks a training step touched).
template <typename Scalar>
std::uint64_t hash_parameters(const std::vector<nn::Parameter<Scalar>*>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < std::size_t(p->value.size()) * sizeof(Scalar); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace interpgaze
