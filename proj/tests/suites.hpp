#pragma once

// Property suites shared by the unit tests and the acceptance runner.

#include <cstdint>
#include <string>
#include <vector>

#include "support.hpp"

namespace testing {

struct NamedCheck {
  std::string name;
  GradCheck check;
};

/// Finite-difference checks of every objective term on the tiny model in
/// double precision.
std::vector<NamedCheck> gradient_suite(std::uint64_t seed, int per_param = 6);

struct IdentityResult {
  int trials = 0;
  int exact = 0;
  double seconds = 0.0;
};
/// v = 0 must return F_i bitwise (default-sized features, random branches).
IdentityResult control_identity_suite(int trials, std::uint64_t seed);

struct SuperpositionResult {
  int trials = 0;
  int passed = 0;
  double worst = 0.0;  ///< max |C_{a u + b w} - F_i - a (C_u - F_i) - b (C_w - F_i)|
};
/// Affinity of the mixing rule in v on random tiny inputs.
SuperpositionResult superposition_suite(int trials, std::uint64_t seed, double tol = 1e-6);

struct PenaltyResult {
  double penalty_norm1 = 0.0;
  double penalty_norm2 = 0.0;
  double weighted_norm1 = 0.0;  ///< lambda_gp * penalty
  double weighted_norm2 = 0.0;
};
/// Gradient penalty of linear critics with weight norms 1 and 2.
PenaltyResult penalty_analytics(std::uint64_t seed, double lambda_gp = 10.0);

struct InvariantResult {
  int trials = 0;
  int gram_asymmetric = 0;
  int gram_not_psd = 0;
  int soft_label_unnormalized = 0;
  int gibbs_violations = 0;
  int violations() const {
    return gram_asymmetric + gram_not_psd + soft_label_unnormalized + gibbs_violations;
  }
};
InvariantResult invariant_suite(int trials, std::uint64_t seed);

}  // namespace testing
