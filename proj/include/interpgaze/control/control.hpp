#pragma once

#include <string>
#include <vector>

#include "interpgaze/model/bundle.hpp"

namespace interpgaze {

/// Ratio rule v^k = (desired^k - src^k) / (tgt^k - src^k) on (P, H, V); O = 0.
/// Components are clamped to [0, v_max]; each clamp appends a message to
/// `warnings` when given. Throws ValidationError when an attribute must move
/// but the reference does not differ from the source on it.
ControlVector compute_control_vector(const AttributeLabel& src, const AttributeLabel& tgt,
                                     const AttributeLabel& desired, double v_max = 1.5,
                                     std::vector<std::string>* warnings = nullptr);

/// Parses "P=0,V=0,H=-5" (any order, each key at most once). Keys missing
/// from the string keep the values of `fallback`.
AttributeLabel parse_attribute_triple(const std::string& text, const AttributeLabel& fallback = {});

/// Frame schedule of an interpolation sequence.
struct InterpSchedule {
  int steps = 9;
  std::string order = "joint";  ///< "joint" or a permutation of "PHV"
  double o_strength = 0.0;

  void validate(double v_max = 1.5) const;
  /// Control vector of every frame.
  std::vector<ControlVector> vectors() const;
};

namespace detail {

inline void require_model(const ModelBundle<float>& m) {
  if (m.encoder.empty())
    throw ValidationError("redirect: model has no weights (missing or untrained checkpoint)");
}

}  // namespace detail

/// G(C_v(E(x_s), E(x_ref))) for a batch of control vectors sharing the pair.
std::vector<EyePatch> redirect_many(const ModelBundle<float>& m, const EyePatch& x_s,
                                    const EyePatch& x_ref, const std::vector<ControlVector>& vs);

/// G(C_v(E(x_s), E(x_ref))); x_ref may show another identity.
EyePatch redirect(const ModelBundle<float>& m, const EyePatch& x_s, const EyePatch& x_ref,
                  const ControlVector& v);

std::vector<EyePatch> interpolation_sequence(const ModelBundle<float>& m, const EyePatch& x_s,
                                             const EyePatch& x_t, const InterpSchedule& sched);

/// Same formula as redirect; components may exceed 1 up to v_max.
EyePatch extrapolate(const ModelBundle<float>& m, const EyePatch& x_s, const EyePatch& x_t,
                     const ControlVector& v);

}  // namespace interpgaze
