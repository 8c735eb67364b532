#include "interpgaze/control/control.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <sstream>

namespace interpgaze {

namespace {

const char kBranchLetter[] = {'P', 'H', 'V'};

}  // namespace

ControlVector compute_control_vector(const AttributeLabel& src, const AttributeLabel& tgt,
                                     const AttributeLabel& desired, double v_max,
                                     std::vector<std::string>* warnings) {
  ControlVector v;
  for (int k = 0; k < kPrimaryAttributes; ++k) {
    const double s = src.primary(k), t = tgt.primary(k), d = desired.primary(k);
    if (d == s) continue;
    if (t == s)
      throw ValidationError(std::string("attribute ") + kBranchLetter[k] +
                            " is unreachable: the reference does not differ from the source");
    const double raw = (d - s) / (t - s);
    const double clamped = std::clamp(raw, 0.0, v_max);
    if (clamped != raw && warnings)
      warnings->push_back(std::string("control component ") + kBranchLetter[k] + " = " +
                          std::to_string(raw) + " clamped to " + std::to_string(clamped));
    v[k] = clamped;
  }
  return v;
}

AttributeLabel parse_attribute_triple(const std::string& text, const AttributeLabel& fallback) {
  AttributeLabel out = fallback;
  bool seen[3] = {false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq != 1)
      throw ValidationError("attribute triple: expected KEY=VALUE, got '" + item + "'");
    const char key = char(std::toupper(static_cast<unsigned char>(item[0])));
    const int k = key == 'P' ? 0 : key == 'H' ? 1 : key == 'V' ? 2 : -1;
    if (k < 0) throw ValidationError(std::string("attribute triple: unknown key '") + item[0] + "'");
    if (seen[k]) throw ValidationError(std::string("attribute triple: duplicate key ") + key);
    seen[k] = true;
    std::size_t used = 0;
    double value = 0;
    try {
      value = std::stod(item.substr(eq + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() - eq - 1 || !std::isfinite(value))
      throw ValidationError("attribute triple: bad number in '" + item + "'");
    out.primary(k) = value;
  }
  return out;
}

void InterpSchedule::validate(double v_max) const {
  if (steps < 2) throw ValidationError("interpolation needs steps >= 2");
  if (order != "joint") {
    std::string sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != "HPV")
      throw ValidationError("order must be 'joint' or a permutation of PHV, got '" + order + "'");
  }
  if (!(o_strength >= 0.0 && o_strength <= v_max))
    throw RangeError("o_strength outside [0, v_max] (v_max = " + std::to_string(v_max) + ")");
}

std::vector<ControlVector> InterpSchedule::vectors() const {
  validate(std::max(1.5, o_strength));
  std::vector<ControlVector> out;
  for (int f = 0; f < steps; ++f) {
    ControlVector v;
    v[3] = o_strength;
    if (order == "joint") {
      const double s = double(f) / (steps - 1);
      for (int k = 0; k < 3; ++k) v[k] = s;
    } else {
      const double s = 3.0 * f / (steps - 1);
      for (int i = 0; i < 3; ++i) {
        const int k = order[i] == 'P' ? 0 : (order[i] == 'H' ? 1 : 2);
        v[k] = std::clamp(s - i, 0.0, 1.0);
      }
    }
    out.push_back(v);
  }
  return out;
}

EyePatch redirect(const ModelBundle<float>& m, const EyePatch& x_s, const EyePatch& x_ref,
                  const ControlVector& v) {
  detail::require_model(m);
  v.require_range(m.config.v_max);
  x_s.validate(m.config.height, m.config.width);
  x_ref.validate(m.config.height, m.config.width);
  const auto f_s = m.encoder.encode(to_batch<float>({&x_s}));
  const auto f_r = m.encoder.encode(to_batch<float>({&x_ref}));
  return from_batch(m.decoder.decode(m.controller.mix(f_s, f_r, v)), 0);
}

std::vector<EyePatch> redirect_many(const ModelBundle<float>& m, const EyePatch& x_s,
                                    const EyePatch& x_ref, const std::vector<ControlVector>& vs) {
  detail::require_model(m);
  for (const auto& v : vs) v.require_range(m.config.v_max);
  x_s.validate(m.config.height, m.config.width);
  x_ref.validate(m.config.height, m.config.width);
  const auto f_s = m.encoder.encode(to_batch<float>({&x_s}));
  const auto f_r = m.encoder.encode(to_batch<float>({&x_ref}));
  std::vector<EyePatch> out;
  for (const auto& v : vs) out.push_back(from_batch(m.decoder.decode(m.controller.mix(f_s, f_r, v)), 0));
  return out;
}

std::vector<EyePatch> interpolation_sequence(const ModelBundle<float>& m, const EyePatch& x_s,
                                             const EyePatch& x_t, const InterpSchedule& sched) {
  sched.validate(m.config.v_max);
  return redirect_many(m, x_s, x_t, sched.vectors());
}

EyePatch extrapolate(const ModelBundle<float>& m, const EyePatch& x_s, const EyePatch& x_t,
                     const ControlVector& v) {
  return redirect(m, x_s, x_t, v);
}

}  // namespace interpgaze
