#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "interpgaze/nn/layers.hpp"

namespace interpgaze::nn {

/// Activations recorded by one forward pass: acts[0] is the input and
/// acts[i + 1] the output of layer i.
template <typename Scalar>
struct Trace {
  std::vector<Tensor<Scalar>> acts;

  const Tensor<Scalar>& input() const { return acts.front(); }
  const Tensor<Scalar>& output() const { return acts.back(); }
};

/// Ordered stack of layers with value semantics (copies deep-clone layers).
template <typename Scalar>
class Sequential {
 public:
  using T = Tensor<Scalar>;

  Sequential() = default;
  Sequential(const Sequential& other) { *this = other; }
  Sequential& operator=(const Sequential& other) {
    if (this == &other) return *this;
    layers_.clear();
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L>
  L& add(L layer) {
    auto ptr = std::make_unique<L>(std::move(layer));
    L& ref = *ptr;
    layers_.push_back(std::move(ptr));
    return ref;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<Scalar>& layer(std::size_t i) const { return *layers_[i]; }

  Shape output_shape(Shape s) const {
    for (const auto& l : layers_) s = l->output_shape(s);
    return s;
  }

  T forward(const T& x) const {
    T h = x;
    for (const auto& l : layers_) h = l->forward(h);
    return h;
  }

  Trace<Scalar> trace(const T& x) const {
    Trace<Scalar> tr;
    tr.acts.reserve(layers_.size() + 1);
    tr.acts.push_back(x);
    for (const auto& l : layers_) tr.acts.push_back(l->forward(tr.acts.back()));
    return tr;
  }

  /// Back-propagates `dy` from the output. `taps` injects extra upstream
  /// gradients at intermediate activation indices (used for losses attached
  /// to hidden layers).
  T backward(const Trace<Scalar>& tr, const T& dy, bool accumulate,
             const std::map<int, T>& taps = {}) {
    T g = dy;
    for (int i = int(layers_.size()) - 1; i >= 0; --i) {
      if (auto it = taps.find(i + 1); it != taps.end()) g += it->second;
      g = layers_[i]->backward(tr.acts[i], tr.acts[i + 1], g, accumulate);
    }
    if (auto it = taps.find(0); it != taps.end()) g += it->second;
    return g;
  }

  /// Directional derivative of the whole stack at the traced point.
  /// Returns every intermediate tangent (index-aligned with the trace).
  std::vector<T> tangent(const Trace<Scalar>& tr, const T& t) const {
    std::vector<T> ts;
    ts.reserve(layers_.size() + 1);
    ts.push_back(t);
    for (std::size_t i = 0; i < layers_.size(); ++i)
      ts.push_back(layers_[i]->tangent(tr.acts[i], tr.acts[i + 1], ts.back()));
    return ts;
  }

  T tangent_backward(const Trace<Scalar>& tr, const std::vector<T>& ts, const T& dt,
                     bool accumulate) {
    T g = dt;
    for (int i = int(layers_.size()) - 1; i >= 0; --i)
      g = layers_[i]->tangent_backward(tr.acts[i], ts[i], g, accumulate);
    return g;
  }

  std::vector<Parameter<Scalar>*> parameters() {
    std::vector<Parameter<Scalar>*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

}  // namespace interpgaze::nn
