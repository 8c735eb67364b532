#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "interpgaze/core/rng.hpp"
#include "interpgaze/data/types.hpp"
#include "interpgaze/model/config.hpp"
#include "interpgaze/model/control_vector.hpp"
#include "interpgaze/nn/sequential.hpp"

namespace interpgaze {

using nn::Conv2d;
using nn::Sequential;
using nn::Trace;

/// Encoder E: image -> latent feature [C_f, H/8, W/8]. Four conv blocks
/// (stride 1, 2, 2, 2). The first three use pixel normalisation and a leaky
/// ReLU, and their outputs are the taps used for distillation. The last block
/// is linear, so the latent is not confined to a sphere per location and
/// straight paths between encodings stay among encodings.
template <typename Scalar>
class Encoder {
 public:
  using T = Tensor<Scalar>;

  Encoder() = default;
  Encoder(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const auto slope = Scalar(cfg.leaky_slope);
    const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    int in = 3;
    for (int b = 0; b < 4; ++b) {
      const int out = cfg.encoder_channels[b];
      auto& conv = net_.add(Conv2d<Scalar>("encoder.block" + std::to_string(b + 1), in, out, 3,
                                           b == 0 ? 1 : 2, 1));
      conv.init(rng, b < 3 ? gain : 1.0);
      if (b < 3) {
        net_.add(nn::PixelNorm<Scalar>());
        net_.add(nn::LeakyRelu<Scalar>(slope));
      }
      taps_[b] = int(net_.size());
      in = out;
    }
  }

  T encode(const T& x) const {
    check(x.shape());
    return net_.forward(x);
  }
  Trace<Scalar> trace(const T& x) const {
    check(x.shape());
    return net_.trace(x);
  }

  /// Output of block `level` (1-based) inside a trace.
  const T& level(const Trace<Scalar>& tr, int level) const { return tr.acts.at(taps_.at(level - 1)); }
  int level_index(int level) const { return taps_.at(level - 1); }
  int level_channels(int level) const { return cfg_.encoder_channels.at(level - 1); }

  /// `level_grads` maps 1-based block levels to gradients on their outputs.
  T backward(const Trace<Scalar>& tr, const T& dfeature, bool accumulate,
             const std::map<int, T>& level_grads = {}) {
    std::map<int, T> taps;
    for (const auto& [lvl, g] : level_grads) taps.emplace(level_index(lvl), g);
    return net_.backward(tr, dfeature, accumulate, taps);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() { return net_.parameters(); }
  Sequential<Scalar>& network() { return net_; }
  bool empty() const { return net_.size() == 0; }

 private:
  void check(const Shape& s) const {
    if (s.c != 3 || s.h != cfg_.height || s.w != cfg_.width)
      throw ShapeError("encoder expects [n,3," + std::to_string(cfg_.height) + "," +
                       std::to_string(cfg_.width) + "], got " + s.str());
  }

  ModelConfig cfg_;
  Sequential<Scalar> net_;
  std::array<int, 4> taps_{};
};

/// Recorded state of one controller evaluation.
template <typename Scalar>
struct MixTrace {
  Tensor<Scalar> delta;
  std::vector<ControlVector> v;
  std::array<bool, kBranchCount> active{};
  std::array<Trace<Scalar>, kBranchCount> branch;
};

/// Controller C: C_v(F_i, F_j) = F_i + sum_k v^k T^k(F_j - F_i). Each branch
/// is T^k(d) = g_k * d + conv2(lrelu(conv1(d))): a per-channel gain plus two
/// bias-free 3x3 convolutions. The gain and the output convolution start at
/// zero, so T^k(0) = 0 always and every branch starts as a no-op.
template <typename Scalar>
class Controller {
 public:
  using T = Tensor<Scalar>;

  Controller() = default;
  Controller(const ModelConfig& cfg, Rng& rng) : channels_(cfg.feature_channels()) {
    static constexpr const char* names[] = {"pose", "yaw", "pitch", "other"};
    const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    for (int k = 0; k < kBranchCount; ++k) {
      const std::string base = std::string("controller.") + names[k];
      auto& c1 = branches_[k].add(
          Conv2d<Scalar>(base + ".conv1", channels_, cfg.branch_hidden, 3, 1, 1, false));
      c1.init(rng, gain);
      branches_[k].add(nn::LeakyRelu<Scalar>(Scalar(cfg.leaky_slope)));
      auto& c2 = branches_[k].add(
          Conv2d<Scalar>(base + ".conv2", cfg.branch_hidden, channels_, 3, 1, 1, false));
      c2.zero_init();
      gains_[k] = nn::Parameter<Scalar>(base + ".gain", channels_, 1);
    }
  }

  /// Controller whose branches are all the identity map (test fixture for
  /// the closed-form behaviour of the mixing rule).
  static Controller identity(int channels) {
    Controller c;
    c.channels_ = channels;
    for (auto& b : c.branches_) b.add(nn::Identity<Scalar>());
    return c;
  }

  /// T^k applied to `delta`; k is 1-based (1..4 = P, H, V, O).
  T branch_transform(int k, const T& delta) const {
    if (k < 1 || k > kBranchCount)
      throw ValidationError("branch index " + std::to_string(k) + " outside 1..4");
    check(delta.shape());
    T out = branches_[k - 1].forward(delta);
    add_gain(k - 1, delta, out);
    return out;
  }

  T mix(const T& fi, const T& fj, const std::vector<ControlVector>& v) const {
    return mix_impl(fi, fj, v, nullptr);
  }
  T mix(const T& fi, const T& fj, const ControlVector& v) const {
    return mix(fi, fj, std::vector<ControlVector>(fi.batch(), v));
  }
  T mix_traced(const T& fi, const T& fj, const std::vector<ControlVector>& v,
               MixTrace<Scalar>& tr) const {
    return mix_impl(fi, fj, v, &tr);
  }

  /// Returns (dF_i, dF_j) and accumulates branch gradients.
  std::pair<T, T> backward(const MixTrace<Scalar>& tr, const T& dout, bool accumulate) {
    T dfj(dout.shape());
    for (int k = 0; k < kBranchCount; ++k) {
      if (!tr.active[k]) continue;
      T dbranch = dout;
      for (int n = 0; n < dout.batch(); ++n) dbranch.sample(n) *= Scalar(tr.v[n][k]);
      dfj += branches_[k].backward(tr.branch[k], dbranch, accumulate);
      if (gains_[k].value.size() == 0) continue;
      for (int n = 0; n < dout.batch(); ++n) {
        dfj.planes(n) += gains_[k].value.col(0).asDiagonal() * dbranch.planes(n);
        if (accumulate)
          gains_[k].grad.col(0) += (dbranch.planes(n).array() * tr.delta.planes(n).array()).rowwise().sum().matrix();
      }
    }
    T dfi = dout - dfj;
    return {std::move(dfi), std::move(dfj)};
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (int k = 0; k < kBranchCount; ++k) {
      for (auto* p : branches_[k].parameters()) out.push_back(p);
      if (gains_[k].value.size() > 0) out.push_back(&gains_[k]);
    }
    return out;
  }
  Sequential<Scalar>& branch(int k) { return branches_.at(k - 1); }

 private:
  void check(const Shape& s) const {
    if (s.c != channels_)
      throw ShapeError("controller expects " + std::to_string(channels_) +
                       " feature channels, got " + s.str());
  }

  T mix_impl(const T& fi, const T& fj, const std::vector<ControlVector>& v,
             MixTrace<Scalar>* tr) const {
    if (!(fi.shape() == fj.shape()))
      throw ShapeError("controller_mix: F_i " + fi.shape().str() + " vs F_j " + fj.shape().str());
    if (int(v.size()) != fi.batch())
      throw ShapeError("controller_mix: " + std::to_string(v.size()) +
                       " control vectors for batch " + std::to_string(fi.batch()));
    check(fi.shape());
    T out = fi;
    std::array<bool, kBranchCount> active{};
    for (int k = 0; k < kBranchCount; ++k)
      for (const auto& cv : v) active[k] = active[k] || cv[k] != 0.0;
    const bool any = active[0] || active[1] || active[2] || active[3];
    if (tr) {
      tr->v = v;
      tr->active = active;
    }
    if (!any) return out;
    T delta = fj - fi;
    for (int k = 0; k < kBranchCount; ++k) {
      if (!active[k]) continue;
      Trace<Scalar> bt = branches_[k].trace(delta);
      T tk = bt.output();
      add_gain(k, delta, tk);
      for (int n = 0; n < fi.batch(); ++n)
        if (v[n][k] != 0.0) out.sample(n) += Scalar(v[n][k]) * tk.sample(n);
      if (tr) tr->branch[k] = std::move(bt);
    }
    if (tr) tr->delta = std::move(delta);
    return out;
  }

  void add_gain(int k, const T& delta, T& out) const {
    if (gains_[k].value.size() == 0) return;
    for (int n = 0; n < delta.batch(); ++n)
      out.planes(n) += gains_[k].value.col(0).asDiagonal() * delta.planes(n);
  }

  int channels_ = 0;
  std::array<Sequential<Scalar>, kBranchCount> branches_;
  std::array<nn::Parameter<Scalar>, kBranchCount> gains_;
};

/// Decoder G: latent feature -> image in [-1, 1] (tanh output).
template <typename Scalar>
class Decoder {
 public:
  using T = Tensor<Scalar>;

  Decoder() = default;
  Decoder(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const auto slope = Scalar(cfg.leaky_slope);
    const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    int in = cfg.feature_channels();
    for (int b = 0; b < 3; ++b) {
      if (b > 0) net_.add(nn::Upsample2x<Scalar>());
      const int out = cfg.decoder_channels[b];
      net_.add(Conv2d<Scalar>("decoder.block" + std::to_string(b + 1), in, out, 3, 1, 1))
          .init(rng, gain);
      net_.add(nn::LeakyRelu<Scalar>(slope));
      in = out;
    }
    net_.add(nn::Upsample2x<Scalar>());
    net_.add(Conv2d<Scalar>("decoder.out", in, 3, 3, 1, 1)).init(rng, 1.0);
    net_.add(nn::Tanh<Scalar>());
  }

  T decode(const T& f) const {
    check(f.shape());
    return net_.forward(f);
  }
  Trace<Scalar> trace(const T& f) const {
    check(f.shape());
    return net_.trace(f);
  }
  T backward(const Trace<Scalar>& tr, const T& dimage, bool accumulate) {
    return net_.backward(tr, dimage, accumulate);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() { return net_.parameters(); }
  Sequential<Scalar>& network() { return net_; }

 private:
  void check(const Shape& s) const {
    if (s.c != cfg_.feature_channels() || s.h != cfg_.feature_height() ||
        s.w != cfg_.feature_width())
      throw ShapeError("decoder expects [n," + std::to_string(cfg_.feature_channels()) + "," +
                       std::to_string(cfg_.feature_height()) + "," +
                       std::to_string(cfg_.feature_width()) + "], got " + s.str());
  }

  ModelConfig cfg_;
  Sequential<Scalar> net_;
};

/// Wasserstein critic D: three convolutions, global average pooling and a
/// linear head. Every layer is piecewise linear, which makes the input
/// gradient's derivative w.r.t. the weights available in closed form.
template <typename Scalar>
class Critic {
 public:
  using T = Tensor<Scalar>;

  Critic() = default;
  Critic(const ModelConfig& cfg, Rng& rng) {
    const bool on_images = cfg.critic_on == CriticInput::images;
    in_channels_ = on_images ? 3 : cfg.feature_channels();
    const int stride = on_images ? 2 : 1;
    const auto slope = Scalar(cfg.leaky_slope);
    const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    int in = in_channels_;
    for (int b = 0; b < 3; ++b) {
      net_.add(Conv2d<Scalar>("critic.conv" + std::to_string(b + 1), in, cfg.critic_channels, 3,
                              stride, 1))
          .init(rng, gain);
      net_.add(nn::LeakyRelu<Scalar>(slope));
      in = cfg.critic_channels;
    }
    net_.add(nn::GlobalAvgPool<Scalar>());
    net_.add(nn::Linear<Scalar>("critic.head", in, 1)).init(rng, 1.0);
  }

  /// Builds a critic that is just a linear functional <w, x> over the
  /// flattened input (used to test the penalty in closed form).
  static Critic linear(const Shape& sample_shape, const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& w) {
    Critic c;
    c.in_channels_ = sample_shape.c;
    auto& lin = c.net_.add(nn::Linear<Scalar>("critic.head", int(sample_shape.per_sample()), 1));
    lin.weight().value = w;
    lin.bias().value.setZero();
    return c;
  }

  /// One score per batch element, returned as a length-n array.
  Eigen::Array<Scalar, Eigen::Dynamic, 1> score(const T& f) const {
    check(f.shape());
    return net_.forward(f).array();
  }
  Trace<Scalar> trace(const T& f) const {
    check(f.shape());
    return net_.trace(f);
  }
  static Eigen::Array<Scalar, Eigen::Dynamic, 1> scores(const Trace<Scalar>& tr) {
    return tr.output().array();
  }

  /// Back-propagates per-sample score weights `dscore` (length n).
  T backward(const Trace<Scalar>& tr, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& dscore,
             bool accumulate) {
    T dy(tr.output().shape(), dscore);
    return net_.backward(tr, dy, accumulate);
  }

  /// Gradient of each sample's score w.r.t. its own input.
  T input_gradient(const Trace<Scalar>& tr) {
    return backward(tr, Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(tr.output().batch()), false);
  }

  /// Adds d/dw [ sum_n <u_n, grad_x D(x_n)> ] into the weight gradients,
  /// where the trace holds the points x_n.
  void accumulate_input_gradient_pullback(const Trace<Scalar>& tr, const T& u) {
    const auto ts = net_.tangent(tr, u);
    T ones = T::constant(ts.back().shape(), Scalar(1));
    net_.tangent_backward(tr, ts, ones, true);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() { return net_.parameters(); }
  Sequential<Scalar>& network() { return net_; }

 private:
  void check(const Shape& s) const {
    if (s.c != in_channels_)
      throw ShapeError("critic expects " + std::to_string(in_channels_) + " channels, got " +
                       s.str());
  }

  int in_channels_ = 0;
  Sequential<Scalar> net_;
};

/// Three categorical distributions (pose, yaw, pitch).
struct AttributeDistribution {
  std::array<Eigen::VectorXd, 3> heads;

  bool is_normalized(double tol = 1e-6) const {
    for (const auto& h : heads)
      if ((h.array() < 0).any() || std::abs(h.sum() - 1.0) > tol) return false;
    return true;
  }
  std::array<int, 3> argmax() const {
    std::array<int, 3> out{};
    for (int k = 0; k < 3; ++k) heads[k].maxCoeff(&out[k]);
    return out;
  }
};

/// Attribute classifier I': two convolutions and a linear layer producing
/// the logits of all three heads (concatenated: pose, yaw, pitch).
template <typename Scalar>
class Classifier {
 public:
  using T = Tensor<Scalar>;

  Classifier() = default;
  Classifier(const ModelConfig& cfg, const Binning& binning, Rng& rng)
      : sizes_(binning.sizes()), channels_(cfg.feature_channels()) {
    const auto slope = Scalar(cfg.leaky_slope);
    const double gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    const int c = cfg.classifier_channels;
    net_.add(Conv2d<Scalar>("classifier.conv1", channels_, c, 3, 1, 1)).init(rng, gain);
    net_.add(nn::LeakyRelu<Scalar>(slope));
    net_.add(Conv2d<Scalar>("classifier.conv2", c, c, 3, 2, 1)).init(rng, gain);
    net_.add(nn::LeakyRelu<Scalar>(slope));
    const int flat = c * ((cfg.feature_height() + 1) / 2) * ((cfg.feature_width() + 1) / 2);
    net_.add(nn::Linear<Scalar>("classifier.heads", flat, binning.total())).init(rng, 1.0);
  }

  std::array<int, 3> head_sizes() const { return sizes_; }
  int head_offset(int k) const {
    int off = 0;
    for (int i = 0; i < k; ++i) off += sizes_[i];
    return off;
  }

  /// Raw logits [n, total_bins, 1, 1].
  T logits(const T& f) const {
    check(f.shape());
    return net_.forward(f);
  }
  Trace<Scalar> trace(const T& f) const {
    check(f.shape());
    return net_.trace(f);
  }
  T backward(const Trace<Scalar>& tr, const T& dlogits, bool accumulate) {
    return net_.backward(tr, dlogits, accumulate);
  }

  /// Softmax of one head of one sample.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> head_probabilities(const T& logits, int n, int k) const {
    const auto z = logits.sample(n).segment(head_offset(k), sizes_[k]).matrix();
    const Scalar m = z.maxCoeff();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (z.array() - m).exp().matrix();
    return e / e.sum();
  }

  AttributeDistribution distribution(const T& logits, int n) const {
    AttributeDistribution d;
    for (int k = 0; k < 3; ++k) d.heads[k] = head_probabilities(logits, n, k).template cast<double>();
    return d;
  }

  /// Per-sample distributions of a feature batch.
  std::vector<AttributeDistribution> classify(const T& f) const {
    const T z = logits(f);
    std::vector<AttributeDistribution> out;
    for (int n = 0; n < f.batch(); ++n) out.push_back(distribution(z, n));
    return out;
  }

  std::vector<nn::Parameter<Scalar>*> parameters() { return net_.parameters(); }
  Sequential<Scalar>& network() { return net_; }

 private:
  void check(const Shape& s) const {
    if (s.c != channels_)
      throw ShapeError("classifier expects " + std::to_string(channels_) + " channels, got " +
                       s.str());
  }

  std::array<int, 3> sizes_{};
  int channels_ = 0;
  Sequential<Scalar> net_;
};

/// Frozen perceptual feature pyramid psi: four ReLU conv levels at strictly
/// decreasing resolution. Weights come from a fixed seed unless replaced
/// through `import_weights`.
template <typename Scalar>
class FeaturePyramid {
 public:
  using T = Tensor<Scalar>;

  FeaturePyramid() = default;
  explicit FeaturePyramid(const ModelConfig& cfg) : channels_(cfg.psi_channels) {
    Rng rng(cfg.psi_seed);
    int in = 3;
    for (int l = 0; l < 4; ++l) {
      net_.add(Conv2d<Scalar>("psi.level" + std::to_string(l + 1), in, channels_[l], 3,
                              l == 0 ? 1 : 2, 1))
          .init(rng, std::sqrt(2.0));
      net_.add(nn::LeakyRelu<Scalar>(Scalar(0)));
      in = channels_[l];
    }
  }

  int levels() const { return 4; }
  int level_channels(int level) const { return channels_.at(level - 1); }
  static int level_index(int level) { return 2 * level; }

  /// All four activation maps, shallowest first.
  std::vector<T> extract(const T& x) const {
    const auto tr = net_.trace(x);
    std::vector<T> maps;
    for (int l = 1; l <= 4; ++l) maps.push_back(tr.acts[level_index(l)]);
    return maps;
  }
  Trace<Scalar> trace(const T& x) const { return net_.trace(x); }
  const T& level(const Trace<Scalar>& tr, int level) const { return tr.acts.at(level_index(level)); }

  /// Input gradient from gradients on level outputs (weights stay frozen).
  T backward(const Trace<Scalar>& tr, const std::map<int, T>& level_grads) {
    std::map<int, T> taps;
    int deepest = 0;
    for (const auto& [lvl, g] : level_grads) {
      taps.emplace(level_index(lvl), g);
      deepest = std::max(deepest, level_index(lvl));
    }
    // Start from the deepest tapped level; layers above it get no gradient.
    T g = taps.at(deepest);
    taps.erase(deepest);
    for (int i = deepest - 1; i >= 0; --i) {
      g = net_.layer(i).backward(tr.acts[i], tr.acts[i + 1], g, false);
      if (auto it = taps.find(i); it != taps.end()) g += it->second;
    }
    return g;
  }

  /// Replaces the weights from named arrays ("psi.levelN.weight/bias").
  void import_weights(const std::map<std::string, nn::RowMatrix<Scalar>>& arrays) {
    for (auto* p : net_.parameters()) {
      auto it = arrays.find(p->name);
      if (it == arrays.end()) throw ValidationError("psi import: missing array " + p->name);
      if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
        throw ShapeError("psi import: shape mismatch for " + p->name);
      p->value = it->second;
    }
  }

  std::vector<nn::Parameter<Scalar>*> parameters() { return net_.parameters(); }

 private:
  std::array<int, 4> channels_{};
  Sequential<Scalar> net_;
};

/// 1x1 adapters A_t mapping psi level-t channels onto encoder level-t channels.
template <typename Scalar>
class Adapters {
 public:
  Adapters() = default;
  Adapters(const ModelConfig& cfg, Rng& rng) {
    for (int level : cfg.distill_levels) {
      if (level < 1 || level > 3) throw ValidationError("distill level must be in 1..3");
      Sequential<Scalar> s;
      s.add(Conv2d<Scalar>("adapter.level" + std::to_string(level),
                           cfg.psi_channels[level - 1], cfg.encoder_channels[level - 1], 1, 1, 0))
          .init(rng, 1.0);
      adapters_.emplace(level, std::move(s));
    }
  }

  const std::map<int, Sequential<Scalar>>& all() const { return adapters_; }
  Sequential<Scalar>& at(int level) { return adapters_.at(level); }
  const Sequential<Scalar>& at(int level) const { return adapters_.at(level); }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto& [lvl, s] : adapters_)
      for (auto* p : s.parameters()) out.push_back(p);
    return out;
  }

 private:
  std::map<int, Sequential<Scalar>> adapters_;
};

}  // namespace interpgaze
