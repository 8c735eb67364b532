#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "interpgaze/core/error.hpp"
#include "interpgaze/core/rng.hpp"
#include "interpgaze/core/tensor.hpp"

namespace interpgaze::nn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named weight array with its gradient accumulator. Values are stored
/// row-major so that a flat dump matches the usual (out, in, ky, kx) order.
template <typename Scalar>
struct Parameter {
  std::string name;
  RowMatrix<Scalar> value;
  RowMatrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(RowMatrix<Scalar>::Zero(rows, cols)),
        grad(RowMatrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

/// A differentiable building block. Layers are stateless between calls: the
/// caller keeps the input/output pair of every forward pass and hands it back
/// to `backward`, which returns the input gradient and (optionally) adds the
/// parameter gradients into each Parameter::grad.
template <typename Scalar>
class Layer {
 public:
  using T = Tensor<Scalar>;

  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual T forward(const T& x) const = 0;
  virtual T backward(const T& x, const T& y, const T& dy, bool accumulate) = 0;

  /// Forward-mode derivative along `t` at the point (x, y). Only defined for
  /// piecewise-linear layers; used for the critic's second-order terms.
  virtual T tangent(const T& /*x*/, const T& /*y*/, const T& /*t*/) const {
    throw Error(kind() + " has no tangent rule");
  }
  /// Reverse pass through `tangent`: given the tangent input `t` and the
  /// gradient w.r.t. the tangent output, returns the gradient w.r.t. `t` and
  /// adds d(tangent)/d(weights) into the parameter gradients.
  virtual T tangent_backward(const T& /*x*/, const T& /*t*/, const T& /*dt*/,
                             bool /*accumulate*/) {
    throw Error(kind() + " has no tangent rule");
  }

  virtual std::vector<Parameter<Scalar>*> parameters() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

namespace detail {

struct ConvGeometry {
  int kernel;
  int stride;
  int pad;

  int out_extent(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

/// Unfolds `x` into a (C*k*k) x (N*oh*ow) row-major matrix.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Tensor<Scalar>& x, const ConvGeometry& g) {
  const Shape s = x.shape();
  const int oh = g.out_extent(s.h), ow = g.out_extent(s.w);
  const Eigen::Index positions = Eigen::Index(oh) * ow;
  RowMatrix<Scalar> col(Eigen::Index(s.c) * g.kernel * g.kernel, s.n * positions);
  for (int ci = 0; ci < s.c; ++ci) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        Scalar* row = col.row((Eigen::Index(ci) * g.kernel + ky) * g.kernel + kx).data();
        for (int n = 0; n < s.n; ++n) {
          const Scalar* plane = x.sample_data(n) + Eigen::Index(ci) * s.h * s.w;
          Scalar* dst = row + n * positions;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            Scalar* out_row = dst + Eigen::Index(oy) * ow;
            if (iy < 0 || iy >= s.h) {
              std::fill(out_row, out_row + ow, Scalar(0));
              continue;
            }
            const Scalar* in_row = plane + Eigen::Index(iy) * s.w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              out_row[ox] = (ix >= 0 && ix < s.w) ? in_row[ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
  return col;
}

/// Adjoint of im2col: scatters a column matrix back onto an input-shaped tensor.
template <typename Scalar>
Tensor<Scalar> col2im(const RowMatrix<Scalar>& col, const Shape& s, const ConvGeometry& g) {
  const int oh = g.out_extent(s.h), ow = g.out_extent(s.w);
  const Eigen::Index positions = Eigen::Index(oh) * ow;
  Tensor<Scalar> dx(s);
  for (int ci = 0; ci < s.c; ++ci) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const Scalar* row = col.row((Eigen::Index(ci) * g.kernel + ky) * g.kernel + kx).data();
        for (int n = 0; n < s.n; ++n) {
          Scalar* plane = dx.sample_data(n) + Eigen::Index(ci) * s.h * s.w;
          const Scalar* src = row + n * positions;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= s.h) continue;
            Scalar* in_row = plane + Eigen::Index(iy) * s.w;
            const Scalar* grad_row = src + Eigen::Index(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < s.w) in_row[ix] += grad_row[ox];
            }
          }
        }
      }
    }
  }
  return dx;
}

/// Reorders a (C x N*P) row-major GEMM result into NCHW, or back.
template <typename Scalar>
void gemm_to_nchw(const RowMatrix<Scalar>& y, Tensor<Scalar>& out) {
  const Shape s = out.shape();
  const Eigen::Index p = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      std::copy_n(y.row(c).data() + n * p, p, out.sample_data(n) + c * p);
}

template <typename Scalar>
RowMatrix<Scalar> nchw_to_gemm(const Tensor<Scalar>& t) {
  const Shape s = t.shape();
  const Eigen::Index p = s.plane();
  RowMatrix<Scalar> y(s.c, s.n * p);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      std::copy_n(t.sample_data(n) + c * p, p, y.row(c).data() + n * p);
  return y;
}

}  // namespace detail

/// 2-D convolution with square kernels, zero padding and optional bias.
template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;

  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad,
         bool bias = true)
      : in_(in_channels),
        out_(out_channels),
        geom_{kernel, stride, pad},
        weight_(name + ".weight", out_channels, Eigen::Index(in_channels) * kernel * kernel),
        bias_(name + ".bias", out_channels, 1),
        has_bias_(bias) {}

  /// He-style normal initialisation scaled by `gain`.
  void init(Rng& rng, double gain = std::sqrt(2.0)) {
    const double stddev = gain / std::sqrt(double(weight_.value.cols()));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
      weight_.value.data()[i] = Scalar(stddev * rng.normal());
    bias_.value.setZero();
  }
  void zero_init() {
    weight_.value.setZero();
    bias_.value.setZero();
  }

  std::string kind() const override { return "conv2d"; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Shape output_shape(const Shape& s) const override {
    return {s.n, out_, geom_.out_extent(s.h), geom_.out_extent(s.w)};
  }

  T forward(const T& x) const override { return apply(x, has_bias_); }

  T backward(const T& x, const T& /*y*/, const T& dy, bool accumulate) override {
    return adjoint(x, dy, accumulate, has_bias_);
  }

  T tangent(const T& /*x*/, const T& /*y*/, const T& t) const override { return apply(t, false); }
  T tangent_backward(const T& /*x*/, const T& t, const T& dt, bool accumulate) override {
    return adjoint(t, dt, accumulate, false);
  }

  std::vector<Parameter<Scalar>*> parameters() override {
    if (has_bias_) return {&weight_, &bias_};
    return {&weight_};
  }
  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Conv2d>(*this); }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  void check_input(const Shape& s) const {
    if (s.c != in_)
      throw ShapeError(weight_.name + ": expected " + std::to_string(in_) +
                       " input channels, got " + s.str());
  }

  T apply(const T& x, bool with_bias) const {
    check_input(x.shape());
    const Shape os = output_shape(x.shape());
    T out(os);
    if (os.count() == 0) return out;
    RowMatrix<Scalar> y;
    if (geom_.kernel == 1 && geom_.stride == 1 && geom_.pad == 0) {
      y.noalias() = weight_.value * detail::nchw_to_gemm(x);
    } else {
      y.noalias() = weight_.value * detail::im2col(x, geom_);
    }
    if (with_bias) y.colwise() += bias_.value.col(0);
    detail::gemm_to_nchw(y, out);
    return out;
  }

  T adjoint(const T& x, const T& dy, bool accumulate, bool with_bias) {
    const RowMatrix<Scalar> dmat = detail::nchw_to_gemm(dy);
    const bool pointwise = geom_.kernel == 1 && geom_.stride == 1 && geom_.pad == 0;
    const RowMatrix<Scalar> col = pointwise ? detail::nchw_to_gemm(x) : detail::im2col(x, geom_);
    if (accumulate) {
      weight_.grad.noalias() += dmat * col.transpose();
      if (with_bias) bias_.grad.col(0) += dmat.rowwise().sum();
    }
    RowMatrix<Scalar> dcol;
    dcol.noalias() = weight_.value.transpose() * dmat;
    if (pointwise) {
      T dx(x.shape());
      detail::gemm_to_nchw(dcol, dx);
      return dx;
    }
    return detail::col2im(dcol, x.shape(), geom_);
  }

  int in_;
  int out_;
  detail::ConvGeometry geom_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool has_bias_;
};

/// Fully connected layer over the flattened sample; output is [n, out, 1, 1].
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;

  Linear(std::string name, int in_features, int out_features)
      : in_(in_features),
        out_(out_features),
        weight_(name + ".weight", out_features, in_features),
        bias_(name + ".bias", out_features, 1) {}

  void init(Rng& rng, double gain = 1.0) {
    const double stddev = gain / std::sqrt(double(in_));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i)
      weight_.value.data()[i] = Scalar(stddev * rng.normal());
    bias_.value.setZero();
  }

  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& s) const override { return {s.n, out_, 1, 1}; }

  T forward(const T& x) const override {
    T y = tangent(x, x, x);
    for (int n = 0; n < x.batch(); ++n) y.sample(n) += bias_.value.col(0).array();
    return y;
  }

  T backward(const T& x, const T& /*y*/, const T& dy, bool accumulate) override {
    if (accumulate)
      for (int n = 0; n < x.batch(); ++n) bias_.grad.col(0) += dy.sample(n).matrix();
    return tangent_backward(x, x, dy, accumulate);
  }

  T tangent(const T& /*x*/, const T& /*y*/, const T& t) const override {
    check_input(t.shape());
    T y(output_shape(t.shape()));
    for (int n = 0; n < t.batch(); ++n)
      y.sample(n).matrix().noalias() = weight_.value * t.sample(n).matrix();
    return y;
  }

  T tangent_backward(const T& /*x*/, const T& t, const T& dt, bool accumulate) override {
    T dx(t.shape());
    for (int n = 0; n < t.batch(); ++n) {
      if (accumulate)
        weight_.grad.noalias() += dt.sample(n).matrix() * t.sample(n).matrix().transpose();
      dx.sample(n).matrix().noalias() = weight_.value.transpose() * dt.sample(n).matrix();
    }
    return dx;
  }

  std::vector<Parameter<Scalar>*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Linear>(*this); }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  void check_input(const Shape& s) const {
    if (s.per_sample() != in_)
      throw ShapeError(weight_.name + ": expected " + std::to_string(in_) +
                       " input features, got " + s.str());
  }

  int in_;
  int out_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
};

template <typename Scalar>
class LeakyRelu final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  explicit LeakyRelu(Scalar slope = Scalar(0.2)) : slope_(slope) {}

  std::string kind() const override { return "leaky_relu"; }
  Shape output_shape(const Shape& s) const override { return s; }

  T forward(const T& x) const override {
    return T(x.shape(), (x.array() > 0).select(x.array(), slope_ * x.array()));
  }
  T backward(const T& x, const T& /*y*/, const T& dy, bool /*accumulate*/) override {
    return T(x.shape(), (x.array() > 0).select(dy.array(), slope_ * dy.array()));
  }
  T tangent(const T& x, const T& /*y*/, const T& t) const override {
    return T(x.shape(), (x.array() > 0).select(t.array(), slope_ * t.array()));
  }
  T tangent_backward(const T& x, const T& /*t*/, const T& dt, bool /*accumulate*/) override {
    return T(x.shape(), (x.array() > 0).select(dt.array(), slope_ * dt.array()));
  }
  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<LeakyRelu>(*this);
  }

 private:
  Scalar slope_;
};

template <typename Scalar>
class Tanh final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  std::string kind() const override { return "tanh"; }
  Shape output_shape(const Shape& s) const override { return s; }
  T forward(const T& x) const override { return T(x.shape(), x.array().tanh()); }
  T backward(const T& /*x*/, const T& y, const T& dy, bool /*accumulate*/) override {
    return T(y.shape(), dy.array() * (Scalar(1) - y.array().square()));
  }
  std::unique_ptr<Layer<Scalar>> clone() const override { return std::make_unique<Tanh>(*this); }
};

/// Normalises every pixel's channel vector to unit RMS.
template <typename Scalar>
class PixelNorm final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  explicit PixelNorm(Scalar eps = Scalar(1e-8)) : eps_(eps) {}

  std::string kind() const override { return "pixel_norm"; }
  Shape output_shape(const Shape& s) const override { return s; }

  T forward(const T& x) const override {
    T y(x.shape());
    for (int n = 0; n < x.batch(); ++n) {
      const auto in = x.planes(n);
      const auto inv = inverse_rms(in);
      y.planes(n) = in.array().rowwise() * inv.transpose();
    }
    return y;
  }

  T backward(const T& x, const T& y, const T& dy, bool /*accumulate*/) override {
    // y = x * r,  r = (mean_c x^2 + eps)^-1/2
    // dx = r * (dy - y * mean_c(dy * y))
    T dx(x.shape());
    const Scalar inv_c = Scalar(1) / Scalar(x.shape().c);
    for (int n = 0; n < x.batch(); ++n) {
      const auto inv = inverse_rms(x.planes(n));
      const auto yn = y.planes(n).array();
      const auto g = dy.planes(n).array();
      const Eigen::Array<Scalar, 1, Eigen::Dynamic> proj = (g * yn).colwise().sum() * inv_c;
      dx.planes(n) = ((g - yn.rowwise() * proj).rowwise() * inv.transpose()).matrix();
    }
    return dx;
  }

  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<PixelNorm>(*this);
  }

 private:
  template <typename Derived>
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inverse_rms(const Eigen::MatrixBase<Derived>& planes) const {
    const Scalar inv_c = Scalar(1) / Scalar(planes.rows());
    return ((planes.array().square().colwise().sum() * inv_c).transpose() + eps_).rsqrt();
  }

  Scalar eps_;
};

/// Nearest-neighbour 2x upsampling.
template <typename Scalar>
class Upsample2x final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  std::string kind() const override { return "upsample2x"; }
  Shape output_shape(const Shape& s) const override { return {s.n, s.c, 2 * s.h, 2 * s.w}; }

  T forward(const T& x) const override {
    const Shape s = x.shape();
    T y(output_shape(s));
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int yy = 0; yy < 2 * s.h; ++yy)
          for (int xx = 0; xx < 2 * s.w; ++xx) y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
    return y;
  }
  T backward(const T& x, const T& /*y*/, const T& dy, bool /*accumulate*/) override {
    const Shape s = x.shape();
    T dx(s);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int yy = 0; yy < 2 * s.h; ++yy)
          for (int xx = 0; xx < 2 * s.w; ++xx) dx.at(n, c, yy / 2, xx / 2) += dy.at(n, c, yy, xx);
    return dx;
  }
  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<Upsample2x>(*this);
  }
};

/// Spatial mean per channel; output is [n, c, 1, 1].
template <typename Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  std::string kind() const override { return "global_avg_pool"; }
  Shape output_shape(const Shape& s) const override { return {s.n, s.c, 1, 1}; }

  T forward(const T& x) const override { return tangent(x, x, x); }
  T backward(const T& x, const T& /*y*/, const T& dy, bool accumulate) override {
    return tangent_backward(x, x, dy, accumulate);
  }
  T tangent(const T& /*x*/, const T& /*y*/, const T& t) const override {
    T y(output_shape(t.shape()));
    for (int n = 0; n < t.batch(); ++n) y.sample(n) = t.planes(n).rowwise().mean().array();
    return y;
  }
  T tangent_backward(const T& /*x*/, const T& t, const T& dt, bool /*accumulate*/) override {
    const Shape s = t.shape();
    T dx(s);
    const Scalar inv = Scalar(1) / Scalar(s.plane());
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) dx.planes(n).row(c).setConstant(dt.sample_data(n)[c] * inv);
    return dx;
  }
  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }
};

template <typename Scalar>
class Identity final : public Layer<Scalar> {
 public:
  using T = Tensor<Scalar>;
  std::string kind() const override { return "identity"; }
  Shape output_shape(const Shape& s) const override { return s; }
  T forward(const T& x) const override { return x; }
  T backward(const T&, const T&, const T& dy, bool) override { return dy; }
  T tangent(const T&, const T&, const T& t) const override { return t; }
  T tangent_backward(const T&, const T&, const T& dt, bool) override { return dt; }
  std::unique_ptr<Layer<Scalar>> clone() const override {
    return std::make_unique<Identity>(*this);
  }
};

}  // namespace interpgaze::nn
