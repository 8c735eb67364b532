#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "interpgaze/nn/layers.hpp"

namespace interpgaze::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

/// Adam over a fixed list of parameters. Moment buffers are addressed by
/// position, so the parameter list must not change after construction.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.push_back(RowMatrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(RowMatrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    const Scalar lr = Scalar(cfg_.learning_rate * std::sqrt(bc2) / bc1);
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar eps = Scalar(cfg_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
      params_[i]->value.array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Parameter<Scalar>*>& parameters() { return params_; }
  std::vector<RowMatrix<Scalar>>& first_moments() { return m_; }
  std::vector<RowMatrix<Scalar>>& second_moments() { return v_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  AdamConfig cfg_;
  std::vector<RowMatrix<Scalar>> m_;
  std::vector<RowMatrix<Scalar>> v_;
  long long t_ = 0;
};

}  // namespace interpgaze::nn
