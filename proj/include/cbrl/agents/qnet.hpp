#pragma once

// Small ReLU MLP Q-function over a discrete action grid, with analytic gradients of the squared
// TD loss and an Adam optimizer. All parameters live in one flat vector.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cbrl/common.hpp"

namespace cbrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class QNetwork {
 public:
  QNetwork() = default;

  QNetwork(int input_dim, int hidden, int actions) : in_(input_dim), hidden_(hidden), out_(actions) {
    params_ = Vector::Zero(num_params());
  }

  /// He-uniform hidden layers, a small output layer so initial Q values are near zero.
  QNetwork(int input_dim, int hidden, int actions, Rng& rng) : QNetwork(input_dim, hidden, actions) {
    auto fill = [&](double* p, int n, double bound) {
      std::uniform_real_distribution<double> u(-bound, bound);
      for (int i = 0; i < n; ++i) p[i] = u(rng);
    };
    fill(params_.data() + off_w1(), hidden_ * in_, std::sqrt(6.0 / in_));
    fill(params_.data() + off_w2(), hidden_ * hidden_, std::sqrt(6.0 / hidden_));
    fill(params_.data() + off_w3(), out_ * hidden_, 0.1 * std::sqrt(6.0 / hidden_));
  }

  int input_dim() const { return in_; }
  int hidden() const { return hidden_; }
  int actions() const { return out_; }
  Eigen::Index num_params() const {
    return static_cast<Eigen::Index>(hidden_) * in_ + hidden_ + hidden_ * hidden_ + hidden_ + out_ * hidden_ + out_;
  }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  /// Parameter tensor shapes in storage order (column-major matrices, then biases).
  std::vector<std::vector<int>> shapes() const {
    return {{hidden_, in_}, {hidden_}, {hidden_, hidden_}, {hidden_}, {out_, hidden_}, {out_}};
  }

  /// Q values, one column per input column.
  Matrix forward(const Matrix& x) const {
    Matrix h1 = (w1() * x).colwise() + b1();
    h1 = h1.cwiseMax(0.0);
    Matrix h2 = (w2() * h1).colwise() + b2();
    h2 = h2.cwiseMax(0.0);
    return (w3() * h2).colwise() + b3();
  }

  Vector forward_one(const Vector& x) const { return forward(x).col(0); }

  /// Mean over the batch of (Q(x_n, a_n) - y_n)^2; writes d loss / d params into `grad`.
  double td_loss(const Matrix& x, std::span<const int> actions, std::span<const double> targets, Vector* grad) const {
    const Eigen::Index n = x.cols();
    const Matrix z1 = (w1() * x).colwise() + b1();
    const Matrix h1 = z1.cwiseMax(0.0);
    const Matrix z2 = (w2() * h1).colwise() + b2();
    const Matrix h2 = z2.cwiseMax(0.0);
    const Matrix q = (w3() * h2).colwise() + b3();

    double loss = 0.0;
    Matrix g3 = Matrix::Zero(out_, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = q(actions[i], i) - targets[i];
      loss += r * r;
      g3(actions[i], i) = 2.0 * r / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (grad == nullptr) return loss;

    grad->setZero(num_params());
    Eigen::Map<Matrix> dw1(grad->data() + off_w1(), hidden_, in_);
    Eigen::Map<Vector> db1(grad->data() + off_b1(), hidden_);
    Eigen::Map<Matrix> dw2(grad->data() + off_w2(), hidden_, hidden_);
    Eigen::Map<Vector> db2(grad->data() + off_b2(), hidden_);
    Eigen::Map<Matrix> dw3(grad->data() + off_w3(), out_, hidden_);
    Eigen::Map<Vector> db3(grad->data() + off_b3(), out_);

    dw3.noalias() = g3 * h2.transpose();
    db3 = g3.rowwise().sum();
    const Matrix g2 = (w3().transpose() * g3).cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
    dw2.noalias() = g2 * h1.transpose();
    db2 = g2.rowwise().sum();
    const Matrix g1 = (w2().transpose() * g2).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
    dw1.noalias() = g1 * x.transpose();
    db1 = g1.rowwise().sum();
    return loss;
  }

  /// Replaces the output layer rows by P * rows, e.g. to keep Q smooth across neighbouring actions.
  void project_output(const Matrix& P) {
    Eigen::Map<Matrix> w(params_.data() + off_w3(), out_, hidden_);
    Eigen::Map<Vector> b(params_.data() + off_b3(), out_);
    w = (P * w).eval();
    b = (P * b).eval();
  }

  bool operator==(const QNetwork& o) const {
    return in_ == o.in_ && hidden_ == o.hidden_ && out_ == o.out_ && params_ == o.params_;
  }

 private:
  Eigen::Index off_w1() const { return 0; }
  Eigen::Index off_b1() const { return off_w1() + static_cast<Eigen::Index>(hidden_) * in_; }
  Eigen::Index off_w2() const { return off_b1() + hidden_; }
  Eigen::Index off_b2() const { return off_w2() + static_cast<Eigen::Index>(hidden_) * hidden_; }
  Eigen::Index off_w3() const { return off_b2() + hidden_; }
  Eigen::Index off_b3() const { return off_w3() + static_cast<Eigen::Index>(out_) * hidden_; }

  Eigen::Map<const Matrix> w1() const { return {params_.data() + off_w1(), hidden_, in_}; }
  Eigen::Map<const Vector> b1() const { return {params_.data() + off_b1(), hidden_}; }
  Eigen::Map<const Matrix> w2() const { return {params_.data() + off_w2(), hidden_, hidden_}; }
  Eigen::Map<const Vector> b2() const { return {params_.data() + off_b2(), hidden_}; }
  Eigen::Map<const Matrix> w3() const { return {params_.data() + off_w3(), out_, hidden_}; }
  Eigen::Map<const Vector> b3() const { return {params_.data() + off_b3(), out_}; }

  int in_ = 0;
  int hidden_ = 0;
  int out_ = 0;
  Vector params_;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Vector::Zero(n)), v_(Vector::Zero(n)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector& params, const Vector& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  Vector m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

}  // namespace cbrl
