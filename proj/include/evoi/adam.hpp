#pragma once

#include "evoi/common.hpp"

namespace evoi {

struct AdamParams {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam on a dense matrix of free variables, ascent direction.
class AdamAscent {
 public:
  AdamAscent(Eigen::Index rows, Eigen::Index cols, AdamParams params)
      : params_(params), m_(Matrix::Zero(rows, cols)), v_(Matrix::Zero(rows, cols)) {
    if (!(params_.learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  }

  void step(Matrix& x, const Matrix& grad) {
    ++t_;
    m_ = params_.beta1 * m_ + (1.0 - params_.beta1) * grad;
    v_ = params_.beta2 * v_ + (1.0 - params_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    x.array() += params_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + params_.epsilon);
  }

  void reset() {
    m_.setZero();
    v_.setZero();
    t_ = 0;
  }

  long steps_taken() const { return t_; }

 private:
  AdamParams params_;
  Matrix m_;
  Matrix v_;
  long t_ = 0;
};

// Rescales any row whose L2 norm exceeds `bound`.
inline void project_rows_to_ball(Matrix& x, double bound) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (n > bound) x.row(i) *= bound / n;
  }
}

}  // namespace evoi
