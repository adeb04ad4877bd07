#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace wml {

/// Symmetric pencil A x = λ M x with a shifted solve (A + σM)⁻¹.
class Pencil {
 public:
  virtual ~Pencil() = default;
  virtual Eigen::Index dim() const = 0;
  virtual void apply_A(const Eigen::VectorXd& x, Eigen::VectorXd& y) const = 0;
  virtual void apply_M(const Eigen::VectorXd& x, Eigen::VectorXd& y) const = 0;
  virtual void factorize(double sigma) = 0;
  virtual void solve(const Eigen::VectorXd& b, Eigen::VectorXd& x) const = 0;
  /// Whether the last factorized A + σM is positive definite (read off the factor's inertia).
  virtual bool shifted_definite() const = 0;

  Eigen::MatrixXd dense_A() const;
  Eigen::MatrixXd dense_M() const;
};

}  // namespace wml
