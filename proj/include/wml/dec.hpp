#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/SparseCholesky>

#include "wml/geometry.hpp"
#include "wml/morse.hpp"
#include "wml/pencil.hpp"

namespace wml::dec {

enum class BoundaryCondition { Absolute, Relative };
const char* to_string(BoundaryCondition bc);
BoundaryCondition parse_bc(const std::string& s);

/// Cochain spaces, Whitney mass matrices and deformation data on one mesh.
struct WittenAssembly {
  const geometry::TriMesh* mesh = nullptr;
  BoundaryCondition bc = BoundaryCondition::Absolute;
  std::array<SparseMatrix, 2> d;      // full incidence, degree k -> k+1
  std::array<SparseMatrix, 3> mass;   // full Whitney mass matrices
  std::array<Eigen::VectorXd, 3> f_bar;  // f at simplex barycenters
  double f_max = 0.0;
  std::array<std::vector<int>, 3> free_dofs;

  Eigen::Index dim(int k) const { return static_cast<Eigen::Index>(free_dofs[k].size()); }
  /// Deformation weights e^{T(f - max f)} on free dofs.
  Eigen::VectorXd weights(int k, double T) const;
  SparseMatrix free_mass(int k) const;
  SparseMatrix free_incidence(int k) const;
  /// Zero-extends a free-dof vector to all simplices of degree k.
  Eigen::VectorXd expand(int k, const Eigen::VectorXd& free) const;
  Eigen::VectorXd restrict(int k, const Eigen::VectorXd& full) const;
};

WittenAssembly assemble(const geometry::TriMesh& mesh, const morse::MorseFunction& f, BoundaryCondition bc);
WittenAssembly assemble_serial(const geometry::TriMesh& mesh, const morse::MorseFunction& f,
                               BoundaryCondition bc);

/// Local Whitney 1-form mass matrix of a triangle, in local edge order (edge i opposite vertex i).
Eigen::Matrix3d whitney_edge_mass(const Vec2& a, const Vec2& b, const Vec2& c);

/// d_T = W_{k+1}⁻¹ d_k W_k on free dofs.
SparseMatrix deformed_derivative(const WittenAssembly& assembly, double T, int k);

/// Pencil of the deformed Hodge Laplacian in degree k.
///
/// A = d_Tᵀ M d_T + M d_T M⁻¹ d_Tᵀ M. The shifted solve uses the quasi-definite block system
/// [[-M_{k-1}, Bᵀ], [B, K + σM_k]] with B = M_k d_{T,k-1}, so A is never formed.
class WittenOperator final : public Pencil {
 public:
  WittenOperator(const WittenAssembly& assembly, double T, int degree);

  Eigen::Index dim() const override { return n_; }
  void apply_A(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override;
  void apply_M(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override;
  void factorize(double sigma) override;
  void solve(const Eigen::VectorXd& b, Eigen::VectorXd& x) const override;
  bool shifted_definite() const override;

  int degree() const { return k_; }
  double T() const { return T_; }
  const SparseMatrix& mass() const { return M_; }
  const SparseMatrix& up() const { return K_; }          // d_Tᵀ M d_T
  const SparseMatrix& coupling() const { return B_; }    // M_k d_{T,k-1}

 private:
  int k_;
  double T_;
  Eigen::Index n_ = 0;
  Eigen::Index m_ = 0;  // dimension of degree k-1
  SparseMatrix M_, K_, B_, Mlow_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> low_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> shifted_;
};

/// Explicit A_k(T) and M_k on free dofs. A is dense because M_{k-1}⁻¹ is; meant for small meshes and export.
struct QuadraticForm {
  Eigen::MatrixXd A;
  SparseMatrix M;
};
QuadraticForm witten_quadratic_form(const WittenAssembly& assembly, double T, int degree);

struct HodgeBetti {
  std::array<int, 3> betti{};
  std::array<double, 3> max_kernel{};
  std::array<double, 3> first_nonzero{};
};

/// Kernel dimensions of the undeformed Laplacian; throws Resolution without clear separation.
HodgeBetti hodge_betti(const WittenAssembly& assembly, double separation = 1e-3, std::uint64_t seed = 1);

void write_triplets(const SparseMatrix& a, std::ostream& out);

}  // namespace wml::dec
