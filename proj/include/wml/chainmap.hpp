#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "wml/dec.hpp"
#include "wml/model.hpp"
#include "wml/morse.hpp"
#include "wml/spectral.hpp"

namespace wml::chainmap {

/// Integral of the Whitney interpolant of a full cochain over an oriented cell.
/// Points give the interpolated value; curves and patches follow their stored orientation.
double integrate_over_unstable(const Eigen::VectorXd& cochain, int degree, const morse::UnstableCell& cell,
                               const geometry::PointLocator& locator);

/// Low-cluster eigenvectors (free dofs, M-orthonormal) per degree.
struct InstantonBasis {
  double T = 0.0;
  double C0 = 1.0;
  dec::BoundaryCondition bc = dec::BoundaryCondition::Absolute;
  std::array<Eigen::MatrixXd, 3> vectors;
  std::array<Eigen::VectorXd, 3> values;
};
InstantonBasis instanton_basis(const dec::WittenAssembly& assembly, double T, double C0,
                               const spectral::SolverOptions& opts = {});

/// Unstable cells of the complex's generators, in generator order.
using CellSet = std::array<std::vector<morse::UnstableCell>, 3>;
CellSet unstable_cells(const morse::PseudoGradientField& field, const morse::ThomSmaleComplex& complex,
                       const geometry::TriMesh& mesh, const morse::TraceOptions& opts = {});

/// P(p, i) = ∫ over the closure of W^u(p) of e^{T(f - max f)}·u_i, signed by the complex's frame at p.
Eigen::MatrixXd p_infinity_T(const InstantonBasis& basis, const dec::WittenAssembly& assembly,
                             const morse::ThomSmaleComplex& complex, const CellSet& cells, int degree,
                             const geometry::PointLocator& locator);

/// d_T restricted to the low clusters: U_{j+1}ᵀ M d_T U_j.
Eigen::MatrixXd restricted_derivative(const InstantonBasis& basis, const dec::WittenAssembly& assembly, int degree);

/// Operator norm of d_T between the mass-weighted cochain spaces of degrees j and j+1.
double deformed_derivative_norm(const dec::WittenAssembly& assembly, double T, int degree, std::uint64_t seed = 1);

/// max_j ‖P_{j+1} D_j − ∂_j P_j‖ / (‖P_{j+1}‖‖d_T‖ + ‖∂_j‖‖P_j‖), with ‖d_T‖ the full operator norm;
/// 0 where the denominator vanishes.
double chain_commutation_residual(const std::array<Eigen::MatrixXd, 3>& P, const std::array<Eigen::MatrixXd, 2>& D,
                                  const std::array<double, 2>& dT_norm, const morse::ThomSmaleComplex& complex);

/// Quasimodes of the generators in one degree, oriented by the complex's frames.
std::vector<model::Quasimode> generator_quasimodes(const morse::ThomSmaleComplex& complex, int degree, double T,
                                                   double a, const morse::SurfaceDomain& domain,
                                                   const dec::WittenAssembly& assembly);

/// E(i, p) = ⟨u_i, ρ_p⟩_M.
Eigen::MatrixXd e_matrix(const InstantonBasis& basis, const dec::WittenAssembly& assembly, int degree,
                         const std::vector<model::Quasimode>& quasimodes);

/// Diagonal data of the leading asymptotics for each generator.
struct Diagonal {
  std::vector<double> F;  // f(p), or f(p) + ln(2π)/(2T) for boundary points
  std::vector<double> N;  // j, or j − 1/2 for boundary points
  std::vector<double> J;  // chart factor: Hessian and normal-derivative scales absent from unit charts
};
Diagonal comparison_diagonal(const morse::ThomSmaleComplex& complex, int degree, double T);

struct DegreeComparison {
  int degree = 0;
  Eigen::VectorXd predicted;   // e^{T(F - max f)}(π/T)^{N/2 - n/4}·J per generator
  std::vector<double> F;
  std::vector<double> N;
  Eigen::MatrixXd normalized;  // rows divided by e^{T(F - max f)}(π/T)^{N/2 - n/4}·J
  Eigen::VectorXd singular_values;
  double off_diagonal = 0.0;   // Frobenius norm of the off-diagonal part
  double diagonal_error = 0.0; // max |diag − 1|
  bool isomorphic = true;
};

DegreeComparison verify_isomorphism(const Eigen::MatrixXd& P, const Eigen::MatrixXd& E, const Diagonal& diag,
                                    double T, double f_max, int degree, int n = 2);

/// Ranks of the homology of the transported differential P_{j+1} D_j P_j⁻¹, rounded to integers.
std::array<int, 3> transported_betti(const std::array<Eigen::MatrixXd, 3>& P, const std::array<Eigen::MatrixXd, 2>& D);

struct ComparisonOptions {
  double C0 = 1.0;
  double quasimode_radius = 0.0;  // cutoff radius of the quasimodes; 0 uses the field's adaptation radius
  spectral::SolverOptions solver;
  morse::TraceOptions trace;
};

struct Comparison {
  double T = 0.0;
  std::array<DegreeComparison, 3> degrees;
  std::array<Eigen::MatrixXd, 3> P;
  std::array<Eigen::MatrixXd, 3> E;
  double residual = 0.0;
  std::array<int, 3> transported{};
  std::array<int, 3> complex_betti{};
  std::vector<std::string> findings;
  bool isomorphic = false;
};

/// Full comparison in absolute mode at one T.
Comparison compare(const morse::PseudoGradientField& field, const morse::ThomSmaleComplex& complex,
                   const geometry::TriMesh& mesh, double T, const ComparisonOptions& opts = {});

nlohmann::json to_json(const Comparison& c);

}  // namespace wml::chainmap
