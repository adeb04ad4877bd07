#pragma once

#include <vector>

#include "wml/dec.hpp"
#include "wml/morse.hpp"
#include "wml/spectral.hpp"

namespace wml::model {

/// Kernel of a model Witten Laplacian: a scalar profile times e¹∧…∧e^j.
struct ModelKernel {
  int n = 0;
  int j = 0;
  double T = 0.0;
  bool halfspace = false;    // Z_n ≥ 0 with the e^{-T Z_n} factor
  std::vector<int> form_part;  // 1-based indices of the wedge factors

  double profile(const std::vector<double>& Z) const;
  /// ∂_{Z_n} of the profile, in closed form.
  double normal_derivative(const std::vector<double>& Z) const;
};

ModelKernel euclidean_kernel(int n, int j, double T);
/// Rejects j = n: there is no kernel with an e^n component.
ModelKernel halfspace_kernel(int n, int j, double T);

/// Tridiagonal finite-difference pencil on a uniform grid.
struct Oracle1D {
  SparseMatrix A;
  SparseMatrix M;
  std::vector<double> z;  // grid point of each unknown
  double T = 0.0;
  double h = 0.0;
  double L = 0.0;
};

/// -d²/dz² + T²z² - T on [-L, L], Dirichlet at ±L. Requires T·L² ≥ 25.
Oracle1D oscillator_1d(double T, double L, double h);

/// Ghost-point closure of g'(0) + T g(0) = 0.
enum class RobinClosure {
  Stencil,  // ghost slope matched to the discrete decay rate; kernel e^{-κz} with cosh κh = 1 + h²T²/2
  Central,  // plain central difference; kernel exact only to O(h²)
};

/// -d²/dz² + T² on [0, L], Robin at 0 (or Dirichlet), Dirichlet at L. Requires T·L ≥ 12.
Oracle1D robin_halfline(double T, double L, double h, RobinClosure closure = RobinClosure::Stencil);
Oracle1D dirichlet_halfline(double T, double L, double h);

spectral::EigenResult oracle_eigenpairs(const Oracle1D& oracle, int k, std::uint64_t seed = 1);

/// Smooth cutoff: 1 on [0, a], 0 beyond 2a, quintic in between.
double cutoff(double r, double a);

struct Quasimode {
  morse::CriticalPoint point;
  int degree = 0;
  double T = 0.0;
  double a = 0.0;
  double alpha = 0.0;       // continuum squared norm of the unnormalized form
  Eigen::VectorXd cochain;  // free dofs of the assembly, unit M-norm
};

/// Samples the localized model kernel at p onto the cochains of `assembly`.
/// `frame` orients the form: unstable directions for interior points, the tangent for boundary index 1.
Quasimode quasimode(const morse::CriticalPoint& p, const std::vector<Vec2>& frame, double T, double a,
                    const morse::SurfaceDomain& domain, const dec::WittenAssembly& assembly);

/// Rayleigh quotient of the deformed Laplacian at the quasimode.
double quasimode_residual(const Quasimode& q, const dec::WittenAssembly& assembly, double T);

/// Fraction of the squared discrete norm carried by simplices whose barycenter lies outside B(p, r).
double mass_outside(const Quasimode& q, const dec::WittenAssembly& assembly, double r);

/// Discrete inner product of two quasimodes of equal degree.
double inner(const Quasimode& a, const Quasimode& b, const dec::WittenAssembly& assembly);

}  // namespace wml::model
