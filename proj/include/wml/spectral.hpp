#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>
#include <json.hpp>

#include "wml/dec.hpp"
#include "wml/pencil.hpp"

namespace wml::spectral {

/// Pencil given by explicit sparse matrices.
class SparsePencil final : public Pencil {
 public:
  SparsePencil(SparseMatrix A, SparseMatrix M);
  Eigen::Index dim() const override { return A_.rows(); }
  void apply_A(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override { y = A_ * x; }
  void apply_M(const Eigen::VectorXd& x, Eigen::VectorXd& y) const override { y = M_ * x; }
  void factorize(double sigma) override;
  void solve(const Eigen::VectorXd& b, Eigen::VectorXd& x) const override;
  bool shifted_definite() const override;

  const SparseMatrix& A() const { return A_; }
  const SparseMatrix& M() const { return M_; }

 private:
  SparseMatrix A_, M_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> shifted_;
};

struct SolverOptions {
  double tol = 1e-10;          // backward-error bound on each returned pair
  int max_iter = 400;
  std::uint64_t seed = 1;
  double shift = 1e-2;
  Eigen::Index dense_below = 300;  // dense generalized solve below this dimension
  Eigen::Index block = 2;          // initial number of requested pairs in solve_degree
};

struct EigenResult {
  Eigen::VectorXd values;         // ascending
  Eigen::MatrixXd vectors;        // M-orthonormal columns
  Eigen::VectorXd residuals;      // ‖Ax − λMx‖ / ((‖A‖ + |λ|‖M‖)‖x‖)
  Eigen::VectorXd abs_residuals;  // ‖Ax − λMx‖ / ‖x‖
  double a_norm = 0.0;
  double m_norm = 0.0;
  int iterations = 0;
};

/// k smallest eigenpairs by shift-invert block subspace iteration; deterministic for a fixed seed.
EigenResult lowest_eigenpairs(Pencil& pencil, Eigen::Index k, const SolverOptions& opts = {});

struct SpectralEntry {
  int degree = 0;
  double T = 0.0;
  dec::BoundaryCondition bc = dec::BoundaryCondition::Absolute;
  Eigen::Index dim = 0;
  EigenResult result;
};

struct SpectralReport {
  std::vector<SpectralEntry> entries;
  std::string mesh_id;
  double C0 = 1.0;
  std::uint64_t seed = 1;
};

/// Number of eigenvalues below C0; throws Resolution unless the threshold was passed.
int count_below(const SpectralEntry& entry, double C0);

/// Solves one degree, growing k (from k0, or opts.block when 0) until an eigenvalue ≥ C0 appears or the space is exhausted.
SpectralEntry solve_degree(const dec::WittenAssembly& assembly, double T, int degree, double C0,
                           const SolverOptions& opts = {}, Eigen::Index k0 = 0);

struct SolveTask {
  double T = 0.0;
  int degree = 0;
};
/// Independent solves run concurrently; results keep task order.
std::vector<SpectralEntry> solve_batch(const dec::WittenAssembly& assembly, const std::vector<SolveTask>& tasks,
                                       double C0, const SolverOptions& opts = {});
std::vector<SpectralEntry> solve_batch_serial(const dec::WittenAssembly& assembly,
                                              const std::vector<SolveTask>& tasks, double C0,
                                              const SolverOptions& opts = {});

struct GapRow {
  double T = 0.0;
  int degree = 0;
  dec::BoundaryCondition bc = dec::BoundaryCondition::Absolute;
  int count = 0;
  std::optional<double> lambda_small;
  std::optional<double> lambda_big;
};

struct DegreeFit {
  int degree = 0;
  /// Least-squares slope of log λ_small against T over the top half of the scan; -inf when the
  /// low cluster is an exact kernel, NaN when there is no low cluster.
  double slope = 0.0;
  bool exact_kernel = false;
  double big_floor = 0.0;  // min λ_big/T² over the scan
};

struct GapScanOptions {
  double harmonic_ratio = 1e-9;  // λ ≤ ratio·λ_big counts as exact kernel
  bool override_resolution = false;
  std::optional<std::array<int, 3>> expected;  // predicted counts, if known
  SolverOptions solver;
};

struct GapScan {
  std::vector<GapRow> rows;
  std::vector<DegreeFit> fits;
  std::vector<std::string> findings;  // count mismatches
  std::vector<SpectralEntry> entries;
  double resolution = 0.0;  // h·√T_max
};

GapScan gap_scan(const geometry::TriMesh& mesh, const morse::MorseFunction& f, const std::vector<double>& T_list,
                 double C0, dec::BoundaryCondition bc, const GapScanOptions& opts = {});

/// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Rounds to 12 significant digits for serialization.
double sig12(double x);

void write_gap_csv(const GapScan& scan, std::ostream& out);
nlohmann::json to_json(const GapScan& scan);
nlohmann::json to_json(const SpectralReport& report);

}  // namespace wml::spectral
