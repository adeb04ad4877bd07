#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "wml/error.hpp"
#include "wml/spectral.hpp"

using namespace wml;
using namespace wml::spectral;

namespace {

// A = D L D and M = D² with L the Dirichlet second-difference matrix: the pencil has the spectrum of L.
SparsePencil scaled_laplacian(int n) {
  std::vector<Eigen::Triplet<double>> a, m;
  auto d = [](int i) { return 1.0 + 0.5 * std::sin(0.3 * i); };
  for (int i = 0; i < n; ++i) {
    a.emplace_back(i, i, 2.0 * d(i) * d(i));
    if (i + 1 < n) {
      a.emplace_back(i, i + 1, -d(i) * d(i + 1));
      a.emplace_back(i + 1, i, -d(i) * d(i + 1));
    }
    m.emplace_back(i, i, d(i) * d(i));
  }
  SparseMatrix A(n, n), M(n, n);
  A.setFromTriplets(a.begin(), a.end());
  M.setFromTriplets(m.begin(), m.end());
  return SparsePencil(A, M);
}

double laplacian_eigenvalue(int n, int k) { return 2.0 - 2.0 * std::cos(k * std::numbers::pi / (n + 1)); }

SparseMatrix identity(int n) {
  SparseMatrix I(n, n);
  I.setIdentity();
  return I;
}

}  // namespace

TEST_CASE("identity pencil") {
  for (Eigen::Index dense_below : {300, 0}) {
    SparsePencil p(identity(400), identity(400));
    SolverOptions o;
    o.dense_below = dense_below;
    const auto r = lowest_eigenpairs(p, 3, o);
    for (int i = 0; i < 3; ++i) CHECK(r.values(i) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("pencil with a known spectrum, dense and iterative paths") {
  for (int n : {60, 500}) {
    SparsePencil p = scaled_laplacian(n);
    const auto r = lowest_eigenpairs(p, 5);
    for (int i = 0; i < 5; ++i) CHECK(r.values(i) == doctest::Approx(laplacian_eigenvalue(n, i + 1)).epsilon(1e-9));
    // M-orthonormal vectors and residuals within the bound.
    const Eigen::MatrixXd g = r.vectors.transpose() * (p.M() * r.vectors);
    CHECK((g - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-8);
    for (int i = 0; i < 5; ++i) {
      CHECK(r.residuals(i) <= 1e-8);
      const Eigen::VectorXd x = r.vectors.col(i);
      const double res = (p.A() * x - r.values(i) * (p.M() * x)).norm() /
                         ((r.a_norm + std::abs(r.values(i)) * r.m_norm) * x.norm());
      CHECK(std::abs(res - r.residuals(i)) <= 1e-6 * r.residuals(i) + 1e-14);
    }
  }
}

TEST_CASE("eigensolver is deterministic for a fixed seed") {
  SparsePencil p1 = scaled_laplacian(800), p2 = scaled_laplacian(800);
  const auto a = lowest_eigenpairs(p1, 4);
  const auto b = lowest_eigenpairs(p2, 4);
  CHECK(a.values == b.values);
  CHECK(a.vectors == b.vectors);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("requesting more pairs than the dimension is rejected") {
  SparsePencil p = scaled_laplacian(10);
  CHECK_THROWS_AS(lowest_eigenpairs(p, 11), Error);
  CHECK_THROWS_AS(lowest_eigenpairs(p, 0), Error);
}

TEST_CASE("count_below requires a resolved threshold") {
  SpectralEntry e;
  e.dim = 10;
  e.result.values = Eigen::Vector3d(1e-9, 0.4, 0.7);
  CHECK_THROWS_AS(count_below(e, 1.0), Error);
  e.result.values = Eigen::Vector3d(1e-9, 0.4, 1.7);
  CHECK(count_below(e, 1.0) == 2);
  e.dim = 3;
  e.result.values = Eigen::Vector3d(1e-9, 0.4, 0.7);
  CHECK(count_below(e, 1.0) == 3);
}

TEST_CASE("gap scan on the disk with f = x") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.1);
  const std::vector<double> Ts{4, 8, 16};
  GapScanOptions o;
  o.expected = std::array<int, 3>{1, 0, 0};
  const auto abs = gap_scan(mesh, morse::linear_x(), Ts, 1.0, dec::BoundaryCondition::Absolute, o);
  CHECK(abs.findings.empty());
  REQUIRE(abs.rows.size() == 9);
  for (const auto& row : abs.rows) {
    CHECK(row.count == (row.degree == 0 ? 1 : 0));
    CHECK(row.lambda_big.has_value());
    if (row.degree == 2) CHECK_FALSE(row.lambda_small.has_value());
  }
  REQUIRE(abs.fits.size() == 3);
  CHECK(abs.fits[0].slope < 0);
  CHECK(abs.fits[0].exact_kernel);
  for (const auto& f : abs.fits) CHECK(f.big_floor >= 1e-3);

  // Relative mode: c_j + q_{j-1} = (0, 0, 1), the harmonic top form.
  o.expected = std::array<int, 3>{0, 0, 1};
  const auto rel = gap_scan(mesh, morse::linear_x(), Ts, 1.0, dec::BoundaryCondition::Relative, o);
  CHECK(rel.findings.empty());
  CHECK(rel.fits[2].exact_kernel);
}

TEST_CASE("a small nonzero eigenvalue decays exponentially") {
  // Interior minimum in relative mode: one low eigenvalue in degree 0 that is not harmonic.
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.1), 0.1);
  const auto scan = gap_scan(mesh, morse::bowl(1.0, 0.1), {4, 8, 16}, 1.0, dec::BoundaryCondition::Relative);
  std::vector<double> small;
  for (const auto& row : scan.rows)
    if (row.degree == 0 && row.lambda_small) small.push_back(*row.lambda_small);
  REQUIRE(small.size() == 3);
  CHECK(small[1] < small[0]);
  CHECK(small[2] < small[1]);
  CHECK_FALSE(scan.fits[0].exact_kernel);
  CHECK(scan.fits[0].slope < -0.1);
}

TEST_CASE("gap scan at T = 0 counts Betti numbers") {
  const auto mesh = geometry::build_mesh(geometry::make_annulus(0.5, 1.0), 0.1);
  const auto scan = gap_scan(mesh, morse::linear_x(), {0.0}, 1.0, dec::BoundaryCondition::Absolute);
  std::array<int, 3> counts{};
  for (const auto& row : scan.rows) counts[row.degree] = row.count;
  CHECK(counts == std::array<int, 3>{1, 1, 0});
}

TEST_CASE("gap scan enforces the resolution contract") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.2);
  try {
    gap_scan(mesh, morse::linear_x(), {4, 16}, 1.0, dec::BoundaryCondition::Absolute);
    FAIL("expected a resolution error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Resolution);
  }
  CHECK_THROWS_AS(gap_scan(mesh, morse::linear_x(), {4, 2}, 1.0, dec::BoundaryCondition::Absolute), Error);
  GapScanOptions o;
  o.override_resolution = true;
  const auto scan = gap_scan(mesh, morse::linear_x(), {16}, 1.0, dec::BoundaryCondition::Absolute, o);
  CHECK(scan.resolution > 0.5);
}

TEST_CASE("parallel batch equals the serial batch") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(2.0), 0.15);
  const auto as = dec::assemble(mesh, morse::saddle_xx_minus_yy(), dec::BoundaryCondition::Absolute);
  std::vector<SolveTask> tasks;
  for (double T : {2.0, 4.0})
    for (int k = 0; k < 3; ++k) tasks.push_back({T, k});
  const auto a = solve_batch(as, tasks, 1.0);
  const auto b = solve_batch_serial(as, tasks, 1.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].T == tasks[i].T);
    CHECK(a[i].degree == tasks[i].degree);
    CHECK(a[i].result.values == b[i].result.values);
  }
}

TEST_CASE("slope fit and number formatting") {
  CHECK(fit_slope({1, 2, 3}, {1, 3, 5}) == doctest::Approx(2.0));
  CHECK(fit_slope({0, 1}, {4, 1}) == doctest::Approx(-3.0));
  CHECK_THROWS_AS(fit_slope({1}, {1}), Error);
  CHECK_THROWS_AS(fit_slope({1, 1}, {1, 2}), Error);
  CHECK(sig12(1.0 / 3.0) == 0.333333333333);
  CHECK(sig12(123456789.123456789) == 123456789.123);
  CHECK(std::isinf(sig12(-INFINITY)));
}

TEST_CASE("CSV and JSON serialization of a gap scan") {
  GapScan scan;
  GapRow r;
  r.T = 4;
  r.degree = 0;
  r.count = 1;
  r.lambda_small = 1e-3 / 3.0;
  r.lambda_big = 7.5;
  scan.rows.push_back(r);
  r.degree = 2;
  r.count = 0;
  r.lambda_small.reset();
  scan.rows.push_back(r);
  DegreeFit f;
  f.slope = -INFINITY;
  f.exact_kernel = true;
  f.big_floor = NAN;
  scan.fits.push_back(f);
  std::ostringstream csv;
  write_gap_csv(scan, csv);
  CHECK(csv.str() == "T,degree,bc,count,lambda_small,lambda_big\n4,0,absolute,1,0.000333333333333,7.5\n"
                     "4,2,absolute,0,,7.5\n");
  const auto j = to_json(scan);
  CHECK(j["rows"][1]["lambda_small"].is_null());
  CHECK(j["fits"][0]["slope"].is_null());
  CHECK(j["fits"][0]["big_floor"].is_null());
  CHECK(j["rows"][0]["lambda_big"] == 7.5);
}
