#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "wml/dec.hpp"
#include "wml/error.hpp"
#include "wml/spectral.hpp"

using namespace wml;
using namespace wml::dec;

namespace {

morse::MorseFunction constant(double c) {
  return {"const", [c](const Vec2&) { return c; }, [](const Vec2&) { return Vec2::Zero().eval(); },
          [](const Vec2&) { return Mat2::Zero().eval(); }};
}

morse::MorseFunction wavy() {
  return {"wavy", [](const Vec2& x) { return std::sin(2 * x.x()) + 0.5 * x.y() * x.y() - 0.3 * x.x() * x.y(); },
          [](const Vec2& x) { return Vec2(2 * std::cos(2 * x.x()) - 0.3 * x.y(), x.y() - 0.3 * x.x()); },
          [](const Vec2& x) {
            Mat2 h;
            h << -4 * std::sin(2 * x.x()), -0.3, -0.3, 1.0;
            return h;
          }};
}

// Positive roots of J_n' (x = 0 excluded) by bisection on a fine bracket scan.
double bessel_prime_root(int n, int which) {
  auto dj = [n](double x) {
    return n == 0 ? -std::cyl_bessel_j(1.0, x) : 0.5 * (std::cyl_bessel_j(n - 1.0, x) - std::cyl_bessel_j(n + 1.0, x));
  };
  int found = 0;
  for (double a = 0.05; a < 30.0; a += 0.01) {
    double b = a + 0.01;
    if (dj(a) * dj(b) > 0) continue;
    if (++found < which) continue;
    for (int it = 0; it < 80; ++it) {
      const double m = 0.5 * (a + b);
      (dj(a) * dj(m) <= 0 ? b : a) = m;
    }
    return 0.5 * (a + b);
  }
  return NAN;
}

double max_abs(const SparseMatrix& a) {
  double m = 0;
  for (int c = 0; c < a.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

}  // namespace

TEST_CASE("two-vertex deformed derivative by hand") {
  WittenAssembly as;
  as.d[0].resize(1, 2);
  as.d[0].insert(0, 0) = -1.0;
  as.d[0].insert(0, 1) = 1.0;
  as.d[1].resize(0, 1);
  as.f_bar[0] = Eigen::Vector2d(0.0, 1.0);
  as.f_bar[1] = Eigen::VectorXd::Constant(1, 0.5);
  as.f_bar[2].resize(0);
  as.f_max = 1.0;
  as.free_dofs = {std::vector<int>{0, 1}, std::vector<int>{0}, std::vector<int>{}};
  // e^{-Tf} d e^{Tf} at T = 1: the edge sees e^{f(v) - f(e)} from each endpoint.
  const Eigen::MatrixXd dT(deformed_derivative(as, 1.0, 0));
  CHECK(dT(0, 1) == doctest::Approx(std::exp(0.5)).epsilon(1e-15));
  CHECK(dT(0, 0) == doctest::Approx(-std::exp(-0.5)).epsilon(1e-15));
  const Eigen::MatrixXd d0(deformed_derivative(as, 0.0, 0));
  CHECK(d0(0, 0) == -1.0);
  CHECK(d0(0, 1) == 1.0);
}

TEST_CASE("deformed derivative is exact and gauge invariant") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.15);
  for (auto bc : {BoundaryCondition::Absolute, BoundaryCondition::Relative}) {
    const auto as = assemble(mesh, wavy(), bc);
    for (double T : {0.0, 1.5, 7.0}) {
      const SparseMatrix d0 = deformed_derivative(as, T, 0), d1 = deformed_derivative(as, T, 1);
      CHECK(max_abs(SparseMatrix(d1 * d0)) < 1e-12 * std::max(1.0, max_abs(d1) * max_abs(d0)));
    }
    // Shifting f leaves e^{-Tf} d e^{Tf} unchanged.
    const auto shifted = assemble(mesh, wavy().shifted(3.0), bc);
    CHECK(max_abs(SparseMatrix(deformed_derivative(as, 4.0, 1) - deformed_derivative(shifted, 4.0, 1))) < 1e-11);
    // At T = 0 and for constant f the incidence matrix is recovered.
    CHECK(max_abs(SparseMatrix(deformed_derivative(as, 0.0, 0) - as.free_incidence(0))) == 0.0);
    const auto flat = assemble(mesh, constant(2.0), bc);
    for (double T : {1.0, 10.0})
      for (int k : {0, 1}) CHECK(max_abs(SparseMatrix(deformed_derivative(flat, T, k) - flat.free_incidence(k))) == 0.0);
  }
  CHECK_THROWS_AS(deformed_derivative(assemble(mesh, wavy(), BoundaryCondition::Absolute), 1.0, 2), Error);
}

TEST_CASE("mass matrices") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.1);
  const auto as = assemble(mesh, wavy(), BoundaryCondition::Absolute);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(as.dim(0));
  const double area = one.dot(as.mass[0] * one);
  CHECK(area == doctest::Approx(mesh.total_area()).epsilon(1e-12));
  CHECK(area == doctest::Approx(std::numbers::pi).epsilon(0.02));
  // The 2-form dx∧dy has cochain value area(t) on each triangle.
  Eigen::VectorXd vol(static_cast<Eigen::Index>(mesh.triangles.size()));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) vol(static_cast<Eigen::Index>(t)) = mesh.triangle_area(t);
  CHECK(vol.dot(as.mass[2] * vol) == doctest::Approx(area).epsilon(1e-12));
  // The constant 1-form dx integrates to area as well.
  Eigen::VectorXd dx(static_cast<Eigen::Index>(mesh.edges.size()));
  for (std::size_t e = 0; e < mesh.edges.size(); ++e)
    dx(static_cast<Eigen::Index>(e)) = mesh.vertices[mesh.edges[e][1]].x() - mesh.vertices[mesh.edges[e][0]].x();
  CHECK(dx.dot(as.mass[1] * dx) == doctest::Approx(area).epsilon(1e-12));
  for (int k = 0; k < 3; ++k) {
    const Eigen::MatrixXd m(as.mass[k]);
    CHECK((m - m.transpose()).norm() <= 1e-14 * m.norm());
  }
  // Positive definite on random vectors.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::VectorXd x(as.dim(1));
  for (auto& v : x) v = g(rng);
  CHECK(x.dot(as.mass[1] * x) > 0);
}

TEST_CASE("Whitney edge mass against midpoint quadrature") {
  const Vec2 a(0.1, -0.2), b(1.3, 0.4), c(0.2, 0.9);
  const std::array<Vec2, 3> x{a, b, c};
  const double area = 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
  // ∇λ_i from the inverse of the affine map.
  Mat2 J;
  J.col(0) = b - a;
  J.col(1) = c - a;
  const Mat2 Jinv = J.inverse();
  const std::array<Vec2, 3> grad{-(Jinv.row(0) + Jinv.row(1)).transpose(), Jinv.row(0).transpose(),
                                 Jinv.row(1).transpose()};
  auto whitney = [&](int s, const Eigen::Vector3d& lam) {
    const int i = (s + 1) % 3, j = (s + 2) % 3;
    return Vec2(lam(i) * grad[j] - lam(j) * grad[i]);
  };
  // Edge midpoints integrate quadratics exactly.
  const std::array<Eigen::Vector3d, 3> pts{Eigen::Vector3d(0, 0.5, 0.5), Eigen::Vector3d(0.5, 0, 0.5),
                                           Eigen::Vector3d(0.5, 0.5, 0)};
  Eigen::Matrix3d want = Eigen::Matrix3d::Zero();
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 3; ++t)
      for (const auto& p : pts) want(s, t) += area / 3.0 * whitney(s, p).dot(whitney(t, p));
  CHECK((whitney_edge_mass(a, b, c) - want).norm() < 1e-13);
  (void)x;
}

TEST_CASE("e^{-Tf} spans the degree-0 kernel in absolute mode") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.1);
  const auto as = assemble(mesh, wavy(), BoundaryCondition::Absolute);
  const double T = 6.0;
  const Eigen::VectorXd w = as.weights(0, T).cwiseInverse();
  const Eigen::VectorXd dw = deformed_derivative(as, T, 0) * w;
  CHECK(dw.norm() < 1e-12 * w.norm());
  WittenOperator op(as, T, 0);
  Eigen::VectorXd y;
  op.apply_A(w, y);
  CHECK(y.norm() < 1e-10 * w.norm());
}

TEST_CASE("parallel and serial assembly agree exactly") {
  const auto mesh = geometry::build_mesh(geometry::make_annulus(0.5, 1.0), 0.08);
  for (auto bc : {BoundaryCondition::Absolute, BoundaryCondition::Relative}) {
    const auto a = assemble(mesh, wavy(), bc);
    const auto b = assemble_serial(mesh, wavy(), bc);
    for (int k = 0; k < 3; ++k) {
      CHECK(max_abs(SparseMatrix(a.mass[k] - b.mass[k])) == 0.0);
      CHECK(a.f_bar[k] == b.f_bar[k]);
      CHECK(a.free_dofs[k] == b.free_dofs[k]);
    }
  }
}

TEST_CASE("explicit quadratic form matches the matrix-free operator") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.2);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (auto bc : {BoundaryCondition::Absolute, BoundaryCondition::Relative}) {
    const auto as = assemble(mesh, wavy(), bc);
    for (int k = 0; k < 3; ++k) {
      const WittenOperator op(as, 3.0, k);
      const QuadraticForm q = witten_quadratic_form(as, 3.0, k);
      CHECK((q.A - q.A.transpose()).norm() <= 1e-14 * q.A.norm());
      for (int trial = 0; trial < 3; ++trial) {
        Eigen::VectorXd x(op.dim());
        for (auto& v : x) v = g(rng);
        Eigen::VectorXd y;
        op.apply_A(x, y);
        CHECK((q.A * x - y).norm() < 1e-9 * (1.0 + y.norm()));
        CHECK(x.dot(q.A * x) >= -1e-9 * q.A.norm() * x.squaredNorm());
      }
      // The block factorization reports definiteness of A + σM.
      WittenOperator shifted(as, 3.0, k);
      shifted.factorize(0.5);
      CHECK(shifted.shifted_definite());
    }
  }
}

TEST_CASE("degree-0 spectrum at T = 0") {
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.1);
  SUBCASE("absolute: constants are harmonic") {
    const auto as = assemble(mesh, wavy(), BoundaryCondition::Absolute);
    WittenOperator op(as, 0.0, 0);
    const auto r = spectral::lowest_eigenpairs(op, 1);
    CHECK(std::abs(r.values(0)) < 1e-9);
    const Eigen::VectorXd v = r.vectors.col(0);
    CHECK((v / v(0) - Eigen::VectorXd::Ones(v.size())).norm() < 1e-6 * std::sqrt(double(v.size())));
  }
  SUBCASE("relative: Dirichlet spectrum starts at j_{0,1}^2") {
    const auto as = assemble(mesh, wavy(), BoundaryCondition::Relative);
    WittenOperator op(as, 0.0, 0);
    const auto r = spectral::lowest_eigenpairs(op, 1);
    CHECK(r.values(0) == doctest::Approx(std::pow(2.404825557695773, 2)).epsilon(0.02));
  }
}

TEST_CASE("Neumann eigenvalues of the unit disk converge to Bessel roots") {
  const std::array<double, 5> exact{std::pow(bessel_prime_root(1, 1), 2), std::pow(bessel_prime_root(1, 1), 2),
                                    std::pow(bessel_prime_root(2, 1), 2), std::pow(bessel_prime_root(2, 1), 2),
                                    std::pow(bessel_prime_root(0, 1), 2)};
  CHECK(exact[0] == doctest::Approx(3.389957).epsilon(1e-6));
  CHECK(exact[2] == doctest::Approx(9.328363).epsilon(1e-6));
  CHECK(exact[4] == doctest::Approx(14.681971).epsilon(1e-6));
  std::array<double, 2> err{};
  const std::array<double, 2> hs{0.1, 0.05};
  for (int level = 0; level < 2; ++level) {
    const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), hs[level]);
    const auto as = assemble(mesh, wavy(), BoundaryCondition::Absolute);
    WittenOperator op(as, 0.0, 0);
    const auto r = spectral::lowest_eigenpairs(op, 6);
    for (int i = 0; i < 5; ++i) {
      const double rel = std::abs(r.values(i + 1) - exact[i]) / exact[i];
      err[level] = std::max(err[level], rel);
    }
  }
  CHECK(err[1] < 0.01);
  // Second order: halving h cuts the error by about four.
  CHECK(err[0] / err[1] > 2.5);
}

TEST_CASE("Hodge Betti numbers") {
  const auto disk = geometry::build_mesh(geometry::make_disk(1.0), 0.1);
  const auto ann = geometry::build_mesh(geometry::make_annulus(0.5, 1.0), 0.08);
  auto betti = [](const geometry::TriMesh& m, BoundaryCondition bc) {
    const auto h = hodge_betti(assemble(m, morse::linear_x(), bc));
    for (int k = 0; k < 3; ++k)
      if (h.betti[k] > 0) CHECK(h.max_kernel[k] <= 1e-3 * h.first_nonzero[k]);
    return h.betti;
  };
  CHECK(betti(disk, BoundaryCondition::Absolute) == std::array<int, 3>{1, 0, 0});
  CHECK(betti(disk, BoundaryCondition::Relative) == std::array<int, 3>{0, 0, 1});
  CHECK(betti(ann, BoundaryCondition::Absolute) == std::array<int, 3>{1, 1, 0});
  CHECK(betti(ann, BoundaryCondition::Relative) == std::array<int, 3>{0, 1, 1});
}

TEST_CASE("triplet export") {
  SparseMatrix a(2, 3);
  a.insert(0, 2) = 1.5;
  a.insert(1, 0) = -2.0;
  a.makeCompressed();
  std::ostringstream out;
  write_triplets(a, out);
  CHECK(out.str() == "2 3 2\n1 0 -2\n0 2 1.5\n");
}

TEST_CASE("boundary condition names") {
  CHECK(parse_bc("absolute") == BoundaryCondition::Absolute);
  CHECK(parse_bc("relative") == BoundaryCondition::Relative);
  CHECK_THROWS_AS(parse_bc("neumann"), Error);
  CHECK(std::string(to_string(BoundaryCondition::Relative)) == "relative");
}
