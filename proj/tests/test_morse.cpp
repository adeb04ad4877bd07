#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wml/error.hpp"
#include "wml/morse.hpp"

using namespace wml;
using namespace wml::morse;

namespace {

int find_zero(const PseudoGradientField& field, const Vec2& at) {
  const auto& z = field.zeros();
  for (std::size_t i = 0; i < z.size(); ++i)
    if ((z[i].location - at).norm() < 1e-6) return static_cast<int>(i);
  return -1;
}

const CriticalPoint* find_point(const std::vector<CriticalPoint>& pts, const Vec2& at) {
  for (const auto& p : pts)
    if ((p.location - at).norm() < 1e-6) return &p;
  return nullptr;
}

struct Saddle {
  geometry::SurfaceDomain domain = geometry::make_disk(2.0);
  MorseFunction f = saddle_xx_minus_yy();
  std::vector<CriticalPoint> points = find_critical_points(f, domain, 40, 1e-10).points;
  PseudoGradientField field = adapted_field(f, domain, 0.24, points);
};

}  // namespace

TEST_CASE("analytic functions and their derivatives") {
  const MorseFunction f = bowl(1.0, 0.1);
  const Vec2 x(0.3, -0.4);
  const double eps = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Vec2 e = Vec2::Zero();
    e(i) = eps;
    CHECK(f.gradient(x)(i) == doctest::Approx((f.value(x + e) - f.value(x - e)) / (2 * eps)).epsilon(1e-7));
    const Vec2 dg = (f.gradient(x + e) - f.gradient(x - e)) / (2 * eps);
    CHECK((f.hessian(x).col(i) - dg).norm() < 1e-6);
  }
  CHECK(f.negated().value(x) == doctest::Approx(-f.value(x)));
  CHECK(f.shifted(2.5).value(x) == doctest::Approx(f.value(x) + 2.5));
  CHECK(f.shifted(2.5).gradient(x) == f.gradient(x));
}

TEST_CASE("critical points of x on the unit disk") {
  const auto disk = geometry::make_disk(1.0);
  const auto pts = find_critical_points(linear_x(), disk, 40, 1e-10).points;
  REQUIRE(pts.size() == 2);
  const auto* left = find_point(pts, Vec2(-1, 0));
  const auto* right = find_point(pts, Vec2(1, 0));
  REQUIRE(left);
  REQUIRE(right);
  CHECK(left->kind == CriticalKind::BoundaryMinus);
  CHECK(left->index == 0);
  CHECK(left->normal_derivative == doctest::Approx(-1.0));
  CHECK(right->kind == CriticalKind::BoundaryPlus);
  CHECK(right->index == 1);
  const auto c = morse_counts(pts);
  CHECK(c.c == std::array<int, 3>{0, 0, 0});
  CHECK(c.p == std::array<int, 2>{1, 0});
  CHECK(c.q == std::array<int, 2>{0, 1});
  CHECK(generator_counts(c, Mode::Absolute) == std::array<int, 3>{1, 0, 0});
  CHECK(generator_counts(c, Mode::Relative) == std::array<int, 3>{0, 0, 1});
}

TEST_CASE("critical points of the saddle on the radius-2 disk") {
  Saddle s;
  REQUIRE(s.points.size() == 5);
  const auto* o = find_point(s.points, Vec2(0, 0));
  REQUIRE(o);
  CHECK(o->kind == CriticalKind::Interior);
  CHECK(o->index == 1);
  for (double y : {-2.0, 2.0}) {
    const auto* p = find_point(s.points, Vec2(0, y));
    REQUIRE(p);
    CHECK(p->kind == CriticalKind::BoundaryMinus);
    CHECK(p->index == 0);
    // νf = 4cos2θ on the circle.
    CHECK(p->normal_derivative == doctest::Approx(-4.0));
  }
  for (double x : {-2.0, 2.0}) {
    const auto* p = find_point(s.points, Vec2(x, 0));
    REQUIRE(p);
    CHECK(p->kind == CriticalKind::BoundaryPlus);
    CHECK(p->index == 1);
  }
  const auto c = morse_counts(s.points);
  CHECK(generator_counts(c, Mode::Absolute) == std::array<int, 3>{2, 1, 0});
  CHECK(generator_counts(c, Mode::Relative) == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("an interior minimum is found with its Hessian") {
  for (double r : {1.0, 1.1}) {
    const auto disk = geometry::make_disk(r);
    const auto pts = find_critical_points(bowl(1.0, 0.1), disk, 40, 1e-10).points;
    REQUIRE(pts.size() == 3);
    const auto* m = find_point(pts, Vec2(-0.1, 0));
    REQUIRE(m);
    CHECK(m->kind == CriticalKind::Interior);
    CHECK(m->index == 0);
    CHECK((m->hessian - Mat2::Identity()).norm() < 1e-12);
    // On the circle νf = r + 0.1cosθ > 0, and f|∂ has its extrema at θ = 0, π.
    CHECK(find_point(pts, Vec2(r, 0))->kind == CriticalKind::BoundaryPlus);
    CHECK(find_point(pts, Vec2(-r, 0))->kind == CriticalKind::BoundaryPlus);
  }
}

TEST_CASE("counts on the annulus and on an empty list") {
  const auto ann = geometry::make_annulus(0.5, 1.0);
  const auto c = morse_counts(find_critical_points(linear_x(), ann, 40, 1e-10).points);
  CHECK(c.c == std::array<int, 3>{0, 0, 0});
  CHECK(c.p == std::array<int, 2>{1, 1});
  CHECK(c.q == std::array<int, 2>{1, 1});
  const auto e = morse_counts({});
  CHECK(e.c == std::array<int, 3>{0, 0, 0});
  CHECK(e.p == std::array<int, 2>{0, 0});
}

TEST_CASE("pseudo-gradient field conditions") {
  Saddle s;
  CHECK(verify_field(s.field, 3000).empty());
  CHECK(s.field.zeros().size() == 3);  // interior saddle plus the two νf < 0 points
  // X·∇f < 0 away from the zeros.
  for (const Vec2& x : {Vec2(0.5, 0.3), Vec2(-1.0, 1.2), Vec2(1.5, -0.2)})
    CHECK(s.field(x).dot(s.f.gradient(x)) < 0);
}

TEST_CASE("field of x on the unit disk") {
  const auto disk = geometry::make_disk(1.0);
  const auto pts = find_critical_points(linear_x(), disk, 40, 1e-10).points;
  const auto field = adapted_field(linear_x(), disk, 0.2, pts);
  CHECK((field(Vec2(0.1, 0.2)) - Vec2(-1, 0)).norm() < 1e-12);
  // Inward at the top of the circle.
  CHECK(field(Vec2(0, 1)).dot(Vec2(0, 1)) < 0);
  // Zero at the boundary minimum, tangent to the circle nearby.
  CHECK(field(Vec2(-1, 0)).norm() < 1e-12);
  const double t = std::numbers::pi + 0.05;
  const Vec2 near(std::cos(t), std::sin(t));
  CHECK(std::abs(field(near).dot(near)) < 1e-9 * (1.0 + field(near).norm()));

  const FlowLine line = trace_flow(field, Vec2(0, 0), Direction::Forward);
  REQUIRE(line.limit == LimitKind::Critical);
  CHECK((field.zeros()[static_cast<std::size_t>(line.critical)].location - Vec2(-1, 0)).norm() < 1e-6);
  for (const Vec2& p : line.points) CHECK(std::abs(p.y()) < 1e-9);

  const FlowLine still = trace_flow(field, Vec2(-1, 0), Direction::Forward);
  CHECK(still.limit == LimitKind::Critical);
  CHECK(still.points.size() <= 1);
  CHECK(still.length == 0.0);

  const UnstableCell cell = unstable_manifold(field, line.critical);
  CHECK(cell.dimension == 0);
  CHECK((cell.point - Vec2(-1, 0)).norm() < 1e-9);

  const auto cx = build_thom_smale_complex(field);
  CHECK(cx.rank(0) == 1);
  CHECK(cx.rank(1) == 0);
  CHECK(homology_ranks(cx).betti == std::array<int, 3>{1, 0, 0});
  // Two index-0 points do not form an admissible pair.
  CHECK_THROWS_AS(connection_count(field, line.critical, line.critical, default_frames(field)), Error);
}

TEST_CASE("adaptation radius must keep the critical points apart") {
  const auto disk = geometry::make_disk(2.0);
  const auto pts = find_critical_points(saddle_xx_minus_yy(), disk, 40, 1e-10).points;
  CHECK_THROWS_AS(check_adaptation_radius(disk, pts, 1.0), Error);
  CHECK_NOTHROW(check_adaptation_radius(disk, pts, 0.24));
}

TEST_CASE("flow from just above the saddle reaches the top boundary point") {
  Saddle s;
  const FlowLine line = trace_flow(s.field, Vec2(0.0, 0.01), Direction::Forward);
  REQUIRE(line.limit == LimitKind::Critical);
  REQUIRE(line.critical >= 0);
  const auto& z = s.field.zeros()[static_cast<std::size_t>(line.critical)];
  CHECK((z.location - Vec2(0, 2)).norm() < 1e-6);
  CHECK(z.kind == CriticalKind::BoundaryMinus);
  // f decreases along forward flow.
  for (std::size_t i = 1; i < line.points.size(); ++i)
    CHECK(s.f.value(line.points[i]) <= s.f.value(line.points[i - 1]) + 1e-12);
}

TEST_CASE("unstable manifold of the saddle is the vertical chord") {
  Saddle s;
  const int q = find_zero(s.field, Vec2(0, 0));
  REQUIRE(q >= 0);
  const UnstableCell cell = unstable_manifold(s.field, q);
  CHECK(cell.dimension == 1);
  REQUIRE(cell.curve.size() > 10);
  for (const Vec2& p : cell.curve) CHECK(std::abs(p.x()) < 1e-6);
  const int top = find_zero(s.field, Vec2(0, 2)), bottom = find_zero(s.field, Vec2(0, -2));
  std::array<int, 2> ends = cell.curve_ends;
  std::sort(ends.begin(), ends.end());
  std::array<int, 2> want{std::min(top, bottom), std::max(top, bottom)};
  CHECK(ends == want);
  // Oriented along the frame.
  CHECK((cell.curve.back() - cell.curve.front()).dot(cell.frame.at(0)) > 0);
}

TEST_CASE("Thom-Smale complex of the saddle") {
  Saddle s;
  const auto cx = build_thom_smale_complex(s.field);
  CHECK(cx.rank(0) == 2);
  CHECK(cx.rank(1) == 1);
  CHECK(cx.rank(2) == 0);
  REQUIRE(cx.boundary[0].size() == 1);
  for (auto n : cx.boundary[0][0]) CHECK(std::llabs(n) == 1);
  CHECK(boundary_squared_zero(cx));
  const auto h = homology_ranks(cx);
  CHECK(h.betti == std::array<int, 3>{1, 0, 0});
  CHECK(h.torsion.empty());

  SUBCASE("flipping the saddle's frame negates its row") {
    Frames frames = default_frames(s.field);
    const int q = find_zero(s.field, Vec2(0, 0));
    frames[static_cast<std::size_t>(q)].basis[0] *= -1.0;
    const auto flipped = build_thom_smale_complex(s.field, frames);
    for (std::size_t c = 0; c < 2; ++c) CHECK(flipped.boundary[0][0][c] == -cx.boundary[0][0][c]);
    CHECK(homology_ranks(flipped).betti == h.betti);
  }
}

TEST_CASE("relative complex reflects degrees and transposes the boundary") {
  Saddle s;
  const auto cx = build_thom_smale_complex(s.field);
  const auto rel = relative_complex(cx);
  CHECK(rel.relative);
  CHECK(rel.rank(2) == cx.rank(0));
  CHECK(rel.rank(0) == cx.rank(2));
  REQUIRE(rel.boundary[1].size() == 2);
  for (std::size_t a = 0; a < 2; ++a) CHECK(rel.boundary[1][a][0] == cx.boundary[0][0][a]);
  const auto h = homology_ranks(rel);
  CHECK(h.betti == std::array<int, 3>{0, 0, 1});
}

TEST_CASE("complex of x on the annulus") {
  const auto ann = geometry::make_annulus(0.5, 1.0);
  const auto pts = find_critical_points(linear_x(), ann, 40, 1e-10).points;
  const auto field = adapted_field(linear_x(), ann, 0.05, pts);
  const auto cx = build_thom_smale_complex(field);
  CHECK(cx.rank(0) == 1);
  CHECK(cx.rank(1) == 1);
  // The two flow lines leaving the inner boundary maximum reach the outer minimum with opposite signs.
  CHECK(cx.boundary[0][0][0] == 0);
  CHECK(homology_ranks(cx).betti == std::array<int, 3>{1, 1, 0});
}

TEST_CASE("Morse inequalities") {
  MorseCounts c;
  c.c = {0, 1, 0};
  c.p = {2, 0};
  c.q = {0, 2};
  const auto abs = morse_inequalities(c, {1, 0, 0}, Mode::Absolute);
  CHECK(abs.all_hold);
  CHECK(abs.equality_at_top);
  const auto rel = morse_inequalities(c, {0, 0, 1}, Mode::Relative);
  CHECK(rel.all_hold);
  CHECK(rel.equality_at_top);
  // Betti numbers larger than the counts violate the weak inequality.
  const auto bad = morse_inequalities(c, {3, 0, 0}, Mode::Absolute);
  CHECK_FALSE(bad.all_hold);
}

TEST_CASE("basin classification is thread-independent") {
  Saddle s;
  const auto mesh = geometry::build_mesh(s.domain, 0.2);
  const auto a = classify_basins(s.field, mesh);
  const auto b = classify_basins_serial(s.field, mesh);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].size() == b[i].size());
    for (std::size_t t = 0; t < a[i].size(); ++t)
      for (int k = 0; k < 3; ++k) CHECK(a[i][t][k] == b[i][t][k]);
  }
}
