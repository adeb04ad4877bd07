#include "wml/morse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "wml/error.hpp"

namespace wml::morse {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kKappa = 0.5;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double smoothstep5(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

Vec2 sign_normalized(Vec2 v) {
  v.normalize();
  const double lead = std::abs(v.x()) > 1e-8 ? v.x() : v.y();
  return lead < 0 ? Vec2(-v) : v;
}

double domain_scale(const SurfaceDomain& d) { return (d.bounding_box().hi - d.bounding_box().lo).norm(); }

}  // namespace

// ---------------------------------------------------------------------------
// Functions

MorseFunction MorseFunction::negated() const {
  MorseFunction g;
  g.formula = "-(" + formula + ")";
  g.value = [v = value](const Vec2& x) { return -v(x); };
  g.gradient = [d = gradient](const Vec2& x) { return Vec2(-d(x)); };
  g.hessian = [h = hessian](const Vec2& x) { return Mat2(-h(x)); };
  return g;
}

MorseFunction MorseFunction::shifted(double c) const {
  MorseFunction g = *this;
  g.formula = formula + " + " + std::to_string(c);
  g.value = [v = value, c](const Vec2& x) { return v(x) + c; };
  return g;
}

MorseFunction linear_x() {
  return {"x", [](const Vec2& x) { return x.x(); }, [](const Vec2&) { return Vec2(1.0, 0.0); },
          [](const Vec2&) { return Mat2(Mat2::Zero()); }};
}

MorseFunction saddle_xx_minus_yy() {
  return {"x^2 - y^2", [](const Vec2& x) { return x.x() * x.x() - x.y() * x.y(); },
          [](const Vec2& x) { return Vec2(2.0 * x.x(), -2.0 * x.y()); },
          [](const Vec2&) {
            Mat2 h;
            h << 2.0, 0.0, 0.0, -2.0;
            return h;
          }};
}

MorseFunction bowl(double sign, double tilt) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%g*(x^2 + y^2)/2 + %g*x", sign, tilt);
  return {buf, [=](const Vec2& x) { return sign * 0.5 * x.squaredNorm() + tilt * x.x(); },
          [=](const Vec2& x) { return Vec2(sign * x.x() + tilt, sign * x.y()); },
          [=](const Vec2&) { return Mat2(sign * Mat2::Identity()); }};
}

const char* to_string(CriticalKind kind) {
  switch (kind) {
    case CriticalKind::Interior: return "interior";
    case CriticalKind::BoundaryMinus: return "boundary_minus";
    case CriticalKind::BoundaryPlus: return "boundary_plus";
  }
  return "?";
}

const char* to_string(LimitKind kind) {
  switch (kind) {
    case LimitKind::Critical: return "critical";
    case LimitKind::BoundaryExit: return "boundary_exit";
    case LimitKind::MaxLength: return "max_length";
    case LimitKind::Stagnation: return "stagnation";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Critical points

CriticalSearch find_critical_points(const MorseFunction& f, const SurfaceDomain& domain, int grid_density,
                                    double tol) {
  require(tol > 0 && grid_density >= 2, ErrorKind::InvalidInput, "find_critical_points: tol > 0 and grid >= 2");
  CriticalSearch out;
  const double scale = domain_scale(domain);
  const auto& box = domain.bounding_box();

  // Interior: Newton from grid seeds.
  int failed = 0;
  for (int j = 0; j < grid_density; ++j)
    for (int i = 0; i < grid_density; ++i) {
      Vec2 x(box.lo.x() + (box.hi.x() - box.lo.x()) * (i + 0.5) / grid_density,
             box.lo.y() + (box.hi.y() - box.lo.y()) * (j + 0.5) / grid_density);
      if (!domain.inside(x)) continue;
      bool converged = false;
      for (int it = 0; it < 60; ++it) {
        const Vec2 g = f.gradient(x);
        if (g.norm() < tol) {
          converged = true;
          break;
        }
        const Mat2 h = f.hessian(x);
        if (std::abs(h.determinant()) < 1e-14 * (1.0 + h.squaredNorm())) break;
        Vec2 step = h.inverse() * g;
        if (step.norm() > 0.25 * scale) step *= 0.25 * scale / step.norm();
        x -= step;
        if (!domain.inside(x)) break;
      }
      if (!converged) {
        ++failed;
        continue;
      }
      if (!domain.inside(x)) continue;
      bool dup = false;
      for (const auto& c : out.points) dup = dup || (c.location - x).norm() < 1e-6 * scale;
      if (dup) continue;
      CriticalPoint c;
      c.location = x;
      c.kind = CriticalKind::Interior;
      c.hessian = f.hessian(x);
      c.f_value = f.value(x);
      Eigen::SelfAdjointEigenSolver<Mat2> es(c.hessian);
      const double mag = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      require(es.eigenvalues().cwiseAbs().minCoeff() > 1e-8 * mag, ErrorKind::MorseViolation,
              "degenerate Hessian at an interior critical point");
      c.index = static_cast<int>((es.eigenvalues().array() < 0).count());
      out.points.push_back(c);
    }
  if (failed > 0)
    out.diagnostics.push_back("interior Newton did not converge from " + std::to_string(failed) + " seeds");

  // Boundary: sign changes of the tangential derivative along each loop.
  for (std::size_t l = 0; l < domain.loops().size(); ++l) {
    const auto& loop = domain.loop(l);
    auto phi1 = [&](double t) { return f.gradient(loop.point(t)).dot(loop.tangent(t)); };
    auto phi2 = [&](double t) {
      const Vec2 d1 = loop.tangent(t);
      return d1.dot(f.hessian(loop.point(t)) * d1) + f.gradient(loop.point(t)).dot(loop.second(t));
    };
    const int n = 64 * grid_density;
    for (int i = 0; i < n; ++i) {
      double t0 = loop.period * i / n, t1 = loop.period * (i + 1) / n;
      double v0 = phi1(t0), v1 = phi1(t1);
      if (v0 == 0.0) {
        t1 = t0;
      } else if (v0 * v1 >= 0) {
        continue;
      } else {
        for (int it = 0; it < 200 && t1 - t0 > 1e-15 * loop.period; ++it) {
          const double tm = 0.5 * (t0 + t1);
          const double vm = phi1(tm);
          if (vm == 0.0) {
            t0 = t1 = tm;
            break;
          }
          if ((vm < 0) == (v0 < 0)) {
            t0 = tm;
            v0 = vm;
          } else {
            t1 = tm;
          }
        }
      }
      const double t = 0.5 * (t0 + t1);
      const Vec2 x = loop.point(t);
      const Vec2 grad = f.gradient(x);
      const Vec2 nu = loop.outward_normal_raw(t);
      const double speed2 = loop.tangent(t).squaredNorm();
      CriticalPoint c;
      c.location = x;
      c.loop = static_cast<int>(l);
      c.param = t;
      c.f_value = f.value(x);
      c.normal_derivative = grad.dot(nu);
      c.tangential_second = phi2(t) / speed2;
      require(grad.norm() > 1e-6 * (1.0 + grad.norm()), ErrorKind::MorseViolation,
              "f has a critical point on the boundary");
      require(std::abs(c.normal_derivative) > tol, ErrorKind::MorseViolation,
              "normal derivative vanishes at a boundary critical point");
      require(std::abs(c.tangential_second) > 1e-8, ErrorKind::MorseViolation,
              "restriction of f to the boundary is degenerate");
      c.index = c.tangential_second < 0 ? 1 : 0;
      c.kind = c.normal_derivative < 0 ? CriticalKind::BoundaryMinus : CriticalKind::BoundaryPlus;
      bool dup = false;
      for (const auto& o : out.points) dup = dup || (o.location - x).norm() < 1e-9 * scale;
      if (!dup) out.points.push_back(c);
    }
  }
  // Boundary sanity: gradient bounded away from zero on sampled boundary points.
  for (const auto& loop : domain.loops())
    for (int i = 0; i < 256; ++i)
      require(f.gradient(loop.point(loop.period * i / 256)).norm() > 1e-8, ErrorKind::MorseViolation,
              "gradient of f vanishes on the boundary");

  std::stable_sort(out.points.begin(), out.points.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.index != b.index) return a.index < b.index;
    if (std::abs(a.location.x() - b.location.x()) > 1e-9) return a.location.x() < b.location.x();
    return a.location.y() < b.location.y();
  });
  return out;
}

MorseCounts morse_counts(const std::vector<CriticalPoint>& points) {
  MorseCounts m;
  for (const auto& p : points) {
    switch (p.kind) {
      case CriticalKind::Interior: ++m.c.at(p.index); break;
      case CriticalKind::BoundaryMinus: ++m.p.at(p.index); break;
      case CriticalKind::BoundaryPlus: ++m.q.at(p.index); break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Field

void check_adaptation_radius(const SurfaceDomain& domain, const std::vector<CriticalPoint>& points, double a) {
  require(a > 0, ErrorKind::Configuration, "adaptation radius must be positive");
  require(2.0 * a < domain.feature_size(), ErrorKind::Configuration, "collar 2a exceeds the feature size");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j)
      require((points[i].location - points[j].location).norm() > 8.0 * a, ErrorKind::Configuration,
              "balls of radius 4a around critical points intersect");
    if (points[i].kind == CriticalKind::Interior)
      require(domain.project(points[i].location).distance > 4.0 * a, ErrorKind::Configuration,
              "ball of radius 4a around an interior critical point meets the boundary");
  }
}

PseudoGradientField::PseudoGradientField(const MorseFunction& f, const SurfaceDomain& domain, double a,
                                         std::vector<CriticalPoint> criticals)
    : f_(f), domain_(domain), a_(a) {
  check_adaptation_radius(domain_, criticals, a);
  for (const auto& c : criticals)
    if (c.kind == CriticalKind::Interior) zeros_.push_back(c);
  for (const auto& c : criticals)
    if (c.kind == CriticalKind::BoundaryMinus) {
      zeros_.push_back(c);
      minus_points_.push_back(c.location);
    }
  for (auto& z : zeros_)
    if (z.frame.empty() && z.index > 0) z.frame = default_frame(*this, z);
}

double PseudoGradientField::core_cutoff(const Vec2& x) const {
  double beta = 1.0;
  for (const Vec2& p : minus_points_) beta *= smoothstep5(((x - p).norm() - a_) / a_);
  return beta;
}

Vec2 PseudoGradientField::operator()(const Vec2& x) const {
  const Vec2 g = -f_.gradient(x);
  const double delta = collar();
  const auto proj = domain_.project(x);
  if (proj.distance >= delta) return g;
  const auto& loop = domain_.loop(proj.loop);
  const Vec2 tau = loop.unit_tangent(proj.param);
  const Vec2 n_in = -loop.outward_normal_raw(proj.param);
  const double rho = (x - proj.point).dot(n_in);  // signed, positive inside
  if (rho >= delta) return g;
  const double gt = g.dot(tau);
  const double gn = g.dot(n_in);
  const double u = 1.0 - rho / delta;
  const double s = 1.0 - u * u * u;
  const double posfun = 0.5 * (gn + std::sqrt(gn * gn + 4.0 * kKappa * gt * gt));
  const double normal = s * gn + (1.0 - s) * core_cutoff(x) * posfun;
  return gt * tau + normal * n_in;
}

Mat2 PseudoGradientField::jacobian(const Vec2& x) const {
  const double eta = 1e-6 * std::max(1.0, domain_scale(domain_));
  Mat2 j;
  j.col(0) = ((*this)(x + Vec2(eta, 0)) - (*this)(x - Vec2(eta, 0))) / (2 * eta);
  j.col(1) = ((*this)(x + Vec2(0, eta)) - (*this)(x - Vec2(0, eta))) / (2 * eta);
  return j;
}

PseudoGradientField adapted_field(const MorseFunction& f, const SurfaceDomain& domain, double a,
                                  const std::vector<CriticalPoint>& criticals) {
  return PseudoGradientField(f, domain, a, criticals);
}

std::vector<std::string> verify_field(const PseudoGradientField& field, int samples) {
  std::vector<std::string> issues;
  const auto& domain = field.domain();
  const double a = field.adaptation_radius();
  std::vector<Vec2> centers;
  for (const auto& z : field.zeros()) centers.push_back(z.location);
  auto near = [&](const Vec2& x, double r) {
    for (const Vec2& c : centers)
      if ((x - c).norm() < r) return true;
    return false;
  };
  const auto& box = domain.bounding_box();
  for (int j = 0; j < samples; ++j)
    for (int i = 0; i < samples; ++i) {
      const Vec2 x(box.lo.x() + (box.hi.x() - box.lo.x()) * (i + 0.5) / samples,
                   box.lo.y() + (box.hi.y() - box.lo.y()) * (j + 0.5) / samples);
      if (!domain.inside(x) || near(x, a)) continue;
      if (field.function().gradient(x).dot(field(x)) >= 0) issues.push_back("Xf >= 0 at an interior sample");
    }
  for (std::size_t l = 0; l < domain.loops().size(); ++l) {
    const auto& loop = domain.loop(l);
    for (int i = 0; i < 8 * samples; ++i) {
      const double t = loop.period * (i + 0.5) / (8 * samples);
      const Vec2 x = loop.point(t);
      const Vec2 nu = loop.outward_normal_raw(t);
      const Vec2 v = field(x);
      bool in_minus_core = false;
      for (const auto& z : field.zeros())
        if (z.kind == CriticalKind::BoundaryMinus && (x - z.location).norm() < a) in_minus_core = true;
      if (in_minus_core) {
        if (std::abs(v.dot(nu)) > 1e-10 * (1.0 + v.norm())) issues.push_back("field not tangent inside a core");
      } else if (!near(x, a)) {
        if (v.dot(nu) >= 0) issues.push_back("field not inward on the boundary");
        if (field.function().gradient(x).dot(v) >= 0) issues.push_back("Xf >= 0 at a boundary sample");
      }
    }
  }
  return issues;
}

std::vector<Vec2> default_frame(const PseudoGradientField& field, const CriticalPoint& p) {
  if (p.index == 0) return {};
  const Mat2 j = field.jacobian(p.location);
  Eigen::EigenSolver<Mat2> es(j);
  const auto ev = es.eigenvalues();
  const double mag = std::max(1.0, ev.cwiseAbs().maxCoeff());
  require(std::abs(ev(0).imag()) < 1e-8 * mag && std::abs(ev(1).imag()) < 1e-8 * mag, ErrorKind::MorseViolation,
          "complex eigenvalues in the field linearization");
  std::vector<std::pair<double, Vec2>> unstable;
  for (int i = 0; i < 2; ++i) {
    const double lam = ev(i).real();
    require(std::abs(lam) > 1e-6 * mag, ErrorKind::MorseViolation, "indeterminate unstable eigenspace");
    if (lam > 0) unstable.emplace_back(lam, sign_normalized(es.eigenvectors().col(i).real()));
  }
  require(static_cast<int>(unstable.size()) == p.index, ErrorKind::MorseViolation,
          "unstable dimension of the field differs from the Morse index");
  if (unstable.size() == 2 && std::abs(unstable[0].first - unstable[1].first) < 1e-6 * mag)
    return {Vec2(1.0, 0.0), Vec2(0.0, 1.0)};
  std::sort(unstable.begin(), unstable.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return std::make_pair(a.second.x(), a.second.y()) < std::make_pair(b.second.x(), b.second.y());
  });
  std::vector<Vec2> out;
  for (const auto& u : unstable) out.push_back(u.second);
  return out;
}

int Frame::orientation() const {
  if (basis.size() == 2) return cross(basis[0], basis[1]) > 0 ? 1 : -1;
  return point_sign;
}

Frames default_frames(const PseudoGradientField& field) {
  Frames frames;
  for (const auto& z : field.zeros()) frames.push_back({z.frame, 1});
  return frames;
}

// ---------------------------------------------------------------------------
// Flow tracing (Dormand–Prince 5(4))

FlowLine trace_flow(const PseudoGradientField& field, const Vec2& start, Direction dir, const TraceOptions& opts) {
  const auto& domain = field.domain();
  require(domain.inside(start) || domain.project(start).distance < 1e-9, ErrorKind::InvalidInput,
          "trace_flow: start outside the domain");
  FlowLine out;
  const double sgn = dir == Direction::Forward ? 1.0 : -1.0;
  auto vel = [&](const Vec2& x) { return Vec2(sgn * field(x)); };
  auto captured = [&](const Vec2& x) {
    for (std::size_t i = 0; i < field.zeros().size(); ++i)
      if ((x - field.zeros()[i].location).norm() < opts.capture) return static_cast<int>(i);
    return -1;
  };
  if (int c = captured(start); c >= 0) {
    out.limit = LimitKind::Critical;
    out.critical = c;
    return out;
  }
  Vec2 x = start;
  if (opts.keep_points) out.points.push_back(x);
  double h = 0.0;
  {
    const double v = vel(x).norm();
    if (v < 1e-14) {
      out.limit = LimitKind::Stagnation;
      return out;
    }
    h = 0.1 * opts.max_step / v;
  }
  static constexpr double a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45, a42 = -56.0 / 15,
                          a43 = 32.0 / 9, a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729, a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656, b1 = 35.0 / 384, b3 = 500.0 / 1113,
                          b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84, e1 = 35.0 / 384 - 5179.0 / 57600,
                          e3 = 500.0 / 1113 - 7571.0 / 16695, e4 = 125.0 / 192 - 393.0 / 640,
                          e5 = -2187.0 / 6784 + 92097.0 / 339200, e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
  Vec2 k1 = vel(x);
  for (int step = 0; step < opts.max_steps; ++step) {
    const double speed = k1.norm();
    if (speed < 1e-14) {
      out.limit = LimitKind::Stagnation;
      return out;
    }
    h = std::min(h, opts.max_step / speed);
    const Vec2 k2 = vel(x + h * a21 * k1);
    const Vec2 k3 = vel(x + h * (a31 * k1 + a32 * k2));
    const Vec2 k4 = vel(x + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec2 k5 = vel(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec2 k6 = vel(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vec2 xn = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec2 k7 = vel(xn);
    const double err = (h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7)).norm();
    const double tol = opts.tol * (1.0 + x.norm());
    if (err > tol) {
      h *= std::max(0.1, 0.9 * std::pow(tol / err, 0.2));
      if (h * speed < 1e-15) {
        out.limit = LimitKind::Stagnation;
        return out;
      }
      continue;
    }
    bool exited = false;
    if (!domain.inside(xn)) {
      const auto proj = domain.project(xn);
      const auto& loop = domain.loop(proj.loop);
      const Vec2 nu = loop.outward_normal_raw(proj.param);
      const Vec2 vb = vel(proj.point);
      if (vb.dot(nu) > 1e-3 * vb.norm()) exited = true;
      xn = proj.point;
    }
    out.length += (xn - x).norm();
    x = xn;
    if (opts.keep_points) out.points.push_back(x);
    if (exited) {
      out.limit = LimitKind::BoundaryExit;
      return out;
    }
    if (int c = captured(x); c >= 0) {
      out.limit = LimitKind::Critical;
      out.critical = c;
      return out;
    }
    if (out.length > opts.max_length) {
      out.limit = LimitKind::MaxLength;
      return out;
    }
    k1 = vel(x);
    h *= std::min(5.0, 0.9 * std::pow(tol / std::max(err, 1e-300), 0.2));
  }
  out.limit = LimitKind::MaxLength;
  return out;
}

// ---------------------------------------------------------------------------
// Unstable manifolds

double UnstableCell::area() const {
  double s = 0.0;
  for (const auto& t : patch) s += 0.5 * cross(t[1] - t[0], t[2] - t[0]);
  return s;
}

namespace {

// Start point of the branch of an index-1 zero in direction sign·e_u.
Vec2 branch_start(const PseudoGradientField& field, const CriticalPoint& p, const Vec2& e_u, int sign, double eps) {
  if (p.kind == CriticalKind::BoundaryMinus) {
    const auto& loop = field.domain().loop(p.loop);
    const Vec2 d1 = loop.tangent(p.param);
    const double sigma = d1.dot(e_u) > 0 ? 1.0 : -1.0;
    return loop.point(p.param + sign * sigma * eps / d1.norm());
  }
  return p.location + sign * eps * e_u;
}

double branch_offset(const PseudoGradientField& field, const TraceOptions& opts) {
  return std::max(10.0 * opts.capture, 0.01 * field.adaptation_radius());
}

int backward_limit(const PseudoGradientField& field, const Vec2& x, const TraceOptions& opts) {
  TraceOptions o = opts;
  o.keep_points = false;
  const FlowLine line = trace_flow(field, x, Direction::Backward, o);
  return line.limit == LimitKind::Critical ? line.critical : -1;
}

using Tri = std::array<Vec2, 3>;

void subdivide(const PseudoGradientField& field, const Tri& t, const std::array<int, 3>& labels, int depth,
               const BasinOptions& opts, std::vector<std::pair<int, Tri>>& out) {
  const Vec2 c = (t[0] + t[1] + t[2]) / 3.0;
  const int lc = backward_limit(field, c, opts.trace);
  const bool uniform = labels[0] == labels[1] && labels[1] == labels[2] && labels[0] == lc;
  if (uniform || depth >= opts.max_depth) {
    out.emplace_back(lc, t);
    return;
  }
  const Vec2 m01 = 0.5 * (t[0] + t[1]), m12 = 0.5 * (t[1] + t[2]), m20 = 0.5 * (t[2] + t[0]);
  const int l01 = backward_limit(field, m01, opts.trace);
  const int l12 = backward_limit(field, m12, opts.trace);
  const int l20 = backward_limit(field, m20, opts.trace);
  subdivide(field, {t[0], m01, m20}, {labels[0], l01, l20}, depth + 1, opts, out);
  subdivide(field, {m01, t[1], m12}, {l01, labels[1], l12}, depth + 1, opts, out);
  subdivide(field, {m20, m12, t[2]}, {l20, l12, labels[2]}, depth + 1, opts, out);
  subdivide(field, {m01, m12, m20}, {l01, l12, l20}, depth + 1, opts, out);
}

std::vector<std::vector<Tri>> classify_impl(const PseudoGradientField& field, const geometry::TriMesh& mesh,
                                            const BasinOptions& opts, bool parallel) {
  const int nv = static_cast<int>(mesh.vertices.size());
  const int nt = static_cast<int>(mesh.triangles.size());
  std::vector<int> vlabel(nv);
#pragma omp parallel for schedule(dynamic, 64) if (parallel)
  for (int v = 0; v < nv; ++v) vlabel[v] = backward_limit(field, mesh.vertices[v], opts.trace);
  std::vector<std::vector<std::pair<int, Tri>>> pieces(nt);
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    subdivide(field, {mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]},
              {vlabel[tri[0]], vlabel[tri[1]], vlabel[tri[2]]}, 0, opts, pieces[t]);
  }
  std::vector<std::vector<Tri>> basins(field.zeros().size());
  for (const auto& list : pieces)
    for (const auto& [label, tri] : list)
      if (label >= 0) basins[label].push_back(tri);
  return basins;
}

}  // namespace

std::vector<std::vector<std::array<Vec2, 3>>> classify_basins(const PseudoGradientField& field,
                                                              const geometry::TriMesh& mesh,
                                                              const BasinOptions& opts) {
  return classify_impl(field, mesh, opts, true);
}

std::vector<std::vector<std::array<Vec2, 3>>> classify_basins_serial(const PseudoGradientField& field,
                                                                     const geometry::TriMesh& mesh,
                                                                     const BasinOptions& opts) {
  return classify_impl(field, mesh, opts, false);
}

UnstableCell unstable_manifold(const PseudoGradientField& field, int zero_index, const geometry::TriMesh* mesh,
                               const TraceOptions& opts) {
  require(zero_index >= 0 && zero_index < static_cast<int>(field.zeros().size()), ErrorKind::InvalidInput,
          "unstable_manifold: zero index out of range");
  const CriticalPoint& p = field.zeros()[zero_index];
  UnstableCell cell;
  cell.dimension = p.index;
  cell.critical = zero_index;
  cell.point = p.location;
  cell.frame = p.frame;
  if (p.index == 0) return cell;
  if (p.index == 1) {
    const double eps = branch_offset(field, opts);
    std::array<FlowLine, 2> branch;
    for (int b = 0; b < 2; ++b) {
      const int sign = b == 0 ? -1 : 1;
      branch[b] = trace_flow(field, branch_start(field, p, p.frame[0], sign, eps), Direction::Forward, opts);
      require(branch[b].limit == LimitKind::Critical, ErrorKind::IntegrationFailure,
              std::string("unstable branch ended by ") + to_string(branch[b].limit));
      cell.curve_ends[b] = branch[b].critical;
    }
    for (auto it = branch[0].points.rbegin(); it != branch[0].points.rend(); ++it) cell.curve.push_back(*it);
    cell.curve.insert(cell.curve.begin(), field.zeros()[branch[0].critical].location);
    cell.curve.push_back(p.location);
    cell.curve.insert(cell.curve.end(), branch[1].points.begin(), branch[1].points.end());
    cell.curve.push_back(field.zeros()[branch[1].critical].location);
    return cell;
  }
  require(mesh != nullptr, ErrorKind::InvalidInput, "2-cells need a mesh for basin classification");
  BasinOptions bo;
  bo.trace = opts;
  bo.trace.keep_points = false;
  cell.patch = classify_basins(field, *mesh, bo)[zero_index];
  cell.patch_orientation = Frame{p.frame, 1}.orientation();
  return cell;
}

// ---------------------------------------------------------------------------
// Connections

namespace {

struct Shot {
  double closest = std::numeric_limits<double>::infinity();
  double functional = 0.0;
  Vec2 approach = Vec2::Zero();
};

Shot shoot(const PseudoGradientField& field, const Vec2& start, const Vec2& target, const Vec2& e_p,
           double approach_radius, const TraceOptions& opts) {
  TraceOptions o = opts;
  o.keep_points = true;
  const FlowLine line = trace_flow(field, start, Direction::Forward, o);
  Shot s;
  std::size_t best = 0;
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    const double d = (line.points[i] - target).norm();
    if (d < s.closest) {
      s.closest = d;
      best = i;
    }
  }
  if (line.limit == LimitKind::Critical && (field.zeros()[line.critical].location - target).norm() < 1e-12) {
    s.closest = 0.0;
    best = line.points.size();
  }
  const Vec2 last = best < line.points.size() ? line.points[best] : target;
  s.functional = (last - target).dot(e_p);
  // Approach direction: from the last point outside the approach radius toward the target.
  for (std::size_t i = std::min(best, line.points.size()); i-- > 0;) {
    if ((line.points[i] - target).norm() >= approach_radius) {
      s.approach = (target - line.points[i]).normalized();
      break;
    }
  }
  return s;
}

}  // namespace

std::vector<Connection> connections(const PseudoGradientField& field, int q, int p, const Frames& frames,
                                    const ConnectionOptions& opts) {
  const auto& zeros = field.zeros();
  require(q >= 0 && p >= 0 && q < static_cast<int>(zeros.size()) && p < static_cast<int>(zeros.size()),
          ErrorKind::InvalidInput, "connection: index out of range");
  const CriticalPoint& cq = zeros[q];
  const CriticalPoint& cp = zeros[p];
  require(cq.index == cp.index + 1, ErrorKind::InvalidInput, "connection: index(q) must be index(p) + 1");
  std::vector<Connection> out;
  if (cq.kind == CriticalKind::BoundaryMinus && cp.kind == CriticalKind::Interior) return out;

  if (cq.index == 1) {
    const double eps = branch_offset(field, opts.trace);
    TraceOptions o = opts.trace;
    o.keep_points = false;
    for (int sign : {-1, 1}) {
      const FlowLine line =
          trace_flow(field, branch_start(field, cq, frames[q].basis.at(0), sign, eps), Direction::Forward, o);
      require(line.limit == LimitKind::Critical, ErrorKind::IntegrationFailure,
              std::string("unstable branch ended by ") + to_string(line.limit));
      require(zeros[line.critical].index == 0, ErrorKind::MorseSmaleViolation,
              "unstable branch of an index-1 point ends at a non-minimum");
      if (line.critical == p) out.push_back({sign * frames[p].point_sign, Vec2::Zero(), 1.0});
    }
    return out;
  }

  // Index 2 → 1: shoot from a small circle around q and bisect the stable-line crossing.
  const double a = field.adaptation_radius();
  const double r = opts.seed_radius > 0 ? opts.seed_radius : 0.05 * a;
  const Vec2 e_p = frames[p].basis.at(0);
  const int sq = frames[q].orientation();
  const double approach_radius = 0.2 * a;
  auto seed = [&](double th) { return Vec2(cq.location + r * Vec2(std::cos(th), std::sin(th))); };
  const int n = opts.seeds;
  std::vector<Shot> shots(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n; ++i)
    shots[i] = shoot(field, seed(2 * kPi * i / n), cp.location, e_p, approach_radius, opts.trace);
  std::vector<double> found;
  for (int i = 0; i < n; ++i) {
    const Shot& s0 = shots[i];
    const Shot& s1 = shots[(i + 1) % n];
    if ((s0.functional > 0) == (s1.functional > 0)) continue;
    if (std::min(s0.closest, s1.closest) > 0.5 * a) continue;
    double t0 = 2 * kPi * i / n, t1 = 2 * kPi * (i + 1) / n;
    bool f0 = s0.functional > 0;
    Shot mid;
    for (int it = 0; it < 60 && t1 - t0 > 1e-15; ++it) {
      const double tm = 0.5 * (t0 + t1);
      mid = shoot(field, seed(tm), cp.location, e_p, approach_radius, opts.trace);
      if ((mid.functional > 0) == f0) {
        t0 = tm;
      } else {
        t1 = tm;
      }
    }
    mid = shoot(field, seed(0.5 * (t0 + t1)), cp.location, e_p, approach_radius, opts.trace);
    require(mid.closest < 1e-2 * a, ErrorKind::Resolution, "flow-line bisection did not reach the target point");
    const double th = 0.5 * (t0 + t1);
    bool dup = false;
    for (double o : found) dup = dup || std::abs(o - th) < 1e-9;
    if (dup) continue;
    found.push_back(th);
    const double angle = std::abs(cross(mid.approach, e_p));
    require(angle > 0.1, ErrorKind::MorseSmaleViolation, "flow line meets an unstable curve tangentially");
    out.push_back({sq * (cross(mid.approach, e_p) > 0 ? 1 : -1), mid.approach, angle});
  }
  return out;
}

int connection_count(const PseudoGradientField& field, int q, int p, const Frames& frames,
                     const ConnectionOptions& opts) {
  int n = 0;
  for (const auto& c : connections(field, q, p, frames, opts)) n += c.sign;
  return n;
}

// ---------------------------------------------------------------------------
// Complex

ThomSmaleComplex build_thom_smale_complex(const PseudoGradientField& field, const ConnectionOptions& opts) {
  return build_thom_smale_complex(field, default_frames(field), opts);
}

ThomSmaleComplex build_thom_smale_complex(const PseudoGradientField& field, const Frames& frames,
                                          const ConnectionOptions& opts) {
  const auto& zeros = field.zeros();
  require(frames.size() == zeros.size(), ErrorKind::InvalidInput, "one frame per zero required");
  ThomSmaleComplex cx;
  for (std::size_t i = 0; i < zeros.size(); ++i) {
    cx.generators[zeros[i].index].push_back(zeros[i]);
    cx.zero_index[zeros[i].index].push_back(static_cast<int>(i));
    cx.frames[zeros[i].index].push_back(frames[i]);
  }
  for (int j = 0; j < 2; ++j) {
    const auto& rows = cx.zero_index[j + 1];
    const auto& cols = cx.zero_index[j];
    cx.boundary[j].assign(rows.size(), std::vector<std::int64_t>(cols.size(), 0));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c)
        cx.boundary[j][r][c] = connection_count(field, rows[r], cols[c], frames, opts);
  }
  require(boundary_squared_zero(cx), ErrorKind::ComplexInconsistency, "boundary map does not square to zero");
  return cx;
}

ThomSmaleComplex relative_complex(const ThomSmaleComplex& m) {
  ThomSmaleComplex r;
  r.relative = true;
  for (int j = 0; j < 3; ++j) {
    r.generators[j] = m.generators[2 - j];
    r.zero_index[j] = m.zero_index[2 - j];
    r.frames[j] = m.frames[2 - j];
  }
  for (int j = 0; j < 2; ++j) {
    const auto& src = m.boundary[1 - j];  // |C^{2-j}| × |C^{1-j}|
    const std::size_t rows = r.generators[j + 1].size(), cols = r.generators[j].size();
    r.boundary[j].assign(rows, std::vector<std::int64_t>(cols, 0));
    for (std::size_t a = 0; a < rows; ++a)
      for (std::size_t b = 0; b < cols; ++b) r.boundary[j][a][b] = src[b][a];
  }
  r.diagnostics = m.diagnostics;
  return r;
}

bool boundary_squared_zero(const ThomSmaleComplex& cx) {
  const auto& d0 = cx.boundary[0];
  const auto& d1 = cx.boundary[1];
  for (std::size_t i = 0; i < d1.size(); ++i)
    for (std::size_t k = 0; k < cx.generators[0].size(); ++k) {
      std::int64_t s = 0;
      for (std::size_t j = 0; j < d0.size(); ++j) s += d1[i][j] * d0[j][k];
      if (s != 0) return false;
    }
  return true;
}

HomologyRanks homology_ranks(const ThomSmaleComplex& cx) {
  HomologyRanks h;
  std::array<int, 2> r{};
  for (int j = 0; j < 2; ++j) {
    const auto snf = homology::smith_normal_form(cx.boundary[j]);
    r[j] = snf.rank();
    for (auto d : snf.diagonal)
      if (d > 1) h.torsion.push_back(d);
  }
  h.betti[0] = cx.rank(0) - r[0];
  h.betti[1] = cx.rank(1) - r[0] - r[1];
  h.betti[2] = cx.rank(2) - r[1];
  return h;
}

std::array<int, 3> generator_counts(const MorseCounts& m, Mode mode) {
  if (mode == Mode::Absolute) return {m.c[0] + m.p[0], m.c[1] + m.p[1], m.c[2]};
  return {m.c[0], m.c[1] + m.q[0], m.c[2] + m.q[1]};
}

InequalityReport morse_inequalities(const MorseCounts& counts, const std::array<int, 3>& betti, Mode mode) {
  const auto m = generator_counts(counts, mode);
  InequalityReport rep;
  rep.all_hold = true;
  for (int k = 0; k < 3; ++k) {
    InequalityVerdict v;
    v.k = k;
    for (int j = 0; j <= k; ++j) {
      const int s = ((k - j) % 2 == 0) ? 1 : -1;
      v.lhs += s * betti[j];
      v.rhs += s * m[j];
    }
    v.holds = v.lhs <= v.rhs;
    rep.all_hold = rep.all_hold && v.holds;
    rep.verdicts.push_back(v);
  }
  rep.equality_at_top = rep.verdicts.back().lhs == rep.verdicts.back().rhs;
  rep.all_hold = rep.all_hold && rep.equality_at_top;
  return rep;
}

}  // namespace wml::morse
