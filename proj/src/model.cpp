#include "wml/model.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "wml/error.hpp"

namespace wml::model {

using Triplet = Eigen::Triplet<double>;

double ModelKernel::profile(const std::vector<double>& Z) const {
  require(static_cast<int>(Z.size()) == n, ErrorKind::InvalidInput, "point dimension mismatch");
  double q = 0.0;
  const int tangential = halfspace ? n - 1 : n;
  for (int i = 0; i < tangential; ++i) q += Z[i] * Z[i];
  double e = -0.5 * T * q;
  if (halfspace) e -= T * Z[n - 1];
  return std::exp(e);
}

double ModelKernel::normal_derivative(const std::vector<double>& Z) const {
  const double v = profile(Z);
  return halfspace ? -T * v : -T * Z[n - 1] * v;
}

ModelKernel euclidean_kernel(int n, int j, double T) {
  require(n >= 1, ErrorKind::InvalidInput, "dimension must be positive");
  require(j >= 0 && j <= n, ErrorKind::InvalidInput, "degree out of range");
  require(T > 0, ErrorKind::InvalidInput, "T must be positive");
  ModelKernel k{n, j, T, false, {}};
  for (int i = 1; i <= j; ++i) k.form_part.push_back(i);
  return k;
}

ModelKernel halfspace_kernel(int n, int j, double T) {
  require(n >= 1, ErrorKind::InvalidInput, "dimension must be positive");
  require(j >= 0 && j <= n - 1, ErrorKind::InvalidInput, "half-space kernel has no e^n component; need j < n");
  require(T > 0, ErrorKind::InvalidInput, "T must be positive");
  ModelKernel k{n, j, T, true, {}};
  for (int i = 1; i <= j; ++i) k.form_part.push_back(i);
  return k;
}

namespace {

// Symmetric tridiagonal pencil h·(A, diag(w)).
Oracle1D tridiagonal(const std::vector<double>& diag, double off, const std::vector<double>& weights) {
  Oracle1D o;
  const auto n = static_cast<Eigen::Index>(diag.size());
  std::vector<Triplet> a, m;
  for (Eigen::Index i = 0; i < n; ++i) {
    a.emplace_back(i, i, diag[i]);
    if (i + 1 < n) {
      a.emplace_back(i, i + 1, off);
      a.emplace_back(i + 1, i, off);
    }
    m.emplace_back(i, i, weights[i]);
  }
  o.A.resize(n, n);
  o.A.setFromTriplets(a.begin(), a.end());
  o.M.resize(n, n);
  o.M.setFromTriplets(m.begin(), m.end());
  return o;
}

int cells(double length, double h) {
  require(h > 0 && length > 0, ErrorKind::InvalidInput, "grid spacing and length must be positive");
  const int n = static_cast<int>(std::lround(length / h));
  require(n >= 4, ErrorKind::InvalidInput, "grid too coarse");
  return n;
}

}  // namespace

Oracle1D oscillator_1d(double T, double L, double h) {
  require(T > 0, ErrorKind::InvalidInput, "T must be positive");
  require(T * L * L >= 25.0, ErrorKind::ContractViolation, "truncation contract T·L² ≥ 25 violated");
  const int N = cells(2.0 * L, h);
  const double hh = 2.0 * L / N;
  std::vector<double> diag, w, z;
  for (int i = 1; i < N; ++i) {
    const double x = -L + i * hh;
    z.push_back(x);
    diag.push_back(hh * (2.0 / (hh * hh) + T * T * x * x - T));
    w.push_back(hh);
  }
  Oracle1D o = tridiagonal(diag, -1.0 / hh, w);
  o.z = z;
  o.T = T;
  o.h = hh;
  o.L = L;
  return o;
}

Oracle1D robin_halfline(double T, double L, double h, RobinClosure closure) {
  require(T > 0, ErrorKind::InvalidInput, "T must be positive");
  require(T * L >= 12.0, ErrorKind::ContractViolation, "truncation contract T·L ≥ 12 violated");
  const int N = cells(L, h);
  const double hh = L / N;
  // Ghost value u_{-1} = u_1 + 2h·s·u_0, then the first row is halved to keep the pencil symmetric.
  double slope = hh * T;
  if (closure == RobinClosure::Stencil) slope = std::sinh(std::acosh(1.0 + 0.5 * hh * hh * T * T));
  std::vector<double> diag, w, z;
  for (int i = 0; i < N; ++i) {
    z.push_back(i * hh);
    if (i == 0) {
      diag.push_back(hh * ((1.0 - slope) / (hh * hh) + 0.5 * T * T));
      w.push_back(0.5 * hh);
    } else {
      diag.push_back(hh * (2.0 / (hh * hh) + T * T));
      w.push_back(hh);
    }
  }
  Oracle1D o = tridiagonal(diag, -1.0 / hh, w);
  o.z = z;
  o.T = T;
  o.h = hh;
  o.L = L;
  return o;
}

Oracle1D dirichlet_halfline(double T, double L, double h) {
  require(T > 0, ErrorKind::InvalidInput, "T must be positive");
  require(T * L >= 12.0, ErrorKind::ContractViolation, "truncation contract T·L ≥ 12 violated");
  const int N = cells(L, h);
  const double hh = L / N;
  std::vector<double> diag, w, z;
  for (int i = 1; i < N; ++i) {
    z.push_back(i * hh);
    diag.push_back(hh * (2.0 / (hh * hh) + T * T));
    w.push_back(hh);
  }
  Oracle1D o = tridiagonal(diag, -1.0 / hh, w);
  o.z = z;
  o.T = T;
  o.h = hh;
  o.L = L;
  return o;
}

spectral::EigenResult oracle_eigenpairs(const Oracle1D& oracle, int k, std::uint64_t seed) {
  spectral::SparsePencil pencil(oracle.A, oracle.M);
  spectral::SolverOptions opts;
  opts.seed = seed;
  return spectral::lowest_eigenpairs(pencil, k, opts);
}

double cutoff(double r, double a) {
  const double t = (r - a) / a;
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kPi = std::numbers::pi;

struct LocalModel {
  double scale_u = 0.0;  // curvature of the Gaussian along the form direction
  // Coordinate along the form direction: the frame line inside, signed arclength along the boundary.
  std::function<double(const Vec2&)> coord;
  // Squared profile for the continuum normalization.
  std::function<double(const Vec2&)> profile;
};

// Signed arclength from p to the projection of x on p's loop; straight-line fallback off that loop.
double boundary_arclength(const morse::CriticalPoint& p, const Vec2& tau, const morse::SurfaceDomain& domain,
                          const Vec2& x) {
  const auto pr = domain.project(x);
  if (static_cast<int>(pr.loop) != p.loop) return (x - p.location).dot(tau);
  const auto& loop = domain.loop(pr.loop);
  double dt = std::remainder(pr.param - p.param, loop.period);
  return dt * loop.tangent(p.param).norm();
}

LocalModel local_model(const morse::CriticalPoint& p, const std::vector<Vec2>& frame, double T,
                       const morse::SurfaceDomain& domain) {
  LocalModel m;
  if (p.kind == morse::CriticalKind::Interior) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(p.hessian);
    const Vec2 mu = es.eigenvalues().cwiseAbs();
    const Mat2 v = es.eigenvectors();
    const Vec2 c = p.location;
    m.profile = [=](const Vec2& x) {
      const Vec2 z = v.transpose() * (x - c);
      return std::exp(-0.5 * T * (mu(0) * z(0) * z(0) + mu(1) * z(1) * z(1)));
    };
    if (p.index == 1) {
      const Vec2 u = frame.at(0).normalized();
      m.coord = [=](const Vec2& x) { return (x - c).dot(u); };
      m.scale_u = std::abs(u.dot(p.hessian * u));
    }
  } else {
    const double g = -p.normal_derivative;
    const double mu = std::abs(p.tangential_second);
    const Vec2 tau = domain.loop(static_cast<std::size_t>(p.loop)).unit_tangent(p.param);
    m.profile = [=, &domain](const Vec2& x) {
      const double rho = domain.project(x).distance;
      const double s = boundary_arclength(p, tau, domain, x);
      return std::exp(-T * (0.5 * mu * s * s + g * rho));
    };
    if (p.index == 1) {
      const double sign = frame.at(0).dot(tau) >= 0 ? 1.0 : -1.0;
      m.coord = [=, &domain](const Vec2& x) { return sign * boundary_arclength(p, tau, domain, x); };
      m.scale_u = mu;
    }
  }
  return m;
}

// ∫γ²·profile² over the domain part of B(p, 2a) on a polar product grid.
double continuum_norm(const LocalModel& m, const Vec2& c, double a, const morse::SurfaceDomain& domain) {
  static const double gx[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
                               0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
  static const double gw[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
                               0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  const int radial_panels = 32;
  const int angular = 512;
  const double R = 2.0 * a;
  double sum = 0.0;
  for (int panel = 0; panel < radial_panels; ++panel) {
    const double r0 = R * panel / radial_panels, r1 = R * (panel + 1) / radial_panels;
    for (int q = 0; q < 8; ++q) {
      const double r = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * gx[q];
      const double wr = 0.5 * (r1 - r0) * gw[q] * r;
      const double g = cutoff(r, a);
      double ring = 0.0;
      for (int k = 0; k < angular; ++k) {
        const double th = 2.0 * kPi * (k + 0.5) / angular;
        const Vec2 x = c + r * Vec2(std::cos(th), std::sin(th));
        if (!domain.inside(x)) continue;
        const double v = m.profile(x);
        ring += v * v;
      }
      sum += wr * g * g * ring * 2.0 * kPi / angular;
    }
  }
  return sum;
}

// Primitive of e^{-κt²}.
double gauss_primitive(double t, double kappa) {
  const double s = std::sqrt(kappa);
  return 0.5 * std::sqrt(kPi) / s * std::erf(s * t);
}

}  // namespace

Quasimode quasimode(const morse::CriticalPoint& p, const std::vector<Vec2>& frame, double T, double a,
                    const morse::SurfaceDomain& domain, const dec::WittenAssembly& as) {
  require(T > 0, ErrorKind::InvalidInput, "T must be positive");
  require(a > 0, ErrorKind::InvalidInput, "cutoff radius must be positive");
  require(p.kind != morse::CriticalKind::BoundaryPlus, ErrorKind::InvalidInput,
          "boundary points with outward-increasing f carry no absolute quasimode");
  const geometry::TriMesh& mesh = *as.mesh;
  require(mesh.h * std::sqrt(T) <= 0.5, ErrorKind::Resolution, "mesh does not resolve the quasimode scale (h·sqrt(T) > 0.5)");

  Quasimode q;
  q.point = p;
  q.degree = p.index;
  q.T = T;
  q.a = a;
  const int deg = q.degree;
  const LocalModel lm = local_model(p, frame, T, domain);
  q.alpha = continuum_norm(lm, p.location, a, domain);

  const auto& f = as.f_bar[deg];
  const double fp = p.f_value;
  const Vec2 c = p.location;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.count(deg)));
  // Each representative is killed exactly by the discrete d_T (degrees 0, 1) or its adjoint (degree 2)
  // away from the cutoff annulus.
  if (deg == 0) {
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      const double g = cutoff((mesh.vertices[v] - c).norm(), a);
      if (g > 0) full(static_cast<Eigen::Index>(v)) = g * std::exp(-T * (f(static_cast<Eigen::Index>(v)) - fp));
    }
  } else if (deg == 1) {
    const double kappa = T * lm.scale_u;
    require(kappa > 0, ErrorKind::InvalidInput, "degenerate unstable direction");
    for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
      const Vec2 xa = mesh.vertices[mesh.edges[e][0]], xb = mesh.vertices[mesh.edges[e][1]];
      const double g = cutoff((0.5 * (xa + xb) - c).norm(), a);
      if (g <= 0) continue;
      const double prim = gauss_primitive(lm.coord(xb), kappa) - gauss_primitive(lm.coord(xa), kappa);
      full(static_cast<Eigen::Index>(e)) = g * std::exp(-T * (f(static_cast<Eigen::Index>(e)) - fp)) * prim;
    }
  } else {
    require(frame.size() == 2, ErrorKind::InvalidInput, "index-2 point needs two frame vectors");
    const double orient = frame[0].x() * frame[1].y() - frame[0].y() * frame[1].x() > 0 ? 1.0 : -1.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const double g = cutoff((mesh.barycenter(2, t) - c).norm(), a);
      if (g <= 0) continue;
      full(static_cast<Eigen::Index>(t)) =
          orient * g * mesh.triangle_area(t) * std::exp(T * (f(static_cast<Eigen::Index>(t)) - fp));
    }
  }
  q.cochain = as.restrict(deg, full);
  const SparseMatrix m = as.free_mass(deg);
  const double norm2 = q.cochain.dot(m * q.cochain);
  require(norm2 > 0, ErrorKind::Resolution, "quasimode has no support on free dofs");
  q.cochain /= std::sqrt(norm2);
  return q;
}

double quasimode_residual(const Quasimode& q, const dec::WittenAssembly& as, double T) {
  dec::WittenOperator op(as, T, q.degree);
  Eigen::VectorXd ax, mx;
  op.apply_A(q.cochain, ax);
  op.apply_M(q.cochain, mx);
  return q.cochain.dot(ax) / q.cochain.dot(mx);
}

double mass_outside(const Quasimode& q, const dec::WittenAssembly& as, double r) {
  const auto& dofs = as.free_dofs[q.degree];
  Eigen::VectorXd out = q.cochain;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if ((as.mesh->barycenter(q.degree, static_cast<std::size_t>(dofs[i])) - q.point.location).norm() <= r) out(i) = 0.0;
  const SparseMatrix m = as.free_mass(q.degree);
  return out.dot(m * out) / q.cochain.dot(m * q.cochain);
}

double inner(const Quasimode& a, const Quasimode& b, const dec::WittenAssembly& as) {
  require(a.degree == b.degree, ErrorKind::InvalidInput, "quasimodes of different degree");
  const SparseMatrix m = as.free_mass(a.degree);
  return a.cochain.dot(m * b.cochain);
}

}  // namespace wml::model
