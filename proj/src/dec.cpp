#include "wml/dec.hpp"

#include <cmath>
#include <ostream>

#include "wml/error.hpp"
#include "wml/spectral.hpp"

namespace wml::dec {

using Triplet = Eigen::Triplet<double>;

const char* to_string(BoundaryCondition bc) { return bc == BoundaryCondition::Absolute ? "absolute" : "relative"; }

BoundaryCondition parse_bc(const std::string& s) {
  if (s == "absolute") return BoundaryCondition::Absolute;
  if (s == "relative") return BoundaryCondition::Relative;
  fail(ErrorKind::Configuration, "unknown boundary condition '" + s + "'");
}

Eigen::Matrix3d whitney_edge_mass(const Vec2& a, const Vec2& b, const Vec2& c) {
  const std::array<Vec2, 3> x{a, b, c};
  const double area = 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
  std::array<Vec2, 3> grad;
  for (int i = 0; i < 3; ++i) {
    const Vec2 e = x[(i + 2) % 3] - x[(i + 1) % 3];
    grad[i] = Vec2(-e.y(), e.x()) / (2.0 * area);
  }
  auto G = [&](int p, int q) { return grad[p].dot(grad[q]); };
  auto L = [&](int p, int q) { return area / 12.0 * (p == q ? 2.0 : 1.0); };
  Eigen::Matrix3d m;
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 3; ++t) {
      const int i = (s + 1) % 3, j = (s + 2) % 3;
      const int k = (t + 1) % 3, l = (t + 2) % 3;
      m(s, t) = L(i, k) * G(j, l) - L(i, l) * G(j, k) - L(j, k) * G(i, l) + L(j, l) * G(i, k);
    }
  return m;
}

namespace {

WittenAssembly assemble_impl(const geometry::TriMesh& mesh, const morse::MorseFunction& f, BoundaryCondition bc,
                             bool parallel) {
  WittenAssembly as;
  as.mesh = &mesh;
  as.bc = bc;
  as.d = {mesh.incidence(0), mesh.incidence(1)};
  const int nt = static_cast<int>(mesh.triangles.size());
  for (int t = 0; t < nt; ++t)
    require(mesh.triangle_area(t) > 1e-14 * mesh.h * mesh.h, ErrorKind::MeshQuality, "degenerate triangle");

  // Fixed per-triangle slots keep the summation order independent of the thread count.
  std::vector<Triplet> m0(9 * static_cast<std::size_t>(nt)), m1(9 * static_cast<std::size_t>(nt));
#pragma omp parallel for schedule(static) if (parallel)
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    const Eigen::Matrix3d w =
        whitney_edge_mass(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    const auto& te = mesh.triangle_edges[t];
    const auto& ts = mesh.triangle_edge_signs[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        m0[9 * t + 3 * i + j] = Triplet(tri[i], tri[j], area / 12.0 * (i == j ? 2.0 : 1.0));
        m1[9 * t + 3 * i + j] = Triplet(te[i], te[j], ts[i] * ts[j] * w(i, j));
      }
  }
  const auto nv = static_cast<Eigen::Index>(mesh.vertices.size());
  const auto ne = static_cast<Eigen::Index>(mesh.edges.size());
  as.mass[0].resize(nv, nv);
  as.mass[0].setFromTriplets(m0.begin(), m0.end());
  as.mass[1].resize(ne, ne);
  as.mass[1].setFromTriplets(m1.begin(), m1.end());
  std::vector<Triplet> m2;
  m2.reserve(nt);
  for (int t = 0; t < nt; ++t) m2.emplace_back(t, t, 1.0 / mesh.triangle_area(t));
  as.mass[2].resize(nt, nt);
  as.mass[2].setFromTriplets(m2.begin(), m2.end());

  for (int k = 0; k < 3; ++k) {
    const auto n = static_cast<Eigen::Index>(mesh.count(k));
    as.f_bar[k].resize(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (Eigen::Index i = 0; i < n; ++i) as.f_bar[k](i) = f.value(mesh.barycenter(k, static_cast<std::size_t>(i)));
    for (Eigen::Index i = 0; i < n; ++i)
      if (bc == BoundaryCondition::Absolute || !mesh.is_boundary(k, static_cast<std::size_t>(i)))
        as.free_dofs[k].push_back(static_cast<int>(i));
  }
  as.f_max = std::max({as.f_bar[0].maxCoeff(), as.f_bar[1].maxCoeff(), as.f_bar[2].maxCoeff()});
  return as;
}

SparseMatrix select(const SparseMatrix& a, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> rmap(static_cast<std::size_t>(a.rows()), -1), cmap(static_cast<std::size_t>(a.cols()), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) rmap[rows[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < cols.size(); ++i) cmap[cols[i]] = static_cast<int>(i);
  std::vector<Triplet> trip;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it)
      if (rmap[it.row()] >= 0 && cmap[it.col()] >= 0) trip.emplace_back(rmap[it.row()], cmap[it.col()], it.value());
  SparseMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace

WittenAssembly assemble(const geometry::TriMesh& mesh, const morse::MorseFunction& f, BoundaryCondition bc) {
  return assemble_impl(mesh, f, bc, true);
}

WittenAssembly assemble_serial(const geometry::TriMesh& mesh, const morse::MorseFunction& f, BoundaryCondition bc) {
  return assemble_impl(mesh, f, bc, false);
}

Eigen::VectorXd WittenAssembly::weights(int k, double T) const {
  Eigen::VectorXd w(dim(k));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::exp(T * (f_bar[k](free_dofs[k][i]) - f_max));
  return w;
}

SparseMatrix WittenAssembly::free_mass(int k) const { return select(mass[k], free_dofs[k], free_dofs[k]); }

SparseMatrix WittenAssembly::free_incidence(int k) const { return select(d[k], free_dofs[k + 1], free_dofs[k]); }

Eigen::VectorXd WittenAssembly::expand(int k, const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh->count(k)));
  for (Eigen::Index i = 0; i < v.size(); ++i) out(free_dofs[k][i]) = v(i);
  return out;
}

Eigen::VectorXd WittenAssembly::restrict(int k, const Eigen::VectorXd& full) const {
  Eigen::VectorXd out(dim(k));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = full(free_dofs[k][i]);
  return out;
}

SparseMatrix deformed_derivative(const WittenAssembly& as, double T, int k) {
  require(k == 0 || k == 1, ErrorKind::InvalidInput, "deformed_derivative: degree must be 0 or 1");
  SparseMatrix d = as.free_incidence(k);
  const auto& rows = as.free_dofs[k + 1];
  const auto& cols = as.free_dofs[k];
  for (int c = 0; c < d.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(d, c); it; ++it) {
      const double expo = T * (as.f_bar[k](cols[it.col()]) - as.f_bar[k + 1](rows[it.row()]));
      require(expo < 700.0, ErrorKind::Overflow,
              "deformation weight overflow; rescale f by subtracting its maximum or lower T");
      it.valueRef() *= std::exp(expo);
    }
  return d;
}

// ---------------------------------------------------------------------------

WittenOperator::WittenOperator(const WittenAssembly& as, double T, int degree) : k_(degree), T_(T) {
  require(degree >= 0 && degree <= 2, ErrorKind::InvalidInput, "degree out of range");
  n_ = as.dim(k_);
  require(n_ > 0, ErrorKind::InvalidInput, "no free dofs in this degree");
  M_ = as.free_mass(k_);
  if (k_ < 2) {
    const SparseMatrix dk = deformed_derivative(as, T, k_);
    const SparseMatrix mk1 = as.free_mass(k_ + 1);
    K_ = SparseMatrix(dk.transpose()) * (mk1 * dk);
  } else {
    K_.resize(n_, n_);
  }
  if (k_ > 0) {
    m_ = as.dim(k_ - 1);
    const SparseMatrix dl = deformed_derivative(as, T, k_ - 1);
    B_ = M_ * dl;
    Mlow_ = as.free_mass(k_ - 1);
    low_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(Mlow_);
    require(low_->info() == Eigen::Success, ErrorKind::SolverNonConvergence, "mass factorization failed");
  }
}

void WittenOperator::apply_A(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
  y = K_ * x;
  if (k_ > 0) {
    const Eigen::VectorXd t = low_->solve(B_.transpose() * x);
    y += B_ * t;
  }
}

void WittenOperator::apply_M(const Eigen::VectorXd& x, Eigen::VectorXd& y) const { y = M_ * x; }

void WittenOperator::factorize(double sigma) {
  if (k_ == 0) {
    shifted_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(SparseMatrix(K_ + sigma * M_));
  } else {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(Mlow_.nonZeros() + 2 * B_.nonZeros() + K_.nonZeros() + M_.nonZeros()));
    for (int c = 0; c < Mlow_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(Mlow_, c); it; ++it) trip.emplace_back(it.row(), it.col(), -it.value());
    for (int c = 0; c < B_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(B_, c); it; ++it) {
        trip.emplace_back(m_ + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), m_ + it.row(), it.value());
      }
    const SparseMatrix br = K_ + sigma * M_;
    for (int c = 0; c < br.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(br, c); it; ++it) trip.emplace_back(m_ + it.row(), m_ + it.col(), it.value());
    SparseMatrix big(m_ + n_, m_ + n_);
    big.setFromTriplets(trip.begin(), trip.end());
    shifted_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(big);
  }
  require(shifted_->info() == Eigen::Success, ErrorKind::SolverNonConvergence, "shifted factorization failed");
}

void WittenOperator::solve(const Eigen::VectorXd& b, Eigen::VectorXd& x) const {
  require(shifted_ != nullptr, ErrorKind::ContractViolation, "solve before factorize");
  if (k_ == 0) {
    x = shifted_->solve(b);
    return;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_ + n_);
  rhs.tail(n_) = b;
  x = shifted_->solve(rhs).tail(n_);
}

bool WittenOperator::shifted_definite() const {
  if (!shifted_) return false;
  // Sylvester: the block factor has m negative pivots exactly when the Schur complement A + σM is definite.
  const Eigen::VectorXd& d = shifted_->vectorD();
  Eigen::Index neg = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) == 0.0) return false;
    if (d(i) < 0.0) ++neg;
  }
  return neg == m_;
}

QuadraticForm witten_quadratic_form(const WittenAssembly& as, double T, int degree) {
  const WittenOperator op(as, T, degree);
  QuadraticForm q;
  q.M = op.mass();
  q.A = Eigen::MatrixXd(op.up());
  if (degree > 0) {
    const SparseMatrix mlow = as.free_mass(degree - 1);
    const Eigen::SimplicialLDLT<SparseMatrix> solver(mlow);
    const Eigen::MatrixXd bt = Eigen::MatrixXd(SparseMatrix(op.coupling().transpose()));
    q.A += op.coupling() * solver.solve(bt);
  }
  q.A = 0.5 * (q.A + q.A.transpose());
  return q;
}

// ---------------------------------------------------------------------------

HodgeBetti hodge_betti(const WittenAssembly& as, double separation, std::uint64_t seed) {
  HodgeBetti out;
  for (int k = 0; k < 3; ++k) {
    if (as.dim(k) == 0) continue;
    WittenOperator op(as, 0.0, k);
    spectral::SolverOptions opts;
    opts.seed = seed;
    int want = 4;
    for (;;) {
      const auto res = spectral::lowest_eigenpairs(op, std::min<Eigen::Index>(want, op.dim()), opts);
      const double floor = 1e-9 * std::max(1.0, res.a_norm);
      int kernel = 0;
      while (kernel < res.values.size() && res.values(kernel) < floor) ++kernel;
      if (kernel == res.values.size() && res.values.size() < op.dim()) {
        want *= 2;
        continue;
      }
      out.betti[k] = kernel;
      out.max_kernel[k] = kernel > 0 ? std::max(0.0, res.values(kernel - 1)) : 0.0;
      out.first_nonzero[k] = kernel < res.values.size() ? res.values(kernel) : 0.0;
      if (kernel > 0 && kernel < res.values.size())
        require(out.max_kernel[k] <= separation * out.first_nonzero[k], ErrorKind::Resolution,
                "no spectral separation between kernel and the rest");
      break;
    }
  }
  return out;
}

void write_triplets(const SparseMatrix& a, std::ostream& out) {
  out.precision(17);
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  for (int c = 0; c < a.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace wml::dec
