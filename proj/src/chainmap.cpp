#include "wml/chainmap.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "wml/error.hpp"
#include "wml/homology.hpp"

namespace wml::chainmap {

namespace {

using geometry::PointLocator;
using geometry::TriMesh;

struct LocalFrame {
  std::array<double, 3> bary;
  std::array<Vec2, 3> grad;
  double area;
};

LocalFrame local_frame(const TriMesh& mesh, int t, const Vec2& x) {
  const auto& tri = mesh.triangles[t];
  const std::array<Vec2, 3> v{mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
  LocalFrame lf;
  lf.area = mesh.triangle_area(static_cast<std::size_t>(t));
  for (int i = 0; i < 3; ++i) {
    const Vec2 e = v[(i + 2) % 3] - v[(i + 1) % 3];
    lf.grad[i] = Vec2(-e.y(), e.x()) / (2.0 * lf.area);
    lf.bary[i] = 0.0;
  }
  // λ_i(x) = 1 + ∇λ_i·(x − v_i)
  for (int i = 0; i < 3; ++i) lf.bary[i] = 1.0 + lf.grad[i].dot(x - v[i]);
  return lf;
}

Vec2 whitney_one(const TriMesh& mesh, const Eigen::VectorXd& c, int t, const Vec2& x) {
  const LocalFrame lf = local_frame(mesh, t, x);
  Vec2 w = Vec2::Zero();
  for (int i = 0; i < 3; ++i) {
    const int a = (i + 1) % 3, b = (i + 2) % 3;
    const double coef = c(mesh.triangle_edges[t][i]) * mesh.triangle_edge_signs[t][i];
    w += coef * (lf.bary[a] * lf.grad[b] - lf.bary[b] * lf.grad[a]);
  }
  return w;
}

double segment_integral(const PointLocator& loc, const Eigen::VectorXd& c, const Vec2& x0, const Vec2& x1, int t0,
                        int t1, int depth) {
  const TriMesh& mesh = loc.mesh();
  const Vec2 mid = 0.5 * (x0 + x1);
  // The Whitney 1-form is affine on a triangle, so the midpoint rule is exact on a segment inside one.
  if (t0 == t1 || depth >= 40) return whitney_one(mesh, c, t0, mid).dot(x1 - x0);
  const int tm = loc.locate(mid).triangle;
  return segment_integral(loc, c, x0, mid, t0, tm, depth + 1) + segment_integral(loc, c, mid, x1, tm, t1, depth + 1);
}

double frame_sign(const morse::Frame& frame, const morse::UnstableCell& cell) {
  switch (cell.dimension) {
    case 0:
      return frame.point_sign;
    case 1:
      return frame.basis.at(0).dot(cell.frame.at(0)) >= 0 ? 1.0 : -1.0;
    default:
      return static_cast<double>(frame.orientation() * cell.patch_orientation);
  }
}

}  // namespace

double integrate_over_unstable(const Eigen::VectorXd& c, int degree, const morse::UnstableCell& cell,
                               const PointLocator& loc) {
  require(degree == cell.dimension, ErrorKind::InvalidInput, "cochain degree differs from the cell dimension");
  const TriMesh& mesh = loc.mesh();
  require(c.size() == static_cast<Eigen::Index>(mesh.count(degree)), ErrorKind::InvalidInput,
          "cochain length does not match the mesh");
  if (degree == 0) {
    const auto hit = loc.locate(cell.point);
    const auto& tri = mesh.triangles[hit.triangle];
    const LocalFrame lf = local_frame(mesh, hit.triangle, cell.point);
    return lf.bary[0] * c(tri[0]) + lf.bary[1] * c(tri[1]) + lf.bary[2] * c(tri[2]);
  }
  if (degree == 1) {
    require(cell.curve.size() >= 2, ErrorKind::InvalidInput, "curve cell needs at least two points");
    double sum = 0.0;
    int prev = loc.locate(cell.curve[0]).triangle;
    for (std::size_t i = 0; i + 1 < cell.curve.size(); ++i) {
      const int next = loc.locate(cell.curve[i + 1]).triangle;
      sum += segment_integral(loc, c, cell.curve[i], cell.curve[i + 1], prev, next, 0);
      prev = next;
    }
    return sum;
  }
  double sum = 0.0;
  for (const auto& p : cell.patch) {
    const double area = 0.5 * ((p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x());
    double dens = 0.0;
    for (int q = 0; q < 3; ++q) {
      const Vec2 x = 0.5 * (p[q] + p[(q + 1) % 3]);
      const int t = loc.locate(x).triangle;
      dens += c(t) / mesh.triangle_area(static_cast<std::size_t>(t)) / 3.0;
    }
    sum += area * dens;
  }
  return cell.patch_orientation * sum;
}

InstantonBasis instanton_basis(const dec::WittenAssembly& as, double T, double C0, const spectral::SolverOptions& opts) {
  InstantonBasis b;
  b.T = T;
  b.C0 = C0;
  b.bc = as.bc;
  std::vector<spectral::SolveTask> tasks;
  for (int k = 0; k < 3; ++k) tasks.push_back({T, k});
  const auto entries = spectral::solve_batch(as, tasks, C0, opts);
  for (int k = 0; k < 3; ++k) {
    const int n = spectral::count_below(entries[k], C0);
    b.values[k] = entries[k].result.values.head(n);
    b.vectors[k] = entries[k].result.vectors.leftCols(n);
  }
  return b;
}

CellSet unstable_cells(const morse::PseudoGradientField& field, const morse::ThomSmaleComplex& cx,
                       const TriMesh& mesh, const morse::TraceOptions& opts) {
  CellSet cells;
  std::vector<std::vector<std::array<Vec2, 3>>> basins;
  if (cx.rank(2) > 0) {
    morse::BasinOptions bo;
    bo.trace = opts;
    bo.trace.keep_points = false;
    basins = morse::classify_basins(field, mesh, bo);
  }
  for (int j = 0; j < 3; ++j)
    for (int z : cx.zero_index[j]) {
      if (j < 2) {
        cells[j].push_back(morse::unstable_manifold(field, z, &mesh, opts));
      } else {
        morse::UnstableCell cell;
        const auto& p = field.zeros()[z];
        cell.dimension = 2;
        cell.critical = z;
        cell.point = p.location;
        cell.frame = p.frame;
        cell.patch = basins[z];
        cell.patch_orientation = morse::Frame{p.frame, 1}.orientation();
        cells[2].push_back(std::move(cell));
      }
    }
  return cells;
}

Eigen::MatrixXd p_infinity_T(const InstantonBasis& basis, const dec::WittenAssembly& as,
                             const morse::ThomSmaleComplex& cx, const CellSet& cells, int j,
                             const PointLocator& loc) {
  const auto& U = basis.vectors[j];
  const int g = cx.rank(j);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(g, U.cols());
  if (g == 0 || U.cols() == 0) return P;
  const Eigen::VectorXd w = as.weights(j, basis.T);
  std::vector<Eigen::VectorXd> weighted(static_cast<std::size_t>(U.cols()));
  for (Eigen::Index i = 0; i < U.cols(); ++i) weighted[i] = as.expand(j, w.cwiseProduct(U.col(i)));
  const int total = g * static_cast<int>(U.cols());
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic)
  for (int idx = 0; idx < total; ++idx) {
    const int p = idx / static_cast<int>(U.cols());
    const int i = idx % static_cast<int>(U.cols());
    try {
      P(p, i) = frame_sign(cx.frames[j][p], cells[j][p]) * integrate_over_unstable(weighted[i], j, cells[j][p], loc);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return P;
}

Eigen::MatrixXd restricted_derivative(const InstantonBasis& basis, const dec::WittenAssembly& as, int j) {
  const auto& U0 = basis.vectors[j];
  const auto& U1 = basis.vectors[j + 1];
  if (U0.cols() == 0 || U1.cols() == 0) return Eigen::MatrixXd::Zero(U1.cols(), U0.cols());
  const SparseMatrix d = dec::deformed_derivative(as, basis.T, j);
  const SparseMatrix m = as.free_mass(j + 1);
  return U1.transpose() * (m * (d * U0));
}

namespace {

Eigen::MatrixXd to_matrix(const homology::IntMatrix& a, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows && r < static_cast<Eigen::Index>(a.size()); ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = static_cast<double>(a[r][c]);
  return out;
}

}  // namespace

double deformed_derivative_norm(const dec::WittenAssembly& as, double T, int j, std::uint64_t seed) {
  const SparseMatrix d = dec::deformed_derivative(as, T, j);
  const SparseMatrix m0 = as.free_mass(j), m1 = as.free_mass(j + 1);
  const Eigen::SimplicialLDLT<SparseMatrix> solver(m0);
  require(solver.info() == Eigen::Success, ErrorKind::SolverNonConvergence, "mass factorization failed");
  std::mt19937_64 rng(seed);
  Eigen::VectorXd x(d.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  double lambda = 0.0;
  // Power iteration on M_j⁻¹ d_Tᵀ M_{j+1} d_T in the M_j inner product.
  for (int it = 0; it < 200; ++it) {
    x /= std::sqrt(x.dot(m0 * x));
    const Eigen::VectorXd y = solver.solve(SparseMatrix(d.transpose()) * (m1 * (d * x)));
    const double next = x.dot(m0 * y);
    x = y;
    if (it > 10 && std::abs(next - lambda) <= 1e-6 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

double chain_commutation_residual(const std::array<Eigen::MatrixXd, 3>& P, const std::array<Eigen::MatrixXd, 2>& D,
                                  const std::array<double, 2>& dT_norm, const morse::ThomSmaleComplex& cx) {
  double worst = 0.0;
  for (int j = 0; j < 2; ++j) {
    const Eigen::MatrixXd del = to_matrix(cx.boundary[j], cx.rank(j + 1), cx.rank(j));
    if (P[j + 1].cols() != D[j].rows() || P[j].cols() != D[j].cols() || del.cols() != P[j].rows() ||
        del.rows() != P[j + 1].rows())
      fail(ErrorKind::InvalidInput, "commutation residual: mismatched dimensions");
    const double denom = P[j + 1].norm() * dT_norm[j] + del.norm() * P[j].norm();
    if (denom == 0.0) continue;
    worst = std::max(worst, (P[j + 1] * D[j] - del * P[j]).norm() / denom);
  }
  return worst;
}

std::vector<model::Quasimode> generator_quasimodes(const morse::ThomSmaleComplex& cx, int j, double T, double a,
                                                   const morse::SurfaceDomain& domain, const dec::WittenAssembly& as) {
  std::vector<model::Quasimode> out;
  for (int p = 0; p < cx.rank(j); ++p) {
    const auto& frame = cx.frames[j][p];
    model::Quasimode q = model::quasimode(cx.generators[j][p], frame.basis, T, a, domain, as);
    if (j == 0) q.cochain *= frame.point_sign;
    out.push_back(std::move(q));
  }
  return out;
}

Eigen::MatrixXd e_matrix(const InstantonBasis& basis, const dec::WittenAssembly& as, int j,
                         const std::vector<model::Quasimode>& qs) {
  const auto& U = basis.vectors[j];
  Eigen::MatrixXd E(U.cols(), static_cast<Eigen::Index>(qs.size()));
  if (U.cols() == 0 || qs.empty()) return E;
  const SparseMatrix m = as.free_mass(j);
  for (std::size_t p = 0; p < qs.size(); ++p) E.col(static_cast<Eigen::Index>(p)) = U.transpose() * (m * qs[p].cochain);
  return E;
}

Diagonal comparison_diagonal(const morse::ThomSmaleComplex& cx, int j, double T) {
  Diagonal d;
  for (const auto& p : cx.generators[j]) {
    double J = 1.0;
    if (p.kind == morse::CriticalKind::Interior) {
      Eigen::SelfAdjointEigenSolver<Mat2> es(p.hessian);
      for (int i = 0; i < 2; ++i) {
        const double mu = es.eigenvalues()(i);
        J *= mu < 0 ? std::pow(-mu, -0.25) : std::pow(mu, 0.25);
      }
      d.F.push_back(p.f_value);
      d.N.push_back(j);
    } else {
      const double mu = std::abs(p.tangential_second);
      J *= p.index == 1 ? std::pow(mu, -0.25) : std::pow(mu, 0.25);
      J *= std::sqrt(std::abs(p.normal_derivative));
      d.F.push_back(p.f_value + std::log(2.0 * std::numbers::pi) / (2.0 * T));
      d.N.push_back(j - 0.5);
    }
    d.J.push_back(J);
  }
  return d;
}

DegreeComparison verify_isomorphism(const Eigen::MatrixXd& P, const Eigen::MatrixXd& E, const Diagonal& diag,
                                    double T, double f_max, int degree, int n) {
  DegreeComparison out;
  out.degree = degree;
  out.F = diag.F;
  out.N = diag.N;
  const Eigen::Index g = P.rows();
  if (g == 0 && E.cols() == 0) {
    out.normalized.resize(0, 0);
    out.singular_values.resize(0);
    return out;
  }
  require(P.cols() == E.rows(), ErrorKind::InvalidInput, "P and E do not compose");
  Eigen::MatrixXd prod = P * E;
  if (prod.rows() != prod.cols()) {
    out.normalized = prod;
    out.isomorphic = false;
    return out;
  }
  out.predicted.resize(g);
  for (Eigen::Index p = 0; p < g; ++p) {
    out.predicted(p) = std::exp(T * (diag.F[p] - f_max)) *
                       std::pow(std::numbers::pi / T, diag.N[p] / 2.0 - n / 4.0) * diag.J[p];
    prod.row(p) /= out.predicted(p);
  }
  out.normalized = prod;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(prod);
  out.singular_values = svd.singularValues();
  Eigen::MatrixXd off = prod;
  off.diagonal().setZero();
  out.off_diagonal = off.norm();
  for (Eigen::Index p = 0; p < g; ++p) out.diagonal_error = std::max(out.diagonal_error, std::abs(prod(p, p) - 1.0));
  out.isomorphic = out.singular_values.size() == 0 || out.singular_values.minCoeff() > 0.5;
  return out;
}

std::array<int, 3> transported_betti(const std::array<Eigen::MatrixXd, 3>& P, const std::array<Eigen::MatrixXd, 2>& D) {
  std::array<int, 2> rank{};
  for (int j = 0; j < 2; ++j) {
    require(P[j].rows() == P[j].cols() && P[j + 1].rows() == P[j + 1].cols(), ErrorKind::InvalidInput,
            "transport needs square comparison maps");
    if (P[j].rows() == 0 || P[j + 1].rows() == 0) continue;
    const Eigen::MatrixXd rhs = P[j + 1] * D[j];
    // X P_j = rhs  ⇔  P_jᵀ Xᵀ = rhsᵀ
    const Eigen::MatrixXd X = P[j].transpose().fullPivLu().solve(rhs.transpose()).transpose();
    homology::IntMatrix m(static_cast<std::size_t>(X.rows()), std::vector<std::int64_t>(static_cast<std::size_t>(X.cols())));
    for (Eigen::Index r = 0; r < X.rows(); ++r)
      for (Eigen::Index c = 0; c < X.cols(); ++c) m[r][c] = std::llround(X(r, c));
    rank[j] = homology::smith_normal_form(m).rank();
  }
  return {static_cast<int>(P[0].rows()) - rank[0], static_cast<int>(P[1].rows()) - rank[0] - rank[1],
          static_cast<int>(P[2].rows()) - rank[1]};
}

Comparison compare(const morse::PseudoGradientField& field, const morse::ThomSmaleComplex& cx, const TriMesh& mesh,
                   double T, const ComparisonOptions& opts) {
  require(!cx.relative, ErrorKind::InvalidInput, "the comparison map is built in absolute mode");
  Comparison c;
  c.T = T;
  const dec::WittenAssembly as = dec::assemble(mesh, field.function(), dec::BoundaryCondition::Absolute);
  const InstantonBasis basis = instanton_basis(as, T, opts.C0, opts.solver);
  bool counts_match = true;
  for (int j = 0; j < 3; ++j)
    if (basis.vectors[j].cols() != cx.rank(j)) {
      counts_match = false;
      c.findings.push_back("degree " + std::to_string(j) + ": " + std::to_string(basis.vectors[j].cols()) +
                           " low eigenvalues for " + std::to_string(cx.rank(j)) + " generators");
    }
  const PointLocator loc(mesh);
  const CellSet cells = unstable_cells(field, cx, mesh, opts.trace);
  std::array<Eigen::MatrixXd, 2> D;
  for (int j = 0; j < 3; ++j) c.P[j] = p_infinity_T(basis, as, cx, cells, j, loc);
  for (int j = 0; j < 2; ++j) D[j] = restricted_derivative(basis, as, j);
  const std::array<double, 2> dT_norm{deformed_derivative_norm(as, T, 0, opts.solver.seed),
                                      deformed_derivative_norm(as, T, 1, opts.solver.seed)};
  c.residual = chain_commutation_residual(c.P, D, dT_norm, cx);
  c.complex_betti = morse::homology_ranks(cx).betti;

  c.isomorphic = counts_match;
  const double radius = opts.quasimode_radius > 0.0 ? opts.quasimode_radius : field.adaptation_radius();
  for (int j = 0; j < 3; ++j) {
    const auto qs = generator_quasimodes(cx, j, T, radius, field.domain(), as);
    c.E[j] = e_matrix(basis, as, j, qs);
    c.degrees[j] = verify_isomorphism(c.P[j], c.E[j], comparison_diagonal(cx, j, T), T, as.f_max, j);
    if (!c.degrees[j].isomorphic) {
      c.isomorphic = false;
      c.findings.push_back("degree " + std::to_string(j) + ": normalized product is singular");
    }
  }
  if (counts_match) {
    c.transported = transported_betti(c.P, D);
    if (c.transported != c.complex_betti) c.findings.push_back("transported homology differs from the complex");
  }
  return c;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(spectral::sig12(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

nlohmann::json to_json(const Comparison& c) {
  nlohmann::json j;
  j["T"] = spectral::sig12(c.T);
  j["residual"] = spectral::sig12(c.residual);
  j["isomorphic"] = c.isomorphic;
  j["complex_betti"] = c.complex_betti;
  j["transported_betti"] = c.transported;
  j["findings"] = c.findings;
  j["degrees"] = nlohmann::json::array();
  for (const auto& d : c.degrees) {
    nlohmann::json s = nlohmann::json::array();
    for (Eigen::Index i = 0; i < d.singular_values.size(); ++i) s.push_back(spectral::sig12(d.singular_values(i)));
    nlohmann::json pred = nlohmann::json::array(), F = nlohmann::json::array(), N = nlohmann::json::array();
    for (Eigen::Index i = 0; i < d.predicted.size(); ++i) pred.push_back(spectral::sig12(d.predicted(i)));
    for (double v : d.F) F.push_back(spectral::sig12(v));
    for (double v : d.N) N.push_back(spectral::sig12(v));
    j["degrees"].push_back({{"degree", d.degree},
                            {"P", matrix_json(c.P[d.degree])},
                            {"E", matrix_json(c.E[d.degree])},
                            {"F", F},
                            {"N", N},
                            {"predicted_diagonal", pred},
                            {"normalized", matrix_json(d.normalized)},
                            {"singular_values", s},
                            {"off_diagonal", spectral::sig12(d.off_diagonal)},
                            {"diagonal_error", spectral::sig12(d.diagonal_error)},
                            {"isomorphic", d.isomorphic}});
  }
  return j;
}

}  // namespace wml::chainmap
