#include "wml/spectral.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <random>

#include <Eigen/Eigenvalues>

#include "wml/error.hpp"

namespace wml {

Eigen::MatrixXd Pencil::dense_A() const {
  const Eigen::Index n = dim();
  Eigen::MatrixXd out(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n), y;
  for (Eigen::Index i = 0; i < n; ++i) {
    e(i) = 1.0;
    apply_A(e, y);
    out.col(i) = y;
    e(i) = 0.0;
  }
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd Pencil::dense_M() const {
  const Eigen::Index n = dim();
  Eigen::MatrixXd out(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n), y;
  for (Eigen::Index i = 0; i < n; ++i) {
    e(i) = 1.0;
    apply_M(e, y);
    out.col(i) = y;
    e(i) = 0.0;
  }
  return 0.5 * (out + out.transpose());
}

}  // namespace wml

namespace wml::spectral {

SparsePencil::SparsePencil(SparseMatrix A, SparseMatrix M) : A_(std::move(A)), M_(std::move(M)) {
  require(A_.rows() == A_.cols() && M_.rows() == M_.cols() && A_.rows() == M_.rows(), ErrorKind::InvalidInput,
          "pencil matrices must be square and of equal size");
}

void SparsePencil::factorize(double sigma) {
  shifted_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>(SparseMatrix(A_ + sigma * M_));
  require(shifted_->info() == Eigen::Success, ErrorKind::SolverNonConvergence, "shifted factorization failed");
}

void SparsePencil::solve(const Eigen::VectorXd& b, Eigen::VectorXd& x) const {
  require(shifted_ != nullptr, ErrorKind::ContractViolation, "solve before factorize");
  x = shifted_->solve(b);
}

bool SparsePencil::shifted_definite() const {
  return shifted_ != nullptr && (shifted_->vectorD().array() > 0.0).all();
}

namespace {

constexpr Eigen::Index kParallelColumns = 20000;

Eigen::MatrixXd random_block(Eigen::Index n, Eigen::Index b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd x(n, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  return x;
}

enum class Op { A, M, Solve };

Eigen::MatrixXd apply_block(const Pencil& p, Op op, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  const bool par = x.rows() > kParallelColumns && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par)
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::VectorXd in = x.col(j), y;
    if (op == Op::A)
      p.apply_A(in, y);
    else if (op == Op::M)
      p.apply_M(in, y);
    else
      p.solve(in, y);
    out.col(j) = y;
  }
  return out;
}

double norm_estimate(const Pencil& p, Op op, std::uint64_t seed) {
  Eigen::VectorXd x = random_block(p.dim(), 1, seed ^ 0x9e3779b97f4a7c15ULL).col(0), y;
  double est = 0.0;
  for (int it = 0; it < 30; ++it) {
    x.normalize();
    if (op == Op::A)
      p.apply_A(x, y);
    else
      p.apply_M(x, y);
    est = y.norm();
    if (est == 0.0) break;
    x = y;
  }
  return est;
}

void normalize_signs(Eigen::MatrixXd& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index arg = 0;
    v.col(j).cwiseAbs().maxCoeff(&arg);
    if (v(arg, j) < 0) v.col(j) *= -1.0;
  }
}

void fill_residuals(const Pencil& p, EigenResult& r) {
  const Eigen::MatrixXd ax = apply_block(p, Op::A, r.vectors);
  const Eigen::MatrixXd mx = apply_block(p, Op::M, r.vectors);
  const Eigen::Index k = r.values.size();
  r.residuals.resize(k);
  r.abs_residuals.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double rn = (ax.col(i) - r.values(i) * mx.col(i)).norm();
    const double xn = r.vectors.col(i).norm();
    r.abs_residuals(i) = rn / xn;
    r.residuals(i) = rn / ((r.a_norm + std::abs(r.values(i)) * r.m_norm) * xn);
  }
}

EigenResult dense_solve(const Pencil& p, Eigen::Index k) {
  const Eigen::MatrixXd a = p.dense_A();
  const Eigen::MatrixXd m = p.dense_M();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, m);
  require(es.info() == Eigen::Success, ErrorKind::SolverNonConvergence, "dense generalized eigensolve failed");
  EigenResult r;
  r.values = es.eigenvalues().head(k);
  r.vectors = es.eigenvectors().leftCols(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> na(a, Eigen::EigenvaluesOnly), nm(m, Eigen::EigenvaluesOnly);
  r.a_norm = na.eigenvalues().cwiseAbs().maxCoeff();
  r.m_norm = nm.eigenvalues().cwiseAbs().maxCoeff();
  return r;
}

}  // namespace

EigenResult lowest_eigenpairs(Pencil& pencil, Eigen::Index k, const SolverOptions& opts) {
  const Eigen::Index n = pencil.dim();
  require(k >= 1 && k <= n, ErrorKind::InvalidInput, "requested eigenpair count exceeds the dimension");
  EigenResult r;
  if (n < opts.dense_below) {
    r = dense_solve(pencil, k);
  } else {
    const Eigen::Index b = std::min(n, k + std::max<Eigen::Index>(k, 8));
    double s = opts.shift;
    pencil.factorize(s);
    r.a_norm = norm_estimate(pencil, Op::A, opts.seed);
    r.m_norm = norm_estimate(pencil, Op::M, opts.seed);
    Eigen::MatrixXd x = random_block(n, b, opts.seed);
    Eigen::VectorXd best = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::infinity());
    bool converged = false;
    for (int it = 1; it <= opts.max_iter && !converged; ++it) {
      const Eigen::MatrixXd mx = apply_block(pencil, Op::M, x);
      const Eigen::MatrixXd y = apply_block(pencil, Op::Solve, mx);
      const Eigen::MatrixXd my = apply_block(pencil, Op::M, y);
      Eigen::MatrixXd g = y.transpose() * my;
      g = 0.5 * (g + g.transpose());
      // (A + sM)Y = MX gives AY without another operator application.
      const Eigen::MatrixXd ay = mx - s * my;
      Eigen::MatrixXd h = y.transpose() * ay;
      h = 0.5 * (h + h.transpose());

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ge(g);
      const double gmax = ge.eigenvalues().maxCoeff();
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < b; ++i)
        if (ge.eigenvalues()(i) > 1e-13 * gmax) keep.push_back(i);
      Eigen::MatrixXd c(b, static_cast<Eigen::Index>(keep.size()));
      for (std::size_t i = 0; i < keep.size(); ++i)
        c.col(static_cast<Eigen::Index>(i)) = ge.eigenvectors().col(keep[i]) / std::sqrt(ge.eigenvalues()(keep[i]));
      Eigen::MatrixXd hq = c.transpose() * h * c;
      hq = 0.5 * (hq + hq.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> he(hq);
      const Eigen::MatrixXd cw = c * he.eigenvectors();
      Eigen::MatrixXd xn = y * cw;
      const Eigen::Index kept = xn.cols();
      require(kept >= k, ErrorKind::SolverNonConvergence, "subspace collapsed below the requested size");

      const Eigen::MatrixXd axn = ay * cw;
      const Eigen::MatrixXd mxn = my * cw;
      bool ok = it >= 2;
      for (Eigen::Index i = 0; i < k; ++i) {
        const double th = he.eigenvalues()(i);
        const double rn = (axn.col(i) - th * mxn.col(i)).norm();
        const double rel = rn / ((r.a_norm + std::abs(th) * r.m_norm) * xn.col(i).norm());
        best(i) = std::min(best(i), rel);
        if (!(rel <= opts.tol)) ok = false;
      }
      if (kept < b) {
        Eigen::MatrixXd fresh = random_block(n, b - kept, opts.seed + static_cast<std::uint64_t>(it));
        xn.conservativeResize(n, b);
        xn.rightCols(b - kept) = fresh;
      }
      x = xn;
      r.iterations = it;
      // Once the bottom of the spectrum is located, move the pole toward it when it sits far above zero.
      const double th1 = he.eigenvalues()(0);
      if (!ok && (it == 3 || it == 10) && th1 > 100.0 * std::abs(opts.shift) && -0.9 * th1 < s) {
        const double prev = s;
        for (double frac : {0.9, 0.5}) {
          s = -frac * th1;
          pencil.factorize(s);
          if (pencil.shifted_definite()) break;
          s = prev;
        }
        if (s == prev) pencil.factorize(s);
      }
      if (ok) {
        converged = true;
        r.values = he.eigenvalues().head(k);
        r.vectors = x.leftCols(k);
      }
    }
    if (!converged) {
      std::string msg = "subspace iteration did not converge; best residuals:";
      for (Eigen::Index i = 0; i < k; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.3e", best(i));
        msg += buf;
      }
      fail(ErrorKind::SolverNonConvergence, msg);
    }
  }
  normalize_signs(r.vectors);
  fill_residuals(pencil, r);
  for (Eigen::Index i = 0; i < k; ++i)
    require(r.residuals(i) <= std::max(opts.tol, 1e-12) * 100.0, ErrorKind::SolverNonConvergence,
            "post hoc residual check failed: " + std::to_string(r.residuals(i)));
  return r;
}

int count_below(const SpectralEntry& e, double C0) {
  const auto& v = e.result.values;
  const bool resolved = (v.size() > 0 && v(v.size() - 1) >= C0) || v.size() == e.dim;
  require(resolved, ErrorKind::Resolution, "threshold not resolved; request more eigenpairs");
  int c = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) < C0) ++c;
  return c;
}

SpectralEntry solve_degree(const dec::WittenAssembly& as, double T, int degree, double C0, const SolverOptions& opts,
                           Eigen::Index k0) {
  SpectralEntry e;
  e.degree = degree;
  e.T = T;
  e.bc = as.bc;
  dec::WittenOperator op(as, T, degree);
  e.dim = op.dim();
  Eigen::Index k = std::max<Eigen::Index>(1, k0 > 0 ? k0 : opts.block);
  for (;;) {
    k = std::min(k, e.dim);
    e.result = lowest_eigenpairs(op, k, opts);
    const auto& v = e.result.values;
    if (v(v.size() - 1) >= C0 || k == e.dim) break;
    k *= 2;
  }
  return e;
}

namespace {

std::vector<SpectralEntry> batch(const dec::WittenAssembly& as, const std::vector<SolveTask>& tasks, double C0,
                                 const SolverOptions& opts, bool parallel) {
  std::vector<SpectralEntry> out(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  const int n = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int i = 0; i < n; ++i) {
    try {
      out[i] = solve_degree(as, tasks[i].T, tasks[i].degree, C0, opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace

std::vector<SpectralEntry> solve_batch(const dec::WittenAssembly& as, const std::vector<SolveTask>& tasks, double C0,
                                       const SolverOptions& opts) {
  return batch(as, tasks, C0, opts, true);
}

std::vector<SpectralEntry> solve_batch_serial(const dec::WittenAssembly& as, const std::vector<SolveTask>& tasks,
                                              double C0, const SolverOptions& opts) {
  return batch(as, tasks, C0, opts, false);
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::InvalidInput, "slope fit needs two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  require(sxx > 0, ErrorKind::InvalidInput, "slope fit needs distinct abscissae");
  return sxy / sxx;
}

GapScan gap_scan(const geometry::TriMesh& mesh, const morse::MorseFunction& f, const std::vector<double>& T_list,
                 double C0, dec::BoundaryCondition bc, const GapScanOptions& opts) {
  require(!T_list.empty(), ErrorKind::InvalidInput, "empty T list");
  require(std::is_sorted(T_list.begin(), T_list.end()), ErrorKind::InvalidInput, "T list must be ascending");
  require(T_list.front() >= 0.0, ErrorKind::InvalidInput, "T must be nonnegative");
  GapScan scan;
  scan.resolution = mesh.h * std::sqrt(T_list.back());
  if (!opts.override_resolution)
    require(scan.resolution <= 0.5, ErrorKind::Resolution,
            "mesh does not resolve the largest T (h·sqrt(T) = " + std::to_string(scan.resolution) + " > 0.5)");

  const dec::WittenAssembly as = dec::assemble(mesh, f, bc);
  std::vector<SolveTask> tasks;
  for (double T : T_list)
    for (int k = 0; k < 3; ++k)
      if (as.dim(k) > 0) tasks.push_back({T, k});
  scan.entries = solve_batch(as, tasks, C0, opts.solver);

  for (const auto& e : scan.entries) {
    GapRow row;
    row.T = e.T;
    row.degree = e.degree;
    row.bc = bc;
    row.count = count_below(e, C0);
    const auto& v = e.result.values;
    if (row.count > 0) row.lambda_small = std::max(0.0, v(row.count - 1));
    if (row.count < v.size()) row.lambda_big = v(row.count);
    if (opts.expected && row.count != (*opts.expected)[e.degree])
      scan.findings.push_back("count mismatch at T=" + std::to_string(e.T) + " degree " + std::to_string(e.degree) +
                              ": " + std::to_string(row.count) + " vs predicted " +
                              std::to_string((*opts.expected)[e.degree]) +
                              (scan.resolution > 0.5 ? " (outside the resolution contract)" : ""));
    scan.rows.push_back(row);
  }

  const std::size_t start = T_list.size() / 2;
  for (int k = 0; k < 3; ++k) {
    if (as.dim(k) == 0) continue;
    DegreeFit fit;
    fit.degree = k;
    fit.big_floor = std::numeric_limits<double>::infinity();
    std::vector<double> xs, ys;
    for (const auto& row : scan.rows) {
      if (row.degree != k) continue;
      if (row.lambda_big && row.T > 0) fit.big_floor = std::min(fit.big_floor, *row.lambda_big / (row.T * row.T));
      const auto pos = static_cast<std::size_t>(std::find(T_list.begin(), T_list.end(), row.T) - T_list.begin());
      if (pos < start || !row.lambda_small) continue;
      if (row.lambda_big && *row.lambda_small <= opts.harmonic_ratio * *row.lambda_big) fit.exact_kernel = true;
      xs.push_back(row.T);
      ys.push_back(std::log(std::max(*row.lambda_small, std::numeric_limits<double>::min())));
    }
    if (fit.exact_kernel)
      fit.slope = -std::numeric_limits<double>::infinity();
    else if (xs.size() >= 2)
      fit.slope = fit_slope(xs, ys);
    else
      fit.slope = std::numeric_limits<double>::quiet_NaN();
    scan.fits.push_back(fit);
  }
  return scan;
}

double sig12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

namespace {

std::string csv_number(const std::optional<double>& x) {
  if (!x) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", *x);
  return buf;
}

nlohmann::json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return sig12(x);
}

nlohmann::json json_vector(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_number(v(i)));
  return a;
}

}  // namespace

void write_gap_csv(const GapScan& scan, std::ostream& out) {
  out << "T,degree,bc,count,lambda_small,lambda_big\n";
  for (const auto& r : scan.rows)
    out << csv_number(r.T) << ',' << r.degree << ',' << dec::to_string(r.bc) << ',' << r.count << ','
        << csv_number(r.lambda_small) << ',' << csv_number(r.lambda_big) << '\n';
}

nlohmann::json to_json(const GapScan& scan) {
  nlohmann::json j;
  j["resolution"] = json_number(scan.resolution);
  j["rows"] = nlohmann::json::array();
  for (const auto& r : scan.rows)
    j["rows"].push_back({{"T", json_number(r.T)},
                         {"degree", r.degree},
                         {"bc", dec::to_string(r.bc)},
                         {"count", r.count},
                         {"lambda_small", r.lambda_small ? json_number(*r.lambda_small) : nlohmann::json()},
                         {"lambda_big", r.lambda_big ? json_number(*r.lambda_big) : nlohmann::json()}});
  j["fits"] = nlohmann::json::array();
  for (const auto& f : scan.fits)
    j["fits"].push_back({{"degree", f.degree},
                         {"slope", json_number(f.slope)},
                         {"exact_kernel", f.exact_kernel},
                         {"big_floor", json_number(f.big_floor)}});
  j["findings"] = scan.findings;
  return j;
}

nlohmann::json to_json(const SpectralReport& report) {
  nlohmann::json j;
  j["mesh_id"] = report.mesh_id;
  j["C0"] = json_number(report.C0);
  j["seed"] = report.seed;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : report.entries)
    j["entries"].push_back({{"degree", e.degree},
                            {"T", json_number(e.T)},
                            {"bc", dec::to_string(e.bc)},
                            {"dim", e.dim},
                            {"eigenvalues", json_vector(e.result.values)},
                            {"residuals", json_vector(e.result.residuals)}});
  return j;
}

}  // namespace wml::spectral
