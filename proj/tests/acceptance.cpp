// Acceptance criteria at their stated tolerances. Prints one PASS/FAIL line per criterion.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "wml/chainmap.hpp"
#include "wml/dec.hpp"
#include "wml/homology.hpp"
#include "wml/model.hpp"
#include "wml/morse.hpp"
#include "wml/runner.hpp"
#include "wml/spectral.hpp"

using namespace wml;

namespace {

using Triple = std::array<int, 3>;

std::string str(const Triple& t) {
  return "(" + std::to_string(t[0]) + "," + std::to_string(t[1]) + "," + std::to_string(t[2]) + ")";
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

Triple reflect(const Triple& t) { return {t[2], t[1], t[0]}; }

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (detail.size() < 600) detail += what + "; ";
    }
  }
};

const std::vector<std::string> kSurfaces{"disk_linear", "annulus_linear", "disk_saddle", "disk_interior_min"};

// Order of convergence from errors at h, h/2, h/4: the worse of the two successive ratios.
double order(const std::array<double, 3>& e) {
  return std::min(std::log2(e[0] / e[1]), std::log2(e[1] / e[2]));
}

double robin_vector_error(const model::Oracle1D& o, const spectral::EigenResult& r, double T) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(o.z.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::exp(-T * o.z[static_cast<std::size_t>(i)]);
  w /= std::sqrt(w.dot(o.M * w));
  Eigen::VectorXd v = r.vectors.col(0);
  if (v.dot(o.M * w) < 0) v = -v;
  const Eigen::VectorXd d = v - w;
  return std::sqrt(d.dot(o.M * d));
}

Outcome oracle_suite() {
  Outcome out;
  const double T = 2.0, L = 10.0;
  std::array<double, 3> vec{}, osc{};
  for (int l = 0; l < 3; ++l) {
    const double h = 0.02 / std::pow(2.0, l);
    const auto robin = model::robin_halfline(T, L, h);
    const auto r = model::oracle_eigenpairs(robin, 1);
    vec[l] = robin_vector_error(robin, r, T);
    const auto o = model::oscillator_1d(1.0, 8.0, h);
    const auto s = model::oracle_eigenpairs(o, 3);
    for (int i = 0; i < 3; ++i) osc[l] = std::max(osc[l], std::abs(s.values(i) - 2.0 * i));
    if (l == 2) {
      out.require(r.values(0) <= 1e-5, "robin lambda_1 " + num(r.values(0)));
      out.require(vec[l] <= 1e-3, "robin vector error " + num(vec[l]));
      out.require(osc[l] <= 1e-3, "oscillator error " + num(osc[l]));
      out.detail += "robin lambda_1 " + num(r.values(0)) + ", vector error " + num(vec[l]) + ", oscillator (" +
                    num(s.values(0)) + "," + num(s.values(1)) + "," + num(s.values(2)) + "); ";
    }
  }
  const double ro = order(vec), oo = order(osc);
  out.require(ro >= 1.8, "robin order " + num(ro));
  out.require(oo >= 1.8, "oscillator order " + num(oo));
  out.detail += "orders " + num(ro) + ", " + num(oo);
  return out;
}

Outcome hodge() {
  Outcome out;
  struct Case {
    geometry::SurfaceDomain domain;
    dec::BoundaryCondition bc;
    Triple betti;
  };
  const std::vector<Case> cases{
      {geometry::make_disk(1.0), dec::BoundaryCondition::Absolute, {1, 0, 0}},
      {geometry::make_annulus(0.5, 1.0), dec::BoundaryCondition::Absolute, {1, 1, 0}},
      {geometry::make_disk(1.0), dec::BoundaryCondition::Relative, {0, 0, 1}},
      {geometry::make_annulus(0.5, 1.0), dec::BoundaryCondition::Relative, {0, 1, 1}},
  };
  for (const auto& c : cases) {
    const auto mesh = geometry::build_mesh(c.domain, 0.05);
    const auto as = dec::assemble(mesh, morse::linear_x(), c.bc);
    const auto hb = dec::hodge_betti(as);
    out.require(hb.betti == c.betti, "betti " + str(hb.betti) + " expected " + str(c.betti));
    for (int k = 0; k < 3; ++k)
      if (hb.betti[k] > 0) out.require(hb.max_kernel[k] * 1e3 <= hb.first_nonzero[k], "kernel separation at degree " + std::to_string(k));
    out.detail += str(hb.betti) + " ";
  }
  return out;
}

runner::RunReport run(const std::string& scenario, dec::BoundaryCondition bc, std::vector<double> Ts) {
  runner::RunConfig cfg;
  cfg.scenario = scenario;
  cfg.bc = bc;
  cfg.T_list = std::move(Ts);
  runner::validate(cfg);
  return runner::run(cfg);
}

// Runs every 2D scenario in both modes once; criteria 3, 5 and 6 read from these reports.
struct Runs {
  std::vector<runner::RunReport> absolute, relative;
};

Runs run_all() {
  Runs r;
  for (const auto& s : kSurfaces) {
    r.absolute.push_back(run(s, dec::BoundaryCondition::Absolute, {4, 8, 16}));
    r.relative.push_back(run(s, dec::BoundaryCondition::Relative, {4, 8, 16}));
  }
  return r;
}

Outcome counts(const Runs& runs) {
  Outcome out;
  for (const auto* set : {&runs.absolute, &runs.relative})
    for (const auto& rep : *set) {
      const bool rel = rep.config.bc == dec::BoundaryCondition::Relative;
      // c + p in absolute mode, c_j + q_{j-1} in relative mode, straight from the critical points.
      const auto& m = rep.counts;
      Triple expect{};
      for (int j = 0; j < 3; ++j) {
        expect[j] = m.c[j];
        if (!rel && j < 2) expect[j] += m.p[j];
        if (rel && j > 0) expect[j] += m.q[j - 1];
      }
      std::array<std::array<int, 3>, 3> seen{};
      for (const auto& row : rep.gap.rows) {
        const int t = row.T == 4 ? 0 : row.T == 8 ? 1 : 2;
        seen[t][row.degree] = row.count;
      }
      for (int t = 0; t < 3; ++t)
        out.require(seen[t] == expect, rep.scenario->name + (rel ? " relative" : " absolute") + " counts " +
                                           str(seen[t]) + " expected " + str(expect));
      out.detail += rep.scenario->name + (rel ? "/rel " : "/abs ") + str(expect) + " ";
    }
  return out;
}

Outcome gap() {
  Outcome out;
  const auto mesh = geometry::build_mesh(geometry::make_disk(1.0), 0.05);
  spectral::GapScanOptions o;
  o.expected = Triple{1, 0, 0};
  const auto scan = spectral::gap_scan(mesh, morse::linear_x(), {4, 8, 16, 32}, 1.0, dec::BoundaryCondition::Absolute, o);
  out.require(scan.findings.empty(), "count mismatch");
  for (const auto& f : scan.fits) {
    if (f.degree == 0) out.require(f.slope <= -0.1, "slope " + num(f.slope));
    out.require(f.big_floor >= 1e-3, "degree " + std::to_string(f.degree) + " min big/T^2 " + num(f.big_floor));
    out.detail += "degree " + std::to_string(f.degree) + ": slope " + (f.exact_kernel ? "exact kernel" : num(f.slope)) +
                  ", min big/T^2 " + num(f.big_floor) + "; ";
  }
  return out;
}

Outcome complexes(const Runs& runs) {
  Outcome out;
  for (const auto* set : {&runs.absolute, &runs.relative})
    for (const auto& rep : *set) {
      const std::string tag = rep.scenario->name + (rep.config.bc == dec::BoundaryCondition::Relative ? "/rel" : "/abs");
      out.require(morse::boundary_squared_zero(rep.complex), tag + " boundary squared nonzero");
      const auto ranks = morse::homology_ranks(rep.complex);
      const bool rel = rep.config.bc == dec::BoundaryCondition::Relative;
      const auto mesh_betti = rep.mesh_betti;
      out.require(ranks.betti == mesh_betti && ranks.torsion.empty(),
                  tag + " complex " + str(ranks.betti) + " mesh " + str(mesh_betti));
      const auto ineq = morse::morse_inequalities(rep.counts, mesh_betti, rel ? morse::Mode::Relative : morse::Mode::Absolute);
      out.require(ineq.all_hold && ineq.equality_at_top, tag + " Morse inequalities");
      out.detail += tag + " " + str(ranks.betti) + " ";
    }
  return out;
}

Outcome quasimodes(const Runs& runs) {
  Outcome out;
  for (const auto& rep : runs.absolute) {
    if (rep.scenario->name != "disk_linear" && rep.scenario->name != "disk_saddle") continue;
    int groups = 0;
    for (int j = 0; j < 3; ++j)
      for (int g = 0; g < rep.complex.rank(j); ++g) {
        std::vector<double> xs, ys;
        for (const auto& q : rep.quasimodes)
          if (q.degree == j && q.generator == g) {
            const std::string tag = rep.scenario->name + " degree " + std::to_string(j) + " T=" + num(q.T);
            if (!ys.empty()) out.require(q.rayleigh < std::exp(ys.back()), tag + " not decreasing");
            out.require(q.rayleigh >= 0.99 * q.lambda_min,
                        tag + " rayleigh " + num(q.rayleigh) + " below lambda_min " + num(q.lambda_min));
            xs.push_back(q.T);
            ys.push_back(std::log(q.rayleigh));
          }
        out.require(xs.size() == 3, rep.scenario->name + " missing quasimodes");
        if (xs.size() < 2) continue;
        const double slope = spectral::fit_slope(xs, ys);
        out.require(slope < 0.0, rep.scenario->name + " slope " + num(slope));
        out.detail += rep.scenario->name + " d" + std::to_string(j) + "#" + std::to_string(g) + " slope " + num(slope) + "; ";
        ++groups;
      }
    out.require(groups > 0, rep.scenario->name + " has no generators");
  }
  return out;
}

Outcome chain_map(const Runs& runs) {
  Outcome out;
  for (const std::string name : {"disk_linear", "disk_saddle"}) {
    runner::RunConfig cfg;
    cfg.scenario = name;
    cfg.target_h = 0.04;
    const auto pl = runner::prepare(cfg);
    chainmap::ComparisonOptions o;
    o.quasimode_radius = pl.scenario->quasimode_radius;
    const auto c = chainmap::compare(*pl.field, pl.complex, pl.mesh, 12.0, o);
    out.require(c.isomorphic, name + " not isomorphic");
    for (const auto& d : c.degrees) {
      for (Eigen::Index i = 0; i < d.singular_values.size(); ++i)
        out.require(d.singular_values(i) >= 0.5 && d.singular_values(i) <= 1.5,
                    name + " singular value " + num(d.singular_values(i)));
      out.require(d.off_diagonal <= 0.2, name + " off-diagonal " + num(d.off_diagonal));
    }
    out.require(c.residual <= 1e-2, name + " residual " + num(c.residual));
    Triple c5{};
    for (const auto& rep : runs.absolute)
      if (rep.scenario->name == name) c5 = morse::homology_ranks(rep.complex).betti;
    out.require(c.transported == c5, name + " transported " + str(c.transported) + " vs " + str(c5));
    out.detail += name + ": residual " + num(c.residual) + ", transported " + str(c.transported) + "; ";
  }
  return out;
}

Outcome duality() {
  Outcome out;
  const double T = 8.0;
  for (const auto& name : kSurfaces) {
    const auto& sc = runner::find_scenario(name);
    const auto domain = sc.domain();
    const auto f = sc.function();
    const auto g = f.negated();
    const auto mesh = geometry::build_mesh(domain, sc.default_h);

    const auto pf = morse::find_critical_points(f, domain, sc.grid_density, 1e-10).points;
    const auto pg = morse::find_critical_points(g, domain, sc.grid_density, 1e-10).points;
    const Triple abs_counts = morse::generator_counts(morse::morse_counts(pf), morse::Mode::Absolute);
    const Triple rel_counts = morse::generator_counts(morse::morse_counts(pg), morse::Mode::Relative);
    out.require(abs_counts == reflect(rel_counts), name + " counts " + str(abs_counts) + " vs " + str(rel_counts));
    const Triple ba = homology::mesh_betti(mesh, false), br = homology::mesh_betti(mesh, true);
    out.require(ba == reflect(br), name + " betti " + str(ba) + " vs " + str(br));

    const auto sa = spectral::gap_scan(mesh, f, {T}, 1.0, dec::BoundaryCondition::Absolute);
    const auto sr = spectral::gap_scan(mesh, g, {T}, 1.0, dec::BoundaryCondition::Relative);
    Triple ca{}, cr{};
    for (const auto& row : sa.rows) ca[row.degree] = row.count;
    for (const auto& row : sr.rows) cr[row.degree] = row.count;
    out.require(ca == reflect(cr), name + " spectral counts " + str(ca) + " vs " + str(cr));

    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd& a = sa.entries[static_cast<std::size_t>(k)].result.values;
      const Eigen::VectorXd& b = sr.entries[static_cast<std::size_t>(2 - k)].result.values;
      // Low cluster plus the first eigenvalue above it.
      const Eigen::Index n = std::min<Eigen::Index>({ca[k] + 1, a.size(), b.size()});
      const double big = std::max(a(n - 1), b(n - 1));
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool za = a(i) <= 1e-9 * big, zb = b(i) <= 1e-9 * big;
        if (za || zb) {
          out.require(za && zb, name + " degree " + std::to_string(k) + " kernel mismatch");
          continue;
        }
        const double rel = std::abs(a(i) - b(i)) / std::max(a(i), b(i));
        worst = std::max(worst, rel);
        out.require(rel <= 0.05, name + " degree " + std::to_string(k) + " eigenvalue " + num(a(i)) + " vs " + num(b(i)));
      }
    }
    out.detail += name + " " + str(ca) + " max rel diff " + num(worst) + "; ";
  }
  return out;
}

bool report(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  std::printf("%s criterion %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main() {
  bool ok = true;
  ok &= report(1, "oracle suite", oracle_suite);
  ok &= report(2, "Hodge Betti numbers", hodge);
  Runs runs;
  try {
    runs = run_all();
  } catch (const std::exception& e) {
    std::printf("scenario runs failed: %s\n", e.what());
  }
  const bool have_runs = runs.absolute.size() == kSurfaces.size();
  auto with_runs = [&](Outcome (*fn)(const Runs&)) {
    return [&, fn] {
      if (!have_runs) {
        Outcome o;
        o.require(false, "scenario runs unavailable");
        return o;
      }
      return fn(runs);
    };
  };
  ok &= report(3, "eigenvalue counts", with_runs(counts));
  ok &= report(4, "spectral gap", gap);
  ok &= report(5, "Thom-Smale complexes", with_runs(complexes));
  ok &= report(6, "quasimode bounds", with_runs(quasimodes));
  ok &= report(7, "chain map", with_runs(chain_map));
  ok &= report(8, "duality", duality);
  return ok ? 0 : 1;
}
