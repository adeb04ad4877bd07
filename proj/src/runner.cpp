#include "wml/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <omp.h>

#include "wml/model.hpp"

namespace wml::runner {

using spectral::sig12;

namespace {

constexpr double kResolution = 0.5;

// Acceptance thresholds shared by the run checks.
constexpr double kSlopeMax = -0.1;
constexpr double kBigFloor = 1e-3;
constexpr double kRayleighSlack = 0.01;
constexpr double kSingularLo = 0.5;
constexpr double kSingularHi = 1.5;
constexpr double kOffDiagonal = 0.2;
constexpr double kCommutation = 1e-2;
constexpr double kRobinLambda = 1e-5;
constexpr double kRobinVector = 1e-3;
constexpr double kOscillator = 1e-3;
constexpr double kOrder = 1.8;

std::vector<Scenario> build_registry() {
  std::vector<Scenario> r;
  {
    Scenario s;
    s.name = "disk_linear";
    s.domain_text = "unit disk";
    s.formula = "x";
    s.domain = [] { return geometry::make_disk(1.0); };
    s.function = morse::linear_x;
    s.a = 0.2;
    s.quasimode_radius = 0.2;
    s.expected_absolute = {1, 0, 0};
    s.expected_relative = {0, 0, 1};
    r.push_back(s);
  }
  {
    Scenario s;
    s.name = "annulus_linear";
    s.domain_text = "annulus 0.5 < r < 1";
    s.formula = "x";
    s.domain = [] { return geometry::make_annulus(0.5, 1.0); };
    s.function = morse::linear_x;
    s.a = 0.05;
    s.quasimode_radius = 0.2;
    s.expected_absolute = {1, 1, 0};
    s.expected_relative = {0, 1, 1};
    r.push_back(s);
  }
  {
    Scenario s;
    s.name = "disk_saddle";
    s.domain_text = "disk of radius 2";
    s.formula = "x^2 - y^2";
    s.domain = [] { return geometry::make_disk(2.0); };
    s.function = morse::saddle_xx_minus_yy;
    s.a = 0.24;
    s.quasimode_radius = 0.24;
    s.expected_absolute = {2, 1, 0};
    s.expected_relative = {0, 1, 2};
    r.push_back(s);
  }
  {
    Scenario s;
    s.name = "disk_interior_min";
    s.domain_text = "disk of radius 1.1";
    s.formula = "(x^2 + y^2)/2 + 0.1 x";
    s.domain = [] { return geometry::make_disk(1.1); };
    s.function = [] { return morse::bowl(1.0, 0.1); };
    s.a = 0.1;
    s.quasimode_radius = 0.3;
    s.expected_absolute = {1, 0, 0};
    s.expected_relative = {1, 1, 1};
    r.push_back(s);
  }
  {
    Scenario s;
    s.name = "interval_robin";
    s.domain_text = "half-line [0, L] and interval [-L, L]";
    s.formula = "T z (Robin and Dirichlet half-line), T z^2 / 2 (oscillator)";
    s.dimension = 1;
    s.expected_absolute = {1, 0, 0};
    s.expected_relative = {1, 0, 0};
    s.default_h = 0.005;
    s.default_T = {1.0, 2.0};
    r.push_back(s);
  }
  for (auto& s : r)
    if (s.default_T.empty()) s.default_T = {4.0, 8.0, 16.0};
  return r;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  const double x = std::strtod(t.c_str(), &end);
  require(!t.empty() && end == t.c_str() + t.size() && std::isfinite(x), ErrorKind::Configuration,
          key + ": not a number: '" + v + "'");
  return x;
}

long long parse_integer(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  const long long x = std::strtoll(t.c_str(), &end, 10);
  require(!t.empty() && end == t.c_str() + t.size(), ErrorKind::Configuration,
          key + ": not an integer: '" + v + "'");
  return x;
}

bool parse_flag(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  fail(ErrorKind::Configuration, key + ": expected true or false, got '" + v + "'");
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

std::string triple(const std::array<int, 3>& a) {
  return "(" + std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + ")";
}

nlohmann::json jnum(double x) {
  if (!std::isfinite(x)) return nullptr;
  return sig12(x);
}

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<Timing>& sink) : sink_(sink), t0_(std::chrono::steady_clock::now()) {}
  void lap(const std::string& stage) {
    const auto t = std::chrono::steady_clock::now();
    sink_.push_back({stage, std::chrono::duration<double>(t - t0_).count()});
    t0_ = t;
  }

 private:
  std::vector<Timing>& sink_;
  std::chrono::steady_clock::time_point t0_;
};

double observed_order(const std::array<double, 3>& e) {
  const double o1 = std::log2(e[0] / e[1]);
  const double o2 = std::log2(e[1] / e[2]);
  return std::min(o1, o2);
}

spectral::SolverOptions solver_options(const RunConfig& cfg) {
  spectral::SolverOptions o;
  o.seed = cfg.seed;
  o.block = cfg.k_eigs;
  return o;
}

void run_oracles(const RunConfig& cfg, RunReport& rep) {
  Stopwatch sw(rep.timings);
  for (double T : cfg.T_list) rep.oracles.push_back(oracle_suite(T, rep.h, cfg.seed));
  sw.lap("oracles");
  bool lam = true, vec = true, osc = true, order = true;
  std::string d_lam, d_vec, d_osc, d_order;
  for (const auto& o : rep.oracles) {
    lam = lam && o.robin_lambda <= kRobinLambda;
    vec = vec && o.robin_vector_error <= kRobinVector;
    for (int i = 0; i < 3; ++i) osc = osc && std::abs(o.oscillator[i] - 2.0 * i * o.T) <= kOscillator * std::max(1.0, o.T);
    order = order && o.robin_order >= kOrder && o.oscillator_order >= kOrder;
    d_lam += "T=" + num(o.T) + ": " + num(o.robin_lambda) + "; ";
    d_vec += "T=" + num(o.T) + ": " + num(o.robin_vector_error) + "; ";
    d_osc += "T=" + num(o.T) + ": " + num(o.oscillator[0]) + "," + num(o.oscillator[1]) + "," + num(o.oscillator[2]) + "; ";
    d_order += "T=" + num(o.T) + ": robin " + num(o.robin_order) + ", oscillator " + num(o.oscillator_order) + "; ";
  }
  rep.checks.push_back({"robin_kernel_eigenvalue", lam, d_lam});
  rep.checks.push_back({"robin_kernel_vector", vec, d_vec});
  rep.checks.push_back({"oscillator_spectrum", osc, d_osc});
  rep.checks.push_back({"second_order_convergence", order, d_order});
}

void run_surface(const RunConfig& cfg, RunReport& rep) {
  Stopwatch sw(rep.timings);
  const bool relative = cfg.bc == dec::BoundaryCondition::Relative;
  const morse::Mode mode = relative ? morse::Mode::Relative : morse::Mode::Absolute;
  Pipeline pl = prepare(cfg);
  sw.lap("morse");
  rep.critical_points = pl.points;
  rep.counts = morse::morse_counts(pl.points);
  rep.generator_counts = morse::generator_counts(rep.counts, mode);
  rep.field_violations = morse::verify_field(*pl.field, 2000);
  rep.complex = pl.complex;
  rep.complex_homology = morse::homology_ranks(pl.complex);
  rep.boundary_squared_zero = morse::boundary_squared_zero(pl.complex);
  rep.mesh = geometry::mesh_report(pl.mesh);
  rep.mesh_betti = homology::mesh_betti(pl.mesh, relative);
  rep.inequalities = morse::morse_inequalities(rep.counts, rep.mesh_betti, mode);
  sw.lap("homology");

  const dec::WittenAssembly as = dec::assemble(pl.mesh, pl.f, cfg.bc);
  rep.hodge = dec::hodge_betti(as, 1e-3, cfg.seed);
  sw.lap("hodge");

  spectral::GapScanOptions go;
  go.override_resolution = cfg.override_resolution;
  go.expected = rep.generator_counts;
  go.solver = solver_options(cfg);
  rep.gap = spectral::gap_scan(pl.mesh, pl.f, cfg.T_list, cfg.C0, cfg.bc, go);
  sw.lap("spectrum");

  const bool resolved = rep.gap.resolution <= kResolution;
  if (!relative && !resolved)
    rep.warnings.push_back("quasimode and chain-map stages skipped: h*sqrt(T_max) = " + num(rep.gap.resolution) +
                           " does not resolve the quasimode scale");
  if (!relative && resolved) {
    const auto& sc = *pl.scenario;
    for (int j = 0; j < 3; ++j) {
      if (pl.complex.rank(j) == 0) continue;
      for (double T : cfg.T_list) {
        const auto qs = chainmap::generator_quasimodes(pl.complex, j, T, sc.quasimode_radius, *pl.domain, as);
        double lmin = std::numeric_limits<double>::quiet_NaN();
        for (const auto& e : rep.gap.entries)
          if (e.T == T && e.degree == j) lmin = e.result.values(0);
        for (std::size_t g = 0; g < qs.size(); ++g)
          rep.quasimodes.push_back({j, static_cast<int>(g), T, model::quasimode_residual(qs[g], as, T), lmin});
      }
    }
    sw.lap("quasimodes");

    chainmap::ComparisonOptions co;
    co.C0 = cfg.C0;
    co.quasimode_radius = sc.quasimode_radius;
    co.solver = solver_options(cfg);
    rep.comparison = chainmap::compare(*pl.field, pl.complex, pl.mesh, cfg.T_list.back(), co);
    sw.lap("comparison");
  }

  // Checks.
  {
    const std::string d = rep.gap.findings.empty() ? "counts " + triple(rep.generator_counts) + " at every T"
                                 : rep.gap.findings.front();
    rep.checks.push_back({"eigenvalue_counts", rep.gap.findings.empty(), d});
  }
  {
    const auto& exp = relative ? pl.scenario->expected_relative : pl.scenario->expected_absolute;
    rep.checks.push_back({"registry_counts", exp == rep.generator_counts,
                          "computed " + triple(rep.generator_counts) + ", registered " + triple(exp)});
  }
  rep.checks.push_back({"boundary_squared_zero", rep.boundary_squared_zero, ""});
  rep.checks.push_back({"complex_homology", rep.complex_homology.betti == rep.mesh_betti &&
                                                rep.complex_homology.torsion.empty(),
                        "complex " + triple(rep.complex_homology.betti) + ", mesh " + triple(rep.mesh_betti)});
  rep.checks.push_back({"hodge_betti", rep.hodge.betti == rep.mesh_betti,
                        "hodge " + triple(rep.hodge.betti) + ", mesh " + triple(rep.mesh_betti)});
  rep.checks.push_back({"morse_inequalities", rep.inequalities.all_hold && rep.inequalities.equality_at_top,
                        rep.inequalities.equality_at_top ? "" : "alternating sums differ at the top degree"});
  rep.checks.push_back({"pseudo_gradient", rep.field_violations.empty(),
                        rep.field_violations.empty() ? "" : rep.field_violations.front()});
  if (cfg.T_list.size() >= 2) {
    bool ok = true;
    std::string d;
    for (const auto& fit : rep.gap.fits) {
      const bool has_low = rep.generator_counts[fit.degree] > 0;
      if (has_low && !(fit.slope <= kSlopeMax)) ok = false;
      if (!(fit.big_floor >= kBigFloor)) ok = false;
      d += "degree " + std::to_string(fit.degree) + ": slope " +
           (fit.exact_kernel ? std::string("exact kernel") : num(fit.slope)) + ", min big/T^2 " + num(fit.big_floor) + "; ";
    }
    rep.checks.push_back({"spectral_gap", ok, d});
  }
  if (!rep.quasimodes.empty() && cfg.T_list.size() >= 2) {
    bool ok = true;
    std::string d;
    for (int j = 0; j < 3; ++j)
      for (int g = 0; g < pl.complex.rank(j); ++g) {
        std::vector<double> xs, ys;
        for (const auto& q : rep.quasimodes)
          if (q.degree == j && q.generator == g) {
            if (!ys.empty() && !(q.rayleigh < std::exp(ys.back()))) ok = false;
            if (!(q.rayleigh >= (1.0 - kRayleighSlack) * q.lambda_min)) ok = false;
            xs.push_back(q.T);
            ys.push_back(std::log(q.rayleigh));
          }
        const double slope = spectral::fit_slope(xs, ys);
        if (!(slope < 0.0)) ok = false;
        d += "degree " + std::to_string(j) + " #" + std::to_string(g) + ": slope " + num(slope) + "; ";
      }
    rep.checks.push_back({"quasimode_bounds", ok, d});
  }
  if (rep.comparison) {
    const auto& c = *rep.comparison;
    bool ok = c.isomorphic && c.residual <= kCommutation && c.transported == c.complex_betti;
    for (const auto& dg : c.degrees) {
      for (Eigen::Index i = 0; i < dg.singular_values.size(); ++i)
        ok = ok && dg.singular_values(i) >= kSingularLo && dg.singular_values(i) <= kSingularHi;
      ok = ok && dg.off_diagonal <= kOffDiagonal;
    }
    rep.checks.push_back({"chain_map", ok,
                          "T=" + num(c.T) + ", residual " + num(c.residual) + ", transported " + triple(c.transported) +
                              (c.findings.empty() ? "" : ", " + c.findings.front())});
  }
}

}  // namespace

const std::vector<Scenario>& scenarios() {
  static const std::vector<Scenario> registry = build_registry();
  return registry;
}

std::vector<const Scenario*> list_scenarios(const std::string& filter) {
  std::vector<const Scenario*> out;
  for (const auto& s : scenarios())
    if (filter.empty() || s.name.find(filter) != std::string::npos) out.push_back(&s);
  return out;
}

const Scenario& find_scenario(const std::string& name) {
  for (const auto& s : scenarios())
    if (s.name == name) return s;
  fail(ErrorKind::Configuration, "unknown scenario '" + name + "'");
}

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j{{"name", s.name}, {"domain", s.domain_text}, {"f", s.formula}, {"dimension", s.dimension}};
  if (s.dimension == 2) {
    j["expected_counts"] = {{"absolute", s.expected_absolute}, {"relative", s.expected_relative}};
    j["adaptation_radius"] = s.a;
  } else {
    j["expected_counts"] = {{"kernel", 1}};
  }
  return j;
}

Format parse_format(const std::string& s) {
  if (s == "json") return Format::Json;
  if (s == "csv") return Format::Csv;
  fail(ErrorKind::Configuration, "unknown format '" + s + "' (expected json or csv)");
}

std::vector<double> parse_T_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real("T", item));
  require(!out.empty(), ErrorKind::Configuration, "empty T list");
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key_in, const std::string& value) {
  std::string key = key_in;
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = trim(value);
  if (key == "scenario") {
    cfg.scenario = v;
  } else if (key == "bc") {
    try {
      cfg.bc = dec::parse_bc(v);
    } catch (const Error& e) {
      fail(ErrorKind::Configuration, e.what());
    }
  } else if (key == "T" || key == "T_list") {
    cfg.T_list = parse_T_list(v);
  } else if (key == "h" || key == "target_h") {
    cfg.target_h = parse_real(key, v);
  } else if (key == "C0") {
    cfg.C0 = parse_real(key, v);
  } else if (key == "k" || key == "k_eigs") {
    const long long k = parse_integer(key, v);
    require(k >= 1 && k <= 1000, ErrorKind::Configuration, "k must lie in [1, 1000]");
    cfg.k_eigs = static_cast<int>(k);
  } else if (key == "seed") {
    const long long s = parse_integer(key, v);
    require(s >= 0, ErrorKind::Configuration, "seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (key == "out" || key == "outputs") {
    cfg.out = v;
  } else if (key == "format") {
    cfg.format = parse_format(v);
  } else if (key == "override_resolution_contract" || key == "override_resolution") {
    cfg.override_resolution = parse_flag(key, v);
  } else {
    fail(ErrorKind::Configuration, "unknown config key '" + key_in + "'");
  }
}

void load_config(std::istream& in, RunConfig& cfg) {
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Configuration, "config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), ErrorKind::Configuration, "config line " + std::to_string(n) + ": empty key");
    apply_setting(cfg, key, line.substr(eq + 1));
  }
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Configuration, "cannot read config file '" + path + "'");
  load_config(in, cfg);
}

std::vector<std::string> validate(RunConfig& cfg) {
  std::vector<std::string> warnings;
  require(!cfg.scenario.empty(), ErrorKind::Configuration, "no scenario given");
  const Scenario& sc = find_scenario(cfg.scenario);
  if (cfg.T_list.empty()) cfg.T_list = sc.default_T;
  if (!cfg.target_h) cfg.target_h = sc.default_h;
  for (double T : cfg.T_list) require(T > 0.0, ErrorKind::Configuration, "T values must be positive");
  for (std::size_t i = 1; i < cfg.T_list.size(); ++i)
    require(cfg.T_list[i] > cfg.T_list[i - 1], ErrorKind::Configuration, "T list must be strictly ascending");
  require(*cfg.target_h > 0.0, ErrorKind::Configuration, "h must be positive");
  require(cfg.C0 > 0.0, ErrorKind::Configuration, "C0 must be positive");
  const double res = *cfg.target_h * std::sqrt(cfg.T_list.back());
  if (res > kResolution) {
    require(cfg.override_resolution, ErrorKind::Configuration,
            "h·sqrt(max T) = " + num(res) + " exceeds 0.5; refine h or pass --override-resolution-contract");
    warnings.push_back("resolution contract overridden: h·sqrt(max T) = " + num(res));
  }
  if (sc.dimension == 2) {
    require(*cfg.target_h <= 0.25, ErrorKind::Configuration, "h must not exceed 0.25 on the shipped domains");
  } else {
    require(*cfg.target_h <= 0.1, ErrorKind::Configuration, "h must not exceed 0.1 for the model operators");
  }
  return warnings;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json T = nlohmann::json::array();
  for (double t : cfg.T_list) T.push_back(sig12(t));
  return {{"scenario", cfg.scenario},
          {"bc", dec::to_string(cfg.bc)},
          {"T_list", T},
          {"target_h", cfg.target_h ? nlohmann::json(sig12(*cfg.target_h)) : nlohmann::json(nullptr)},
          {"C0", sig12(cfg.C0)},
          {"k_eigs", cfg.k_eigs},
          {"seed", cfg.seed},
          {"format", cfg.format == Format::Json ? "json" : "csv"},
          {"override_resolution_contract", cfg.override_resolution}};
}

OracleRow oracle_suite(double T, double h, std::uint64_t seed) {
  OracleRow row;
  row.T = T;
  row.h = h;
  const double L_robin = std::max(10.0, 30.0 / T);
  const double L_osc = std::sqrt(60.0 / T);

  auto robin_error = [&](double hh, double* lambda) {
    const auto o = model::robin_halfline(T, L_robin, hh);
    const auto r = model::oracle_eigenpairs(o, 2, seed);
    if (lambda) *lambda = r.values(0);
    Eigen::VectorXd w(static_cast<Eigen::Index>(o.z.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::exp(-T * o.z[static_cast<std::size_t>(i)]);
    w /= std::sqrt(w.dot(o.M * w));
    Eigen::VectorXd v = r.vectors.col(0);
    if (v.dot(o.M * w) < 0) v = -v;
    const Eigen::VectorXd diff = v - w;
    return std::sqrt(diff.dot(o.M * diff));
  };
  auto oscillator_error = [&](double hh, std::array<double, 3>* values) {
    const auto o = model::oscillator_1d(T, L_osc, hh);
    const auto r = model::oracle_eigenpairs(o, 3, seed);
    double e = 0.0;
    for (int i = 0; i < 3; ++i) {
      if (values) (*values)[i] = r.values(i);
      e = std::max(e, std::abs(r.values(i) - 2.0 * i * T));
    }
    return e;
  };
  for (int l = 0; l < 3; ++l) {
    const double hh = h / std::pow(2.0, l);
    row.robin_errors[l] = robin_error(hh, l == 0 ? &row.robin_lambda : nullptr);
    row.oscillator_errors[l] = oscillator_error(hh, l == 0 ? &row.oscillator : nullptr);
  }
  row.robin_vector_error = row.robin_errors[0];
  row.robin_order = observed_order(row.robin_errors);
  row.oscillator_order = observed_order(row.oscillator_errors);
  const auto d = model::dirichlet_halfline(T, L_robin, h);
  row.dirichlet_lambda = model::oracle_eigenpairs(d, 1, seed).values(0);
  return row;
}

Pipeline prepare(const RunConfig& cfg, bool build_complex) {
  Pipeline pl;
  pl.scenario = &find_scenario(cfg.scenario);
  require(pl.scenario->dimension == 2, ErrorKind::Configuration, "scenario '" + cfg.scenario + "' has no surface");
  pl.domain = std::make_unique<geometry::SurfaceDomain>(pl.scenario->domain());
  pl.f = pl.scenario->function();
  const int grid = pl.scenario->grid_density;
  pl.points = morse::find_critical_points(pl.f, *pl.domain, grid, 1e-10).points;
  morse::check_adaptation_radius(*pl.domain, pl.points, pl.scenario->a);
  if (cfg.bc == dec::BoundaryCondition::Relative) {
    const morse::MorseFunction g = pl.f.negated();
    const auto pts = morse::find_critical_points(g, *pl.domain, grid, 1e-10).points;
    pl.field = std::make_unique<morse::PseudoGradientField>(morse::adapted_field(g, *pl.domain, pl.scenario->a, pts));
    if (build_complex) pl.complex = morse::relative_complex(morse::build_thom_smale_complex(*pl.field));
  } else {
    pl.field =
        std::make_unique<morse::PseudoGradientField>(morse::adapted_field(pl.f, *pl.domain, pl.scenario->a, pl.points));
    if (build_complex) pl.complex = morse::build_thom_smale_complex(*pl.field);
  }
  pl.mesh = geometry::build_mesh(*pl.domain, cfg.target_h.value_or(pl.scenario->default_h));
  geometry::check_mesh(pl.mesh, pl.domain.get());
  return pl;
}

RunReport run(const RunConfig& cfg_in) {
  RunReport rep;
  rep.config = cfg_in;
  rep.warnings = validate(rep.config);
  rep.scenario = &find_scenario(rep.config.scenario);
  rep.h = *rep.config.target_h;
  if (rep.scenario->dimension == 1)
    run_oracles(rep.config, rep);
  else
    run_surface(rep.config, rep);
  return rep;
}

bool RunReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

nlohmann::json to_json(const morse::ThomSmaleComplex& cx) {
  nlohmann::json j;
  j["relative"] = cx.relative;
  j["generators"] = nlohmann::json::array();
  for (int d = 0; d < 3; ++d) {
    nlohmann::json g = nlohmann::json::array();
    for (std::size_t i = 0; i < cx.generators[d].size(); ++i) {
      const auto& p = cx.generators[d][i];
      g.push_back({{"x", sig12(p.location.x())},
                   {"y", sig12(p.location.y())},
                   {"kind", morse::to_string(p.kind)},
                   {"index", p.index},
                   {"f", sig12(p.f_value)},
                   {"orientation", cx.frames[d][i].orientation()}});
    }
    j["generators"].push_back(g);
  }
  j["boundary"] = nlohmann::json::array();
  for (const auto& b : cx.boundary) j["boundary"].push_back(b);
  j["diagnostics"] = cx.diagnostics;
  return j;
}

nlohmann::json to_json(const RunReport& rep) {
  nlohmann::json j;
  j["config"] = to_json(rep.config);
  j["scenario"] = to_json(*rep.scenario);
  j["warnings"] = rep.warnings;
  if (rep.scenario->dimension == 1) {
    j["oracles"] = nlohmann::json::array();
    for (const auto& o : rep.oracles) {
      nlohmann::json osc = nlohmann::json::array(), re = nlohmann::json::array(), oe = nlohmann::json::array();
      for (int i = 0; i < 3; ++i) {
        osc.push_back(jnum(o.oscillator[i]));
        re.push_back(jnum(o.robin_errors[i]));
        oe.push_back(jnum(o.oscillator_errors[i]));
      }
      j["oracles"].push_back({{"T", jnum(o.T)},
                              {"h", jnum(o.h)},
                              {"robin_lambda", jnum(o.robin_lambda)},
                              {"robin_vector_error", jnum(o.robin_vector_error)},
                              {"oscillator", osc},
                              {"dirichlet_lambda", jnum(o.dirichlet_lambda)},
                              {"robin_errors", re},
                              {"oscillator_errors", oe},
                              {"robin_order", jnum(o.robin_order)},
                              {"oscillator_order", jnum(o.oscillator_order)}});
    }
  } else {
    const auto& m = rep.mesh;
    j["mesh"] = {{"vertices", m.vertices},         {"edges", m.edges},
                 {"triangles", m.triangles},       {"boundary_edges", m.boundary_edges},
                 {"boundary_loops", m.boundary_loops}, {"euler", m.euler},
                 {"h", jnum(m.h)},                 {"min_angle_deg", jnum(m.min_angle_deg)},
                 {"max_angle_deg", jnum(m.max_angle_deg)}};
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : rep.critical_points)
      pts.push_back({{"x", sig12(p.location.x())},
                     {"y", sig12(p.location.y())},
                     {"kind", morse::to_string(p.kind)},
                     {"index", p.index},
                     {"f", sig12(p.f_value)}});
    j["morse"] = {{"critical_points", pts},
                  {"c", rep.counts.c},
                  {"p", rep.counts.p},
                  {"q", rep.counts.q},
                  {"generator_counts", rep.generator_counts},
                  {"field_violations", rep.field_violations}};
    nlohmann::json cx = to_json(rep.complex);
    cx["betti"] = rep.complex_homology.betti;
    cx["torsion"] = rep.complex_homology.torsion;
    cx["boundary_squared_zero"] = rep.boundary_squared_zero;
    j["complex"] = cx;
    j["mesh_betti"] = rep.mesh_betti;
    nlohmann::json hk = nlohmann::json::array(), hn = nlohmann::json::array();
    for (int d = 0; d < 3; ++d) {
      hk.push_back(jnum(rep.hodge.max_kernel[d]));
      hn.push_back(jnum(rep.hodge.first_nonzero[d]));
    }
    j["hodge"] = {{"betti", rep.hodge.betti}, {"max_kernel", hk}, {"first_nonzero", hn}};
    nlohmann::json iv = nlohmann::json::array();
    for (const auto& v : rep.inequalities.verdicts)
      iv.push_back({{"k", v.k}, {"betti_sum", v.lhs}, {"count_sum", v.rhs}, {"holds", v.holds}});
    j["inequalities"] = {{"verdicts", iv},
                         {"equality_at_top", rep.inequalities.equality_at_top},
                         {"all_hold", rep.inequalities.all_hold}};
    j["gap"] = spectral::to_json(rep.gap);
    nlohmann::json qm = nlohmann::json::array();
    for (const auto& q : rep.quasimodes)
      qm.push_back({{"degree", q.degree},
                    {"generator", q.generator},
                    {"T", jnum(q.T)},
                    {"rayleigh", jnum(q.rayleigh)},
                    {"lambda_min", jnum(q.lambda_min)}});
    j["quasimodes"] = qm;
    j["comparison"] = rep.comparison ? chainmap::to_json(*rep.comparison) : nlohmann::json(nullptr);
  }
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["checks"] = checks;
  j["pass"] = rep.passed();
  return j;
}

void emit(const RunReport& rep, Format format, std::ostream& out) {
  if (format == Format::Json) {
    out << to_json(rep).dump(2) << '\n';
    return;
  }
  if (rep.scenario->dimension == 2) {
    spectral::write_gap_csv(rep.gap, out);
    return;
  }
  auto f = [](double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::string(buf);
  };
  out << "T,h,robin_lambda,robin_vector_error,oscillator_0,oscillator_1,oscillator_2,dirichlet_lambda,robin_order,"
         "oscillator_order\n";
  for (const auto& o : rep.oracles)
    out << f(o.T) << ',' << f(o.h) << ',' << f(o.robin_lambda) << ',' << f(o.robin_vector_error) << ','
        << f(o.oscillator[0]) << ',' << f(o.oscillator[1]) << ',' << f(o.oscillator[2]) << ','
        << f(o.dirichlet_lambda) << ',' << f(o.robin_order) << ',' << f(o.oscillator_order) << '\n';
}

void emit(const RunReport& rep, std::ostream& fallback) {
  if (rep.config.out.empty()) {
    emit(rep, rep.config.format, fallback);
    return;
  }
  std::ofstream out(rep.config.out);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + rep.config.out + "'");
  emit(rep, rep.config.format, out);
  require(static_cast<bool>(out), ErrorKind::Io, "write to '" + rep.config.out + "' failed");
}

OperatorKind parse_operator(const std::string& s) {
  if (s == "d" || s == "derivative") return OperatorKind::Derivative;
  if (s == "mass" || s == "M") return OperatorKind::Mass;
  if (s == "laplacian" || s == "A") return OperatorKind::Laplacian;
  fail(ErrorKind::Configuration, "unknown operator '" + s + "' (expected d, mass or laplacian)");
}

void export_operator(const RunConfig& cfg_in, double T, int degree, OperatorKind what, std::ostream& out) {
  require(T >= 0.0, ErrorKind::Configuration, "T must be nonnegative");
  RunConfig cfg = cfg_in;
  // T = 0 is the undeformed operator, for which the resolution contract is vacuous.
  cfg.T_list = {T > 0.0 ? T : 1.0};
  validate(cfg);
  require(degree >= 0 && degree <= 2, ErrorKind::Configuration, "degree must be 0, 1 or 2");
  require(what != OperatorKind::Derivative || degree <= 1, ErrorKind::Configuration, "d_T exists for degrees 0 and 1");
  const Pipeline pl = prepare(cfg, false);
  const dec::WittenAssembly as = dec::assemble(pl.mesh, pl.f, cfg.bc);
  switch (what) {
    case OperatorKind::Derivative:
      dec::write_triplets(dec::deformed_derivative(as, T, degree), out);
      break;
    case OperatorKind::Mass:
      dec::write_triplets(as.free_mass(degree), out);
      break;
    case OperatorKind::Laplacian: {
      require(as.dim(degree) <= 4000, ErrorKind::Configuration, "explicit A_k is limited to 4000 dofs; coarsen h");
      const auto q = dec::witten_quadratic_form(as, T, degree);
      dec::write_triplets(SparseMatrix(q.A.sparseView()), out);
      break;
    }
  }
}

int exit_code(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->is_configuration() ? 2 : 3;
  return 3;
}

void apply_thread_limit() {
  const char* env = std::getenv("WML_THREADS");
  if (!env || !*env) return;
  const long long n = parse_integer("WML_THREADS", env);
  require(n >= 1, ErrorKind::Configuration, "WML_THREADS must be a positive integer");
  omp_set_num_threads(static_cast<int>(n));
}

}  // namespace wml::runner
