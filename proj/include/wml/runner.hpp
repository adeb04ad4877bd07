#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wml/chainmap.hpp"
#include "wml/dec.hpp"
#include "wml/error.hpp"
#include "wml/geometry.hpp"
#include "wml/morse.hpp"
#include "wml/spectral.hpp"

namespace wml::runner {

struct Scenario {
  std::string name;
  std::string domain_text;
  std::string formula;
  int dimension = 2;
  std::function<geometry::SurfaceDomain()> domain;
  std::function<morse::MorseFunction()> function;
  double a = 0.0;                 // adaptation radius of the pseudo-gradient
  double quasimode_radius = 0.0;  // cutoff radius of the comparison quasimodes
  int grid_density = 40;
  std::array<int, 3> expected_absolute{};
  std::array<int, 3> expected_relative{};
  double default_h = 0.05;
  std::vector<double> default_T;
};

/// Shipped scenarios in a fixed order.
const std::vector<Scenario>& scenarios();
/// Scenarios whose name contains `filter`; all of them for an empty filter.
std::vector<const Scenario*> list_scenarios(const std::string& filter = "");
/// Throws Configuration for unknown names.
const Scenario& find_scenario(const std::string& name);
nlohmann::json to_json(const Scenario& s);

enum class Format { Json, Csv };
Format parse_format(const std::string& s);

struct RunConfig {
  std::string scenario;
  dec::BoundaryCondition bc = dec::BoundaryCondition::Absolute;
  std::vector<double> T_list;      // empty selects the scenario default
  std::optional<double> target_h;  // unset selects the scenario default
  double C0 = 1.0;
  int k_eigs = 2;
  std::uint64_t seed = 1;
  std::string out;
  Format format = Format::Json;
  bool override_resolution = false;
};

/// Parses "4,8,16"; throws Configuration on malformed entries.
std::vector<double> parse_T_list(const std::string& s);

/// Sets one field from its config-file key (or the matching flag name).
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Flat `key = value` file, one assignment per line, `#` comments.
void load_config(std::istream& in, RunConfig& cfg);
void load_config_file(const std::string& path, RunConfig& cfg);

/// Fills defaults and enforces every contract; throws Configuration. Returns warnings.
std::vector<std::string> validate(RunConfig& cfg);

nlohmann::json to_json(const RunConfig& cfg);

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Timing {
  std::string stage;
  double seconds = 0.0;
};

/// One model-operator suite at a single T.
struct OracleRow {
  double T = 0.0;
  double h = 0.0;
  double robin_lambda = 0.0;
  double robin_vector_error = 0.0;  // relative L² distance to e^{-Tz}
  std::array<double, 3> oscillator{};
  double dirichlet_lambda = 0.0;
  std::array<double, 3> robin_errors{};       // vector error at h, h/2, h/4
  std::array<double, 3> oscillator_errors{};  // max eigenvalue error at h, h/2, h/4
  double robin_order = 0.0;
  double oscillator_order = 0.0;
};

/// Robin, Dirichlet and oscillator oracles at T, with convergence over h, h/2, h/4.
OracleRow oracle_suite(double T, double h, std::uint64_t seed = 1);

struct QuasimodeRow {
  int degree = 0;
  int generator = 0;
  double T = 0.0;
  double rayleigh = 0.0;
  double lambda_min = 0.0;  // smallest computed eigenvalue of the degree
};

struct RunReport {
  RunConfig config;
  const Scenario* scenario = nullptr;
  double h = 0.0;
  std::vector<std::string> warnings;

  // 2D pipeline
  geometry::MeshReport mesh;
  std::vector<morse::CriticalPoint> critical_points;
  morse::MorseCounts counts;
  std::array<int, 3> generator_counts{};
  std::vector<std::string> field_violations;
  morse::ThomSmaleComplex complex;
  morse::HomologyRanks complex_homology;
  bool boundary_squared_zero = false;
  std::array<int, 3> mesh_betti{};
  dec::HodgeBetti hodge;
  morse::InequalityReport inequalities;
  spectral::GapScan gap;
  std::vector<QuasimodeRow> quasimodes;
  std::optional<chainmap::Comparison> comparison;

  // 1D suite
  std::vector<OracleRow> oracles;

  std::vector<Check> checks;
  std::vector<Timing> timings;  // wall-clock; kept out of the serialized report

  bool passed() const;
};

/// Runs the full pipeline for a validated config.
RunReport run(const RunConfig& cfg);

nlohmann::json to_json(const morse::ThomSmaleComplex& cx);
/// Deterministic report without timings.
nlohmann::json to_json(const RunReport& report);

/// JSON report, or the gap table (oracle table for 1D runs) as CSV.
void emit(const RunReport& report, Format format, std::ostream& out);
/// Writes to cfg.out, or `fallback` when no path is set; throws Io when the path is unwritable.
void emit(const RunReport& report, std::ostream& fallback);

/// Mesh, field and complex of a 2D scenario, without any spectral work.
struct Pipeline {
  const Scenario* scenario = nullptr;
  std::unique_ptr<geometry::SurfaceDomain> domain;
  morse::MorseFunction f;
  std::vector<morse::CriticalPoint> points;
  std::unique_ptr<morse::PseudoGradientField> field;
  morse::ThomSmaleComplex complex;
  geometry::TriMesh mesh;
};
Pipeline prepare(const RunConfig& cfg, bool build_complex = true);

enum class OperatorKind { Derivative, Mass, Laplacian };
OperatorKind parse_operator(const std::string& s);
/// Writes d_T (degree k → k+1), M_k or A_k(T) on free dofs as triplets.
void export_operator(const RunConfig& cfg, double T, int degree, OperatorKind what, std::ostream& out);

/// Exit status for an exception escaping the pipeline: 2 for configuration errors, 3 otherwise.
int exit_code(const std::exception& e);

/// Applies WML_THREADS, if set; throws Configuration on a malformed value.
void apply_thread_limit();

}  // namespace wml::runner
