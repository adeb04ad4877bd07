#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "wml/geometry.hpp"
#include "wml/homology.hpp"

namespace wml::morse {

using geometry::SurfaceDomain;

/// Analytic function with first and second derivatives.
struct MorseFunction {
  std::string formula;
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> gradient;
  std::function<Mat2(const Vec2&)> hessian;

  MorseFunction negated() const;
  MorseFunction shifted(double c) const;
};

MorseFunction linear_x();
MorseFunction saddle_xx_minus_yy();
MorseFunction bowl(double sign, double tilt);  // sign·(x²+y²)/2 + tilt·x

enum class CriticalKind { Interior, BoundaryMinus, BoundaryPlus };
const char* to_string(CriticalKind kind);

struct CriticalPoint {
  Vec2 location = Vec2::Zero();
  CriticalKind kind = CriticalKind::Interior;
  int index = 0;
  double f_value = 0.0;
  std::vector<Vec2> frame;  // unstable directions, ambient coordinates
  int loop = -1;            // boundary kinds only
  double param = 0.0;
  Mat2 hessian = Mat2::Zero();  // interior Hessian
  double normal_derivative = 0.0;   // νf with ν the outward normal
  double tangential_second = 0.0;   // second derivative of f|∂M in arclength
};

struct CriticalSearch {
  std::vector<CriticalPoint> points;
  std::vector<std::string> diagnostics;
};

/// Newton search seeded on a grid for interior points; sign changes along each loop for boundary points.
CriticalSearch find_critical_points(const MorseFunction& f, const SurfaceDomain& domain, int grid_density,
                                    double tol);

struct MorseCounts {
  std::array<int, 3> c{};  // interior, by index
  std::array<int, 2> p{};  // boundary, νf < 0
  std::array<int, 2> q{};  // boundary, νf > 0
};
MorseCounts morse_counts(const std::vector<CriticalPoint>& points);

/// Gradient-like field that is inward on ∂M except near boundary points with νf < 0.
class PseudoGradientField {
 public:
  PseudoGradientField(const MorseFunction& f, const SurfaceDomain& domain, double a,
                      std::vector<CriticalPoint> criticals);

  Vec2 operator()(const Vec2& x) const;
  Mat2 jacobian(const Vec2& x) const;
  double adaptation_radius() const { return a_; }
  double collar() const { return 2.0 * a_; }
  const MorseFunction& function() const { return f_; }
  const SurfaceDomain& domain() const { return domain_; }
  /// Zeros of the field: C(f) followed by the νf < 0 boundary points.
  const std::vector<CriticalPoint>& zeros() const { return zeros_; }

 private:
  double core_cutoff(const Vec2& x) const;

  MorseFunction f_;
  SurfaceDomain domain_;
  double a_;
  std::vector<CriticalPoint> zeros_;
  std::vector<Vec2> minus_points_;
};

/// Checks the radius-4a disjointness contract; throws Configuration when violated.
void check_adaptation_radius(const SurfaceDomain& domain, const std::vector<CriticalPoint>& points, double a);

PseudoGradientField adapted_field(const MorseFunction& f, const SurfaceDomain& domain, double a,
                                  const std::vector<CriticalPoint>& criticals);

/// Sampled verification of the field conditions; returns violation messages.
std::vector<std::string> verify_field(const PseudoGradientField& field, int samples);

enum class Direction { Forward, Backward };
enum class LimitKind { Critical, BoundaryExit, MaxLength, Stagnation };
const char* to_string(LimitKind kind);

struct TraceOptions {
  double max_step = 0.02;
  double tol = 1e-9;
  double capture = 1e-4;
  double max_length = 40.0;
  int max_steps = 200000;
  bool keep_points = true;
};

struct FlowLine {
  std::vector<Vec2> points;
  LimitKind limit = LimitKind::MaxLength;
  int critical = -1;  // index into field.zeros()
  double length = 0.0;
};

FlowLine trace_flow(const PseudoGradientField& field, const Vec2& start, Direction dir,
                    const TraceOptions& opts = {});

/// Unstable directions of the field linearization at a zero, ordered by eigenvalue and sign-normalized.
std::vector<Vec2> default_frame(const PseudoGradientField& field, const CriticalPoint& p);

/// Orientation of a generator: the unstable basis, plus a sign that only matters for index 0.
struct Frame {
  std::vector<Vec2> basis;
  int point_sign = 1;
  int orientation() const;  // ±1 relative to the counterclockwise ambient orientation (index 2), else point_sign
};
using Frames = std::vector<Frame>;
Frames default_frames(const PseudoGradientField& field);

struct UnstableCell {
  int dimension = 0;
  int critical = -1;
  std::vector<Vec2> frame;
  Vec2 point = Vec2::Zero();
  std::vector<Vec2> curve;                       // oriented along frame[0]
  std::array<int, 2> curve_ends{-1, -1};         // zeros reached by the negative/positive branch
  std::vector<std::array<Vec2, 3>> patch;        // counterclockwise triangles
  int patch_orientation = 1;                     // sign of det(frame) in the ambient orientation
  double area() const;
};

/// Basin classification of mesh triangles by backward limit, with adaptive subdivision.
struct BasinOptions {
  int max_depth = 3;
  TraceOptions trace;
};
std::vector<std::vector<std::array<Vec2, 3>>> classify_basins(const PseudoGradientField& field,
                                                              const geometry::TriMesh& mesh,
                                                              const BasinOptions& opts = {});
std::vector<std::vector<std::array<Vec2, 3>>> classify_basins_serial(const PseudoGradientField& field,
                                                                     const geometry::TriMesh& mesh,
                                                                     const BasinOptions& opts = {});

UnstableCell unstable_manifold(const PseudoGradientField& field, int zero_index,
                               const geometry::TriMesh* mesh = nullptr, const TraceOptions& opts = {});

struct ConnectionOptions {
  int seeds = 360;
  double seed_radius = 0.0;  // 0 selects a fraction of the adaptation radius
  TraceOptions trace;
};

struct Connection {
  int sign = 0;
  Vec2 approach = Vec2::Zero();
  double crossing_angle = 0.0;
};

/// Flow lines from zero q (index j+1) to zero p (index j), with signs from the given frames.
std::vector<Connection> connections(const PseudoGradientField& field, int q, int p,
                                    const Frames& frames, const ConnectionOptions& opts = {});
int connection_count(const PseudoGradientField& field, int q, int p, const Frames& frames,
                     const ConnectionOptions& opts = {});

struct ThomSmaleComplex {
  std::array<std::vector<CriticalPoint>, 3> generators;
  std::array<std::vector<int>, 3> zero_index;  // position of each generator in the field's zeros
  std::array<std::vector<Frame>, 3> frames;
  std::array<homology::IntMatrix, 2> boundary;  // boundary[j]: |C^{j+1}| × |C^j|
  bool relative = false;
  std::vector<std::string> diagnostics;

  int rank(int j) const { return static_cast<int>(generators[j].size()); }
};

ThomSmaleComplex build_thom_smale_complex(const PseudoGradientField& field, const ConnectionOptions& opts = {});
ThomSmaleComplex build_thom_smale_complex(const PseudoGradientField& field, const Frames& frames,
                                          const ConnectionOptions& opts = {});
/// Complex of (M, ∂M): built from -f and reindexed j ↦ 2 - j with transposed boundaries.
ThomSmaleComplex relative_complex(const ThomSmaleComplex& complex_of_minus_f);

bool boundary_squared_zero(const ThomSmaleComplex& complex);

struct HomologyRanks {
  std::array<int, 3> betti{};
  std::vector<std::int64_t> torsion;
};
HomologyRanks homology_ranks(const ThomSmaleComplex& complex);

struct InequalityVerdict {
  int k = 0;
  long lhs = 0;  // alternating Betti sum
  long rhs = 0;  // alternating count sum
  bool holds = false;
};
struct InequalityReport {
  std::vector<InequalityVerdict> verdicts;
  bool equality_at_top = false;
  bool all_hold = false;
};
enum class Mode { Absolute, Relative };
InequalityReport morse_inequalities(const MorseCounts& counts, const std::array<int, 3>& betti, Mode mode);
std::array<int, 3> generator_counts(const MorseCounts& counts, Mode mode);

}  // namespace wml::morse
