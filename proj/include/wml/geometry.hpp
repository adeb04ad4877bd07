#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace wml {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using SparseMatrix = Eigen::SparseMatrix<double>;

}  // namespace wml

namespace wml::geometry {

/// A closed smooth boundary curve given by a periodic parametrization.
///
/// Loops are traversed with the domain on their left, so the outward normal
/// is the tangent rotated clockwise.
struct Loop {
  std::function<Vec2(double)> point;
  std::function<Vec2(double)> tangent;   // d/dt point
  std::function<Vec2(double)> second;    // d²/dt² point
  double period = 0.0;
  /// Optional closed-form nearest parameter; a sampled Newton search is used otherwise.
  std::function<double(const Vec2&)> closest;

  double closest_param(const Vec2& x) const;
  Vec2 unit_tangent(double t) const { return tangent(t).normalized(); }
  Vec2 outward_normal_raw(double t) const {
    const Vec2 u = unit_tangent(t);
    return {u.y(), -u.x()};
  }
  double length(int samples = 4096) const;
};

struct Box {
  Vec2 lo;
  Vec2 hi;
};

/// Planar region bounded by smooth loops; the continuum surface M.
class SurfaceDomain {
 public:
  SurfaceDomain(std::string name, std::vector<Loop> loops, std::function<bool(const Vec2&)> inside,
                Box bbox);

  const std::string& name() const { return name_; }
  const std::vector<Loop>& loops() const { return loops_; }
  const Loop& loop(std::size_t i) const { return loops_.at(i); }
  bool inside(const Vec2& x) const { return inside_(x); }
  const Box& bounding_box() const { return bbox_; }

  /// Minimal feature size: smallest of curvature radius and loop separation.
  double feature_size() const { return feature_size_; }
  /// Euler characteristic implied by the loop count (connected planar region).
  int euler_characteristic() const { return 2 - static_cast<int>(loops_.size()); }

  struct Projection {
    std::size_t loop = 0;
    double param = 0.0;
    Vec2 point;
    double distance = 0.0;  // unsigned
  };
  /// Nearest boundary point over all loops.
  Projection project(const Vec2& x) const;

 private:
  void validate();

  std::string name_;
  std::vector<Loop> loops_;
  std::function<bool(const Vec2&)> inside_;
  Box bbox_;
  double feature_size_ = 0.0;
};

Loop circle_loop(const Vec2& center, double radius, bool counterclockwise);
SurfaceDomain make_disk(double radius, const Vec2& center = Vec2::Zero());
SurfaceDomain make_annulus(double inner, double outer, const Vec2& center = Vec2::Zero());

/// Unit outward normal at `param` on loop `loop_index`, confirmed by probing the inside test.
Vec2 outward_normal(const SurfaceDomain& domain, std::size_t loop_index, double param);

/// Oriented simplicial 2-complex with boundary bookkeeping.
///
/// Edges are oriented from the lower to the higher vertex index; triangles are
/// counterclockwise. Local edge i of a triangle is the one opposite vertex i.
struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 2>> edges;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 3>> triangle_edges;
  std::vector<std::array<int, 3>> triangle_edge_signs;
  std::vector<char> boundary_vertex;
  std::vector<char> boundary_edge;
  std::vector<int> vertex_loop;  // loop index of boundary vertices, -1 inside
  int boundary_loops = 0;
  double h = 0.0;

  std::size_t count(int degree) const;
  bool is_boundary(int degree, std::size_t index) const;
  double triangle_area(std::size_t t) const;
  Vec2 barycenter(int degree, std::size_t index) const;
  double total_area() const;
  int euler_characteristic() const {
    return static_cast<int>(vertices.size()) - static_cast<int>(edges.size()) +
           static_cast<int>(triangles.size());
  }
  /// Signed incidence matrix degree k -> k+1 (k = 0, 1) with entries ±1.
  SparseMatrix incidence(int k) const;
};

/// Builds the edge table, incidences and boundary flags from triangles.
TriMesh finalize_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                      std::vector<int> vertex_loop);

/// Deterministic Delaunay mesh of the domain with boundary vertices on the loops.
TriMesh build_mesh(const SurfaceDomain& domain, double target_h);

struct MeshReport {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t triangles = 0;
  std::size_t boundary_edges = 0;
  int boundary_loops = 0;
  int euler = 0;
  double h = 0.0;
  double min_angle_deg = 0.0;
  double max_angle_deg = 0.0;
};

MeshReport mesh_report(const TriMesh& mesh);

/// Checks every TriMesh invariant; throws MeshQuality with the first violation.
void check_mesh(const TriMesh& mesh, const SurfaceDomain* domain = nullptr);

void write_off(const TriMesh& mesh, std::ostream& out);

/// Point location over a mesh with a uniform bucket grid.
class PointLocator {
 public:
  explicit PointLocator(const TriMesh& mesh);

  struct Hit {
    int triangle = -1;
    std::array<double, 3> bary{};  // barycentric coordinates (may be negative off-mesh)
    bool inside = false;
  };
  /// Containing triangle, or the nearest one for points off the mesh.
  Hit locate(const Vec2& x) const;
  const TriMesh& mesh() const { return *mesh_; }

 private:
  std::array<double, 3> barycentric(int t, const Vec2& x) const;

  const TriMesh* mesh_;
  Vec2 origin_;
  double cell_ = 1.0;
  int nx_ = 1;
  int ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace wml::geometry
