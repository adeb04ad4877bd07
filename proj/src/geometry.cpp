#include "wml/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <utility>

#include "wml/error.hpp"

namespace wml::geometry {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double wrap(double t, double period) {
  double r = std::fmod(t, period);
  return r < 0 ? r + period : r;
}

// Deterministic jitter in [-1, 1] from an integer key (splitmix64).
double hash_unit(std::uint64_t key) {
  key += 0x9e3779b97f4a7c15ULL;
  key = (key ^ (key >> 30)) * 0xbf58476d1ce4e5b9ULL;
  key = (key ^ (key >> 27)) * 0x94d049bb133111ebULL;
  key ^= key >> 31;
  return 2.0 * (static_cast<double>(key >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Loop / SurfaceDomain

double Loop::closest_param(const Vec2& x) const {
  if (closest) return wrap(closest(x), period);
  constexpr int kSamples = 256;
  double best_t = 0.0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSamples; ++i) {
    const double t = period * i / kSamples;
    const double d = (point(t) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_t = t;
    }
  }
  const double max_step = period / kSamples;
  double t = best_t;
  for (int it = 0; it < 30; ++it) {
    const Vec2 r = point(t) - x;
    const Vec2 d1 = tangent(t);
    const double g = r.dot(d1);
    const double dg = d1.squaredNorm() + r.dot(second(t));
    if (dg <= 0) break;
    const double step = std::clamp(-g / dg, -max_step, max_step);
    t += step;
    if (std::abs(step) < 1e-15 * period) break;
  }
  return wrap(t, period);
}

double Loop::length(int samples) const {
  double sum = 0.0;
  for (int i = 0; i < samples; ++i) sum += tangent(period * (i + 0.5) / samples).norm();
  return sum * period / samples;
}

SurfaceDomain::SurfaceDomain(std::string name, std::vector<Loop> loops,
                             std::function<bool(const Vec2&)> inside, Box bbox)
    : name_(std::move(name)), loops_(std::move(loops)), inside_(std::move(inside)), bbox_(bbox) {
  validate();
}

void SurfaceDomain::validate() {
  require(!loops_.empty(), ErrorKind::DomainInvalid, name_ + ": domain has no boundary loop");
  constexpr int kSamples = 512;
  const double scale = (bbox_.hi - bbox_.lo).norm();
  double curvature_radius = std::numeric_limits<double>::infinity();
  std::vector<std::vector<Vec2>> samples(loops_.size());
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    const Loop& loop = loops_[l];
    require(loop.period > 0 && loop.point && loop.tangent && loop.second, ErrorKind::DomainInvalid,
            name_ + ": incomplete loop parametrization");
    for (int i = 0; i < kSamples; ++i) {
      const double t = loop.period * i / kSamples;
      const Vec2 d1 = loop.tangent(t);
      require(d1.norm() > 1e-12 * scale, ErrorKind::DomainInvalid,
              name_ + ": loop derivative vanishes");
      const double k = std::abs(cross(d1, loop.second(t))) / std::pow(d1.norm(), 3);
      if (k > 0) curvature_radius = std::min(curvature_radius, 1.0 / k);
      samples[l].push_back(loop.point(t));
    }
  }
  double separation = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < samples.size(); ++a)
    for (std::size_t b = a + 1; b < samples.size(); ++b)
      for (const Vec2& p : samples[a])
        for (const Vec2& q : samples[b]) separation = std::min(separation, (p - q).norm());
  require(separation > 0, ErrorKind::DomainInvalid, name_ + ": boundary loops intersect");
  feature_size_ = std::min(curvature_radius, separation);
  if (!std::isfinite(feature_size_)) feature_size_ = scale;

  // The inside predicate must agree with the loop orientation.
  const double eps = 1e-3 * feature_size_;
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    for (int i = 0; i < 64; ++i) {
      const double t = loops_[l].period * (i + 0.25) / 64;
      const Vec2 p = loops_[l].point(t);
      const Vec2 n = loops_[l].outward_normal_raw(t);
      require(!inside_(p + eps * n) && inside_(p - eps * n), ErrorKind::DomainInvalid,
              name_ + ": inside test inconsistent with loop " + std::to_string(l));
    }
  }
}

SurfaceDomain::Projection SurfaceDomain::project(const Vec2& x) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < loops_.size(); ++l) {
    const double t = loops_[l].closest_param(x);
    const Vec2 p = loops_[l].point(t);
    const double d = (p - x).norm();
    if (d < best.distance) best = {l, t, p, d};
  }
  return best;
}

Loop circle_loop(const Vec2& center, double radius, bool counterclockwise) {
  const double s = counterclockwise ? 1.0 : -1.0;
  Loop loop;
  loop.period = kTwoPi;
  loop.point = [=](double t) { return Vec2(center.x() + radius * std::cos(t), center.y() + s * radius * std::sin(t)); };
  loop.tangent = [=](double t) { return Vec2(-radius * std::sin(t), s * radius * std::cos(t)); };
  loop.second = [=](double t) { return Vec2(-radius * std::cos(t), -s * radius * std::sin(t)); };
  loop.closest = [=](const Vec2& x) {
    const Vec2 d = x - center;
    return wrap(std::atan2(s * d.y(), d.x()), kTwoPi);
  };
  return loop;
}

SurfaceDomain make_disk(double radius, const Vec2& center) {
  require(radius > 0, ErrorKind::InvalidInput, "disk radius must be positive");
  const Box box{center - Vec2(radius, radius), center + Vec2(radius, radius)};
  return SurfaceDomain("disk", {circle_loop(center, radius, true)},
                       [=](const Vec2& x) { return (x - center).norm() < radius; }, box);
}

SurfaceDomain make_annulus(double inner, double outer, const Vec2& center) {
  require(inner > 0 && outer > inner, ErrorKind::InvalidInput, "annulus radii must satisfy 0 < inner < outer");
  const Box box{center - Vec2(outer, outer), center + Vec2(outer, outer)};
  return SurfaceDomain(
      "annulus", {circle_loop(center, outer, true), circle_loop(center, inner, false)},
      [=](const Vec2& x) {
        const double r = (x - center).norm();
        return r > inner && r < outer;
      },
      box);
}

Vec2 outward_normal(const SurfaceDomain& domain, std::size_t loop_index, double param) {
  require(loop_index < domain.loops().size(), ErrorKind::InvalidInput, "loop index out of range");
  const Loop& loop = domain.loop(loop_index);
  require(param >= 0 && param <= loop.period, ErrorKind::InvalidInput, "parameter outside loop range");
  const Vec2 p = loop.point(param);
  const Vec2 n = loop.outward_normal_raw(param);
  const double eps = 1e-3 * domain.feature_size();
  const bool out_ok = !domain.inside(p + eps * n);
  const bool in_ok = domain.inside(p - eps * n);
  require(out_ok && in_ok, ErrorKind::GeometricAmbiguity, "normal probe inconclusive at loop point");
  return n;
}

// ---------------------------------------------------------------------------
// TriMesh

std::size_t TriMesh::count(int degree) const {
  switch (degree) {
    case 0: return vertices.size();
    case 1: return edges.size();
    case 2: return triangles.size();
    default: return 0;
  }
}

bool TriMesh::is_boundary(int degree, std::size_t index) const {
  switch (degree) {
    case 0: return boundary_vertex[index] != 0;
    case 1: return boundary_edge[index] != 0;
    default: return false;
  }
}

double TriMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 * cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
}

Vec2 TriMesh::barycenter(int degree, std::size_t index) const {
  switch (degree) {
    case 0: return vertices[index];
    case 1: return 0.5 * (vertices[edges[index][0]] + vertices[edges[index][1]]);
    case 2: {
      const auto& t = triangles[index];
      return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
    }
    default: fail(ErrorKind::InvalidInput, "degree out of range");
  }
}

double TriMesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
  return a;
}

SparseMatrix TriMesh::incidence(int k) const {
  std::vector<Eigen::Triplet<double>> trip;
  if (k == 0) {
    SparseMatrix d(static_cast<Eigen::Index>(edges.size()), static_cast<Eigen::Index>(vertices.size()));
    trip.reserve(2 * edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      trip.emplace_back(static_cast<int>(e), edges[e][0], -1.0);
      trip.emplace_back(static_cast<int>(e), edges[e][1], 1.0);
    }
    d.setFromTriplets(trip.begin(), trip.end());
    return d;
  }
  if (k == 1) {
    SparseMatrix d(static_cast<Eigen::Index>(triangles.size()), static_cast<Eigen::Index>(edges.size()));
    trip.reserve(3 * triangles.size());
    for (std::size_t t = 0; t < triangles.size(); ++t)
      for (int i = 0; i < 3; ++i)
        trip.emplace_back(static_cast<int>(t), triangle_edges[t][i], triangle_edge_signs[t][i]);
    d.setFromTriplets(trip.begin(), trip.end());
    return d;
  }
  fail(ErrorKind::InvalidInput, "incidence degree must be 0 or 1");
}

TriMesh finalize_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                      std::vector<int> vertex_loop) {
  // Drop unreferenced vertices.
  std::vector<int> remap(vertices.size(), -1);
  TriMesh mesh;
  for (auto& t : triangles)
    for (int& v : t) {
      if (remap[v] < 0) remap[v] = 0;
    }
  int next = 0;
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    if (remap[v] < 0) continue;
    remap[v] = next++;
    mesh.vertices.push_back(vertices[v]);
    mesh.vertex_loop.push_back(vertex_loop.empty() ? -1 : vertex_loop[v]);
  }
  for (auto t : triangles) {
    for (int& v : t) v = remap[v];
    if (cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]) < 0)
      std::swap(t[1], t[2]);
    mesh.triangles.push_back(t);
  }

  std::map<std::pair<int, int>, int> edge_index;
  std::vector<int> cofaces;
  mesh.triangle_edges.resize(mesh.triangles.size());
  mesh.triangle_edge_signs.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      const int a = tri[(i + 1) % 3];
      const int b = tri[(i + 2) % 3];
      const auto key = std::minmax(a, b);
      auto [it, inserted] = edge_index.try_emplace({key.first, key.second}, static_cast<int>(mesh.edges.size()));
      if (inserted) {
        mesh.edges.push_back({key.first, key.second});
        cofaces.push_back(0);
      }
      ++cofaces[it->second];
      mesh.triangle_edges[t][i] = it->second;
      mesh.triangle_edge_signs[t][i] = (a < b) ? 1 : -1;
    }
  }
  mesh.boundary_edge.assign(mesh.edges.size(), 0);
  mesh.boundary_vertex.assign(mesh.vertices.size(), 0);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    require(cofaces[e] <= 2, ErrorKind::MeshQuality, "edge with more than two cofaces");
    if (cofaces[e] == 1) {
      mesh.boundary_edge[e] = 1;
      mesh.boundary_vertex[mesh.edges[e][0]] = 1;
      mesh.boundary_vertex[mesh.edges[e][1]] = 1;
    }
  }
  // Count boundary cycles.
  std::vector<std::vector<int>> adj(mesh.vertices.size());
  for (std::size_t e = 0; e < mesh.edges.size(); ++e)
    if (mesh.boundary_edge[e]) {
      adj[mesh.edges[e][0]].push_back(mesh.edges[e][1]);
      adj[mesh.edges[e][1]].push_back(mesh.edges[e][0]);
    }
  std::vector<char> seen(mesh.vertices.size(), 0);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!mesh.boundary_vertex[v] || seen[v]) continue;
    ++mesh.boundary_loops;
    std::vector<int> stack{static_cast<int>(v)};
    seen[v] = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int w : adj[u])
        if (!seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
    }
  }
  for (const auto& e : mesh.edges)
    mesh.h = std::max(mesh.h, (mesh.vertices[e[0]] - mesh.vertices[e[1]]).norm());
  return mesh;
}

// ---------------------------------------------------------------------------
// Delaunay triangulation by incremental insertion and Lawson flips.

namespace {

class Delaunay {
 public:
  explicit Delaunay(const std::vector<Vec2>& points) : pts_(points) {
    Vec2 lo = pts_.front(), hi = pts_.front();
    for (const Vec2& p : pts_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec2 c = 0.5 * (lo + hi);
    const double s = std::max((hi - lo).maxCoeff(), 1e-12) * 50.0;
    n_real_ = static_cast<int>(pts_.size());
    pts_.push_back(c + Vec2(-s, -s));
    pts_.push_back(c + Vec2(s, -s));
    pts_.push_back(c + Vec2(0, s));
    tris_.push_back({{n_real_, n_real_ + 1, n_real_ + 2}, {-1, -1, -1}});
    scale_ = s;
  }

  void insert_all(const std::vector<int>& order) {
    for (int i : order) insert(i);
  }

  std::vector<std::array<int, 3>> triangles() const {
    std::vector<std::array<int, 3>> out;
    for (const Tri& t : tris_) {
      if (t.v[0] >= n_real_ || t.v[1] >= n_real_ || t.v[2] >= n_real_) continue;
      out.push_back(t.v);
    }
    return out;
  }

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> n;  // neighbor across the edge opposite v[i]
  };

  double orient(int a, int b, const Vec2& p) const { return cross(pts_[b] - pts_[a], p - pts_[a]); }

  double incircle(const Tri& t, const Vec2& d) const {
    const Vec2 a = pts_[t.v[0]] - d, b = pts_[t.v[1]] - d, c = pts_[t.v[2]] - d;
    const double det = a.squaredNorm() * cross(b, c) - b.squaredNorm() * cross(a, c) + c.squaredNorm() * cross(a, b);
    const double mag = std::max({a.squaredNorm(), b.squaredNorm(), c.squaredNorm()});
    // Relative threshold: cocircular quads are left alone so the flip loop terminates.
    return det - 1e-10 * mag * mag;
  }

  int locate(const Vec2& p) {
    int t = last_;
    for (std::size_t guard = 0; guard < 4 * tris_.size() + 16; ++guard) {
      const Tri& tri = tris_[t];
      bool moved = false;
      for (int k = 0; k < 3; ++k) {
        const int i = (k + rotate_) % 3;
        if (orient(tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], p) < 0 && tri.n[i] >= 0) {
          t = tri.n[i];
          moved = true;
          break;
        }
      }
      rotate_ = (rotate_ + 1) % 3;
      if (!moved) return t;
    }
    fail(ErrorKind::MeshQuality, "point location did not terminate");
  }

  void set_back(int nb, int old_t, int new_t) {
    if (nb < 0) return;
    for (int& x : tris_[nb].n)
      if (x == old_t) x = new_t;
  }

  void insert(int pi) {
    const Vec2& p = pts_[pi];
    const int t = locate(p);
    for (int v : tris_[t].v)
      if ((pts_[v] - p).norm() < 1e-12 * scale_) return;
    const auto [a, b, c] = tris_[t].v;
    const auto [n0, n1, n2] = tris_[t].n;
    const int t0 = t;
    const int t1 = static_cast<int>(tris_.size());
    const int t2 = t1 + 1;
    tris_[t0] = {{a, b, pi}, {t1, t2, n2}};
    tris_.push_back({{b, c, pi}, {t2, t0, n0}});
    tris_.push_back({{c, a, pi}, {t0, t1, n1}});
    set_back(n0, t, t1);
    set_back(n1, t, t2);
    last_ = t0;
    std::vector<int> stack{t0, t1, t2};
    while (!stack.empty()) {
      const int s = stack.back();
      stack.pop_back();
      legalize(s, pi, stack);
    }
  }

  // Flip the edge opposite `pi` in triangle `t` when it is not locally Delaunay.
  void legalize(int t, int pi, std::vector<int>& stack) {
    Tri& tri = tris_[t];
    int i = 0;
    while (i < 3 && tri.v[i] != pi) ++i;
    if (i == 3) return;
    const int u = tri.n[i];
    if (u < 0) return;
    Tri& other = tris_[u];
    int j = 0;
    while (j < 3 && other.n[j] != t) ++j;
    if (j == 3) return;
    const int d = other.v[j];
    if (incircle(tri, pts_[d]) <= 0) return;
    const int q = tri.v[(i + 1) % 3];
    const int r = tri.v[(i + 2) % 3];
    const int tn_q = tri.n[(i + 1) % 3];
    const int tn_r = tri.n[(i + 2) % 3];
    const int un_r = other.n[(j + 1) % 3];
    const int un_q = other.n[(j + 2) % 3];
    tris_[t] = {{pi, q, d}, {un_r, u, tn_r}};
    tris_[u] = {{pi, d, r}, {un_q, tn_q, t}};
    set_back(un_r, u, t);
    set_back(tn_q, t, u);
    stack.push_back(t);
    stack.push_back(u);
  }

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  int n_real_ = 0;
  int last_ = 0;
  int rotate_ = 0;
  double scale_ = 1.0;
};

std::vector<std::array<int, 3>> delaunay(const std::vector<Vec2>& points, double cell) {
  // Serpentine row order keeps point-location walks short.
  std::vector<int> order(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) order[i] = static_cast<int>(i);
  Vec2 lo = points.front();
  for (const Vec2& p : points) lo = lo.cwiseMin(p);
  auto key = [&](int i) {
    const long row = static_cast<long>(std::floor((points[i].y() - lo.y()) / cell));
    const double x = points[i].x();
    return std::pair<long, double>(row, (row % 2 == 0) ? x : -x);
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  Delaunay dt(points);
  dt.insert_all(order);
  return dt.triangles();
}

std::vector<std::array<int, 3>> keep_inside(const SurfaceDomain& domain, const std::vector<Vec2>& pts,
                                            const std::vector<std::array<int, 3>>& tris) {
  std::vector<std::array<int, 3>> out;
  for (const auto& t : tris) {
    const Vec2 c = (pts[t[0]] + pts[t[1]] + pts[t[2]]) / 3.0;
    if (domain.inside(c)) out.push_back(t);
  }
  return out;
}

}  // namespace

TriMesh build_mesh(const SurfaceDomain& domain, double target_h) {
  require(std::isfinite(target_h) && target_h > 0, ErrorKind::InvalidInput, "target_h must be positive");
  require(target_h < domain.feature_size(), ErrorKind::InvalidInput,
          "target_h exceeds the domain feature size");

  // Nominal spacing sits below target_h so the longest Delaunay edge stays within bounds.
  const double spacing = 0.85 * target_h;
  std::vector<Vec2> pts;
  std::vector<int> loop_of;
  std::vector<char> fixed;
  for (std::size_t l = 0; l < domain.loops().size(); ++l) {
    const Loop& loop = domain.loop(l);
    constexpr int kTable = 8192;
    std::vector<double> cum(kTable + 1, 0.0);
    for (int i = 0; i < kTable; ++i)
      cum[i + 1] = cum[i] + loop.tangent(loop.period * (i + 0.5) / kTable).norm() * loop.period / kTable;
    const double len = cum.back();
    const int n = std::max(12, static_cast<int>(std::ceil(len / spacing)));
    for (int k = 0; k < n; ++k) {
      const double s = len * k / n;
      const auto it = std::upper_bound(cum.begin(), cum.end(), s);
      const int i = std::clamp(static_cast<int>(it - cum.begin()) - 1, 0, kTable - 1);
      const double frac = (s - cum[i]) / std::max(cum[i + 1] - cum[i], 1e-300);
      const double t = loop.period * (i + frac) / kTable;
      pts.push_back(loop.point(t));
      loop_of.push_back(static_cast<int>(l));
      fixed.push_back(1);
    }
  }
  const Box& box = domain.bounding_box();
  const double dy = spacing * std::sqrt(3.0) / 2.0;
  const double margin = 0.6 * spacing;
  std::uint64_t id = 0;
  for (int row = 0;; ++row) {
    const double y = box.lo.y() + row * dy;
    if (y > box.hi.y()) break;
    const double offset = (row % 2) ? 0.5 * spacing : 0.0;
    for (int col = 0;; ++col) {
      const double x = box.lo.x() + offset + col * spacing;
      if (x > box.hi.x()) break;
      ++id;
      Vec2 p(x + 1e-4 * spacing * hash_unit(2 * id), y + 1e-4 * spacing * hash_unit(2 * id + 1));
      if (!domain.inside(p) || domain.project(p).distance < margin) continue;
      pts.push_back(p);
      loop_of.push_back(-1);
      fixed.push_back(0);
    }
  }

  auto tris = keep_inside(domain, pts, delaunay(pts, spacing));
  constexpr int kSmoothing = 4;
  for (int it = 0; it < kSmoothing; ++it) {
    std::vector<Vec2> sum(pts.size(), Vec2::Zero());
    std::vector<int> cnt(pts.size(), 0);
    for (const auto& t : tris)
      for (int i = 0; i < 3; ++i)
        for (int j = 1; j < 3; ++j) {
          sum[t[i]] += pts[t[(i + j) % 3]];
          ++cnt[t[i]];
        }
    for (std::size_t v = 0; v < pts.size(); ++v) {
      if (fixed[v] || cnt[v] == 0) continue;
      const Vec2 candidate = sum[v] / cnt[v];
      if (domain.inside(candidate) && domain.project(candidate).distance >= 0.55 * spacing) pts[v] = candidate;
    }
    tris = keep_inside(domain, pts, delaunay(pts, spacing));
  }
  // Split remaining long edges at their midpoints.
  for (int pass = 0; pass < 4; ++pass) {
    std::map<std::pair<int, int>, char> seen;
    std::size_t added = 0;
    for (const auto& t : tris)
      for (int i = 0; i < 3; ++i) {
        const auto key = std::minmax(t[(i + 1) % 3], t[(i + 2) % 3]);
        if (!seen.emplace(std::pair<int, int>(key.first, key.second), 1).second) continue;
        if ((pts[key.first] - pts[key.second]).norm() <= 0.98 * target_h) continue;
        const Vec2 mid = 0.5 * (pts[key.first] + pts[key.second]);
        if (!domain.inside(mid) || domain.project(mid).distance < 0.3 * spacing) continue;
        pts.push_back(mid);
        loop_of.push_back(-1);
        fixed.push_back(0);
        ++added;
      }
    if (added == 0) break;
    tris = keep_inside(domain, pts, delaunay(pts, spacing));
  }

  TriMesh mesh = finalize_mesh(pts, tris, loop_of);
  check_mesh(mesh, &domain);
  require(mesh.h <= 1.5 * target_h, ErrorKind::MeshQuality,
          "realized mesh size exceeds 1.5 target_h");
  return mesh;
}

void check_mesh(const TriMesh& mesh, const SurfaceDomain* domain) {
  require(!mesh.triangles.empty(), ErrorKind::MeshQuality, "empty mesh");
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    require(mesh.triangle_area(t) > 1e-14 * mesh.h * mesh.h, ErrorKind::MeshQuality, "degenerate triangle");
  std::vector<int> cofaces(mesh.edges.size(), 0);
  for (const auto& te : mesh.triangle_edges)
    for (int e : te) ++cofaces[e];
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    const int want = mesh.boundary_edge[e] ? 1 : 2;
    require(cofaces[e] == want, ErrorKind::MeshQuality, "edge coface count violates manifold-with-boundary");
  }
  const SparseMatrix dd = mesh.incidence(1) * mesh.incidence(0);
  for (int k = 0; k < dd.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(dd, k); it; ++it)
      require(it.value() == 0.0, ErrorKind::MeshQuality, "incidence composition d1 d0 is nonzero");
  if (domain) {
    require(mesh.euler_characteristic() == domain->euler_characteristic(), ErrorKind::MeshQuality,
            "mesh Euler characteristic differs from the domain's");
    require(mesh.boundary_loops == static_cast<int>(domain->loops().size()), ErrorKind::MeshQuality,
            "mesh boundary loop count differs from the domain's");
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
      if (mesh.boundary_vertex[v])
        require(domain->project(mesh.vertices[v]).distance <= mesh.h * mesh.h, ErrorKind::MeshQuality,
                "boundary vertex off the boundary loops");
  }
}

MeshReport mesh_report(const TriMesh& mesh) {
  require(!mesh.triangles.empty(), ErrorKind::InvalidInput, "mesh_report on an empty mesh");
  MeshReport r;
  r.vertices = mesh.vertices.size();
  r.edges = mesh.edges.size();
  r.triangles = mesh.triangles.size();
  r.boundary_edges = static_cast<std::size_t>(std::count(mesh.boundary_edge.begin(), mesh.boundary_edge.end(), 1));
  r.boundary_loops = mesh.boundary_loops;
  r.euler = mesh.euler_characteristic();
  r.h = mesh.h;
  r.min_angle_deg = 180.0;
  r.max_angle_deg = 0.0;
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      const Vec2 u = mesh.vertices[t[(i + 1) % 3]] - mesh.vertices[t[i]];
      const Vec2 w = mesh.vertices[t[(i + 2) % 3]] - mesh.vertices[t[i]];
      const double ang = std::atan2(std::abs(cross(u, w)), u.dot(w)) * 180.0 / std::numbers::pi;
      r.min_angle_deg = std::min(r.min_angle_deg, ang);
      r.max_angle_deg = std::max(r.max_angle_deg, ang);
    }
  }
  return r;
}

void write_off(const TriMesh& mesh, std::ostream& out) {
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.triangles.size() << " 0\n";
  out.precision(12);
  for (const Vec2& v : mesh.vertices) out << v.x() << ' ' << v.y() << " 0\n";
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

// ---------------------------------------------------------------------------
// PointLocator

PointLocator::PointLocator(const TriMesh& mesh) : mesh_(&mesh) {
  require(!mesh.triangles.empty(), ErrorKind::InvalidInput, "locator on an empty mesh");
  Vec2 lo = mesh.vertices.front(), hi = mesh.vertices.front();
  for (const Vec2& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  cell_ = std::max(mesh.h, 1e-12);
  origin_ = lo;
  nx_ = std::max(1, static_cast<int>(std::ceil((hi.x() - lo.x()) / cell_)) + 1);
  ny_ = std::max(1, static_cast<int>(std::ceil((hi.y() - lo.y()) / cell_)) + 1);
  buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    Vec2 tlo = mesh.vertices[mesh.triangles[t][0]], thi = tlo;
    for (int v : mesh.triangles[t]) {
      tlo = tlo.cwiseMin(mesh.vertices[v]);
      thi = thi.cwiseMax(mesh.vertices[v]);
    }
    const int i0 = static_cast<int>((tlo.x() - origin_.x()) / cell_), i1 = static_cast<int>((thi.x() - origin_.x()) / cell_);
    const int j0 = static_cast<int>((tlo.y() - origin_.y()) / cell_), j1 = static_cast<int>((thi.y() - origin_.y()) / cell_);
    for (int j = std::max(j0, 0); j <= std::min(j1, ny_ - 1); ++j)
      for (int i = std::max(i0, 0); i <= std::min(i1, nx_ - 1); ++i)
        buckets_[static_cast<std::size_t>(j) * nx_ + i].push_back(static_cast<int>(t));
  }
}

std::array<double, 3> PointLocator::barycentric(int t, const Vec2& x) const {
  const auto& tri = mesh_->triangles[t];
  const Vec2& a = mesh_->vertices[tri[0]];
  const Vec2& b = mesh_->vertices[tri[1]];
  const Vec2& c = mesh_->vertices[tri[2]];
  const double area2 = cross(b - a, c - a);
  const double l1 = cross(c - b, x - b) / area2;
  const double l2 = cross(a - c, x - c) / area2;
  return {l1, l2, 1.0 - l1 - l2};
}

namespace {
double segment_distance(const Vec2& x, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double s = std::clamp((x - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + s * ab - x).norm();
}
}  // namespace

PointLocator::Hit PointLocator::locate(const Vec2& x) const {
  const int ci = static_cast<int>(std::floor((x.x() - origin_.x()) / cell_));
  const int cj = static_cast<int>(std::floor((x.y() - origin_.y()) / cell_));
  if (ci >= 0 && ci < nx_ && cj >= 0 && cj < ny_) {
    for (int t : buckets_[static_cast<std::size_t>(cj) * nx_ + ci]) {
      const auto b = barycentric(t, x);
      if (b[0] >= -1e-12 && b[1] >= -1e-12 && b[2] >= -1e-12) return {t, b, true};
    }
  }
  // Nearest triangle by expanding rings of buckets.
  Hit best;
  double best_d = std::numeric_limits<double>::infinity();
  const int max_ring = std::max(nx_, ny_) + std::abs(ci) + std::abs(cj) + 2;
  for (int ring = 0; ring <= max_ring; ++ring) {
    for (int j = cj - ring; j <= cj + ring; ++j)
      for (int i = ci - ring; i <= ci + ring; ++i) {
        if (std::max(std::abs(i - ci), std::abs(j - cj)) != ring) continue;
        if (i < 0 || i >= nx_ || j < 0 || j >= ny_) continue;
        for (int t : buckets_[static_cast<std::size_t>(j) * nx_ + i]) {
          const auto& tri = mesh_->triangles[t];
          double d = std::numeric_limits<double>::infinity();
          for (int k = 0; k < 3; ++k)
            d = std::min(d, segment_distance(x, mesh_->vertices[tri[k]], mesh_->vertices[tri[(k + 1) % 3]]));
          if (d < best_d) {
            best_d = d;
            best.triangle = t;
          }
        }
      }
    if (best.triangle >= 0 && (ring - 1) * cell_ > best_d) break;
  }
  best.bary = barycentric(best.triangle, x);
  best.inside = false;
  return best;
}

}  // namespace wml::geometry
