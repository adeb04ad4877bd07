#include "wml/homology.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numeric>
#include <unordered_map>

#include "wml/error.hpp"

namespace wml::homology {

SmithForm smith_normal_form(IntMatrix a) {
  SmithForm out;
  const std::size_t rows = a.size();
  const std::size_t cols = rows ? a[0].size() : 0;
  std::size_t t = 0;
  while (t < rows && t < cols) {
    // Pivot: smallest nonzero magnitude in the trailing block.
    std::size_t pr = rows, pc = cols;
    std::int64_t best = 0;
    for (std::size_t i = t; i < rows; ++i)
      for (std::size_t j = t; j < cols; ++j)
        if (a[i][j] != 0 && (best == 0 || std::llabs(a[i][j]) < best)) {
          best = std::llabs(a[i][j]);
          pr = i;
          pc = j;
        }
    if (best == 0) break;
    std::swap(a[t], a[pr]);
    for (auto& row : a) std::swap(row[t], row[pc]);

    bool clean = false;
    while (!clean) {
      clean = true;
      for (std::size_t i = t + 1; i < rows; ++i) {
        const std::int64_t q = a[i][t] / a[t][t];
        if (q != 0)
          for (std::size_t j = t; j < cols; ++j) a[i][j] -= q * a[t][j];
        if (a[i][t] != 0) {
          std::swap(a[t], a[i]);
          clean = false;
        }
      }
      for (std::size_t j = t + 1; j < cols; ++j) {
        const std::int64_t q = a[t][j] / a[t][t];
        if (q != 0)
          for (std::size_t i = t; i < rows; ++i) a[i][j] -= q * a[i][t];
        if (a[t][j] != 0) {
          for (auto& row : a) std::swap(row[t], row[j]);
          clean = false;
        }
      }
      if (clean) {
        // Enforce divisibility of the trailing block.
        for (std::size_t i = t + 1; i < rows && clean; ++i)
          for (std::size_t j = t + 1; j < cols && clean; ++j)
            if (a[i][j] % a[t][t] != 0) {
              for (std::size_t k = t; k < cols; ++k) a[t][k] += a[i][k];
              clean = false;
            }
      }
    }
    out.diagonal.push_back(std::llabs(a[t][t]));
    ++t;
  }
  return out;
}

int sparse_rank_mod_p(const SparseMatrix& a) {
  constexpr std::int64_t kP = 2147483647;
  auto inv = [](std::int64_t x) {
    std::int64_t r = 1, b = x % kP, e = kP - 2;
    if (b < 0) b += kP;
    while (e > 0) {
      if (e & 1) r = r * b % kP;
      b = b * b % kP;
      e >>= 1;
    }
    return r;
  };
  // Row reduction keyed by leading (largest) column index.
  using Row = std::map<int, std::int64_t>;
  std::vector<Row> rows(static_cast<std::size_t>(a.rows()));
  const SparseMatrix at = a.transpose();
  for (int r = 0; r < at.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(at, r); it; ++it) {
      std::int64_t v = static_cast<std::int64_t>(std::llround(it.value())) % kP;
      if (v < 0) v += kP;
      if (v) rows[r][static_cast<int>(it.row())] = v;
    }
  std::unordered_map<int, Row> pivots;
  int rank = 0;
  for (Row& row : rows) {
    while (!row.empty()) {
      const auto lead = std::prev(row.end());
      const auto pit = pivots.find(lead->first);
      if (pit == pivots.end()) {
        const std::int64_t s = inv(lead->second);
        for (auto& [c, v] : row) v = v * s % kP;
        pivots.emplace(lead->first, std::move(row));
        ++rank;
        break;
      }
      const std::int64_t factor = lead->second;
      for (const auto& [c, v] : pit->second) {
        std::int64_t& x = row[c];
        x = ((x - factor * v) % kP + kP) % kP;
        if (x == 0) row.erase(c);
      }
    }
  }
  return rank;
}

namespace {

SparseMatrix restrict_to(const SparseMatrix& a, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<int> rmap(static_cast<std::size_t>(a.rows()), -1), cmap(static_cast<std::size_t>(a.cols()), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) rmap[rows[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < cols.size(); ++i) cmap[cols[i]] = static_cast<int>(i);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it)
      if (rmap[it.row()] >= 0 && cmap[it.col()] >= 0) trip.emplace_back(rmap[it.row()], cmap[it.col()], it.value());
  SparseMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace

std::array<int, 3> mesh_betti(const geometry::TriMesh& mesh, bool relative) {
  std::array<std::vector<int>, 3> keep;
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < mesh.count(k); ++i)
      if (!relative || !mesh.is_boundary(k, i)) keep[k].push_back(static_cast<int>(i));
  // The transposed d1 has at most two entries per row, which keeps elimination fill-free.
  const int r0 = sparse_rank_mod_p(restrict_to(mesh.incidence(0), keep[1], keep[0]));
  const SparseMatrix d1 = restrict_to(mesh.incidence(1), keep[2], keep[1]);
  const int r1 = sparse_rank_mod_p(SparseMatrix(d1.transpose()));
  const int n0 = static_cast<int>(keep[0].size());
  const int n1 = static_cast<int>(keep[1].size());
  const int n2 = static_cast<int>(keep[2].size());
  return {n0 - r0, n1 - r0 - r1, n2 - r1};
}

}  // namespace wml::homology
