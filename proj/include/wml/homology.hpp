#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wml/geometry.hpp"

namespace wml::homology {

using IntMatrix = std::vector<std::vector<std::int64_t>>;  // row-major, rows × cols

struct SmithForm {
  std::vector<std::int64_t> diagonal;  // nonzero invariant factors, ascending divisibility
  int rank() const { return static_cast<int>(diagonal.size()); }
};

/// Smith normal form of a small integer matrix.
SmithForm smith_normal_form(IntMatrix a);

/// Rank over Z/pZ (p = 2^31 - 1) of a sparse ±1 matrix.
int sparse_rank_mod_p(const SparseMatrix& a);

/// Simplicial Betti numbers of the mesh, absolute or relative to its boundary.
std::array<int, 3> mesh_betti(const geometry::TriMesh& mesh, bool relative);

}  // namespace wml::homology
