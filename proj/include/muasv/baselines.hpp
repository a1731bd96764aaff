#pragma once

#include <cstdint>
#include <vector>

#include "muasv/types.hpp"

namespace muasv {

// Fully constrained least squares with a fixed endmember matrix: per-pixel
// simplex-constrained fit. Falls back to a 1e-10 ridge if G^T G is singular.
AbundanceMatrix unmix_fcls(const HsiCube& cube, const EndmemberSet& m0);

// Scaled constrained least squares: per pixel, jointly fits a scalar scale
// psi >= 0 and simplex abundances minimizing ||y - psi * M0 a||^2 via
// sum-normalized nonnegative least squares.
struct SclsResult {
  AbundanceMatrix abundances;
  Vector scales;  // per-pixel psi, >= 0
};
SclsResult unmix_scls(const HsiCube& cube, const EndmemberSet& m0);

// Vertex component analysis endmember extraction. Deterministic given the
// seed (randomness is confined to the direction vectors).
EndmemberSet extract_vca(const HsiCube& cube, Index p, std::uint64_t seed);

// Permutation aligning est's columns to ref's: result[j] is the est column
// assigned to ref column j. Exhaustive spectral-angle matching for small P,
// greedy beyond that.
std::vector<Index> match_columns(const Matrix& est, const Matrix& ref);

// est with columns reordered to match ref.
Matrix align_columns(const Matrix& est, const Matrix& ref);

}  // namespace muasv
