#pragma once

#include "muasv/types.hpp"

namespace muasv {

// minimize ||y - G a||^2 + ridge * ||a - ridge_center||^2
// subject to a >= 0 and 1^T a = 1. An empty ridge_center means zero.
struct SimplexQpProblem {
  Matrix G;
  Vector y;
  double ridge = 0.0;
  Vector ridge_center;

  Index variable_count() const { return G.cols(); }

  void validate() const;
};

// Active-set solve of the problem above. The equality constraint is kept in
// the reduced KKT system; nonnegativity constraints are activated by step
// clipping and released by dropping the most negative multiplier (ties go to
// the lowest index), so the iteration is finite and deterministic.
Vector solve_fcls(const SimplexQpProblem& p);

// Max KKT violation of a candidate solution: stationarity on the support,
// dual feasibility off it, and primal feasibility.
double fcls_kkt_residual(const SimplexQpProblem& p, const Vector& a);

// minimize ||y - G a||^2 + ridge * ||a||^2
// subject to a + shift >= 0 and 1^T a = 0, with 1^T shift = 1.
// Substituting u = a + shift reduces this to solve_fcls with target
// y + G*shift and ridge center shift.
Vector solve_shifted_fcls(const Matrix& G, const Vector& y, double ridge,
                          const Vector& shift);

// Elementwise projection onto the nonnegative orthant.
template <typename Derived>
auto project_nonnegative(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

// Lawson-Hanson nonnegative least squares: minimize ||y - G x||^2, x >= 0.
Vector solve_nonnegative_ls(const Matrix& G, const Vector& y);

// Solves, for each row k of rhs, the SPD system
//   (diag(data_coef) + lambda_ratio * L^T L) x_k = rhs_k
// where L stacks forward-difference horizontal and vertical gradients on the
// rows x cols grid with replicate boundary (L^T L is the 4-neighbor grid
// Laplacian). Conjugate gradients, relative residual <= 1e-8, iteration cap
// 10*N ("CG stagnation" beyond that).
Matrix solve_smoothed_field(const Vector& data_coef, const Eigen::Ref<const Matrix>& rhs,
                            double lambda_ratio, Index rows, Index cols);

}  // namespace muasv
