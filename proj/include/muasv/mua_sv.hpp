#pragma once

#include <cstdint>
#include <vector>

#include "muasv/multiscale.hpp"
#include "muasv/types.hpp"

namespace muasv {

struct MuaSvParams {
  double lambda_m = 0.5;     // endmember model weight
  double lambda_a = 1.0;     // abundance penalty weight
  double lambda_psi = 0.5;   // scaling smoothness weight
  double rho0 = 0.1;         // coarse-scale weight rho * S^2 / N^2
  double target_size = 3.0;  // superpixel sampling interval sqrt(N/S)
  double compactness = 0.001;
  double eps_stop = 2e-3;    // threshold on max per-block relative change
  int max_iters = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-superpixel mean endmember matrices and the per-pixel deviations from
// them. coarse_at(n) is the mean of n's superpixel, and detail[n] is
// pixels[n] - coarse_at(n), so the within-superpixel mean of detail is zero.
struct CoarseEndmemberCache {
  std::vector<Matrix> coarse;  // S entries, L x P
  std::vector<Matrix> detail;  // N entries, L x P
  std::vector<Index> labels;   // pixel -> superpixel

  const Matrix& coarse_at(Index px) const {
    return coarse[static_cast<std::size_t>(labels[static_cast<std::size_t>(px)])];
  }
};

// Per-pixel closed-form endmember update before projection:
//   (y a^T + lambda_m M0 diag(psi)) (a a^T + lambda_m I)^-1.
Matrix endmember_pixel_update(const Vector& y, const Vector& a, const Vector& psi,
                              const Matrix& m0, double lambda_m);

EndmemberField update_endmembers(const HsiCube& cube, const AbundanceMatrix& ab,
                                 const ScalingField& psi, const EndmemberSet& m0,
                                 double lambda_m);

CoarseEndmemberCache build_coarse_endmembers(const EndmemberField& field,
                                             const MultiscaleTransform& t);

// Per-superpixel simplex fit against the mean endmembers, ridge rho0*lambda_a/2.
AbundanceMatrix update_abundances_coarse(const Eigen::Ref<const Matrix>& y_coarse,
                                         const CoarseEndmemberCache& cache,
                                         const MuaSvParams& params);

// Per-pixel sum-to-zero fit of the detail component, shifted so the
// recombined abundances stay nonnegative.
AbundanceMatrix update_abundances_detail(const Eigen::Ref<const Matrix>& y_detail,
                                         const EndmemberField& field,
                                         const CoarseEndmemberCache& cache,
                                         const AbundanceMatrix& coarse,
                                         const MultiscaleTransform& t,
                                         const MuaSvParams& params);

// Smoothness-regularized scaling update; with lambda_psi = 0 this reduces to
// the per-entry projection m0_k . m_{n,k} / ||m0_k||^2.
ScalingField update_scaling(const EndmemberField& field, const EndmemberSet& m0,
                            double lambda_m, double lambda_psi, Index rows,
                            Index cols);

// Block objectives, used for diagnostics and the monotonicity checks.
double endmember_objective(const HsiCube& cube, const EndmemberField& field,
                           const AbundanceMatrix& ab, const ScalingField& psi,
                           const EndmemberSet& m0, double lambda_m);
double coarse_objective(const Eigen::Ref<const Matrix>& y_coarse,
                        const CoarseEndmemberCache& cache,
                        const Eigen::Ref<const Matrix>& a_coarse,
                        const MuaSvParams& params);
double detail_objective(const Eigen::Ref<const Matrix>& y_detail,
                        const EndmemberField& field, const CoarseEndmemberCache& cache,
                        const Eigen::Ref<const Matrix>& a_coarse,
                        const Eigen::Ref<const Matrix>& a_detail,
                        const MultiscaleTransform& t, const MuaSvParams& params);
double scaling_objective(const EndmemberField& field, const EndmemberSet& m0,
                         const ScalingField& psi, double lambda_m, double lambda_psi,
                         Index rows, Index cols);
double global_objective(const HsiCube& cube, const EndmemberField& field,
                        const AbundanceMatrix& ab, const ScalingField& psi,
                        const EndmemberSet& m0, const MultiscaleTransform& t,
                        const MuaSvParams& params);

struct IterationStats {
  int iteration = 0;
  double rel_change_endmembers = 0.0;  // NaN on the first iteration
  double rel_change_abundances = 0.0;
  double rel_change_scaling = 0.0;
  double objective_endmembers = 0.0;
  double objective_coarse = 0.0;
  double objective_detail = 0.0;
  double objective_scaling = 0.0;
  double global_cost = 0.0;
  double residual_coarse_sq = 0.0;
  double residual_detail_sq = 0.0;
  double residual_cross = 0.0;
  double a1_ratio = 0.0;  // |<RE_C, RE_D>| / (||RE_C||^2 + ||RE_D||^2)
  // Within-superpixel endmember variability relative to the field energy;
  // the separable coarse/detail model assumes this stays small.
  double field_detail_ratio = 0.0;
  // The scaling update is unconstrained; negative factors are reported
  // rather than clamped.
  Index negative_scaling_count = 0;
  double wall_time_s = 0.0;
};

struct MuaSvResult {
  EndmemberField field;
  ScalingField scaling;
  AbundanceMatrix abundances;
  MetricsReport report;  // mse_y and wall_time_s
  std::vector<IterationStats> diagnostics;
  Index superpixel_count = 0;
  int iterations = 0;
};

// Full alternating solve. Abundances are initialized from the scaled
// constrained least squares baseline unless an explicit start is supplied;
// scaling factors start at one.
MuaSvResult run_mua_sv(const HsiCube& cube, const EndmemberSet& m0,
                       const MuaSvParams& params,
                       const AbundanceMatrix* initial_abundances = nullptr);

}  // namespace muasv
