#include "muasv/mua_sv.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "muasv/baselines.hpp"
#include "muasv/solvers.hpp"
#include "muasv/superpixel.hpp"
#include "muasv/threading.hpp"

namespace muasv {

namespace {

double field_norm(const EndmemberField& f) {
  double acc = 0.0;
  for (const Matrix& m : f.pixels) acc += m.squaredNorm();
  return std::sqrt(acc);
}

double field_diff_norm(const EndmemberField& a, const EndmemberField& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    acc += (a.pixels[i] - b.pixels[i]).squaredNorm();
  return std::sqrt(acc);
}

// Forward-difference gradient energy of one field laid out on the grid,
// replicate boundary (boundary differences vanish).
double grid_gradient_energy(const Eigen::Ref<const Eigen::RowVectorXd>& values,
                            Index rows, Index cols) {
  double acc = 0.0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index px = r * cols + c;
      if (c + 1 < cols) {
        const double d = values(px + 1) - values(px);
        acc += d * d;
      }
      if (r + 1 < rows) {
        const double d = values(px + cols) - values(px);
        acc += d * d;
      }
    }
  }
  return acc;
}

Matrix mixed_image(const EndmemberField& field, const Matrix& abundances) {
  Matrix out(field.band_count(), field.pixel_count());
  for (Index n = 0; n < field.pixel_count(); ++n)
    out.col(n) = field.pixels[static_cast<std::size_t>(n)] * abundances.col(n);
  return out;
}

}  // namespace

void MuaSvParams::validate() const {
  if (!(lambda_m >= 0.0) || !(lambda_a >= 0.0) || !(lambda_psi >= 0.0) ||
      !(rho0 >= 0.0))
    throw validation_error("params: negative regularization weight");
  if (!(target_size >= 1.0)) throw validation_error("params: target size below one");
  if (!(compactness > 0.0)) throw validation_error("params: non-positive compactness");
  if (!(eps_stop > 0.0)) throw validation_error("params: non-positive stop threshold");
  if (max_iters < 1) throw validation_error("params: max iterations below one");
}

Matrix endmember_pixel_update(const Vector& y, const Vector& a, const Vector& psi,
                              const Matrix& m0, double lambda_m) {
  const Index p = m0.cols();
  const Matrix b =
      y * a.transpose() + lambda_m * (m0 * psi.asDiagonal());
  const Matrix k =
      a * a.transpose() + lambda_m * Matrix::Identity(p, p);
  if (lambda_m > 0.0) {
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() == Eigen::Success)
      return llt.solve(b.transpose()).transpose();
  }
  Eigen::FullPivLU<Matrix> lu(k);
  if (!lu.isInvertible())
    throw numeric_error("endmember update: rank-deficient system (lambda_m = 0)");
  return lu.solve(b.transpose()).transpose();
}

EndmemberField update_endmembers(const HsiCube& cube, const AbundanceMatrix& ab,
                                 const ScalingField& psi, const EndmemberSet& m0,
                                 double lambda_m) {
  const Index n = cube.pixel_count();
  if (ab.data.cols() != n || psi.data.cols() != n)
    throw validation_error("endmember update: pixel count mismatch");
  if (ab.data.rows() != m0.endmember_count() || psi.data.rows() != m0.endmember_count())
    throw validation_error("endmember update: endmember count mismatch");

  EndmemberField field;
  field.pixels.resize(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index px) {
    field.pixels[static_cast<std::size_t>(px)] =
        project_nonnegative(endmember_pixel_update(cube.data.col(px), ab.data.col(px),
                                                   psi.data.col(px), m0.data, lambda_m))
            .eval();
  });
  return field;
}

CoarseEndmemberCache build_coarse_endmembers(const EndmemberField& field,
                                             const MultiscaleTransform& t) {
  const Index n = t.pixel_count();
  const Index s = t.superpixel_count();
  if (field.pixel_count() != n)
    throw validation_error("coarse endmembers: pixel count mismatch");

  CoarseEndmemberCache cache;
  cache.labels = t.map.labels;
  cache.coarse.assign(static_cast<std::size_t>(s),
                      Matrix::Zero(field.band_count(), field.endmember_count()));
  for (Index px = 0; px < n; ++px)
    cache.coarse[static_cast<std::size_t>(cache.labels[static_cast<std::size_t>(px)])] +=
        field.pixels[static_cast<std::size_t>(px)];
  for (Index i = 0; i < s; ++i)
    cache.coarse[static_cast<std::size_t>(i)] /=
        static_cast<double>(t.map.sizes[static_cast<std::size_t>(i)]);

  cache.detail.resize(static_cast<std::size_t>(n));
  parallel_for(n, [&](Index px) {
    cache.detail[static_cast<std::size_t>(px)] =
        field.pixels[static_cast<std::size_t>(px)] - cache.coarse_at(px);
  });
  return cache;
}

AbundanceMatrix update_abundances_coarse(const Eigen::Ref<const Matrix>& y_coarse,
                                         const CoarseEndmemberCache& cache,
                                         const MuaSvParams& params) {
  const Index s = static_cast<Index>(cache.coarse.size());
  if (y_coarse.cols() != s)
    throw validation_error("coarse update: superpixel count mismatch");

  AbundanceMatrix out;
  out.domain = AbundanceDomain::coarse;
  out.data.resize(cache.coarse.front().cols(), s);
  const double ridge = params.rho0 * params.lambda_a / 2.0;
  parallel_for(s, [&](Index i) {
    SimplexQpProblem p;
    p.G = cache.coarse[static_cast<std::size_t>(i)];
    p.y = y_coarse.col(i);
    p.ridge = ridge;
    out.data.col(i) = solve_fcls(p);
  });
  return out;
}

AbundanceMatrix update_abundances_detail(const Eigen::Ref<const Matrix>& y_detail,
                                         const EndmemberField& field,
                                         const CoarseEndmemberCache& cache,
                                         const AbundanceMatrix& coarse,
                                         const MultiscaleTransform& t,
                                         const MuaSvParams& params) {
  const Index n = t.pixel_count();
  if (y_detail.cols() != n || field.pixel_count() != n)
    throw validation_error("detail update: pixel count mismatch");
  if (coarse.domain != AbundanceDomain::coarse ||
      coarse.data.cols() != t.superpixel_count())
    throw validation_error("detail update: coarse abundances expected");

  AbundanceMatrix out;
  out.domain = AbundanceDomain::detail;
  out.data.resize(coarse.data.rows(), n);
  parallel_for(n, [&](Index px) {
    const Index lab = cache.labels[static_cast<std::size_t>(px)];
    const Vector shift = coarse.data.col(lab);
    const Vector y = y_detail.col(px) -
                     cache.detail[static_cast<std::size_t>(px)] * shift;
    out.data.col(px) = solve_shifted_fcls(field.pixels[static_cast<std::size_t>(px)], y,
                                          params.lambda_a, shift);
  });
  return out;
}

ScalingField update_scaling(const EndmemberField& field, const EndmemberSet& m0,
                            double lambda_m, double lambda_psi, Index rows,
                            Index cols) {
  const Index n = field.pixel_count();
  const Index p = m0.endmember_count();
  if (n != rows * cols) throw validation_error("scaling update: grid mismatch");
  if (field.endmember_count() != p || field.band_count() != m0.band_count())
    throw validation_error("scaling update: endmember shape mismatch");

  ScalingField psi;
  psi.data.resize(p, n);
  for (Index k = 0; k < p; ++k) {
    const double norm_sq = m0.data.col(k).squaredNorm();
    if (norm_sq == 0.0) throw validation_error("scaling update: zero-norm reference endmember");
    Matrix rhs(1, n);
    for (Index px = 0; px < n; ++px)
      rhs(0, px) =
          lambda_m * m0.data.col(k).dot(field.pixels[static_cast<std::size_t>(px)].col(k));
    const Vector coef = Vector::Constant(n, lambda_m * norm_sq);
    // System per pixel: lambda_m ||m0_k||^2 psi + 2 lambda_psi Lap(psi) = rhs.
    psi.data.row(k) = solve_smoothed_field(coef, rhs, 2.0 * lambda_psi, rows, cols);
  }
  return psi;
}

double endmember_objective(const HsiCube& cube, const EndmemberField& field,
                           const AbundanceMatrix& ab, const ScalingField& psi,
                           const EndmemberSet& m0, double lambda_m) {
  double acc = 0.0;
  for (Index px = 0; px < cube.pixel_count(); ++px) {
    const Matrix& m = field.pixels[static_cast<std::size_t>(px)];
    acc += (cube.data.col(px) - m * ab.data.col(px)).squaredNorm();
    acc += lambda_m *
           (m - m0.data * psi.data.col(px).asDiagonal()).squaredNorm();
  }
  return 0.5 * acc;
}

double coarse_objective(const Eigen::Ref<const Matrix>& y_coarse,
                        const CoarseEndmemberCache& cache,
                        const Eigen::Ref<const Matrix>& a_coarse,
                        const MuaSvParams& params) {
  double acc = 0.0;
  for (Index i = 0; i < y_coarse.cols(); ++i) {
    acc += (y_coarse.col(i) - cache.coarse[static_cast<std::size_t>(i)] * a_coarse.col(i))
               .squaredNorm();
    acc += params.rho0 * params.lambda_a / 2.0 * a_coarse.col(i).squaredNorm();
  }
  return acc;
}

double detail_objective(const Eigen::Ref<const Matrix>& y_detail,
                        const EndmemberField& field, const CoarseEndmemberCache& cache,
                        const Eigen::Ref<const Matrix>& a_coarse,
                        const Eigen::Ref<const Matrix>& a_detail,
                        const MultiscaleTransform& t, const MuaSvParams& params) {
  double acc = 0.0;
  for (Index px = 0; px < y_detail.cols(); ++px) {
    const Index lab = t.map.labels[static_cast<std::size_t>(px)];
    const Vector shift = a_coarse.col(lab);
    acc += (y_detail.col(px) - field.pixels[static_cast<std::size_t>(px)] * a_detail.col(px) -
            cache.detail[static_cast<std::size_t>(px)] * shift)
               .squaredNorm();
    acc += params.lambda_a * a_detail.col(px).squaredNorm();
  }
  return acc;
}

double scaling_objective(const EndmemberField& field, const EndmemberSet& m0,
                         const ScalingField& psi, double lambda_m, double lambda_psi,
                         Index rows, Index cols) {
  double acc = 0.0;
  for (Index px = 0; px < field.pixel_count(); ++px)
    acc += (field.pixels[static_cast<std::size_t>(px)] -
            m0.data * psi.data.col(px).asDiagonal())
               .squaredNorm();
  double grad = 0.0;
  for (Index k = 0; k < psi.data.rows(); ++k)
    grad += grid_gradient_energy(psi.data.row(k), rows, cols);
  return 0.5 * lambda_m * acc + lambda_psi * grad;
}

double global_objective(const HsiCube& cube, const EndmemberField& field,
                        const AbundanceMatrix& ab, const ScalingField& psi,
                        const EndmemberSet& m0, const MultiscaleTransform& t,
                        const MuaSvParams& params) {
  const Matrix mixed = mixed_image(field, ab.data);
  const Matrix a_coarse = to_coarse(ab.data, t);
  const Matrix a_detail = to_detail(ab.data, t);
  const double n = static_cast<double>(t.pixel_count());
  const double s = static_cast<double>(t.superpixel_count());
  const double rho = params.rho0 * n * n / (s * s);

  double cost = 0.5 * (cube.data - mixed).squaredNorm();
  cost += params.lambda_a *
          (0.5 * rho * a_coarse.squaredNorm() + 0.5 * a_detail.squaredNorm());
  double model = 0.0;
  for (Index px = 0; px < cube.pixel_count(); ++px)
    model += (field.pixels[static_cast<std::size_t>(px)] -
              m0.data * psi.data.col(px).asDiagonal())
                 .squaredNorm();
  cost += 0.5 * params.lambda_m * model;
  double grad = 0.0;
  for (Index k = 0; k < psi.data.rows(); ++k)
    grad += grid_gradient_energy(psi.data.row(k), cube.rows, cube.cols);
  cost += params.lambda_psi * grad;
  return cost;
}

MuaSvResult run_mua_sv(const HsiCube& cube, const EndmemberSet& m0,
                       const MuaSvParams& params,
                       const AbundanceMatrix* initial_abundances) {
  const auto t_start = std::chrono::steady_clock::now();
  cube.validate();
  m0.validate();
  params.validate();
  if (m0.band_count() != cube.band_count())
    throw validation_error("mua-sv: endmember band count mismatch");

  const Index n = cube.pixel_count();
  const Index p = m0.endmember_count();

  const MultiscaleTransform t = build_transform(
      slic_segment(cube, params.target_size, params.compactness, params.seed));
  const Matrix y_coarse = to_coarse(cube.data, t);
  const Matrix y_detail = to_detail(cube.data, t);

  AbundanceMatrix ab_prev;
  if (initial_abundances != nullptr) {
    ab_prev = *initial_abundances;
    if (ab_prev.data.rows() != p || ab_prev.data.cols() != n)
      throw validation_error("mua-sv: bad initial abundances shape");
  } else {
    ab_prev = unmix_scls(cube, m0).abundances;
  }
  ScalingField psi_prev = ScalingField::ones(p, n);

  MuaSvResult result;
  result.superpixel_count = t.superpixel_count();

  EndmemberField field_prev;
  bool have_field_prev = false;

  for (int iter = 1; iter <= params.max_iters; ++iter) {
    const auto it_start = std::chrono::steady_clock::now();

    EndmemberField field =
        update_endmembers(cube, ab_prev, psi_prev, m0, params.lambda_m);
    const CoarseEndmemberCache cache = build_coarse_endmembers(field, t);
    const AbundanceMatrix a_coarse = update_abundances_coarse(y_coarse, cache, params);
    const AbundanceMatrix a_detail =
        update_abundances_detail(y_detail, field, cache, a_coarse, t, params);
    AbundanceMatrix ab;
    ab.domain = AbundanceDomain::original;
    ab.data = recombine(a_coarse.data, a_detail.data, t);
    ScalingField psi = update_scaling(field, m0, params.lambda_m, params.lambda_psi,
                                      cube.rows, cube.cols);

    IterationStats stats;
    stats.iteration = iter;
    stats.rel_change_endmembers =
        have_field_prev ? field_diff_norm(field, field_prev) / field_norm(field_prev)
                        : std::numeric_limits<double>::quiet_NaN();
    stats.rel_change_abundances =
        (ab.data - ab_prev.data).norm() / ab_prev.data.norm();
    stats.rel_change_scaling =
        (psi.data - psi_prev.data).norm() / psi_prev.data.norm();
    stats.objective_endmembers =
        endmember_objective(cube, field, ab_prev, psi_prev, m0, params.lambda_m);
    stats.objective_coarse = coarse_objective(y_coarse, cache, a_coarse.data, params);
    stats.objective_detail =
        detail_objective(y_detail, field, cache, a_coarse.data, a_detail.data, t, params);
    stats.objective_scaling = scaling_objective(field, m0, psi, params.lambda_m,
                                                params.lambda_psi, cube.rows, cube.cols);
    stats.global_cost = global_objective(cube, field, ab, psi, m0, t, params);

    // Residual split across scales; the cross term is the A1 diagnostic.
    {
      const Matrix residual = cube.data - mixed_image(field, ab.data);
      const Matrix res_coarse = recombine(to_coarse(residual, t),
                                          Matrix::Zero(residual.rows(), n), t);
      const Matrix res_detail = residual - res_coarse;
      stats.residual_coarse_sq = res_coarse.squaredNorm();
      stats.residual_detail_sq = res_detail.squaredNorm();
      stats.residual_cross = (res_coarse.array() * res_detail.array()).sum();
      const double denom = stats.residual_coarse_sq + stats.residual_detail_sq;
      stats.a1_ratio = denom > 0.0 ? std::abs(stats.residual_cross) / denom : 0.0;
    }

    {
      double detail_sq = 0.0;
      for (const Matrix& d : cache.detail) detail_sq += d.squaredNorm();
      const double field_sq = field_norm(field);
      stats.field_detail_ratio =
          field_sq > 0.0 ? std::sqrt(detail_sq) / field_sq : 0.0;
    }
    stats.negative_scaling_count = (psi.data.array() < 0.0).count();
    stats.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - it_start)
            .count();
    result.diagnostics.push_back(stats);
    result.iterations = iter;

    const bool converged =
        have_field_prev &&
        std::max({stats.rel_change_endmembers, stats.rel_change_abundances,
                  stats.rel_change_scaling}) < params.eps_stop;

    field_prev = std::move(field);
    have_field_prev = true;
    ab_prev = std::move(ab);
    psi_prev = std::move(psi);

    if (converged) break;
  }

  // Final hygiene: genuine negatives are an error, rounding-level ones are
  // clamped and columns renormalized.
  if (ab_prev.data.minCoeff() < -kSimplexTol)
    throw numeric_error("mua-sv: negative abundance beyond tolerance");
  ab_prev.data = ab_prev.data.cwiseMax(0.0);
  for (Index i = 0; i < n; ++i) ab_prev.data.col(i) /= ab_prev.data.col(i).sum();

  result.field = std::move(field_prev);
  result.scaling = std::move(psi_prev);
  result.abundances = std::move(ab_prev);
  result.abundances.domain = AbundanceDomain::original;

  double rec = 0.0;
  for (Index px = 0; px < n; ++px)
    rec += (cube.data.col(px) -
            result.field.pixels[static_cast<std::size_t>(px)] *
                result.abundances.data.col(px))
               .squaredNorm();
  result.report.mse_y =
      rec / (static_cast<double>(n) * static_cast<double>(cube.band_count()));
  result.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace muasv
