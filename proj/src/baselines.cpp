#include "muasv/baselines.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "muasv/rng.hpp"
#include "muasv/solvers.hpp"
#include "muasv/threading.hpp"

namespace muasv {

namespace {

bool gram_is_singular(const Matrix& g) {
  Eigen::FullPivLU<Matrix> lu(g.transpose() * g);
  return !lu.isInvertible();
}

double column_angle(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return M_PI;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

}  // namespace

AbundanceMatrix unmix_fcls(const HsiCube& cube, const EndmemberSet& m0) {
  cube.validate();
  m0.validate();
  if (m0.band_count() != cube.band_count())
    throw validation_error("fcls: endmember band count mismatch");

  const double ridge = gram_is_singular(m0.data) ? 1e-10 : 0.0;
  const Index n = cube.pixel_count();
  AbundanceMatrix out;
  out.domain = AbundanceDomain::original;
  out.data.resize(m0.endmember_count(), n);
  parallel_for(n, [&](Index px) {
    SimplexQpProblem p;
    p.G = m0.data;
    p.y = cube.data.col(px);
    p.ridge = ridge;
    out.data.col(px) = solve_fcls(p);
  });
  return out;
}

SclsResult unmix_scls(const HsiCube& cube, const EndmemberSet& m0) {
  cube.validate();
  m0.validate();
  if (m0.band_count() != cube.band_count())
    throw validation_error("scls: endmember band count mismatch");

  const Index n = cube.pixel_count();
  const Index np = m0.endmember_count();
  SclsResult res;
  res.abundances.domain = AbundanceDomain::original;
  res.abundances.data.resize(np, n);
  res.scales.resize(n);
  parallel_for(n, [&](Index px) {
    const Vector b = solve_nonnegative_ls(m0.data, cube.data.col(px));
    const double total = b.sum();
    if (total > 0.0) {
      res.abundances.data.col(px) = b / total;
      res.scales(px) = total;
    } else {
      res.abundances.data.col(px).setConstant(1.0 / static_cast<double>(np));
      res.scales(px) = 0.0;
    }
  });
  return res;
}

EndmemberSet extract_vca(const HsiCube& cube, Index p, std::uint64_t seed) {
  cube.validate();
  const Index bands = cube.band_count();
  const Index n = cube.pixel_count();
  if (p < 1) throw validation_error("vca: endmember count must be positive");
  if (p > std::min(bands, n))
    throw validation_error("vca: endmember count exceeds min(bands, pixels)");

  const Matrix& r = cube.data;
  const Vector mean = r.rowwise().mean();
  const Matrix centered = r.colwise() - mean;

  // PCA of the centered data for the SNR estimate.
  Eigen::SelfAdjointEigenSolver<Matrix> eig_centered(
      (centered * centered.transpose()) / static_cast<double>(n));
  Matrix ud_centered(bands, p);
  for (Index k = 0; k < p; ++k)
    ud_centered.col(k) = eig_centered.eigenvectors().col(bands - 1 - k);

  const Matrix x_centered = ud_centered.transpose() * centered;
  const double p_y = r.squaredNorm() / static_cast<double>(n);
  const double p_x = x_centered.squaredNorm() / static_cast<double>(n) + mean.squaredNorm();
  const double denom = p_y - p_x;
  const double ratio = p_x - static_cast<double>(p) / static_cast<double>(bands) * p_y;
  const double snr = denom > 0.0 && ratio > 0.0
                         ? 10.0 * std::log10(ratio / denom)
                         : std::numeric_limits<double>::infinity();
  const double snr_threshold = 15.0 + 10.0 * std::log10(static_cast<double>(p));

  Matrix ud;       // bands x d subspace basis
  Matrix y_aug;    // p x N points the simplex vertices are sought in
  Matrix x_proj;   // d x N projected data
  bool centered_path = false;

  if (snr > snr_threshold) {
    // Projective projection onto the signal subspace of the raw correlation.
    Eigen::SelfAdjointEigenSolver<Matrix> eig_raw(
        (r * r.transpose()) / static_cast<double>(n));
    const double top = eig_raw.eigenvalues()(bands - 1);
    if (!(top > 0.0) ||
        eig_raw.eigenvalues()(bands - p) < 1e-12 * top)
      throw numeric_error("vca: rank deficiency below requested endmember count");
    ud.resize(bands, p);
    for (Index k = 0; k < p; ++k)
      ud.col(k) = eig_raw.eigenvectors().col(bands - 1 - k);
    x_proj = ud.transpose() * r;

    if (p == 1) {
      Index best = 0;
      x_proj.cwiseAbs().row(0).maxCoeff(&best);
      EndmemberSet out;
      out.data = project_nonnegative(ud * x_proj.col(best)).eval();
      out.validate();
      return out;
    }

    const Vector u = x_proj.rowwise().mean();
    y_aug.resize(p, n);
    for (Index i = 0; i < n; ++i) {
      const double denom_i = x_proj.col(i).dot(u);
      if (denom_i == 0.0) throw numeric_error("vca: degenerate projective scaling");
      y_aug.col(i) = x_proj.col(i) / denom_i;
    }
  } else {
    centered_path = true;
    const Index d = p - 1;
    if (d >= 1) {
      const double top = eig_centered.eigenvalues()(bands - 1);
      if (!(top > 0.0) ||
          eig_centered.eigenvalues()(bands - d) < 1e-12 * top)
        throw numeric_error("vca: rank deficiency below requested endmember count");
    }
    ud = ud_centered.leftCols(d);
    x_proj = ud.transpose() * centered;
    if (p == 1) {
      // Zero-dimensional subspace; every projected pixel is the mean.
      EndmemberSet out;
      out.data = project_nonnegative(mean).eval();
      out.validate();
      return out;
    }
    const double c = x_proj.colwise().norm().maxCoeff();
    y_aug.resize(p, n);
    y_aug.topRows(d) = x_proj;
    y_aug.row(d).setConstant(c);
  }

  // Iterative vertex search along random orthogonal directions.
  Rng rng(seed, /*stream=*/0x5ca1ab1e);
  Matrix a = Matrix::Zero(p, p);
  a(p - 1, 0) = 1.0;
  std::vector<Index> indices(static_cast<std::size_t>(p), 0);
  for (Index i = 0; i < p; ++i) {
    Vector w(p);
    for (Index k = 0; k < p; ++k) w(k) = rng.normal();
    const Matrix pinv = a.completeOrthogonalDecomposition().pseudoInverse();
    Vector f = w - a * (pinv * w);
    const double fn = f.norm();
    if (fn == 0.0) throw numeric_error("vca: degenerate direction");
    f /= fn;
    const Eigen::RowVectorXd v = f.transpose() * y_aug;
    Index best = 0;
    v.cwiseAbs().maxCoeff(&best);
    a.col(i) = y_aug.col(best);
    indices[static_cast<std::size_t>(i)] = best;
  }

  EndmemberSet out;
  out.data.resize(bands, p);
  for (Index i = 0; i < p; ++i) {
    const Index px = indices[static_cast<std::size_t>(i)];
    if (centered_path)
      out.data.col(i) = ud * x_proj.col(px) + mean;
    else
      out.data.col(i) = ud * x_proj.col(px);
  }
  out.data = project_nonnegative(out.data).eval();
  out.validate();
  return out;
}

std::vector<Index> match_columns(const Matrix& est, const Matrix& ref) {
  if (est.rows() != ref.rows() || est.cols() != ref.cols())
    throw validation_error("match: shape mismatch");
  const Index p = ref.cols();
  Matrix cost(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) cost(i, j) = column_angle(ref.col(i), est.col(j));

  std::vector<Index> best_perm(static_cast<std::size_t>(p));
  if (p <= 8) {
    std::vector<Index> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), Index{0});
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (Index i = 0; i < p; ++i) total += cost(i, perm[static_cast<std::size_t>(i)]);
      if (total < best) {
        best = total;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<char> used(static_cast<std::size_t>(p), 0);
    for (Index i = 0; i < p; ++i) {
      Index pick = -1;
      double pick_cost = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < p; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        if (cost(i, j) < pick_cost) {
          pick_cost = cost(i, j);
          pick = j;
        }
      }
      used[static_cast<std::size_t>(pick)] = 1;
      best_perm[static_cast<std::size_t>(i)] = pick;
    }
  }
  return best_perm;
}

Matrix align_columns(const Matrix& est, const Matrix& ref) {
  const auto perm = match_columns(est, ref);
  Matrix out(est.rows(), est.cols());
  for (Index i = 0; i < est.cols(); ++i) out.col(i) = est.col(perm[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace muasv
