#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "muasv/baselines.hpp"
#include "muasv/metrics.hpp"
#include "muasv/mua_sv.hpp"
#include "muasv/rng.hpp"
#include "muasv/solvers.hpp"
#include "muasv/synthgen.hpp"
#include "muasv/threading.hpp"
#include "support.hpp"

using namespace muasv;

namespace {

double pixel_cost(const Vector& y, const Matrix& m, const Vector& a, const Vector& psi,
                  const Matrix& m0, double lambda_m) {
  return 0.5 * (y - m * a).squaredNorm() +
         0.5 * lambda_m * (m - m0 * psi.asDiagonal()).squaredNorm();
}

// Central finite differences of the per-pixel endmember cost.
double fd_gradient_max(const Vector& y, const Matrix& m, const Vector& a,
                       const Vector& psi, const Matrix& m0, double lambda_m) {
  const double h = 1e-6;
  double worst = 0.0;
  Matrix probe = m;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      probe(i, j) = m(i, j) + h;
      const double up = pixel_cost(y, probe, a, psi, m0, lambda_m);
      probe(i, j) = m(i, j) - h;
      const double down = pixel_cost(y, probe, a, psi, m0, lambda_m);
      probe(i, j) = m(i, j);
      worst = std::max(worst, std::abs((up - down) / (2.0 * h)));
    }
  }
  return worst;
}

// Blocky fixture whose exact model is reproducible by the solver: constant
// spectra and abundances on each 3x3 block, field equal to the reference.
struct BlockFixture {
  HsiCube cube;
  EndmemberSet m0;
  AbundanceMatrix truth;
};

BlockFixture make_block_fixture() {
  BlockFixture f;
  f.m0 = synthetic_library(24, 3, 5);
  const Index rows = 9, cols = 9;
  f.truth.domain = AbundanceDomain::original;
  f.truth.data.resize(3, rows * cols);
  Rng rng(99);
  Matrix block_values(3, 9);
  for (Index b = 0; b < 9; ++b)
    block_values.col(b) = testsupport::random_simplex_point(3, rng);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      f.truth.data.col(r * cols + c) = block_values.col((r / 3) * 3 + c / 3);
  f.cube.rows = rows;
  f.cube.cols = cols;
  f.cube.data = f.m0.data * f.truth.data;
  return f;
}

MultiscaleTransform small_transform(Rng& rng, Index rows = 4, Index cols = 5,
                                    Index want = 4) {
  return build_transform(testsupport::random_connected_map(rows, cols, want, rng));
}

}  // namespace

TEST_CASE("endmember update: asymptotic model limit") {
  Rng rng(201);
  const Matrix m0 = testsupport::random_matrix(10, 3, rng, 0.1, 1.0);
  const Vector y = testsupport::random_matrix(10, 1, rng);
  const Vector a = testsupport::random_simplex_point(3, rng);
  const Vector psi = testsupport::random_matrix(3, 1, rng, 0.8, 1.2);
  const Matrix m = endmember_pixel_update(y, a, psi, m0, 1e8);
  const Matrix target = m0 * psi.asDiagonal();
  CHECK((m - target).norm() <= 1e-4 * target.norm());
}

TEST_CASE("endmember update: exact model is a fixed point") {
  Rng rng(202);
  const Matrix m0 = testsupport::random_matrix(12, 3, rng, 0.1, 1.0);
  const Vector a = testsupport::random_simplex_point(3, rng);
  const Vector psi = testsupport::random_matrix(3, 1, rng, 0.8, 1.2);
  const Matrix scaled = m0 * psi.asDiagonal();
  const Vector y = scaled * a;
  const Matrix m = endmember_pixel_update(y, a, psi, m0, 0.7);
  CHECK((y - m * a).norm() <= 1e-10);
  CHECK((m - scaled).norm() <= 1e-10);
}

TEST_CASE("endmember update: finite-difference gradient vanishes pre-projection") {
  Rng rng(203);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m0 = testsupport::random_matrix(8, 3, rng, 0.1, 1.0);
    const Vector y = testsupport::random_matrix(8, 1, rng);
    const Vector a = testsupport::random_simplex_point(3, rng);
    const Vector psi = testsupport::random_matrix(3, 1, rng, 0.7, 1.3);
    const double lambda_m = 0.25;
    const Matrix m = endmember_pixel_update(y, a, psi, m0, lambda_m);
    const double scale = std::max(1.0, pixel_cost(y, m, a, psi, m0, lambda_m));
    CHECK(fd_gradient_max(y, m, a, psi, m0, lambda_m) / scale <= 1e-6);
  }
}

TEST_CASE("endmember update: rank-deficient system without regularization") {
  Rng rng(204);
  const Matrix m0 = testsupport::random_matrix(6, 3, rng, 0.1, 1.0);
  const Vector y = testsupport::random_matrix(6, 1, rng);
  const Vector a = testsupport::random_simplex_point(3, rng);
  const Vector psi = Vector::Ones(3);
  CHECK_THROWS_AS(endmember_pixel_update(y, a, psi, m0, 0.0), numeric_error);
}

TEST_CASE("build_coarse_endmembers invariants and loop oracle") {
  Rng rng(205);
  const MultiscaleTransform t = small_transform(rng, 4, 5, 2);
  const Index n = 20;

  EndmemberField field;
  field.pixels.resize(n);
  for (auto& m : field.pixels) m = testsupport::random_matrix(6, 3, rng, 0.0, 1.0);
  const CoarseEndmemberCache cache = build_coarse_endmembers(field, t);

  // per-superpixel means computed by hand
  for (Index s = 0; s < t.superpixel_count(); ++s) {
    Matrix mean = Matrix::Zero(6, 3);
    Index count = 0;
    for (Index px = 0; px < n; ++px) {
      if (t.map.labels[static_cast<std::size_t>(px)] != s) continue;
      mean += field.pixels[static_cast<std::size_t>(px)];
      ++count;
    }
    mean /= static_cast<double>(count);
    CHECK((cache.coarse[static_cast<std::size_t>(s)] - mean).cwiseAbs().maxCoeff() <=
          1e-13);
  }

  // detail parts average to zero within each superpixel
  for (Index s = 0; s < t.superpixel_count(); ++s) {
    Matrix acc = Matrix::Zero(6, 3);
    Index count = 0;
    for (Index px = 0; px < n; ++px) {
      if (t.map.labels[static_cast<std::size_t>(px)] != s) continue;
      acc += cache.detail[static_cast<std::size_t>(px)];
      ++count;
    }
    CHECK((acc / static_cast<double>(count)).cwiseAbs().maxCoeff() <= 1e-10);
  }

  // identical field everywhere -> zero detail
  EndmemberField flat;
  flat.pixels.assign(n, field.pixels[0]);
  const CoarseEndmemberCache flat_cache = build_coarse_endmembers(flat, t);
  for (const Matrix& d : flat_cache.detail) CHECK(d.cwiseAbs().maxCoeff() <= 1e-13);

  // one superpixel per pixel -> coarse equals the field, detail vanishes
  Rng rng2(206);
  const MultiscaleTransform id = build_transform(
      testsupport::random_connected_map(4, 5, 20, rng2));
  const CoarseEndmemberCache id_cache = build_coarse_endmembers(field, id);
  for (Index px = 0; px < n; ++px) {
    CHECK((id_cache.coarse_at(px) - field.pixels[static_cast<std::size_t>(px)])
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(id_cache.detail[static_cast<std::size_t>(px)].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("coarse abundance update: exact fit and ridge limit") {
  Rng rng(207);
  const MultiscaleTransform t = small_transform(rng, 4, 5, 3);

  EndmemberField field;
  field.pixels.resize(20);
  for (auto& m : field.pixels) m = testsupport::random_matrix(8, 3, rng, 0.1, 1.0);
  const CoarseEndmemberCache cache = build_coarse_endmembers(field, t);

  MuaSvParams params;
  params.lambda_a = 0.0;
  params.rho0 = 0.0;
  Matrix y_coarse(8, t.superpixel_count());
  Matrix truth(3, t.superpixel_count());
  for (Index s = 0; s < t.superpixel_count(); ++s) {
    truth.col(s) = testsupport::random_simplex_point(3, rng);
    y_coarse.col(s) = cache.coarse[static_cast<std::size_t>(s)] * truth.col(s);
  }
  const AbundanceMatrix a = update_abundances_coarse(y_coarse, cache, params);
  CHECK(a.domain == AbundanceDomain::coarse);
  CHECK((a.data - truth).cwiseAbs().maxCoeff() <= 1e-8);

  // enormous ridge drives every superpixel to the centroid
  params.lambda_a = 1e8;
  params.rho0 = 2.0;
  const AbundanceMatrix uniform = update_abundances_coarse(y_coarse, cache, params);
  CHECK((uniform.data.array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-5);

  // grid oracle at a moderate ridge
  params.lambda_a = 1.0;
  params.rho0 = 0.1;
  const AbundanceMatrix mid = update_abundances_coarse(y_coarse, cache, params);
  for (Index s = 0; s < t.superpixel_count(); ++s) {
    const Vector grid = testsupport::simplex_grid_minimizer(
        cache.coarse[static_cast<std::size_t>(s)], y_coarse.col(s),
        params.rho0 * params.lambda_a / 2.0, Vector::Zero(3), 1e-3);
    CHECK((mid.data.col(s) - grid).cwiseAbs().maxCoeff() <= 2e-3);
  }
}

TEST_CASE("detail abundance update: shrinks to zero and matches the oracle") {
  Rng rng(208);
  const MultiscaleTransform t = small_transform(rng, 4, 5, 3);
  const Index n = 20;

  EndmemberField field;
  field.pixels.resize(n);
  for (auto& m : field.pixels) m = testsupport::random_matrix(8, 3, rng, 0.1, 1.0);
  EndmemberField flat;
  flat.pixels.assign(n, field.pixels[0]);

  AbundanceMatrix coarse;
  coarse.domain = AbundanceDomain::coarse;
  coarse.data.resize(3, t.superpixel_count());
  for (Index s = 0; s < t.superpixel_count(); ++s)
    coarse.data.col(s) = testsupport::random_simplex_point(3, rng);

  MuaSvParams params;
  params.lambda_a = 1e8;
  const CoarseEndmemberCache flat_cache = build_coarse_endmembers(flat, t);
  const AbundanceMatrix zero = update_abundances_detail(
      Matrix::Zero(8, n), flat, flat_cache, coarse, t, params);
  CHECK(zero.domain == AbundanceDomain::detail);
  CHECK(zero.data.cwiseAbs().maxCoeff() <= 1e-5);

  // random instances against the grid oracle on the shifted simplex
  params.lambda_a = 0.5;
  const CoarseEndmemberCache cache = build_coarse_endmembers(field, t);
  const Matrix y_detail = testsupport::random_matrix(8, n, rng, -0.05, 0.05);
  const AbundanceMatrix ad = update_abundances_detail(y_detail, field, cache, coarse,
                                                      t, params);
  CHECK(testsupport::max_column_sum_error(ad.data, 0.0) <= 1e-9);
  for (Index px = 0; px < n; ++px) {
    const Index lab = t.map.labels[static_cast<std::size_t>(px)];
    const Vector shift = coarse.data.col(lab);
    const Vector y = y_detail.col(px) -
                     cache.detail[static_cast<std::size_t>(px)] * shift;
    const Vector u_grid = testsupport::simplex_grid_minimizer(
        field.pixels[static_cast<std::size_t>(px)],
        y + field.pixels[static_cast<std::size_t>(px)] * shift, params.lambda_a, shift,
        1e-3);
    CHECK((ad.data.col(px) - (u_grid - shift)).cwiseAbs().maxCoeff() <= 2e-3);
    CHECK((ad.data.col(px) + shift).minCoeff() >= -1e-9);
  }
}

TEST_CASE("detail update: constant truth over one superpixel needs no detail") {
  Rng rng(209);
  SuperpixelMap map;
  map.rows = 2;
  map.cols = 3;
  map.labels = {0, 0, 0, 0, 0, 0};
  map.superpixel_count = 1;
  map.sizes = {6};
  const MultiscaleTransform t = build_transform(map);

  const Matrix m0 = testsupport::random_matrix(8, 3, rng, 0.1, 1.0);
  EndmemberField field;
  field.pixels.assign(6, m0);
  const Vector a_true = testsupport::random_simplex_point(3, rng);
  HsiCube cube;
  cube.rows = 2;
  cube.cols = 3;
  cube.data = (m0 * a_true).replicate(1, 6);

  const Matrix y_detail = to_detail(cube.data, t);  // identically zero
  CHECK(y_detail.cwiseAbs().maxCoeff() <= 1e-14);

  AbundanceMatrix coarse;
  coarse.domain = AbundanceDomain::coarse;
  coarse.data = a_true;
  MuaSvParams params;
  params.lambda_a = 0.1;
  const CoarseEndmemberCache cache = build_coarse_endmembers(field, t);
  const AbundanceMatrix ad =
      update_abundances_detail(y_detail, field, cache, coarse, t, params);
  CHECK(ad.data.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("scaling update: closed forms without smoothing") {
  Rng rng(210);
  const Index rows = 3, cols = 4, n = 12;
  EndmemberSet m0;
  m0.data = testsupport::random_matrix(10, 3, rng, 0.1, 1.0);

  EndmemberField field;
  field.pixels.assign(n, m0.data);
  ScalingField psi = update_scaling(field, m0, 0.7, 0.0, rows, cols);
  CHECK((psi.data.array() - 1.0).abs().maxCoeff() <= 1e-10);

  for (auto& m : field.pixels) m = 2.0 * m0.data;
  psi = update_scaling(field, m0, 0.7, 0.0, rows, cols);
  CHECK((psi.data.array() - 2.0).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("scaling update: matches dense direct solve with smoothing") {
  Rng rng(211);
  const Index rows = 4, cols = 4, n = 16;
  EndmemberSet m0;
  m0.data = testsupport::random_matrix(6, 2, rng, 0.1, 1.0);
  EndmemberField field;
  field.pixels.resize(n);
  for (auto& m : field.pixels) m = testsupport::random_matrix(6, 2, rng, 0.0, 1.0);

  const double lambda_m = 0.4, lambda_psi = 1.3;
  const ScalingField psi = update_scaling(field, m0, lambda_m, lambda_psi, rows, cols);

  for (Index k = 0; k < 2; ++k) {
    const Vector coef = Vector::Constant(n, lambda_m * m0.data.col(k).squaredNorm());
    Vector rhs(n);
    for (Index px = 0; px < n; ++px)
      rhs(px) = lambda_m *
                m0.data.col(k).dot(field.pixels[static_cast<std::size_t>(px)].col(k));
    const Matrix a =
        testsupport::assemble_smoothing_system(coef, 2.0 * lambda_psi, rows, cols);
    const Vector dense = a.ldlt().solve(rhs);
    CHECK((a * psi.data.row(k).transpose() - rhs).norm() <= 1e-8 * rhs.norm());
    CHECK((psi.data.row(k).transpose() - dense).norm() <= 1e-6 * dense.norm());
  }
}

TEST_CASE("run_mua_sv: exact blocky scene is recovered") {
  const BlockFixture f = make_block_fixture();
  MuaSvParams params;
  params.lambda_m = 1e-3;
  params.lambda_a = 1e-6;
  params.lambda_psi = 1e-6;
  params.rho0 = 0.1;
  params.target_size = 3.0;
  params.compactness = 0.001;
  const MuaSvResult res = run_mua_sv(f.cube, f.m0, params);
  CHECK(mse_abundance(f.truth, res.abundances) <= 1e-4);
  res.abundances.validate();
  CHECK(res.diagnostics.back().a1_ratio <= 1e-6);
}

TEST_CASE("run_mua_sv: single endmember forces unit abundances") {
  Rng rng(212);
  EndmemberSet m0;
  m0.data = testsupport::random_matrix(8, 1, rng, 0.2, 1.0);
  HsiCube cube;
  cube.rows = 4;
  cube.cols = 4;
  cube.data = testsupport::random_matrix(8, 16, rng, 0.1, 1.0);
  MuaSvParams params;
  params.target_size = 2.0;
  const MuaSvResult res = run_mua_sv(cube, m0, params);
  CHECK((res.abundances.data.array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("run_mua_sv: determinism, simplex invariants and diagnostics") {
  const EndmemberSet lib = synthetic_library(32, 3, 15);
  SyntheticScene scene = generate_dc2(lib, 5, 25.0);
  // crop to a light 20x20 sub-scene for speed
  HsiCube cube;
  cube.rows = 20;
  cube.cols = 20;
  cube.data.resize(32, 400);
  for (Index r = 0; r < 20; ++r)
    for (Index c = 0; c < 20; ++c)
      cube.data.col(r * 20 + c) = scene.cube.data.col(r * 70 + c);

  MuaSvParams params;
  params.max_iters = 8;
  params.target_size = 4.0;
  params.seed = 5;

  set_max_threads(1);
  const MuaSvResult a = run_mua_sv(cube, lib, params);
  set_max_threads(4);
  const MuaSvResult b = run_mua_sv(cube, lib, params);
  set_max_threads(0);
  const MuaSvResult c = run_mua_sv(cube, lib, params);
  CHECK((a.abundances.data - b.abundances.data).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.abundances.data - c.abundances.data).cwiseAbs().maxCoeff() == 0.0);

  a.abundances.validate();
  CHECK(testsupport::on_simplex(a.abundances.data));
  CHECK(a.report.mse_y.has_value());
  CHECK(a.report.wall_time_s.has_value());
  REQUIRE(!a.diagnostics.empty());
  CHECK(std::isnan(a.diagnostics.front().rel_change_endmembers));
  for (const auto& it : a.diagnostics) {
    CHECK(it.a1_ratio <= 1e-6);
    CHECK(it.objective_coarse >= 0.0);
    CHECK(it.objective_detail >= 0.0);
    CHECK(it.field_detail_ratio >= 0.0);
    CHECK(it.field_detail_ratio < 1.0);
    CHECK(it.negative_scaling_count >= 0);
  }
}

TEST_CASE("block updates never increase their own objectives") {
  const EndmemberSet lib = synthetic_library(24, 3, 33);
  SyntheticScene scene = generate_dc1(lib, 9, 25.0);
  HsiCube cube;
  cube.rows = 12;
  cube.cols = 12;
  cube.data.resize(24, 144);
  for (Index r = 0; r < 12; ++r)
    for (Index c = 0; c < 12; ++c)
      cube.data.col(r * 12 + c) = scene.cube.data.col(r * 50 + c);

  MuaSvParams params;
  params.target_size = 3.0;
  params.seed = 9;

  const MultiscaleTransform t = build_transform(
      slic_segment(cube, params.target_size, params.compactness, params.seed));
  const Matrix y_coarse = to_coarse(cube.data, t);
  const Matrix y_detail = to_detail(cube.data, t);

  AbundanceMatrix ab = unmix_scls(cube, lib).abundances;
  ScalingField psi = ScalingField::ones(3, cube.pixel_count());

  EndmemberField field_prev;
  AbundanceMatrix ac_prev, ad_prev;
  ScalingField psi_prev;
  bool have_prev = false;

  for (int iter = 1; iter <= 3; ++iter) {
    const EndmemberField field =
        update_endmembers(cube, ab, psi, lib, params.lambda_m);
    const CoarseEndmemberCache cache = build_coarse_endmembers(field, t);
    const AbundanceMatrix ac = update_abundances_coarse(y_coarse, cache, params);
    const AbundanceMatrix ad =
        update_abundances_detail(y_detail, field, cache, ac, t, params);

    if (have_prev) {
      CHECK(endmember_objective(cube, field, ab, psi, lib, params.lambda_m) <=
            endmember_objective(cube, field_prev, ab, psi, lib, params.lambda_m) + 1e-9);
      CHECK(coarse_objective(y_coarse, cache, ac.data, params) <=
            coarse_objective(y_coarse, cache, ac_prev.data, params) + 1e-9);
      CHECK(detail_objective(y_detail, field, cache, ac.data, ad.data, t, params) <=
            detail_objective(y_detail, field, cache, ac.data, ad_prev.data, t, params) +
                1e-9);
    }

    AbundanceMatrix recombined;
    recombined.domain = AbundanceDomain::original;
    recombined.data = recombine(ac.data, ad.data, t);
    const ScalingField psi_new = update_scaling(field, lib, params.lambda_m,
                                                params.lambda_psi, cube.rows, cube.cols);
    CHECK(scaling_objective(field, lib, psi_new, params.lambda_m, params.lambda_psi,
                            cube.rows, cube.cols) <=
          scaling_objective(field, lib, psi, params.lambda_m, params.lambda_psi,
                            cube.rows, cube.cols) + 1e-9);

    CHECK(testsupport::on_simplex(recombined.data));

    field_prev = field;
    ac_prev = ac;
    ad_prev = ad;
    psi_prev = psi;
    ab = recombined;
    psi = psi_new;
    have_prev = true;
  }
}

TEST_CASE("transform-domain residual identity") {
  const EndmemberSet lib = synthetic_library(16, 3, 21);
  SyntheticScene scene = generate_dc1(lib, 3, 30.0);
  HsiCube cube;
  cube.rows = 10;
  cube.cols = 10;
  cube.data.resize(16, 100);
  for (Index r = 0; r < 10; ++r)
    for (Index c = 0; c < 10; ++c)
      cube.data.col(r * 10 + c) = scene.cube.data.col(r * 50 + c);

  MuaSvParams params;
  params.max_iters = 5;
  params.target_size = 3.0;
  const MuaSvResult res = run_mua_sv(cube, lib, params);

  const MultiscaleTransform t = build_transform(
      slic_segment(cube, params.target_size, params.compactness, params.seed));
  Matrix mixed(16, 100);
  for (Index px = 0; px < 100; ++px)
    mixed.col(px) = res.field.pixels[static_cast<std::size_t>(px)] *
                    res.abundances.data.col(px);
  const Matrix residual = cube.data - mixed;

  // independent sparse-operator route for the scale split
  const Matrix proj = Matrix(t.W) * Matrix(t.W_star);
  const Matrix re_coarse = residual * proj;
  const Matrix re_detail = residual - re_coarse;
  const double total = residual.squaredNorm();
  const double split = re_coarse.squaredNorm() + re_detail.squaredNorm() +
                       2.0 * (re_coarse.array() * re_detail.array()).sum();
  CHECK(std::abs(total - split) <= 1e-8 * total);

  const double cross = std::abs((re_coarse.array() * re_detail.array()).sum());
  CHECK(cross / (re_coarse.squaredNorm() + re_detail.squaredNorm()) <= 1e-6);
}

TEST_CASE("run_mua_sv rejects inconsistent shapes") {
  Rng rng(213);
  EndmemberSet m0;
  m0.data = testsupport::random_matrix(8, 3, rng, 0.1, 1.0);
  HsiCube cube;
  cube.rows = 4;
  cube.cols = 4;
  cube.data = testsupport::random_matrix(9, 16, rng, 0.1, 1.0);  // band mismatch
  MuaSvParams params;
  params.target_size = 2.0;
  CHECK_THROWS_AS(run_mua_sv(cube, m0, params), validation_error);
}
