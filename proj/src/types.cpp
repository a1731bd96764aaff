#include "muasv/types.hpp"

namespace muasv {

void HsiCube::validate() const {
  if (rows < 1 || cols < 1) throw validation_error("cube: empty spatial grid");
  if (data.rows() < 1) throw validation_error("cube: no spectral bands");
  if (data.cols() != rows * cols)
    throw validation_error("cube: pixel count does not match rows*cols");
  if (!data.allFinite()) throw validation_error("cube: non-finite entries");
}

void AbundanceMatrix::validate(double tol) const {
  if (data.size() == 0) throw validation_error("abundances: empty matrix");
  if (!data.allFinite()) throw validation_error("abundances: non-finite entries");
  const Vector col_sums = data.colwise().sum();
  switch (domain) {
    case AbundanceDomain::original:
    case AbundanceDomain::coarse:
      if (data.minCoeff() < -tol)
        throw validation_error("abundances: negative entry beyond tolerance");
      if ((col_sums.array() - 1.0).abs().maxCoeff() > tol)
        throw validation_error("abundances: column sums deviate from one");
      break;
    case AbundanceDomain::detail:
      if (col_sums.array().abs().maxCoeff() > tol)
        throw validation_error("abundances: detail column sums deviate from zero");
      break;
  }
}

void EndmemberSet::validate() const {
  if (data.size() == 0) throw validation_error("endmembers: empty matrix");
  if (!data.allFinite()) throw validation_error("endmembers: non-finite entries");
  if (data.minCoeff() < 0.0) throw validation_error("endmembers: negative entry");
  for (Index p = 0; p < data.cols(); ++p) {
    if (data.col(p).maxCoeff() <= 0.0)
      throw validation_error("endmembers: all-zero column");
  }
}

void EndmemberField::validate() const {
  if (pixels.empty()) throw validation_error("endmember field: empty");
  const Index l = pixels.front().rows();
  const Index p = pixels.front().cols();
  for (const Matrix& m : pixels) {
    if (m.rows() != l || m.cols() != p)
      throw validation_error("endmember field: inconsistent pixel shapes");
    if (!m.allFinite()) throw validation_error("endmember field: non-finite entries");
    if (m.minCoeff() < 0.0) throw validation_error("endmember field: negative entry");
  }
}

void ScalingField::validate() const {
  if (data.size() == 0) throw validation_error("scaling field: empty");
  if (!data.allFinite()) throw validation_error("scaling field: non-finite entries");
}

void MetricsReport::validate() const {
  const auto check = [](const std::optional<double>& v, const char* name) {
    if (v && (!(*v >= 0.0)))
      throw validation_error(std::string("metrics: negative or non-finite ") + name);
  };
  check(mse_a, "mse_a");
  check(mse_m, "mse_m");
  check(mse_y, "mse_y");
  check(sam_m, "sam_m");
  check(wall_time_s, "wall_time_s");
}

}  // namespace muasv
