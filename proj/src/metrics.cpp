#include "muasv/metrics.hpp"

#include <cmath>

namespace muasv {

namespace {

void check_same_field_shape(const EndmemberField& a, const EndmemberField& b) {
  if (a.pixel_count() != b.pixel_count() || a.band_count() != b.band_count() ||
      a.endmember_count() != b.endmember_count())
    throw validation_error("endmember field shape mismatch");
  if (a.pixel_count() == 0) throw validation_error("empty endmember field");
}

}  // namespace

double mse_abundance(const AbundanceMatrix& truth, const AbundanceMatrix& est) {
  if (truth.data.rows() != est.data.rows() || truth.data.cols() != est.data.cols())
    throw validation_error("abundance shape mismatch");
  if (truth.domain != AbundanceDomain::original ||
      est.domain != AbundanceDomain::original)
    throw validation_error("abundance metrics require original-domain matrices");
  const double np = static_cast<double>(truth.data.size());
  return (truth.data - est.data).squaredNorm() / np;
}

double mse_endmembers(const EndmemberField& truth, const EndmemberField& est) {
  check_same_field_shape(truth, est);
  double acc = 0.0;
  for (Index n = 0; n < truth.pixel_count(); ++n)
    acc += (truth.pixels[static_cast<std::size_t>(n)] -
            est.pixels[static_cast<std::size_t>(n)])
               .squaredNorm();
  const double nlp = static_cast<double>(truth.pixel_count()) *
                     static_cast<double>(truth.band_count()) *
                     static_cast<double>(truth.endmember_count());
  return acc / nlp;
}

double mse_reconstruction(const HsiCube& cube, const EndmemberField& field,
                          const AbundanceMatrix& ab) {
  const Index n = cube.pixel_count();
  if (field.pixel_count() != n || ab.data.cols() != n)
    throw validation_error("reconstruction shape mismatch");
  if (field.band_count() != cube.band_count() ||
      field.endmember_count() != ab.data.rows())
    throw validation_error("reconstruction shape mismatch");
  double acc = 0.0;
  for (Index i = 0; i < n; ++i)
    acc += (cube.data.col(i) -
            field.pixels[static_cast<std::size_t>(i)] * ab.data.col(i))
               .squaredNorm();
  return acc / (static_cast<double>(n) * static_cast<double>(cube.band_count()));
}

double sam_endmembers(const EndmemberField& truth, const EndmemberField& est) {
  check_same_field_shape(truth, est);
  double acc = 0.0;
  for (Index n = 0; n < truth.pixel_count(); ++n) {
    const Matrix& mt = truth.pixels[static_cast<std::size_t>(n)];
    const Matrix& me = est.pixels[static_cast<std::size_t>(n)];
    for (Index k = 0; k < mt.cols(); ++k) {
      const double nt = mt.col(k).norm();
      const double ne = me.col(k).norm();
      if (nt == 0.0 || ne == 0.0) throw validation_error("undefined angle");
      const double c = std::clamp(mt.col(k).dot(me.col(k)) / (nt * ne), -1.0, 1.0);
      acc += std::acos(c);
    }
  }
  return acc / static_cast<double>(truth.pixel_count());
}

}  // namespace muasv
