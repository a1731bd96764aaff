#include "muasv/multiscale.hpp"

#include <vector>

namespace muasv {

MultiscaleTransform build_transform(SuperpixelMap map) {
  map.validate();

  MultiscaleTransform t;
  const Index n = map.pixel_count();
  const Index s = map.superpixel_count;

  std::vector<Eigen::Triplet<double>> w_trip;
  std::vector<Eigen::Triplet<double>> ws_trip;
  w_trip.reserve(static_cast<std::size_t>(n));
  ws_trip.reserve(static_cast<std::size_t>(n));
  for (Index px = 0; px < n; ++px) {
    const Index lab = map.labels[static_cast<std::size_t>(px)];
    const double inv = 1.0 / static_cast<double>(map.sizes[static_cast<std::size_t>(lab)]);
    w_trip.emplace_back(px, lab, inv);
    ws_trip.emplace_back(lab, px, 1.0);
  }
  t.W.resize(n, s);
  t.W.setFromTriplets(w_trip.begin(), w_trip.end());
  t.W_star.resize(s, n);
  t.W_star.setFromTriplets(ws_trip.begin(), ws_trip.end());
  t.map = std::move(map);
  return t;
}

Matrix to_coarse(const Eigen::Ref<const Matrix>& x, const MultiscaleTransform& t) {
  if (x.cols() != t.pixel_count())
    throw validation_error("to_coarse: column count does not match pixel count");
  const Index s = t.superpixel_count();
  Matrix out = Matrix::Zero(x.rows(), s);
  for (Index px = 0; px < x.cols(); ++px)
    out.col(t.map.labels[static_cast<std::size_t>(px)]) += x.col(px);
  for (Index i = 0; i < s; ++i)
    out.col(i) /= static_cast<double>(t.map.sizes[static_cast<std::size_t>(i)]);
  return out;
}

Matrix to_detail(const Eigen::Ref<const Matrix>& x, const MultiscaleTransform& t) {
  const Matrix coarse = to_coarse(x, t);
  Matrix out(x.rows(), x.cols());
  for (Index px = 0; px < x.cols(); ++px)
    out.col(px) = x.col(px) - coarse.col(t.map.labels[static_cast<std::size_t>(px)]);
  return out;
}

Matrix recombine(const Eigen::Ref<const Matrix>& xc, const Eigen::Ref<const Matrix>& xd,
                 const MultiscaleTransform& t) {
  if (xc.cols() != t.superpixel_count())
    throw validation_error("recombine: coarse column count mismatch");
  if (xd.cols() != t.pixel_count())
    throw validation_error("recombine: detail column count mismatch");
  if (xc.rows() != xd.rows()) throw validation_error("recombine: row count mismatch");
  Matrix out(xd.rows(), xd.cols());
  for (Index px = 0; px < xd.cols(); ++px)
    out.col(px) = xc.col(t.map.labels[static_cast<std::size_t>(px)]) + xd.col(px);
  return out;
}

}  // namespace muasv
