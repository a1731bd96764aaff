#pragma once

#include "muasv/superpixel.hpp"
#include "muasv/types.hpp"

namespace muasv {

// Superpixel-induced transform pair. W (N x S) averages pixels into
// superpixels, W* (S x N) replicates superpixel values back, and W*W = I.
// The sparse operators are kept for algebraic use; the apply functions below
// work directly on the label map with fixed ascending-index accumulation.
struct MultiscaleTransform {
  SuperpixelMap map;
  SparseMatrix W;
  SparseMatrix W_star;

  Index pixel_count() const { return map.pixel_count(); }
  Index superpixel_count() const { return map.superpixel_count; }
};

MultiscaleTransform build_transform(SuperpixelMap map);

// X W: column s of the result is the mean of X's columns inside superpixel s.
Matrix to_coarse(const Eigen::Ref<const Matrix>& x, const MultiscaleTransform& t);

// X (I - W W*): X minus its within-superpixel mean, replicated per pixel.
Matrix to_detail(const Eigen::Ref<const Matrix>& x, const MultiscaleTransform& t);

// Xc W* + Xd: right inverse of the decomposition (recombine(to_coarse,
// to_detail) is the identity).
Matrix recombine(const Eigen::Ref<const Matrix>& xc, const Eigen::Ref<const Matrix>& xd,
                 const MultiscaleTransform& t);

}  // namespace muasv
