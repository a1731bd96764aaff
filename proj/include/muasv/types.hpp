#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace muasv {

using Index = Eigen::Index;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatX<double>;
using Vector = VecX<double>;
using SparseMatrix = Eigen::SparseMatrix<double>;

// Error hierarchy. The CLI maps these onto its exit-code contract:
// io_error -> 1, validation_error -> 2, numeric_error -> 3.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public error {
 public:
  using error::error;
};

class validation_error : public error {
 public:
  using error::error;
};

class numeric_error : public error {
 public:
  using error::error;
};

// Tolerance for simplex constraints on abundance columns. Solver outputs are
// projected, not symbolic, so a nonzero tolerance is required.
inline constexpr double kSimplexTol = 1e-9;

// Observed hyperspectral image: L bands by N pixels, column n holds the
// spectrum of pixel n. Pixels are ordered row-major over the rows x cols grid.
struct HsiCube {
  Matrix data;
  Index rows = 0;
  Index cols = 0;

  Index band_count() const { return data.rows(); }
  Index pixel_count() const { return rows * cols; }

  void validate() const;
};

enum class AbundanceDomain { original, coarse, detail };

// P x N fractional abundances (or P x S in the coarse domain).
// original/coarse: columns on the unit simplex; detail: columns sum to zero.
struct AbundanceMatrix {
  Matrix data;
  AbundanceDomain domain = AbundanceDomain::original;

  Index endmember_count() const { return data.rows(); }

  void validate(double tol = kSimplexTol) const;
};

// L x P reference endmember signatures.
struct EndmemberSet {
  Matrix data;

  Index band_count() const { return data.rows(); }
  Index endmember_count() const { return data.cols(); }

  void validate() const;
};

// Per-pixel endmember matrices: N entries of L x P.
struct EndmemberField {
  std::vector<Matrix> pixels;

  Index pixel_count() const { return static_cast<Index>(pixels.size()); }
  Index band_count() const { return pixels.empty() ? 0 : pixels.front().rows(); }
  Index endmember_count() const { return pixels.empty() ? 0 : pixels.front().cols(); }

  void validate() const;
};

// P x N multiplicative scaling factors of the extended mixing model.
struct ScalingField {
  Matrix data;

  static ScalingField ones(Index p, Index n) {
    ScalingField f;
    f.data = Matrix::Ones(p, n);
    return f;
  }

  void validate() const;
};

// Accuracy metrics for one unmixing run. Fields are optional so partial
// reports (e.g. no ground-truth endmember field) can be represented.
struct MetricsReport {
  std::optional<double> mse_a;
  std::optional<double> mse_m;
  std::optional<double> mse_y;
  std::optional<double> sam_m;
  std::optional<double> wall_time_s;

  void validate() const;
};

}  // namespace muasv
