#pragma once

// Shared test fixtures and independent oracles. Everything here is
// implemented from first principles (loops, exhaustive search, dense
// assembly) so the library code paths are checked against a second route.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "muasv/rng.hpp"
#include "muasv/superpixel.hpp"
#include "muasv/types.hpp"

namespace testsupport {

using muasv::Index;
using muasv::Matrix;
using muasv::Rng;
using muasv::Vector;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline Vector random_simplex_point(Index p, Rng& rng) {
  Vector v(p);
  for (Index i = 0; i < p; ++i) v(i) = -std::log(1.0 - rng.uniform());
  return v / v.sum();
}

// Exhaustive minimization of ||y - G a||^2 + ridge ||a - center||^2 over the
// simplex grid with the given step (P = 2 or 3).
inline Vector simplex_grid_minimizer(const Matrix& g, const Vector& y, double ridge,
                                     const Vector& center, double step) {
  const Index p = g.cols();
  const int m = static_cast<int>(std::lround(1.0 / step));
  Vector best;
  double best_val = std::numeric_limits<double>::infinity();
  const auto eval = [&](const Vector& a) {
    const double val = (y - g * a).squaredNorm() + ridge * (a - center).squaredNorm();
    if (val < best_val) {
      best_val = val;
      best = a;
    }
  };
  Vector a(p);
  if (p == 2) {
    for (int i = 0; i <= m; ++i) {
      a(0) = static_cast<double>(i) * step;
      a(1) = 1.0 - a(0);
      eval(a);
    }
  } else if (p == 3) {
    for (int i = 0; i <= m; ++i) {
      for (int j = 0; j <= m - i; ++j) {
        a(0) = static_cast<double>(i) * step;
        a(1) = static_cast<double>(j) * step;
        a(2) = 1.0 - a(0) - a(1);
        eval(a);
      }
    }
  } else {
    throw std::runtime_error("grid oracle supports P = 2 or 3 only");
  }
  return best;
}

// Dense assembly of diag(coef) + lambda * (Hh^T Hh + Hv^T Hv) with
// forward differences and replicate boundary.
inline Matrix assemble_smoothing_system(const Vector& coef, double lambda, Index rows,
                                        Index cols) {
  const Index n = rows * cols;
  Matrix hh = Matrix::Zero(n, n);
  Matrix hv = Matrix::Zero(n, n);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index px = r * cols + c;
      if (c + 1 < cols) {
        hh(px, px + 1) += 1.0;
        hh(px, px) -= 1.0;
      }
      if (r + 1 < rows) {
        hv(px, px + cols) += 1.0;
        hv(px, px) -= 1.0;
      }
    }
  }
  Matrix a = coef.asDiagonal();
  a += lambda * (hh.transpose() * hh + hv.transpose() * hv);
  return a;
}

// Random connected partition of a rows x cols grid by seeded region growing;
// every label is nonempty and 4-connected by construction.
inline muasv::SuperpixelMap random_connected_map(Index rows, Index cols, Index want,
                                                 Rng& rng) {
  const Index n = rows * cols;
  muasv::SuperpixelMap map;
  map.rows = rows;
  map.cols = cols;
  map.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> frontier;
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.raw() % static_cast<std::uint64_t>(i + 1))]);

  const Index s = std::min(want, n);
  std::deque<Index> queue;
  for (Index lab = 0; lab < s; ++lab) {
    map.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(lab)])] = lab;
    queue.push_back(order[static_cast<std::size_t>(lab)]);
  }
  while (!queue.empty()) {
    const Index px = queue.front();
    queue.pop_front();
    const Index r = px / cols;
    const Index c = px % cols;
    const Index nb[4] = {r > 0 ? px - cols : -1, r + 1 < rows ? px + cols : -1,
                         c > 0 ? px - 1 : -1, c + 1 < cols ? px + 1 : -1};
    for (Index q : nb) {
      if (q < 0 || map.labels[static_cast<std::size_t>(q)] >= 0) continue;
      map.labels[static_cast<std::size_t>(q)] = map.labels[static_cast<std::size_t>(px)];
      queue.push_back(q);
    }
  }
  map.superpixel_count = s;
  map.sizes.assign(static_cast<std::size_t>(s), 0);
  for (Index px = 0; px < n; ++px)
    ++map.sizes[static_cast<std::size_t>(map.labels[static_cast<std::size_t>(px)])];
  return map;
}

inline double max_column_sum_error(const Matrix& a, double target) {
  return (a.colwise().sum().array() - target).abs().maxCoeff();
}

inline bool on_simplex(const Matrix& a, double tol = 1e-9) {
  return a.minCoeff() >= -tol && max_column_sum_error(a, 1.0) <= tol;
}

}  // namespace testsupport
