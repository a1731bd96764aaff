#include "muasv/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "muasv/threading.hpp"

namespace muasv {

namespace {

struct Cluster {
  Vector spectrum;
  double row = 0.0;
  double col = 0.0;
};

double spectral_gradient(const Matrix& data, Index rows, Index cols, Index r, Index c) {
  const auto at = [&](Index rr, Index cc) {
    rr = std::clamp<Index>(rr, 0, rows - 1);
    cc = std::clamp<Index>(cc, 0, cols - 1);
    return data.col(rr * cols + cc);
  };
  return (at(r, c + 1) - at(r, c - 1)).squaredNorm() +
         (at(r + 1, c) - at(r - 1, c)).squaredNorm();
}

// Connected-component bookkeeping for the post-merge pass.
struct Component {
  Index size = 0;
  Vector mean;
  std::vector<Index> members;  // ascending within each original component
};

Index find_root(std::vector<Index>& parent, Index i) {
  while (parent[static_cast<std::size_t>(i)] != i) {
    parent[static_cast<std::size_t>(i)] =
        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    i = parent[static_cast<std::size_t>(i)];
  }
  return i;
}

}  // namespace

void SuperpixelMap::validate() const {
  if (rows < 1 || cols < 1) throw validation_error("superpixel map: empty grid");
  if (static_cast<Index>(labels.size()) != pixel_count())
    throw validation_error("superpixel map: label count mismatch");
  if (superpixel_count < 1) throw validation_error("superpixel map: no superpixels");
  if (static_cast<Index>(sizes.size()) != superpixel_count)
    throw validation_error("superpixel map: size table mismatch");

  std::vector<Index> counted(static_cast<std::size_t>(superpixel_count), 0);
  for (Index lab : labels) {
    if (lab < 0 || lab >= superpixel_count)
      throw validation_error("superpixel map: label out of range");
    ++counted[static_cast<std::size_t>(lab)];
  }
  Index total = 0;
  for (Index s = 0; s < superpixel_count; ++s) {
    if (counted[static_cast<std::size_t>(s)] == 0)
      throw validation_error("superpixel map: empty superpixel");
    if (counted[static_cast<std::size_t>(s)] != sizes[static_cast<std::size_t>(s)])
      throw validation_error("superpixel map: stored sizes inconsistent");
    total += counted[static_cast<std::size_t>(s)];
  }
  if (total != pixel_count())
    throw validation_error("superpixel map: sizes do not cover the image");

  // Each label must form a single 4-connected region.
  std::vector<char> seen(labels.size(), 0);
  std::vector<char> label_done(static_cast<std::size_t>(superpixel_count), 0);
  std::deque<Index> queue;
  for (Index start = 0; start < pixel_count(); ++start) {
    if (seen[static_cast<std::size_t>(start)]) continue;
    const Index lab = labels[static_cast<std::size_t>(start)];
    if (label_done[static_cast<std::size_t>(lab)])
      throw validation_error("superpixel map: disconnected superpixel");
    label_done[static_cast<std::size_t>(lab)] = 1;
    queue.clear();
    queue.push_back(start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!queue.empty()) {
      const Index px = queue.front();
      queue.pop_front();
      const Index r = px / cols;
      const Index c = px % cols;
      const Index nb[4] = {r > 0 ? px - cols : -1, r + 1 < rows ? px + cols : -1,
                           c > 0 ? px - 1 : -1, c + 1 < cols ? px + 1 : -1};
      for (Index q : nb) {
        if (q < 0 || seen[static_cast<std::size_t>(q)]) continue;
        if (labels[static_cast<std::size_t>(q)] != lab) continue;
        seen[static_cast<std::size_t>(q)] = 1;
        queue.push_back(q);
      }
    }
  }
}

SuperpixelMap slic_segment(const HsiCube& cube, double target_size,
                           double compactness, std::uint64_t /*seed*/) {
  cube.validate();
  if (!(target_size >= 1.0))
    throw validation_error("slic: target size must be at least 1");
  if (!(compactness > 0.0)) throw validation_error("slic: compactness must be positive");
  const Index rows = cube.rows;
  const Index cols = cube.cols;
  const Index n = cube.pixel_count();
  if (target_size * target_size > static_cast<double>(n))
    throw validation_error("fewer than one superpixel");

  const Index grid_rows = std::max<Index>(1, static_cast<Index>(std::llround(
                                                 static_cast<double>(rows) / target_size)));
  const Index grid_cols = std::max<Index>(1, static_cast<Index>(std::llround(
                                                 static_cast<double>(cols) / target_size)));
  const Index s0 = grid_rows * grid_cols;
  const double step_r = static_cast<double>(rows) / static_cast<double>(grid_rows);
  const double step_c = static_cast<double>(cols) / static_cast<double>(grid_cols);

  // One seed per grid cell: the lowest-gradient pixel of the cell, ties
  // resolved toward the cell center. Cells partition the image, so seeds
  // stay distinct even at unit target size.
  std::vector<Cluster> clusters(static_cast<std::size_t>(s0));
  for (Index gr = 0; gr < grid_rows; ++gr) {
    for (Index gc = 0; gc < grid_cols; ++gc) {
      const Index r0 = static_cast<Index>(gr * step_r);
      const Index r1 = gr + 1 == grid_rows
                           ? rows
                           : std::max<Index>(r0 + 1, static_cast<Index>((gr + 1) * step_r));
      const Index c0 = static_cast<Index>(gc * step_c);
      const Index c1 = gc + 1 == grid_cols
                           ? cols
                           : std::max<Index>(c0 + 1, static_cast<Index>((gc + 1) * step_c));
      const double center_r = (static_cast<double>(r0 + r1) - 1.0) / 2.0;
      const double center_c = (static_cast<double>(c0 + c1) - 1.0) / 2.0;

      Index best_r = r0, best_c = c0;
      double best_g = std::numeric_limits<double>::infinity();
      double best_d = std::numeric_limits<double>::infinity();
      for (Index r = r0; r < r1; ++r) {
        for (Index c = c0; c < c1; ++c) {
          const double g = spectral_gradient(cube.data, rows, cols, r, c);
          const double d = (static_cast<double>(r) - center_r) * (static_cast<double>(r) - center_r) +
                           (static_cast<double>(c) - center_c) * (static_cast<double>(c) - center_c);
          if (g < best_g || (g == best_g && d < best_d)) {
            best_g = g;
            best_d = d;
            best_r = r;
            best_c = c;
          }
        }
      }
      Cluster& cl = clusters[static_cast<std::size_t>(gr * grid_cols + gc)];
      cl.spectrum = cube.data.col(best_r * cols + best_c);
      cl.row = static_cast<double>(best_r);
      cl.col = static_cast<double>(best_c);
    }
  }

  const double spatial_weight =
      compactness * compactness * static_cast<double>(s0) / static_cast<double>(n);
  const double window = 2.0 * target_size;

  std::vector<Index> labels(static_cast<std::size_t>(n), -1);
  std::vector<Index> next_labels(static_cast<std::size_t>(n), -1);

  constexpr int kMaxIters = 10;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    parallel_for(n, [&](Index px) {
      const double pr = static_cast<double>(px / cols);
      const double pc = static_cast<double>(px % cols);
      double best = std::numeric_limits<double>::infinity();
      Index best_s = -1;
      for (Index s = 0; s < s0; ++s) {
        const Cluster& cl = clusters[static_cast<std::size_t>(s)];
        const double dr = pr - cl.row;
        const double dc = pc - cl.col;
        if (std::abs(dr) > window || std::abs(dc) > window) continue;
        const double d2 = (cube.data.col(px) - cl.spectrum).squaredNorm() +
                          spatial_weight * (dr * dr + dc * dc);
        if (d2 < best) {
          best = d2;
          best_s = s;
        }
      }
      if (best_s < 0) {
        // No center window covers this pixel; fall back to a full scan.
        for (Index s = 0; s < s0; ++s) {
          const Cluster& cl = clusters[static_cast<std::size_t>(s)];
          const double dr = pr - cl.row;
          const double dc = pc - cl.col;
          const double d2 = (cube.data.col(px) - cl.spectrum).squaredNorm() +
                            spatial_weight * (dr * dr + dc * dc);
          if (d2 < best) {
            best = d2;
            best_s = s;
          }
        }
      }
      next_labels[static_cast<std::size_t>(px)] = best_s;
    });

    bool changed = false;
    for (Index px = 0; px < n; ++px) {
      if (labels[static_cast<std::size_t>(px)] != next_labels[static_cast<std::size_t>(px)]) {
        changed = true;
        break;
      }
    }
    labels = next_labels;
    if (!changed) break;

    // Center update: fixed ascending-pixel accumulation for reproducibility.
    std::vector<Vector> spec_acc(static_cast<std::size_t>(s0),
                                 Vector::Zero(cube.band_count()));
    std::vector<double> row_acc(static_cast<std::size_t>(s0), 0.0);
    std::vector<double> col_acc(static_cast<std::size_t>(s0), 0.0);
    std::vector<Index> count(static_cast<std::size_t>(s0), 0);
    for (Index px = 0; px < n; ++px) {
      const auto s = static_cast<std::size_t>(labels[static_cast<std::size_t>(px)]);
      spec_acc[s] += cube.data.col(px);
      row_acc[s] += static_cast<double>(px / cols);
      col_acc[s] += static_cast<double>(px % cols);
      ++count[s];
    }
    for (Index s = 0; s < s0; ++s) {
      const auto si = static_cast<std::size_t>(s);
      if (count[si] == 0) continue;  // orphan center keeps its position
      const double m = static_cast<double>(count[si]);
      clusters[si].spectrum = spec_acc[si] / m;
      clusters[si].row = row_acc[si] / m;
      clusters[si].col = col_acc[si] / m;
    }
  }

  // Connectivity enforcement: split into 4-connected components, then merge
  // fragments below target_size^2/4 into the adjacent component with the
  // nearest mean spectrum.
  std::vector<Index> comp_of(static_cast<std::size_t>(n), -1);
  std::vector<Component> comps;
  std::deque<Index> queue;
  for (Index start = 0; start < n; ++start) {
    if (comp_of[static_cast<std::size_t>(start)] >= 0) continue;
    const Index lab = labels[static_cast<std::size_t>(start)];
    const Index id = static_cast<Index>(comps.size());
    comps.emplace_back();
    Component& comp = comps.back();
    comp.mean = Vector::Zero(cube.band_count());
    queue.clear();
    queue.push_back(start);
    comp_of[static_cast<std::size_t>(start)] = id;
    while (!queue.empty()) {
      const Index px = queue.front();
      queue.pop_front();
      comp.members.push_back(px);
      comp.mean += cube.data.col(px);
      ++comp.size;
      const Index r = px / cols;
      const Index c = px % cols;
      const Index nb[4] = {r > 0 ? px - cols : -1, r + 1 < rows ? px + cols : -1,
                           c > 0 ? px - 1 : -1, c + 1 < cols ? px + 1 : -1};
      for (Index q : nb) {
        if (q < 0 || comp_of[static_cast<std::size_t>(q)] >= 0) continue;
        if (labels[static_cast<std::size_t>(q)] != lab) continue;
        comp_of[static_cast<std::size_t>(q)] = id;
        queue.push_back(q);
      }
    }
    comp.mean /= static_cast<double>(comp.size);
  }

  const double min_size = target_size * target_size / 4.0;
  std::vector<Index> parent(comps.size());
  std::iota(parent.begin(), parent.end(), Index{0});

  while (true) {
    // Smallest fragment first; ties resolved by lowest component id.
    Index frag = -1;
    for (Index i = 0; i < static_cast<Index>(comps.size()); ++i) {
      if (find_root(parent, i) != i) continue;
      if (static_cast<double>(comps[static_cast<std::size_t>(i)].size) >= min_size)
        continue;
      if (frag < 0 || comps[static_cast<std::size_t>(i)].size <
                          comps[static_cast<std::size_t>(frag)].size)
        frag = i;
    }
    if (frag < 0) break;

    const Component& f = comps[static_cast<std::size_t>(frag)];
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index px : f.members) {
      const Index r = px / cols;
      const Index c = px % cols;
      const Index nb[4] = {r > 0 ? px - cols : -1, r + 1 < rows ? px + cols : -1,
                           c > 0 ? px - 1 : -1, c + 1 < cols ? px + 1 : -1};
      for (Index q : nb) {
        if (q < 0) continue;
        const Index other = find_root(parent, comp_of[static_cast<std::size_t>(q)]);
        if (other == frag) continue;
        const double d =
            (comps[static_cast<std::size_t>(other)].mean - f.mean).squaredNorm();
        if (d < best_d || (d == best_d && other < best)) {
          best_d = d;
          best = other;
        }
      }
    }
    if (best < 0) break;  // single component left; nothing to merge into

    Component& target = comps[static_cast<std::size_t>(best)];
    const double total = static_cast<double>(target.size + f.size);
    target.mean = (target.mean * static_cast<double>(target.size) +
                   f.mean * static_cast<double>(f.size)) /
                  total;
    target.members.insert(target.members.end(), f.members.begin(), f.members.end());
    target.size += f.size;
    parent[static_cast<std::size_t>(frag)] = best;
  }

  // Relabel surviving components in order of first pixel occurrence.
  SuperpixelMap map;
  map.rows = rows;
  map.cols = cols;
  map.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> new_label(comps.size(), -1);
  Index next = 0;
  for (Index px = 0; px < n; ++px) {
    const Index root = find_root(parent, comp_of[static_cast<std::size_t>(px)]);
    if (new_label[static_cast<std::size_t>(root)] < 0)
      new_label[static_cast<std::size_t>(root)] = next++;
    map.labels[static_cast<std::size_t>(px)] = new_label[static_cast<std::size_t>(root)];
  }
  map.superpixel_count = next;
  map.sizes.assign(static_cast<std::size_t>(next), 0);
  for (Index px = 0; px < n; ++px)
    ++map.sizes[static_cast<std::size_t>(map.labels[static_cast<std::size_t>(px)])];
  return map;
}

}  // namespace muasv
