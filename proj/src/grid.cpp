// SPDX-License-Identifier: Apache-2.0
#include "grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace maodb::grid {

void GridConfig::validate() const {
  if (!geometry::is_finite(origin) || !(width > 0.0) || !(height > 0.0) || !std::isfinite(width) ||
      !std::isfinite(height))
    fail(ErrorCode::InvalidArgument, "grid extent must be finite and positive");
  if (nx < 1 || ny < 1) fail(ErrorCode::InvalidArgument, "grid needs at least one cell per axis");
}

Envelope GridConfig::cell_extent(CellId c) const noexcept {
  const int i = ix(c), j = iy(c);
  return {{x_edge(i), y_edge(j)}, {x_edge(i + 1), y_edge(j + 1)}};
}

GridConfig square_grid(double side_m, int cells) {
  if (cells < 1) fail(ErrorCode::InvalidArgument, "cell count must be positive");
  int best = 1;
  for (int d = 1; d * d <= cells; ++d)
    if (cells % d == 0) best = d;
  GridConfig g{{0.0, 0.0}, side_m, side_m, cells / best, best};
  g.validate();
  return g;
}

namespace {

// Index of the half-open slot containing v, given a floor estimate and exact edges.
template <class Edge>
int locate(double v, double origin, double step, int n, Edge edge) {
  int i = static_cast<int>(std::floor((v - origin) / step));
  i = std::clamp(i, 0, n - 1);
  while (i > 0 && v < edge(i)) --i;
  while (i < n - 1 && v >= edge(i + 1)) ++i;
  return i;
}

void check_inside(const GridConfig& g, Point p) {
  if (!geometry::is_finite(p) || !geometry::envelope_contains(g.space(), p))
    fail(ErrorCode::OutOfBounds, "point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                     ") lies outside the space");
}

// Liang-Barsky clip of a segment against one cell, honouring the half-open upper sides.
bool hits_cell(const GridConfig& g, const Segment& s, int i, int j) {
  const double lo[2] = {g.x_edge(i), g.y_edge(j)};
  const double hi[2] = {g.x_edge(i + 1), g.y_edge(j + 1)};
  const bool hi_closed[2] = {i == g.nx - 1, j == g.ny - 1};
  const double a[2] = {s.start.x, s.start.y};
  const double d[2] = {s.end.x - s.start.x, s.end.y - s.start.y};
  double t0 = 0.0, t1 = 1.0;
  bool t1_open = false, t0_open = false;
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (a[k] < lo[k] || a[k] > hi[k] || (a[k] == hi[k] && !hi_closed[k])) return false;
      continue;
    }
    double tl = (lo[k] - a[k]) / d[k];
    double th = (hi[k] - a[k]) / d[k];
    bool tl_open = false, th_open = !hi_closed[k];
    if (d[k] < 0.0) {
      std::swap(tl, th);
      std::swap(tl_open, th_open);
    }
    if (tl > t0 || (tl == t0 && tl_open)) {
      t0 = tl;
      t0_open = tl_open;
    }
    if (th < t1 || (th == t1 && th_open)) {
      t1 = th;
      t1_open = th_open;
    }
  }
  return t0 < t1 || (t0 == t1 && !t0_open && !t1_open);
}

}  // namespace

CellId cell_of(const GridConfig& g, Point pt) {
  check_inside(g, pt);
  const int i = locate(pt.x, g.origin.x, g.width / g.nx, g.nx, [&](int k) { return g.x_edge(k); });
  const int j = locate(pt.y, g.origin.y, g.height / g.ny, g.ny, [&](int k) { return g.y_edge(k); });
  return g.id(i, j);
}

std::vector<CellId> cells_of_envelope(const GridConfig& g, const Envelope& e) {
  if (!(e.min.x <= e.max.x && e.min.y <= e.max.y) || !e.intersects(g.space()))
    fail(ErrorCode::OutOfBounds, "range does not intersect the space");
  const Envelope c = geometry::intersection(e, g.space());
  // Closed extents: cell i spans [edge(i), edge(i+1)], so a value on an edge touches both sides.
  int i0 = 0, i1 = g.nx - 1, j0 = 0, j1 = g.ny - 1;
  while (i0 < g.nx - 1 && g.x_edge(i0 + 1) < c.min.x) ++i0;
  while (i1 > 0 && g.x_edge(i1) > c.max.x) --i1;
  while (j0 < g.ny - 1 && g.y_edge(j0 + 1) < c.min.y) ++j0;
  while (j1 > 0 && g.y_edge(j1) > c.max.y) --j1;
  std::vector<CellId> out;
  out.reserve(static_cast<std::size_t>((i1 - i0 + 1) * (j1 - j0 + 1)));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) out.push_back(g.id(i, j));
  return out;
}

std::vector<CellId> cells_of_segment(const GridConfig& g, const Segment& s) {
  check_inside(g, s.start);
  check_inside(g, s.end);
  const CellId a = cell_of(g, s.start), b = cell_of(g, s.end);
  if (a == b) return {a};
  const int i0 = std::min(g.ix(a), g.ix(b)), i1 = std::max(g.ix(a), g.ix(b));
  const int j0 = std::min(g.iy(a), g.iy(b)), j1 = std::max(g.iy(a), g.iy(b));
  std::vector<CellId> out;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const CellId c = g.id(i, j);
      if (c == a || c == b || hits_cell(g, s, i, j)) out.push_back(c);
    }
  return out;
}

namespace {

struct Builder {
  const GridConfig& g;
  std::span<const double> w;
  PlacementMap& out;

  double weight(int i0, int i1, int j0, int j1) const {
    double s = 0.0;
    for (int j = j0; j < j1; ++j)
      for (int i = i0; i < i1; ++i) s += w[g.id(i, j)];
    return s;
  }

  // Smallest split k in [lo, hi] whose prefix weight reaches half the total; hi if none.
  int median_split(int lo, int hi, int n, auto slice_weight) const {
    std::vector<double> slices(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int k = 0; k < n; ++k) total += slices[k] = slice_weight(k);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      acc += slices[k];
      const int split = k + 1;
      if (split >= lo && split <= hi && acc >= total / 2.0) return split;
      if (split >= hi) break;
    }
    return hi;
  }

  void split(int i0, int i1, int j0, int j1, int first_shard, int k, int depth) {
    if (k == 1) {
      out.regions[static_cast<std::size_t>(first_shard)] = {i0, j0, i1, j1};
      for (int j = j0; j < j1; ++j)
        for (int i = i0; i < i1; ++i) out.shard_of[g.id(i, j)] = first_shard;
      return;
    }
    const int half = k / 2;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const bool along_x = ((depth + attempt) % 2) == 0;
      const int n = along_x ? i1 - i0 : j1 - j0;
      const int other = along_x ? j1 - j0 : i1 - i0;
      // Each side must keep at least `half` cells so every leaf gets one.
      const int lo = std::max(1, (half + other - 1) / other);
      const int hi = n - lo;
      if (n < 2 || lo > hi) continue;
      int s;
      if (along_x)
        s = median_split(lo, hi, n, [&](int k2) { return weight(i0 + k2, i0 + k2 + 1, j0, j1); });
      else
        s = median_split(lo, hi, n, [&](int k2) { return weight(i0, i1, j0 + k2, j0 + k2 + 1); });
      if (along_x) {
        split(i0, i0 + s, j0, j1, first_shard, half, depth + 1);
        split(i0 + s, i1, j0, j1, first_shard + half, half, depth + 1);
      } else {
        split(i0, i1, j0, j0 + s, first_shard, half, depth + 1);
        split(i0, i1, j0 + s, j1, first_shard + half, half, depth + 1);
      }
      return;
    }
    fail(ErrorCode::InvalidShardCount, "region too small for its shard count");
  }
};

}  // namespace

PlacementMap build_placement(const GridConfig& g, int num_shards, std::span<const double> cell_weights) {
  g.validate();
  if (num_shards < 1 || (num_shards & (num_shards - 1)) != 0)
    fail(ErrorCode::InvalidShardCount, "shard count must be a power of two, got " + std::to_string(num_shards));
  if (num_shards > g.cells())
    fail(ErrorCode::InvalidShardCount, "more shards than cells");
  if (cell_weights.size() != static_cast<std::size_t>(g.cells()))
    fail(ErrorCode::InvalidArgument, "one weight per cell required");
  std::vector<double> w(cell_weights.begin(), cell_weights.end());
  for (double x : w)
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::InvalidArgument, "cell weights must be non-negative");
  if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) std::fill(w.begin(), w.end(), 1.0);

  PlacementMap pm;
  pm.num_shards = num_shards;
  pm.shard_of.assign(static_cast<std::size_t>(g.cells()), -1);
  pm.regions.resize(static_cast<std::size_t>(num_shards));
  Builder b{g, w, pm};
  b.split(0, g.nx, 0, g.ny, 0, num_shards, 0);
  return pm;
}

}  // namespace maodb::grid
