// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geometry.hpp"

namespace maodb::grid {

using geometry::Envelope;
using geometry::Point;
using geometry::Segment;

using CellId = std::uint32_t;

struct GridConfig {
  Point origin;
  double width = 0.0;
  double height = 0.0;
  int nx = 1;
  int ny = 1;

  void validate() const;
  int cells() const noexcept { return nx * ny; }
  Envelope space() const noexcept { return {origin, {origin.x + width, origin.y + height}}; }
  // Cell boundaries; the last one is pinned to the space edge so rounding cannot leave a gap.
  double x_edge(int i) const noexcept { return i >= nx ? origin.x + width : origin.x + i * (width / nx); }
  double y_edge(int j) const noexcept { return j >= ny ? origin.y + height : origin.y + j * (height / ny); }
  Envelope cell_extent(CellId c) const noexcept;
  CellId id(int ix, int iy) const noexcept { return static_cast<CellId>(iy * nx + ix); }
  int ix(CellId c) const noexcept { return static_cast<int>(c) % nx; }
  int iy(CellId c) const noexcept { return static_cast<int>(c) / nx; }
};

// Square space of the given side split into `cells` cells (nx * ny == cells, as square as possible).
GridConfig square_grid(double side_m, int cells);

// Half-open cells; points on the global max edges belong to the last row/column.
CellId cell_of(const GridConfig& g, Point pt);
// Cells whose closed extent intersects e, ascending.
std::vector<CellId> cells_of_envelope(const GridConfig& g, const Envelope& e);
// Cells containing at least one point of the segment under the half-open rule, ascending.
std::vector<CellId> cells_of_segment(const GridConfig& g, const Segment& s);

struct PlacementMap {
  int num_shards = 1;
  std::vector<int> shard_of;  // indexed by CellId
  // Leaf regions as half-open index rectangles [ix0, ix1) x [iy0, iy1), one per shard.
  struct Region {
    int ix0, iy0, ix1, iy1;
  };
  std::vector<Region> regions;
};

PlacementMap build_placement(const GridConfig& g, int num_shards, std::span<const double> cell_weights);

}  // namespace maodb::grid
