// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"

namespace maodb::workload {

using geometry::Envelope;
using geometry::Point;
using Rng = std::mt19937_64;

enum class Model : std::uint8_t { Uniform, Gaussian, RoadNet };

const char* to_string(Model m) noexcept;
Model model_from_string(std::string_view s);

struct WorkloadConfig {
  Model model = Model::Uniform;
  std::uint64_t num_actors = 5000;
  grid::GridConfig space;
  double max_speed = 80.0 / 3.6;
  double fence_side = 1000.0;
  double query_side = 1000.0;
  double sensing_pct = 0.125;
  double query_ratio = 0.0;
  std::uint64_t hotspots = 10;
  double sigma = 0.0;  // 0: side / (4 sqrt(hotspots))
  std::string road_file;
  double fixed_speed = 22.0;
  std::uint64_t seed = 1;
  double duration_s = 10.0;
  int clients_per_shard = 8;
  double step_s = 1.0;          // simulated time between two moves of one actor
  std::uint64_t redraw_every = 0;  // heading re-draw period in moves; 0: only on reflection

  void validate() const;
  double effective_sigma() const;
};

struct MoverState {
  Point pos;
  Point heading{1.0, 0.0};  // unit vector
  double speed = 0.0;
  std::uint64_t steps = 0;
  // Road network position: offset metres from `from` along edge `edge`.
  std::size_t edge = 0;
  bool forward = true;
  double offset = 0.0;
};

// Advances `dist` metres along the heading, reflecting the excess off the border it leaves
// through. If the reflected point is still outside the actor stays put.
Point reflect_step(MoverState& s, double dist, const Envelope& space);

Point step_uniform(MoverState& s, double dt, Rng& rng, const Envelope& space, std::uint64_t redraw_every = 0);
double gaussian_speed(double max_speed, double d, double sigma) noexcept;
Point step_gaussian(MoverState& s, double dt, Rng& rng, const Envelope& space, const std::vector<Point>& hotspots,
                    double sigma, double max_speed);

struct RoadGraph {
  std::vector<std::uint64_t> ids;  // external id per node index
  std::vector<Point> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency;  // (neighbour, edge)

  double edge_length(std::size_t e) const;
  Point edge_point(std::size_t e, bool forward, double offset) const;
  double distance_to_graph(Point p) const;
};

Point step_roadnet(MoverState& s, double dt, Rng& rng, const RoadGraph& g, double speed);

// `space`, when given, is where `# space` headers are scaled into and where coordinates must lie.
RoadGraph parse_road_graph(std::istream& in, const std::optional<Envelope>& space = std::nullopt);
RoadGraph load_road_graph(const std::string& path, const std::optional<Envelope>& space = std::nullopt);
RoadGraph lattice_graph(std::size_t n, double width, double height);
void write_road_graph(const RoadGraph& g, const std::string& path, double width, double height);

double point_segment_distance(Point p, Point a, Point b) noexcept;

// Per-actor deterministic generators for one benchmark configuration.
class Workload {
 public:
  explicit Workload(WorkloadConfig cfg, std::shared_ptr<const RoadGraph> graph = nullptr);

  const WorkloadConfig& config() const noexcept { return cfg_; }
  std::uint64_t size() const noexcept { return cfg_.num_actors; }
  Point position(std::uint64_t i) const { return states_.at(i).pos; }
  Point initial(std::uint64_t i) const { return initial_.at(i); }
  Point next_move(std::uint64_t i);
  bool is_sensor(std::uint64_t i) const noexcept { return i < sensors(); }
  std::uint64_t sensors() const noexcept;
  const std::vector<Point>& hotspots() const noexcept { return hotspots_; }
  const RoadGraph* graph() const noexcept { return graph_.get(); }
  Envelope query_window(Point centre) const;

 private:
  WorkloadConfig cfg_;
  Envelope space_;
  std::shared_ptr<const RoadGraph> graph_;
  std::vector<Point> hotspots_;
  std::vector<MoverState> states_;
  std::vector<Point> initial_;
  std::vector<Rng> rngs_;
};

Rng actor_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

}  // namespace maodb::workload
