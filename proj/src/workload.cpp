// SPDX-License-Identifier: Apache-2.0
#include "workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "error.hpp"

namespace maodb::workload {

const char* to_string(Model m) noexcept {
  switch (m) {
    case Model::Uniform: return "uniform";
    case Model::Gaussian: return "gaussian";
    case Model::RoadNet: return "roadnet";
  }
  return "?";
}

Model model_from_string(std::string_view s) {
  if (s == "uniform") return Model::Uniform;
  if (s == "gaussian") return Model::Gaussian;
  if (s == "roadnet") return Model::RoadNet;
  fail(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "' (uniform|gaussian|roadnet)");
}

void WorkloadConfig::validate() const {
  space.validate();
  auto frac = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::InvalidArgument, std::string(name) + " must lie in [0,1]");
  };
  frac(sensing_pct, "sensing_pct");
  frac(query_ratio, "query_ratio");
  if (!(max_speed > 0.0) || !(fixed_speed > 0.0)) fail(ErrorCode::InvalidArgument, "speeds must be positive");
  if (!(fence_side > 0.0) || !(query_side > 0.0)) fail(ErrorCode::InvalidArgument, "fence and query sides must be positive");
  if (num_actors == 0) fail(ErrorCode::InvalidArgument, "num_actors must be positive");
  if (!(duration_s > 0.0) || !(step_s > 0.0)) fail(ErrorCode::InvalidArgument, "durations must be positive");
  if (clients_per_shard < 1) fail(ErrorCode::InvalidArgument, "clients_per_shard must be at least 1");
  if (model == Model::Gaussian && hotspots == 0) fail(ErrorCode::InvalidArgument, "gaussian model needs hotspots");
  if (sigma < 0.0) fail(ErrorCode::InvalidArgument, "sigma must be non-negative");
}

double WorkloadConfig::effective_sigma() const {
  if (sigma > 0.0) return sigma;
  const double side = std::sqrt(space.width * space.height);
  return side / (4.0 * std::sqrt(static_cast<double>(std::max<std::uint64_t>(hotspots, 1))));
}

Rng actor_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

namespace {

bool inside(const Envelope& e, Point p) { return geometry::envelope_contains(e, p); }

Point random_heading(Rng& rng) {
  const double a = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  return {std::cos(a), std::sin(a)};
}

double exit_param(double p, double h, double lo, double hi) {
  if (h > 0.0) return (hi - p) / h;
  if (h < 0.0) return (lo - p) / h;
  return std::numeric_limits<double>::infinity();
}

}  // namespace

Point reflect_step(MoverState& s, double dist, const Envelope& space) {
  if (dist <= 0.0) return s.pos;
  const Point q = s.pos + s.heading * dist;
  if (inside(space, q)) return s.pos = q;

  const double tx = exit_param(s.pos.x, s.heading.x, space.min.x, space.max.x);
  const double ty = exit_param(s.pos.y, s.heading.y, space.min.y, space.max.y);
  const double t = std::max(0.0, std::min(tx, ty));
  Point e = s.pos + s.heading * t;
  Point h = s.heading;
  if (tx <= ty) {
    e.x = h.x > 0 ? space.max.x : space.min.x;
    h.x = -h.x;
  }
  if (ty <= tx) {
    e.y = h.y > 0 ? space.max.y : space.min.y;
    h.y = -h.y;
  }
  const Point r = e + h * (dist - t);
  if (inside(space, r)) {
    s.heading = h;
    return s.pos = r;
  }
  // Stuck: keep the position and turn away from every border the reflection still leaves by.
  if (r.x < space.min.x || r.x > space.max.x) h.x = -h.x;
  if (r.y < space.min.y || r.y > space.max.y) h.y = -h.y;
  s.heading = h;
  return s.pos;
}

Point step_uniform(MoverState& s, double dt, Rng& rng, const Envelope& space, std::uint64_t redraw_every) {
  ++s.steps;
  if (redraw_every > 0 && s.steps % redraw_every == 0) s.heading = random_heading(rng);
  return reflect_step(s, s.speed * dt, space);
}

double gaussian_speed(double max_speed, double d, double sigma) noexcept {
  if (!(sigma > 0.0)) return max_speed;
  return max_speed * std::min(1.0, d / (3.0 * sigma));
}

Point step_gaussian(MoverState& s, double dt, Rng&, const Envelope& space, const std::vector<Point>& hotspots,
                    double sigma, double max_speed) {
  ++s.steps;
  double d = std::numeric_limits<double>::infinity();
  for (Point h : hotspots) d = std::min(d, std::hypot(s.pos.x - h.x, s.pos.y - h.y));
  s.speed = gaussian_speed(max_speed, d, sigma);
  return reflect_step(s, s.speed * dt, space);
}

double RoadGraph::edge_length(std::size_t e) const {
  const Point a = nodes[edges[e].first], b = nodes[edges[e].second];
  return std::hypot(b.x - a.x, b.y - a.y);
}

Point RoadGraph::edge_point(std::size_t e, bool forward, double offset) const {
  Point a = nodes[edges[e].first], b = nodes[edges[e].second];
  if (!forward) std::swap(a, b);
  const double len = edge_length(e);
  const double f = len > 0 ? std::clamp(offset / len, 0.0, 1.0) : 0.0;
  return a + (b - a) * f;
}

double point_segment_distance(Point p, Point a, Point b) noexcept {
  const Point ab = b - a, ap = p - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0 ? (ap.x * ab.x + ap.y * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Point c = a + ab * t;
  return std::hypot(p.x - c.x, p.y - c.y);
}

double RoadGraph::distance_to_graph(Point p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : edges) d = std::min(d, point_segment_distance(p, nodes[a], nodes[b]));
  return d;
}

Point step_roadnet(MoverState& s, double dt, Rng& rng, const RoadGraph& g, double speed) {
  ++s.steps;
  double remaining = speed * dt;
  // A closed walk on a finite graph always makes progress; the bound only guards bad input.
  for (int guard = 0; guard < 1'000'000; ++guard) {
    const double len = g.edge_length(s.edge);
    if (remaining < len - s.offset) {
      s.offset += remaining;
      break;
    }
    remaining -= len - s.offset;
    const auto [a, b] = g.edges[s.edge];
    const std::size_t v = s.forward ? b : a;
    std::vector<std::pair<std::size_t, std::size_t>> options;
    for (const auto& nb : g.adjacency[v])
      if (nb.second != s.edge) options.push_back(nb);
    if (options.empty()) {
      s.forward = !s.forward;  // dead end: turn around on the same edge
    } else {
      const auto pick = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
      s.edge = pick.second;
      s.forward = g.edges[s.edge].first == v;
    }
    s.offset = 0.0;
    if (remaining <= 0.0) break;
  }
  return s.pos = g.edge_point(s.edge, s.forward, s.offset);
}

namespace {
[[noreturn]] void bad_graph(std::size_t line, const std::string& what) {
  fail(ErrorCode::InvalidGraph, "line " + std::to_string(line) + ": " + what);
}
}  // namespace

RoadGraph parse_road_graph(std::istream& in, const std::optional<Envelope>& space) {
  struct RawEdge {
    std::uint64_t a, b;
    std::size_t line;
  };
  std::map<std::uint64_t, std::pair<Point, std::size_t>> raw_nodes;
  std::vector<RawEdge> raw_edges;
  std::optional<std::pair<double, double>> header;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag[0] == '#') {
      std::string word;
      if (tag == "#" && (ls >> word) && word == "space") {
        double w = 0, h = 0;
        if (!(ls >> w >> h) || !(w > 0) || !(h > 0)) bad_graph(lineno, "malformed space header");
        header = {w, h};
      }
      continue;
    }
    std::string extra;
    if (tag == "N") {
      long long id = -1;
      double x = 0, y = 0;
      if (!(ls >> id >> x >> y) || id < 0 || (ls >> extra) || !std::isfinite(x) || !std::isfinite(y))
        bad_graph(lineno, "malformed node line");
      if (!raw_nodes.emplace(static_cast<std::uint64_t>(id), std::pair{Point{x, y}, lineno}).second)
        bad_graph(lineno, "duplicate node " + std::to_string(id));
    } else if (tag == "E") {
      long long a = -1, b = -1;
      if (!(ls >> a >> b) || a < 0 || b < 0 || (ls >> extra)) bad_graph(lineno, "malformed edge line");
      raw_edges.push_back({static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b), lineno});
    } else {
      bad_graph(lineno, "unknown record '" + tag + "'");
    }
  }

  RoadGraph g;
  std::map<std::uint64_t, std::size_t> index;
  for (const auto& [id, np] : raw_nodes) {
    Point p = np.first;
    if (header && space) {
      p = {space->min.x + p.x * space->width() / header->first, space->min.y + p.y * space->height() / header->second};
    }
    if (space && !geometry::envelope_contains(*space, p))
      bad_graph(np.second, "node " + std::to_string(id) + " lies outside the space");
    index[id] = g.nodes.size();
    g.ids.push_back(id);
    g.nodes.push_back(p);
  }
  g.adjacency.resize(g.nodes.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const RawEdge& e : raw_edges) {
    auto ia = index.find(e.a), ib = index.find(e.b);
    if (ia == index.end() || ib == index.end())
      bad_graph(e.line, "edge references unknown node " + std::to_string(ia == index.end() ? e.a : e.b));
    const std::size_t a = ia->second, b = ib->second;
    if (a == b || (g.nodes[a].x == g.nodes[b].x && g.nodes[a].y == g.nodes[b].y))
      bad_graph(e.line, "zero-length edge");
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) bad_graph(e.line, "duplicate edge");
    const std::size_t k = g.edges.size();
    g.edges.emplace_back(a, b);
    g.adjacency[a].emplace_back(b, k);
    g.adjacency[b].emplace_back(a, k);
  }
  return g;
}

RoadGraph load_road_graph(const std::string& path, const std::optional<Envelope>& space) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open road graph '" + path + "'");
  try {
    return parse_road_graph(in, space);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

RoadGraph lattice_graph(std::size_t n, double width, double height) {
  if (n < 2 || !(width > 0) || !(height > 0)) fail(ErrorCode::InvalidArgument, "lattice needs n >= 2 and a positive extent");
  std::ostringstream os;
  os.precision(17);
  os << "# space " << width << ' ' << height << '\n';
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      os << "N " << i * n + j << ' ' << width * static_cast<double>(j) / static_cast<double>(n - 1) << ' '
         << height * static_cast<double>(i) / static_cast<double>(n - 1) << '\n';
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j + 1 < n) os << "E " << i * n + j << ' ' << i * n + j + 1 << '\n';
      if (i + 1 < n) os << "E " << i * n + j << ' ' << (i + 1) * n + j << '\n';
    }
  std::istringstream in(os.str());
  return parse_road_graph(in);
}

void write_road_graph(const RoadGraph& g, const std::string& path, double width, double height) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write road graph '" + path + "'");
  out.setf(std::ios::fixed);
  out.precision(6);
  out << "# space " << width << ' ' << height << '\n';
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    out << "N " << g.ids[i] << ' ' << g.nodes[i].x << ' ' << g.nodes[i].y << '\n';
  for (const auto& [a, b] : g.edges) out << "E " << g.ids[a] << ' ' << g.ids[b] << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

Workload::Workload(WorkloadConfig cfg, std::shared_ptr<const RoadGraph> graph)
    : cfg_(std::move(cfg)), space_(cfg_.space.space()), graph_(std::move(graph)) {
  cfg_.validate();
  if (cfg_.model == Model::RoadNet && !graph_) {
    if (cfg_.road_file.empty()) fail(ErrorCode::InvalidArgument, "roadnet model needs a road graph");
    graph_ = std::make_shared<RoadGraph>(load_road_graph(cfg_.road_file, space_));
  }
  if (cfg_.model == Model::RoadNet && graph_->edges.empty()) fail(ErrorCode::InvalidGraph, "road graph has no edges");
  if (cfg_.model == Model::Gaussian) {
    Rng rng = actor_rng(cfg_.seed, ~0ull, 1);
    std::uniform_real_distribution<double> ux(space_.min.x, space_.max.x), uy(space_.min.y, space_.max.y);
    for (std::uint64_t h = 0; h < cfg_.hotspots; ++h) hotspots_.push_back({ux(rng), uy(rng)});
  }
  const double sigma = cfg_.effective_sigma();
  states_.resize(cfg_.num_actors);
  rngs_.reserve(cfg_.num_actors);
  for (std::uint64_t i = 0; i < cfg_.num_actors; ++i) {
    Rng& rng = rngs_.emplace_back(actor_rng(cfg_.seed, i));
    MoverState& s = states_[i];
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    switch (cfg_.model) {
      case Model::Uniform:
        s.pos = {space_.min.x + u01(rng) * space_.width(), space_.min.y + u01(rng) * space_.height()};
        s.heading = random_heading(rng);
        s.speed = cfg_.max_speed * (1.0 - u01(rng));
        break;
      case Model::Gaussian: {
        const Point h = hotspots_[std::uniform_int_distribution<std::size_t>(0, hotspots_.size() - 1)(rng)];
        std::normal_distribution<double> n(0.0, sigma);
        s.pos = {std::clamp(h.x + n(rng), space_.min.x, space_.max.x), std::clamp(h.y + n(rng), space_.min.y, space_.max.y)};
        s.heading = random_heading(rng);
        break;
      }
      case Model::RoadNet:
        s.edge = std::uniform_int_distribution<std::size_t>(0, graph_->edges.size() - 1)(rng);
        s.forward = u01(rng) < 0.5;
        s.offset = u01(rng) * graph_->edge_length(s.edge);
        s.speed = cfg_.fixed_speed;
        s.pos = graph_->edge_point(s.edge, s.forward, s.offset);
        break;
    }
    initial_.push_back(s.pos);
  }
}

std::uint64_t Workload::sensors() const noexcept {
  return static_cast<std::uint64_t>(std::floor(cfg_.sensing_pct * static_cast<double>(cfg_.num_actors)));
}

Point Workload::next_move(std::uint64_t i) {
  MoverState& s = states_.at(i);
  Rng& rng = rngs_[i];
  switch (cfg_.model) {
    case Model::Uniform: return step_uniform(s, cfg_.step_s, rng, space_, cfg_.redraw_every);
    case Model::Gaussian:
      return step_gaussian(s, cfg_.step_s, rng, space_, hotspots_, cfg_.effective_sigma(), cfg_.max_speed);
    case Model::RoadNet: return step_roadnet(s, cfg_.step_s, rng, *graph_, cfg_.fixed_speed);
  }
  return s.pos;
}

Envelope Workload::query_window(Point centre) const { return Envelope::around(centre, cfg_.query_side); }

}  // namespace maodb::workload
