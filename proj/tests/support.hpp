// Independent reference implementations used by unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "geometry.hpp"

namespace testsupport {

using maodb::geometry::ConvexPolygon;
using maodb::geometry::Point;
using maodb::geometry::Predicate;
using maodb::geometry::Segment;

inline double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// -1 strictly outside, 0 on the boundary, 1 strictly inside. Vertices are taken as CCW.
inline int classify(Point p, const std::vector<Point>& poly) {
  bool on = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const double c = cross(poly[i], poly[(i + 1) % poly.size()], p);
    if (c < 0) return -1;
    if (c == 0) on = true;
  }
  return on ? 0 : 1;
}

inline std::vector<Point> verts(const ConvexPolygon& f) { return {f.vertices().begin(), f.vertices().end()}; }

// Classifies a polyline by sampling every hop densely.
inline bool sampled_predicate(Predicate pred, const std::vector<Point>& line, const std::vector<Point>& poly,
                              int samples = 8192) {
  bool in = false, out = false, all_closed = true, any_closed = false;
  auto look = [&](Point p) {
    const int c = classify(p, poly);
    in = in || c == 1;
    out = out || c == -1;
    all_closed = all_closed && c >= 0;
    any_closed = any_closed || c >= 0;
  };
  look(line.front());
  for (std::size_t h = 1; h < line.size(); ++h)
    for (int k = 1; k <= samples; ++k) {
      const double t = static_cast<double>(k) / samples;
      look({line[h - 1].x + t * (line[h].x - line[h - 1].x), line[h - 1].y + t * (line[h].y - line[h - 1].y)});
    }
  switch (pred) {
    case Predicate::Cross: return in && out;
    case Predicate::Cover: return all_closed;
    case Predicate::Overlap: return any_closed;
  }
  return false;
}

inline double seg_point_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

// A polyline grazes when a fence vertex sits near it or one of its points sits near the fence boundary.
inline bool grazing(const std::vector<Point>& line, const std::vector<Point>& poly, double margin) {
  for (std::size_t h = 0; h + 1 < line.size(); ++h)
    for (Point v : poly)
      if (seg_point_distance(v, line[h], line[h + 1]) < margin) return true;
  for (Point p : line)
    for (std::size_t i = 0; i < poly.size(); ++i)
      if (seg_point_distance(p, poly[i], poly[(i + 1) % poly.size()]) < margin) return true;
  return false;
}

// Hull vertices by the half-plane test: (i, j) is a hull edge when every other point lies strictly left.
// Inputs are assumed to be in general position.
inline std::set<std::pair<double, double>> brute_hull(const std::vector<Point>& pts) {
  std::set<std::pair<double, double>> out;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || pts[i] == pts[j]) continue;
      bool edge = true;
      for (std::size_t k = 0; k < n && edge; ++k) {
        if (pts[k] == pts[i] || pts[k] == pts[j]) continue;
        edge = cross(pts[i], pts[j], pts[k]) > 0;
      }
      if (edge) {
        out.insert({pts[i].x, pts[i].y});
        out.insert({pts[j].x, pts[j].y});
      }
    }
  return out;
}

inline std::set<std::pair<double, double>> vertex_set(const ConvexPolygon& p) {
  std::set<std::pair<double, double>> out;
  for (Point v : p.vertices()) out.insert({v.x, v.y});
  return out;
}

inline Point in_disk(std::mt19937_64& rng, Point c, double r) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = 2 * M_PI * u(rng), d = r * std::sqrt(u(rng));
  return {c.x + d * std::cos(a), c.y + d * std::sin(a)};
}

}  // namespace testsupport
