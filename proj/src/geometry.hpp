// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "error.hpp"

namespace maodb::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
};

bool is_finite(Point p) noexcept;

// z-component of (b - a) x (c - a); positive when a, b, c turn counter-clockwise.
double orient(Point a, Point b, Point c) noexcept;

struct Segment {
  Point start;
  Point end;
};

// Closed axis-aligned rectangle.
struct Envelope {
  Point min;
  Point max;

  static Envelope around(Point center, double side);
  static Envelope of(std::span<const Point> pts);

  double width() const noexcept { return max.x - min.x; }
  double height() const noexcept { return max.y - min.y; }
  bool intersects(const Envelope& o) const noexcept;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

bool envelope_contains(const Envelope& e, Point pt) noexcept;
// Intersection of two envelopes; only meaningful when they intersect.
Envelope intersection(const Envelope& a, const Envelope& b) noexcept;

/// Strictly convex polygon with counter-clockwise vertex order.
class ConvexPolygon {
 public:
  ConvexPolygon() = default;

  /// Validates orientation and strict convexity; throws DegenerateInput otherwise.
  static ConvexPolygon from_ccw(std::vector<Point> vertices);
  /// Axis-aligned square of the given side centered at `center`.
  static ConvexPolygon square(Point center, double side);

  std::span<const Point> vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }
  bool empty() const noexcept { return vertices_.empty(); }
  Envelope bounds() const;
  ConvexPolygon translated(Point v) const;

  bool contains(Point p) const noexcept;           // closed
  bool contains_strictly(Point p) const noexcept;  // open interior

  friend bool operator==(const ConvexPolygon&, const ConvexPolygon&) = default;

 private:
  std::vector<Point> vertices_;
};

/// A timed sequence of recorded locations. Timestamps are nanoseconds and strictly increasing.
struct Itinerary {
  std::vector<Point> points;
  std::vector<std::int64_t> timestamps;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  /// Appends a point; throws InvalidArgument if `t` does not advance the clock.
  void append(Point p, std::int64_t t);
};

enum class Predicate : std::uint8_t { Cross, Cover, Overlap };

const char* to_string(Predicate p) noexcept;
Predicate predicate_from_string(std::string_view s);

// Cross: some point strictly inside and some point strictly outside the fence.
// Cover: the whole segment lies in the closed fence.
// Overlap: the segment touches the closed fence.
bool eval_predicate(Predicate p, const Segment& seg, const ConvexPolygon& fence);

// Same rules applied to a polyline (one or more points).
bool eval_predicate(Predicate p, std::span<const Point> polyline, const ConvexPolygon& fence);

// Smallest prefix length k (1-based point count) such that the prefix satisfies the predicate.
// Cover is not prefix-monotone, so it reports the full length when satisfied. Returns 0 if unsatisfied.
std::size_t first_satisfying_prefix(Predicate p, std::span<const Point> polyline,
                                    const ConvexPolygon& fence);

ConvexPolygon convex_hull(std::span<const Point> pts);

using FenceAt = std::function<ConvexPolygon(Point)>;
ConvexPolygon accumulated_fence(std::span<const Point> itinerary, const FenceAt& fence_at);
inline ConvexPolygon accumulated_fence(const Itinerary& iti, const FenceAt& fence_at) {
  return accumulated_fence(std::span<const Point>(iti.points), fence_at);
}

// Rounds both coordinates to the micrometer lattice; values then survive 6-decimal text round trips.
Point quantize(Point p) noexcept;

}  // namespace maodb::geometry
