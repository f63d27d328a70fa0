// SPDX-License-Identifier: Apache-2.0
#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maodb {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InvalidShardCount: return "InvalidShardCount";
    case ErrorCode::KernelStopped: return "KernelStopped";
    case ErrorCode::VersionGap: return "VersionGap";
    case ErrorCode::SnapshotUnstable: return "SnapshotUnstable";
    case ErrorCode::DuplicateFlush: return "DuplicateFlush";
    case ErrorCode::StaleRound: return "StaleRound";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::IncompleteTrace: return "IncompleteTrace";
    case ErrorCode::EmptySamples: return "EmptySamples";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace maodb

namespace maodb::geometry {

bool is_finite(Point p) noexcept { return std::isfinite(p.x) && std::isfinite(p.y); }

double orient(Point a, Point b, Point c) noexcept {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

Envelope Envelope::around(Point center, double side) {
  const double h = side / 2.0;
  return {{center.x - h, center.y - h}, {center.x + h, center.y + h}};
}

Envelope Envelope::of(std::span<const Point> pts) {
  if (pts.empty()) fail(ErrorCode::InvalidArgument, "envelope of an empty point set");
  Envelope e{pts[0], pts[0]};
  for (const Point& p : pts.subspan(1)) {
    e.min.x = std::min(e.min.x, p.x);
    e.min.y = std::min(e.min.y, p.y);
    e.max.x = std::max(e.max.x, p.x);
    e.max.y = std::max(e.max.y, p.y);
  }
  return e;
}

bool Envelope::intersects(const Envelope& o) const noexcept {
  return min.x <= o.max.x && o.min.x <= max.x && min.y <= o.max.y && o.min.y <= max.y;
}

bool envelope_contains(const Envelope& e, Point pt) noexcept {
  return e.min.x <= pt.x && pt.x <= e.max.x && e.min.y <= pt.y && pt.y <= e.max.y;
}

Envelope intersection(const Envelope& a, const Envelope& b) noexcept {
  return {{std::max(a.min.x, b.min.x), std::max(a.min.y, b.min.y)},
          {std::min(a.max.x, b.max.x), std::min(a.max.y, b.max.y)}};
}

ConvexPolygon ConvexPolygon::from_ccw(std::vector<Point> vertices) {
  const std::size_t n = vertices.size();
  if (n < 3) fail(ErrorCode::DegenerateInput, "polygon needs at least 3 vertices");
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_finite(vertices[i])) fail(ErrorCode::InvalidArgument, "non-finite polygon vertex");
    if (orient(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]) <= 0.0)
      fail(ErrorCode::DegenerateInput, "polygon is not strictly convex and counter-clockwise");
  }
  ConvexPolygon poly;
  poly.vertices_ = std::move(vertices);
  return poly;
}

ConvexPolygon ConvexPolygon::square(Point center, double side) {
  if (!(side > 0.0)) fail(ErrorCode::InvalidArgument, "fence side must be positive");
  const double h = side / 2.0;
  ConvexPolygon poly;
  poly.vertices_ = {{center.x - h, center.y - h},
                    {center.x + h, center.y - h},
                    {center.x + h, center.y + h},
                    {center.x - h, center.y + h}};
  return poly;
}

Envelope ConvexPolygon::bounds() const { return Envelope::of(vertices_); }

ConvexPolygon ConvexPolygon::translated(Point v) const {
  ConvexPolygon poly = *this;
  for (Point& p : poly.vertices_) p = p + v;
  return poly;
}

bool ConvexPolygon::contains(Point p) const noexcept {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i)
    if (orient(vertices_[i], vertices_[(i + 1) % n], p) < 0.0) return false;
  return n >= 3;
}

bool ConvexPolygon::contains_strictly(Point p) const noexcept {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i)
    if (orient(vertices_[i], vertices_[(i + 1) % n], p) <= 0.0) return false;
  return n >= 3;
}

void Itinerary::append(Point p, std::int64_t t) {
  if (!timestamps.empty() && t <= timestamps.back())
    fail(ErrorCode::InvalidArgument, "itinerary timestamps must strictly increase");
  points.push_back(p);
  timestamps.push_back(t);
}

const char* to_string(Predicate p) noexcept {
  switch (p) {
    case Predicate::Cross: return "cross";
    case Predicate::Cover: return "cover";
    case Predicate::Overlap: return "overlap";
  }
  return "?";
}

Predicate predicate_from_string(std::string_view s) {
  if (s == "cross") return Predicate::Cross;
  if (s == "cover") return Predicate::Cover;
  if (s == "overlap") return Predicate::Overlap;
  fail(ErrorCode::InvalidArgument, "unknown predicate '" + std::string(s) + "'");
}

namespace {

// Clips the parametric segment a + t (b - a), t in [0, 1], against every edge half-plane.
// `strict` selects the open interior instead of the closed polygon.
bool segment_meets(const Segment& seg, const ConvexPolygon& fence, bool strict) {
  const auto v = fence.vertices();
  const std::size_t n = v.size();
  const Point d = seg.end - seg.start;
  double lo = 0.0, hi = 1.0;
  bool lo_open = false, hi_open = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point e = v[(i + 1) % n] - v[i];
    const Point w = seg.start - v[i];
    const double c = e.x * w.y - e.y * w.x;
    const double k = e.x * d.y - e.y * d.x;
    if (k == 0.0) {
      if (strict ? c <= 0.0 : c < 0.0) return false;
      continue;
    }
    const double t = -c / k;
    if (k > 0.0) {
      if (t > lo || (t == lo && strict)) {
        lo = t;
        lo_open = strict;
      }
    } else {
      if (t < hi || (t == hi && strict)) {
        hi = t;
        hi_open = strict;
      }
    }
  }
  if (lo < hi) return true;
  return lo == hi && !lo_open && !hi_open;
}

bool point_outside(const ConvexPolygon& fence, Point p) { return !fence.contains(p); }

}  // namespace

bool eval_predicate(Predicate p, const Segment& seg, const ConvexPolygon& fence) {
  const bool covered = fence.contains(seg.start) && fence.contains(seg.end);
  switch (p) {
    case Predicate::Cover: return covered;
    case Predicate::Overlap: return covered || segment_meets(seg, fence, false);
    case Predicate::Cross: return !covered && segment_meets(seg, fence, true);
  }
  return false;
}

bool eval_predicate(Predicate p, std::span<const Point> polyline, const ConvexPolygon& fence) {
  if (polyline.empty()) return false;
  if (polyline.size() == 1) {
    const Point q = polyline[0];
    return p == Predicate::Cross ? false : fence.contains(q);
  }
  switch (p) {
    case Predicate::Cover:
      return std::all_of(polyline.begin(), polyline.end(),
                         [&](Point q) { return fence.contains(q); });
    case Predicate::Overlap:
      for (std::size_t i = 1; i < polyline.size(); ++i)
        if (segment_meets({polyline[i - 1], polyline[i]}, fence, false)) return true;
      return false;
    case Predicate::Cross: {
      bool outside = false, inside = false;
      for (std::size_t i = 0; i < polyline.size() && !(outside && inside); ++i) {
        outside = outside || point_outside(fence, polyline[i]);
        if (i > 0 && !inside) inside = segment_meets({polyline[i - 1], polyline[i]}, fence, true);
      }
      return outside && inside;
    }
  }
  return false;
}

std::size_t first_satisfying_prefix(Predicate p, std::span<const Point> polyline,
                                    const ConvexPolygon& fence) {
  if (polyline.empty()) return 0;
  switch (p) {
    case Predicate::Cover:
      return eval_predicate(p, polyline, fence) ? polyline.size() : 0;
    case Predicate::Overlap:
      if (fence.contains(polyline[0])) return 1;
      for (std::size_t i = 1; i < polyline.size(); ++i)
        if (segment_meets({polyline[i - 1], polyline[i]}, fence, false)) return i + 1;
      return 0;
    case Predicate::Cross: {
      bool outside = false, inside = false;
      for (std::size_t i = 0; i < polyline.size(); ++i) {
        outside = outside || point_outside(fence, polyline[i]);
        if (i > 0 && !inside) inside = segment_meets({polyline[i - 1], polyline[i]}, fence, true);
        if (inside && outside) return i + 1;
      }
      return 0;
    }
  }
  return 0;
}

ConvexPolygon convex_hull(std::span<const Point> input) {
  std::vector<Point> pts(input.begin(), input.end());
  for (const Point& q : pts)
    if (!is_finite(q)) fail(ErrorCode::InvalidArgument, "non-finite hull input");
  std::sort(pts.begin(), pts.end(),
            [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) fail(ErrorCode::DegenerateInput, "convex hull needs 3 distinct points");

  // Andrew's monotone chain; collinear points are popped.
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& q : pts) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], q) <= 0.0) --k;
    hull[k++] = q;
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = pts.size() - 1; i-- > 0;) {
    while (k >= lower && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) fail(ErrorCode::DegenerateInput, "all hull input points are collinear");
  return ConvexPolygon::from_ccw(std::move(hull));
}

ConvexPolygon accumulated_fence(std::span<const Point> itinerary, const FenceAt& fence_at) {
  if (itinerary.empty()) fail(ErrorCode::InvalidArgument, "accumulated fence of empty itinerary");
  std::vector<Point> corners;
  corners.reserve(itinerary.size() * 4);
  for (const Point& q : itinerary) {
    const ConvexPolygon f = fence_at(q);
    corners.insert(corners.end(), f.vertices().begin(), f.vertices().end());
  }
  return convex_hull(corners);
}

Point quantize(Point p) noexcept {
  return {std::round(p.x * 1e6) / 1e6, std::round(p.y * 1e6) / 1e6};
}

}  // namespace maodb::geometry
