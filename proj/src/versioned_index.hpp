// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "geometry.hpp"

namespace maodb::spatial {

using geometry::Envelope;
using geometry::Point;

struct IndexEntry {
  std::uint64_t key = 0;
  Point p;
  // Time the actor left this cell, or -1 while it still lives here. Departed entries linger until
  // purged so that a concurrent scan of the two cells involved cannot miss the actor.
  std::int64_t departed = -1;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct BatchOp {
  std::uint64_t key = 0;
  std::optional<Point> p;  // nullopt removes the entry
};

class VersionedIndex {
 public:
  void upsert(std::uint64_t key, Point p);
  bool remove(std::uint64_t key);
  void mark_departed(std::uint64_t key, std::int64_t at);
  // Drops departed entries that left strictly before `before`.
  std::size_t purge_departed(std::int64_t before);

  // Entries (live and departed) whose point lies in the closed window.
  std::vector<IndexEntry> lookup(const Envelope& window) const;
  std::optional<IndexEntry> find(std::uint64_t key) const;

  void apply_batch(std::span<const BatchOp> ops, std::uint64_t new_version);
  std::uint64_t version() const noexcept { return version_; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t live_size() const noexcept { return entries_.size() - departed_count_; }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& kv : entries_) f(kv.second);
  }

 private:
  using BPoint = boost::geometry::model::point<double, 2, boost::geometry::cs::cartesian>;
  using BBox = boost::geometry::model::box<BPoint>;
  using Value = std::pair<BPoint, std::uint64_t>;

  static BPoint to_b(Point p) { return BPoint(p.x, p.y); }

  boost::geometry::index::rtree<Value, boost::geometry::index::quadratic<16>> tree_;
  std::unordered_map<std::uint64_t, IndexEntry> entries_;
  std::deque<std::pair<std::int64_t, std::uint64_t>> departures_;
  std::size_t departed_count_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace maodb::spatial
