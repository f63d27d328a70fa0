// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "trace.hpp"

namespace maodb {

using geometry::ConvexPolygon;
using geometry::Envelope;
using geometry::Itinerary;
using geometry::Point;
using geometry::Predicate;
using grid::CellId;
using kernel::ActorId;
using kernel::ActorKind;

enum class Semantics : std::uint8_t { Freshness, Snapshot };

const char* to_string(Semantics s) noexcept;
Semantics semantics_from_string(std::string_view s);

enum class PlacementMode : std::uint8_t { Spatial, Random };

struct DbConfig {
  grid::GridConfig grid;
  Semantics semantics = Semantics::Freshness;
  PlacementMode placement = PlacementMode::Spatial;
  double fence_side = 1000.0;
  std::int64_t snapshot_interval_ns = 1'000'000'000;
  std::int64_t snapshot_jitter_ns = 0;
  int retained_epochs = 4;        // frozen accumulated fences a sensor keeps
  int monitor_retained_epochs = 2;  // epoch batches a monitor keeps for replay
  int query_retries = 5;
  std::int64_t departed_grace_ns = 1'000'000'000;
  std::size_t dedup_window = 8;  // recent t_u values remembered per mover
  kernel::KernelConfig kernel;
};

struct ReactionEvent {
  std::uint64_t sensor = 0;
  std::uint64_t mover = 0;
  std::int64_t mover_t_u = 0;
  std::int64_t trigger_time = 0;
  std::optional<std::uint64_t> epoch;
};

using ReactionFn = std::function<void(const ReactionEvent&)>;

// One Freshness hop as relayed by a monitor.
struct MoveUpdate {
  std::uint64_t mover = 0;
  Point from, to;
  std::int64_t t_u = 0;
};

// One epoch's itineraries that a snapshot-update actor forwards to a monitor.
struct EpochBatch {
  std::uint64_t epoch = 0;
  CellId origin = 0;
  struct Item {
    std::uint64_t mover = 0;
    Itinerary iti;
  };
  std::vector<Item> items;
};
using EpochBatchPtr = std::shared_ptr<const EpochBatch>;

struct Stats {
  std::atomic<std::uint64_t> query_retries{0};
  std::atomic<std::uint64_t> unstable_queries{0};
  std::atomic<std::uint64_t> duplicate_flushes{0};
  std::atomic<std::uint64_t> stale_rounds{0};
  std::atomic<std::uint64_t> version_gaps{0};
  std::atomic<std::uint64_t> snapshot_rounds{0};
  std::atomic<std::uint64_t> reactions{0};
  std::atomic<std::uint64_t> dropped_deliveries{0};
};

// Read-mostly state shared by every actor of one database.
struct Context {
  DbConfig cfg;
  grid::PlacementMap placement;
  kernel::Kernel* kernel = nullptr;
  trace::Trace* trace = nullptr;
  Stats stats;
  std::atomic<std::uint64_t> next_query{1};
  std::atomic<bool> snapshots_started{false};
  std::atomic<std::int64_t> snapshot_anchor{0};

  ConvexPolygon fence_at(Point loc, Point offset) const {
    return ConvexPolygon::square(loc + offset, cfg.fence_side);
  }
  void record(std::int64_t t, trace::EventKind k, ActorId a, trace::Payload p = {}) const {
    if (trace) trace->record(t, k, a, std::move(p));
  }
};

inline ActorId index_id(CellId c) { return {ActorKind::Index, c}; }
inline ActorId monitor_id(CellId c) { return {ActorKind::Monitor, c}; }
inline ActorId sua_id(CellId c) { return {ActorKind::SnapshotUpdate, c}; }
inline ActorId controller_id() { return {ActorKind::SnapshotController, 0}; }
inline ActorId moving_id(std::uint64_t key) { return {ActorKind::Moving, key}; }

}  // namespace maodb
