// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "context.hpp"
#include "spatial_actors.hpp"

namespace maodb::moving {

struct QueryResult {
  trace::QueryStatus status = trace::QueryStatus::Ok;
  std::vector<trace::Hit> hits;  // ascending by key
  std::vector<std::uint64_t> versions;
  int attempts = 1;
};

struct SensingSpec {
  Predicate predicate = Predicate::Cross;
  ReactionFn reaction;
};

class MovingActor : public kernel::Actor {
 public:
  MovingActor(Context& ctx, std::uint64_t key) : ctx_(ctx), key_(key) {}

  void spawn(Point loc, Point fence_offset, kernel::Responder<std::int64_t> reply);
  void move(Point to, kernel::Responder<std::int64_t> reply);
  void find_actors(const Envelope& r, kernel::Responder<QueryResult> reply);
  void start_sensing(SensingSpec spec);
  void end_sensing();

  void on_update(const MoveUpdate& u);
  void on_batch(const EpochBatchPtr& batch);
  void flush(std::uint64_t epoch);

  // Inspection for tests.
  bool spawned() const noexcept { return spawned_; }
  Point location() const noexcept { return loc_; }
  const ConvexPolygon& fence() const noexcept { return fence_; }
  const std::set<CellId>& subscriptions() const noexcept { return subs_; }
  const Itinerary& buffer() const noexcept { return buffer_; }
  const std::optional<ConvexPolygon>& accumulated_fence() const noexcept { return acc_; }
  bool sensing() const noexcept { return sensing_.has_value(); }
  std::int64_t last_t_u() const noexcept { return last_t_u_; }
  std::uint64_t last_flushed() const noexcept { return last_flushed_; }

 private:
  struct PendingQuery;

  std::int64_t next_t_u();
  std::set<CellId> cells_of(const ConvexPolygon& f) const;
  void resubscribe(const std::set<CellId>& want);
  void subscribe_more(const std::set<CellId>& cells, bool replay);
  void finish_move(Point from, Point to, std::int64_t start, kernel::Responder<std::int64_t> reply);
  void issue_query(std::shared_ptr<PendingQuery> q);
  void complete_query(std::shared_ptr<PendingQuery> q);
  void evaluate_batch(const EpochBatch& batch);
  void fire(std::uint64_t mover, std::int64_t mover_t_u, std::optional<std::uint64_t> epoch);

  Context& ctx_;
  std::uint64_t key_;
  bool spawned_ = false;
  Point loc_;
  Point offset_;
  ConvexPolygon fence_;
  std::int64_t last_t_u_ = 0;
  std::optional<SensingSpec> sensing_;
  std::set<CellId> subs_;

  // Freshness: recent hop timestamps per mover, to drop copies relayed by several cells.
  std::unordered_map<std::uint64_t, std::deque<std::int64_t>> seen_;

  // Snapshot state.
  Itinerary buffer_;
  std::optional<ConvexPolygon> acc_;
  std::map<std::uint64_t, ConvexPolygon> frozen_;
  std::map<std::uint64_t, std::vector<EpochBatchPtr>> stash_;
  std::set<std::pair<std::uint64_t, std::uint64_t>> evaluated_;  // (epoch, mover)
  std::uint64_t last_flushed_ = 0;
};

}  // namespace maodb::moving
