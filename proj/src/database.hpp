// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <future>
#include <memory>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "context.hpp"
#include "moving_actor.hpp"

namespace maodb {

using moving::QueryResult;

// Wires the kernel, the per-cell actors and the moving actors of one database instance.
class Database {
 public:
  // `cell_weights` drives spatial shard placement; empty means uniform.
  explicit Database(DbConfig cfg, std::span<const double> cell_weights = {});
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;

  const DbConfig& config() const noexcept { return ctx_.cfg; }
  Context& context() noexcept { return ctx_; }
  kernel::Kernel& kernel() noexcept { return *kernel_; }
  trace::Trace& trace() noexcept { return trace_; }
  const grid::PlacementMap& placement() const noexcept { return ctx_.placement; }

  std::int64_t spawn(std::uint64_t key, Point loc, Point fence_offset = {});
  std::int64_t move(std::uint64_t key, Point to);
  std::future<std::int64_t> move_async(std::uint64_t key, Point to);
  QueryResult find_actors(std::uint64_t key, const Envelope& r);
  std::future<QueryResult> find_actors_async(std::uint64_t key, const Envelope& r);
  void start_sensing(std::uint64_t key, Predicate p, ReactionFn fn);
  void end_sensing(std::uint64_t key);

  // Snapshot semantics: arms every moving actor's epoch timer.
  void start_snapshots();
  void stop_snapshots();

  bool quiesce(std::int64_t timeout_ns = 30'000'000'000);
  void shutdown();

  bool spawned(std::uint64_t key) const;
  std::vector<std::uint64_t> actors() const;
  int shard_of_actor(std::uint64_t key) const;

 private:
  void check_spawned(std::uint64_t key) const;
  void check_inside(Point p) const;
  void arm_timer(std::uint64_t key);

  Context ctx_;
  trace::Trace trace_;
  std::unique_ptr<kernel::Kernel> kernel_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::uint64_t, int> moving_shard_;
  std::vector<kernel::TimerHandle> timers_;
};

}  // namespace maodb
