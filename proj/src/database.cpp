// SPDX-License-Identifier: Apache-2.0
#include "database.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

#include "snapshot.hpp"
#include "spatial_actors.hpp"

namespace maodb {

using kernel::Responder;
using moving::MovingActor;

const char* to_string(Semantics s) noexcept { return s == Semantics::Freshness ? "fresh" : "snap"; }

Semantics semantics_from_string(std::string_view s) {
  if (s == "fresh") return Semantics::Freshness;
  if (s == "snap") return Semantics::Snapshot;
  fail(ErrorCode::InvalidArgument, "unknown semantics '" + std::string(s) + "' (fresh|snap)");
}

namespace {
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

Database::Database(DbConfig cfg, std::span<const double> cell_weights) {
  cfg.grid.validate();
  if (!(cfg.fence_side > 0.0)) fail(ErrorCode::InvalidArgument, "fence side must be positive");
  if (cfg.semantics == Semantics::Snapshot && cfg.snapshot_interval_ns <= 0)
    fail(ErrorCode::InvalidArgument, "snapshot interval must be positive");
  if (cfg.retained_epochs < 1 || cfg.monitor_retained_epochs < 1 || cfg.query_retries < 0)
    fail(ErrorCode::InvalidArgument, "retention and retry counts out of range");
  ctx_.cfg = cfg;
  const int shards = cfg.kernel.num_shards;
  const auto cells = static_cast<std::size_t>(cfg.grid.cells());
  if (cfg.placement == PlacementMode::Spatial) {
    std::vector<double> w(cell_weights.begin(), cell_weights.end());
    if (w.empty()) w.assign(cells, 1.0);
    ctx_.placement = grid::build_placement(cfg.grid, shards, w);
  } else {
    ctx_.placement = grid::build_placement(cfg.grid, shards, std::vector<double>(cells, 1.0));
    for (std::size_t c = 0; c < cells; ++c)
      ctx_.placement.shard_of[c] = static_cast<int>(mix(c) % static_cast<std::uint64_t>(shards));
    ctx_.placement.regions.clear();
  }

  kernel_ = std::make_unique<kernel::Kernel>(cfg.kernel);
  ctx_.kernel = kernel_.get();
  ctx_.trace = &trace_;
  Context* ctx = &ctx_;
  kernel_->register_kind(ActorKind::Moving, [ctx](ActorId id) { return std::make_unique<MovingActor>(*ctx, id.key); });
  kernel_->register_kind(ActorKind::Index, [ctx](ActorId id) {
    return std::make_unique<spatial::IndexActor>(*ctx, static_cast<CellId>(id.key));
  });
  kernel_->register_kind(ActorKind::Monitor, [ctx](ActorId id) {
    return std::make_unique<spatial::MonitorActor>(*ctx, static_cast<CellId>(id.key));
  });
  kernel_->register_kind(ActorKind::SnapshotUpdate, [ctx](ActorId id) {
    return std::make_unique<snapshot::SnapshotUpdateActor>(*ctx, static_cast<CellId>(id.key));
  });
  kernel_->register_kind(ActorKind::SnapshotController,
                         [ctx](ActorId) { return std::make_unique<snapshot::ControllerActor>(*ctx); });
  kernel_->set_placement([this](ActorId id) {
    switch (id.kind) {
      case ActorKind::Moving: return shard_of_actor(id.key);
      case ActorKind::SnapshotController: return 0;
      default: return ctx_.placement.shard_of.at(static_cast<std::size_t>(id.key));
    }
  });

  const auto& g = cfg.grid;
  std::ostringstream grid_desc, skews;
  grid_desc.precision(17);
  grid_desc << g.origin.x << ' ' << g.origin.y << ' ' << g.width << ' ' << g.height << ' ' << g.nx << ' ' << g.ny;
  for (auto s : kernel_->skews()) skews << s << ' ';
  trace_.set_meta("semantics", to_string(cfg.semantics));
  trace_.set_meta("grid", grid_desc.str());
  trace_.set_meta("fence_side", std::to_string(cfg.fence_side));
  trace_.set_meta("shards", std::to_string(shards));
  trace_.set_meta("skew_ns", skews.str());
  trace_.set_meta("max_skew_ns", std::to_string(cfg.kernel.max_skew_ns));
  trace_.set_meta("snapshot_interval_ns", std::to_string(cfg.snapshot_interval_ns));
  kernel_->start();
}

Database::~Database() { shutdown(); }

void Database::shutdown() {
  stop_snapshots();
  if (kernel_) kernel_->shutdown();
}

int Database::shard_of_actor(std::uint64_t key) const {
  std::shared_lock lk(mu_);
  auto it = moving_shard_.find(key);
  return it == moving_shard_.end() ? 0 : it->second;
}

bool Database::spawned(std::uint64_t key) const {
  std::shared_lock lk(mu_);
  return moving_shard_.contains(key);
}

std::vector<std::uint64_t> Database::actors() const {
  std::shared_lock lk(mu_);
  std::vector<std::uint64_t> out;
  for (const auto& kv : moving_shard_) out.push_back(kv.first);
  std::sort(out.begin(), out.end());
  return out;
}

void Database::check_spawned(std::uint64_t key) const {
  if (!spawned(key)) fail(ErrorCode::InvalidArgument, "actor " + std::to_string(key) + " was never spawned");
}

void Database::check_inside(Point p) const {
  if (!geometry::is_finite(p) || !geometry::envelope_contains(ctx_.cfg.grid.space(), p))
    fail(ErrorCode::OutOfBounds, "location (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                     ") lies outside the space");
}

std::int64_t Database::spawn(std::uint64_t key, Point loc, Point fence_offset) {
  loc = geometry::quantize(loc);
  fence_offset = geometry::quantize(fence_offset);
  check_inside(loc);
  {
    std::unique_lock lk(mu_);
    if (moving_shard_.contains(key))
      fail(ErrorCode::InvalidArgument, "actor " + std::to_string(key) + " already spawned");
    const int shards = ctx_.cfg.kernel.num_shards;
    moving_shard_[key] = ctx_.cfg.placement == PlacementMode::Spatial
                             ? ctx_.placement.shard_of[grid::cell_of(ctx_.cfg.grid, loc)]
                             : static_cast<int>(mix(key ^ 0xabcdefull) % static_cast<std::uint64_t>(shards));
  }
  const std::int64_t t = kernel_->call<std::int64_t, MovingActor>(
      moving_id(key),
      [loc, fence_offset](MovingActor& a, Responder<std::int64_t> r) { a.spawn(loc, fence_offset, std::move(r)); });
  if (ctx_.snapshots_started) arm_timer(key);
  return t;
}

std::future<std::int64_t> Database::move_async(std::uint64_t key, Point to) {
  to = geometry::quantize(to);
  check_inside(to);
  check_spawned(key);
  return kernel_->ask_external<std::int64_t, MovingActor>(
      moving_id(key), [to](MovingActor& a, Responder<std::int64_t> r) { a.move(to, std::move(r)); });
}

std::int64_t Database::move(std::uint64_t key, Point to) {
  auto f = move_async(key, to);
  return f.get();
}

std::future<QueryResult> Database::find_actors_async(std::uint64_t key, const Envelope& range) {
  const Envelope r{geometry::quantize(range.min), geometry::quantize(range.max)};
  if (!(r.min.x <= r.max.x && r.min.y <= r.max.y) || !r.intersects(ctx_.cfg.grid.space()))
    fail(ErrorCode::OutOfBounds, "query range does not intersect the space");
  check_spawned(key);
  return kernel_->ask_external<QueryResult, MovingActor>(
      moving_id(key), [r](MovingActor& a, Responder<QueryResult> reply) { a.find_actors(r, std::move(reply)); });
}

QueryResult Database::find_actors(std::uint64_t key, const Envelope& r) {
  QueryResult res = find_actors_async(key, r).get();
  if (res.status == trace::QueryStatus::Unstable)
    fail(ErrorCode::SnapshotUnstable, "query versions kept changing across retries");
  return res;
}

void Database::start_sensing(std::uint64_t key, Predicate p, ReactionFn fn) {
  check_spawned(key);
  kernel_->call<bool, MovingActor>(moving_id(key), [p, fn = std::move(fn)](MovingActor& a, Responder<bool> r) mutable {
    a.start_sensing({p, std::move(fn)});
    r.reply(true);
  });
}

void Database::end_sensing(std::uint64_t key) {
  check_spawned(key);
  kernel_->call<bool, MovingActor>(moving_id(key), [](MovingActor& a, Responder<bool> r) {
    a.end_sensing();
    r.reply(true);
  });
}

void Database::arm_timer(std::uint64_t key) {
  auto h = kernel_->register_timer(moving_id(key), ctx_.cfg.snapshot_interval_ns, ctx_.cfg.snapshot_jitter_ns,
                                   ctx_.snapshot_anchor.load(),
                                   [](kernel::Actor& a, std::uint64_t tick) { static_cast<MovingActor&>(a).flush(tick); });
  std::unique_lock lk(mu_);
  timers_.push_back(std::move(h));
}

void Database::start_snapshots() {
  if (ctx_.cfg.semantics != Semantics::Snapshot) return;
  if (ctx_.snapshots_started.exchange(true)) return;
  // Residency registrations must land before the first epoch can close.
  kernel_->wait_idle(30'000'000'000);
  const std::int64_t anchor = kernel_->now();
  ctx_.snapshot_anchor = anchor;
  trace_.set_meta("snapshot_start_ns", std::to_string(anchor));
  for (std::uint64_t key : actors()) arm_timer(key);
}

void Database::stop_snapshots() {
  std::unique_lock lk(mu_);
  if (kernel_)
    for (auto& t : timers_) kernel_->cancel_timer(t);
  timers_.clear();
}

bool Database::quiesce(std::int64_t timeout_ns) { return kernel_->wait_idle(timeout_ns); }

}  // namespace maodb
