// SPDX-License-Identifier: Apache-2.0
#include "moving_actor.hpp"

#include <algorithm>
#include <map>

#include "snapshot.hpp"

namespace maodb::moving {

using kernel::Responder;
using spatial::IndexActor;
using spatial::LookupReply;
using trace::EventKind;

struct MovingActor::PendingQuery {
  std::uint64_t qid = 0;
  Envelope range;
  std::int64_t t_s = 0;
  std::vector<CellId> cells;
  int attempt = 0;
  std::size_t pending = 0;
  std::vector<std::uint64_t> versions;
  std::vector<spatial::IndexEntry> entries;
  Responder<QueryResult> reply;
};

std::int64_t MovingActor::next_t_u() {
  last_t_u_ = std::max(kernel().now(), last_t_u_ + 1);
  return last_t_u_;
}

std::set<CellId> MovingActor::cells_of(const ConvexPolygon& f) const {
  const Envelope b = f.bounds();
  if (!b.intersects(ctx_.cfg.grid.space())) return {};
  const auto v = grid::cells_of_envelope(ctx_.cfg.grid, b);
  return {v.begin(), v.end()};
}

void MovingActor::subscribe_more(const std::set<CellId>& cells, bool replay) {
  for (CellId c : cells) {
    if (!subs_.insert(c).second) continue;
    kernel().subscribe(c, id());
    if (replay) {
      const ActorId me = id();
      kernel().tell_as<spatial::MonitorActor>(monitor_id(c), [me](spatial::MonitorActor& m) { m.replay(me); });
    }
  }
}

void MovingActor::resubscribe(const std::set<CellId>& want) {
  // New cells first so the union never shrinks below either fence while switching.
  for (CellId c : want)
    if (subs_.insert(c).second) kernel().subscribe(c, id());
  for (auto it = subs_.begin(); it != subs_.end();) {
    if (!want.contains(*it)) {
      kernel().unsubscribe(*it, id());
      it = subs_.erase(it);
    } else {
      ++it;
    }
  }
}

void MovingActor::spawn(Point loc, Point fence_offset, Responder<std::int64_t> reply) {
  loc_ = loc;
  offset_ = fence_offset;
  fence_ = ctx_.fence_at(loc_, offset_);
  spawned_ = true;
  const CellId cell = grid::cell_of(ctx_.cfg.grid, loc_);
  auto done = [this, loc, fence_offset](Responder<std::int64_t> r) {
    const std::int64_t t = next_t_u();
    ctx_.record(t, EventKind::Spawn, id(), trace::SpawnP{loc, ctx_.cfg.fence_side, fence_offset});
    r.reply(t);
  };
  if (ctx_.cfg.semantics == Semantics::Snapshot) {
    // Actors present before the first epoch are residents from the start; later ones join via
    // their first flush. Decided before replying, since the reply may let the caller start snapshots.
    if (!ctx_.snapshots_started) {
      const std::uint64_t key = key_;
      kernel().tell_as<snapshot::SnapshotUpdateActor>(
          sua_id(cell), [key](snapshot::SnapshotUpdateActor& s) { s.register_resident(key); });
    }
    buffer_ = {};
    done(std::move(reply));
    buffer_.append(loc_, last_t_u_);
    return;
  }
  const std::uint64_t key = key_;
  kernel().ask<bool, IndexActor, MovingActor>(
      index_id(cell),
      [key, loc](IndexActor& ia, Responder<bool> r) {
        ia.upsert(key, loc);
        r.reply(true);
      },
      [done, reply = std::move(reply)](MovingActor&, bool) mutable { done(std::move(reply)); });
}

void MovingActor::move(Point to, Responder<std::int64_t> reply) {
  const std::int64_t start = kernel().now();
  const Point from = loc_;
  loc_ = to;
  fence_ = ctx_.fence_at(loc_, offset_);

  if (ctx_.cfg.semantics == Semantics::Snapshot) {
    const std::int64_t t_u = next_t_u();
    buffer_.append(to, t_u);
    ctx_.record(t_u, EventKind::MoveDone, id(), trace::MoveP{start, from, to});
    if (sensing_) {
      std::vector<Point> pts(acc_->vertices().begin(), acc_->vertices().end());
      pts.insert(pts.end(), fence_.vertices().begin(), fence_.vertices().end());
      acc_ = geometry::convex_hull(pts);
      subscribe_more(cells_of(*acc_), true);
    }
    reply.reply(t_u);
    return;
  }

  if (sensing_) resubscribe(cells_of(fence_));
  const CellId c_old = grid::cell_of(ctx_.cfg.grid, from);
  const CellId c_new = grid::cell_of(ctx_.cfg.grid, to);
  const std::uint64_t key = key_;
  // Insert into the new cell before leaving the old one: the actor is briefly in both, never in neither.
  kernel().ask<bool, IndexActor, MovingActor>(
      index_id(c_new),
      [key, to](IndexActor& ia, Responder<bool> r) {
        ia.upsert(key, to);
        r.reply(true);
      },
      [=, reply = std::move(reply)](MovingActor& self, bool) mutable {
        if (c_old == c_new) {
          self.finish_move(from, to, start, std::move(reply));
          return;
        }
        self.kernel().ask<bool, IndexActor, MovingActor>(
            index_id(c_old),
            [key](IndexActor& ia, Responder<bool> r) {
              ia.depart(key);
              r.reply(true);
            },
            [=, reply = std::move(reply)](MovingActor& me, bool) mutable {
              me.finish_move(from, to, start, std::move(reply));
            });
      });
}

void MovingActor::finish_move(Point from, Point to, std::int64_t start, Responder<std::int64_t> reply) {
  const std::int64_t t_u = next_t_u();
  ctx_.record(t_u, EventKind::MoveDone, id(), trace::MoveP{start, from, to});
  const MoveUpdate u{key_, from, to, t_u};
  for (CellId c : grid::cells_of_segment(ctx_.cfg.grid, {from, to}))
    kernel().tell_as<spatial::MonitorActor>(monitor_id(c), [u](spatial::MonitorActor& m) { m.relay(u); });
  reply.reply(t_u);
}

void MovingActor::find_actors(const Envelope& r, Responder<QueryResult> reply) {
  auto q = std::make_shared<PendingQuery>();
  q->qid = ctx_.next_query++;
  q->range = r;
  q->t_s = kernel().now();
  q->reply = std::move(reply);
  ctx_.record(q->t_s, EventKind::QueryStart, id(), trace::QueryStartP{q->qid, r});
  q->cells = grid::cells_of_envelope(ctx_.cfg.grid, r);
  issue_query(std::move(q));
}

void MovingActor::issue_query(std::shared_ptr<PendingQuery> q) {
  q->pending = q->cells.size();
  q->versions.assign(q->cells.size(), 0);
  q->entries.clear();
  for (std::size_t i = 0; i < q->cells.size(); ++i) {
    const CellId c = q->cells[i];
    const Envelope window = geometry::intersection(q->range, ctx_.cfg.grid.cell_extent(c));
    kernel().ask<LookupReply, IndexActor, MovingActor>(
        index_id(c),
        [window](IndexActor& ia, Responder<LookupReply> rr) { rr.reply(ia.lookup(window)); },
        [q, i](MovingActor& self, LookupReply lr) {
          q->versions[i] = lr.version;
          q->entries.insert(q->entries.end(), lr.entries.begin(), lr.entries.end());
          if (--q->pending == 0) self.complete_query(q);
        });
  }
}

void MovingActor::complete_query(std::shared_ptr<PendingQuery> q) {
  QueryResult res;
  res.versions = q->versions;
  res.attempts = q->attempt + 1;
  const bool uniform = std::adjacent_find(q->versions.begin(), q->versions.end(), std::not_equal_to<>()) ==
                       q->versions.end();
  if (ctx_.cfg.semantics == Semantics::Snapshot && !uniform) {
    if (q->attempt < ctx_.cfg.query_retries) {
      q->attempt++;
      ctx_.stats.query_retries++;
      kernel().after(ctx_.cfg.snapshot_interval_ns / 10,
                     [q](kernel::Actor& a) { static_cast<MovingActor&>(a).issue_query(q); });
      return;
    }
    res.status = trace::QueryStatus::Unstable;
    ctx_.stats.unstable_queries++;
  } else {
    // Entries that left their cell before the query began are stale; a live entry beats a departed one.
    std::map<std::uint64_t, const spatial::IndexEntry*> best;
    for (const auto& e : q->entries) {
      if (e.departed >= 0 && e.departed <= q->t_s) continue;
      auto [it, fresh] = best.emplace(e.key, &e);
      if (!fresh && it->second->departed >= 0 && (e.departed < 0 || e.departed > it->second->departed))
        it->second = &e;
    }
    res.hits.reserve(best.size());
    for (const auto& [key, e] : best) res.hits.push_back({key, e->p});
  }
  ctx_.record(kernel().now(), EventKind::QueryEnd, id(),
              trace::QueryEndP{q->qid, res.status, res.versions, res.hits});
  q->reply.reply(std::move(res));
}

void MovingActor::start_sensing(SensingSpec spec) {
  const bool was = sensing_.has_value();
  const Predicate p = spec.predicate;
  sensing_ = std::move(spec);
  if (ctx_.cfg.semantics == Semantics::Freshness) {
    resubscribe(cells_of(fence_));
  } else {
    if (!was) acc_ = fence_;
    subscribe_more(cells_of(*acc_), true);
  }
  // Recorded once the subscriptions are in place.
  ctx_.record(kernel().now(), EventKind::SensingOn, id(), trace::SensingP{p});
}

void MovingActor::end_sensing() {
  if (!sensing_) return;
  ctx_.record(kernel().now(), EventKind::SensingOff, id());
  for (CellId c : subs_) kernel().unsubscribe(c, id());
  subs_.clear();
  sensing_.reset();
  acc_.reset();
  frozen_.clear();
  stash_.clear();
  evaluated_.clear();
  seen_.clear();
}

void MovingActor::fire(std::uint64_t mover, std::int64_t mover_t_u, std::optional<std::uint64_t> epoch) {
  const std::int64_t trigger = kernel().now();
  ctx_.record(trigger, EventKind::ReactionFired, id(), trace::ReactionP{mover, mover_t_u, last_t_u_, epoch});
  ctx_.stats.reactions++;
  if (sensing_->reaction) sensing_->reaction(ReactionEvent{key_, mover, mover_t_u, trigger, epoch});
}

void MovingActor::on_update(const MoveUpdate& u) {
  if (u.mover == key_ || !sensing_) return;
  auto& ring = seen_[u.mover];
  if (std::find(ring.begin(), ring.end(), u.t_u) != ring.end()) return;
  ring.push_back(u.t_u);
  if (ring.size() > ctx_.cfg.dedup_window) ring.pop_front();
  if (geometry::eval_predicate(sensing_->predicate, geometry::Segment{u.from, u.to}, fence_)) {
    fire(u.mover, u.t_u, std::nullopt);
  } else if (last_t_u_ > u.t_u) {
    // The fence moved after the hop completed; record which fence was used.
    ctx_.record(kernel().now(), EventKind::ReactionSkipped, id(),
                trace::ReactionP{u.mover, u.t_u, last_t_u_, std::nullopt});
  }
}

void MovingActor::on_batch(const EpochBatchPtr& batch) {
  if (!sensing_) return;
  if (frozen_.contains(batch->epoch))
    evaluate_batch(*batch);
  else if (batch->epoch > last_flushed_)
    stash_[batch->epoch].push_back(batch);
  else
    ctx_.stats.dropped_deliveries++;
}

void MovingActor::evaluate_batch(const EpochBatch& batch) {
  const ConvexPolygon& acc = frozen_.at(batch.epoch);
  for (const auto& item : batch.items) {
    if (item.mover == key_) continue;
    if (!evaluated_.emplace(batch.epoch, item.mover).second) continue;
    const std::size_t k = geometry::first_satisfying_prefix(sensing_->predicate, item.iti.points, acc);
    if (k > 0) fire(item.mover, item.iti.timestamps[k - 1], batch.epoch);
  }
}

void MovingActor::flush(std::uint64_t epoch) {
  if (!spawned_ || epoch <= last_flushed_) return;
  Itinerary iti = std::move(buffer_);
  buffer_ = {};
  buffer_.append(iti.points.back(), iti.timestamps.back());
  ctx_.record(next_t_u(), EventKind::FlushSent, id(),
              trace::FlushP{epoch, iti.size(), iti.points.front(), iti.points.back()});
  const CellId home = grid::cell_of(ctx_.cfg.grid, iti.points.front());
  const std::uint64_t key = key_;
  kernel().tell_as<snapshot::SnapshotUpdateActor>(
      sua_id(home), [key, epoch, iti = std::move(iti)](snapshot::SnapshotUpdateActor& s) mutable {
        s.ingest(key, epoch, std::move(iti));
      });
  last_flushed_ = epoch;
  if (!sensing_) return;

  frozen_[epoch] = *acc_;
  acc_ = fence_;
  const std::uint64_t keep = static_cast<std::uint64_t>(ctx_.cfg.retained_epochs);
  const std::uint64_t oldest = epoch >= keep ? epoch - keep + 1 : 0;
  frozen_.erase(frozen_.begin(), frozen_.lower_bound(oldest));
  evaluated_.erase(evaluated_.begin(), evaluated_.lower_bound({oldest, 0}));
  std::set<CellId> want = cells_of(*acc_);
  for (const auto& [n, f] : frozen_) {
    auto c = cells_of(f);
    want.insert(c.begin(), c.end());
  }
  resubscribe(want);
  if (auto it = stash_.find(epoch); it != stash_.end()) {
    for (const auto& b : it->second) evaluate_batch(*b);
  }
  stash_.erase(stash_.begin(), stash_.upper_bound(epoch));
}

}  // namespace maodb::moving
