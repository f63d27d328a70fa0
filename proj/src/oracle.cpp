// SPDX-License-Identifier: Apache-2.0
#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <limits>
#include <set>
#include <sstream>

#include "error.hpp"

namespace maodb::oracle {

using geometry::Envelope;
using geometry::Segment;
using trace::EventKind;
using trace::ReactionP;

namespace {
constexpr std::int64_t kNoStart = std::numeric_limits<std::int64_t>::min();
constexpr std::size_t kMaxWitnesses = 20;

std::string pt(Point p) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << '(' << p.x << ", " << p.y << ')';
  return os.str();
}

bool same(Point a, Point b) { return a.x == b.x && a.y == b.y; }

Envelope seg_bounds(Point a, Point b) {
  return {{std::min(a.x, b.x), std::min(a.y, b.y)}, {std::max(a.x, b.x), std::max(a.y, b.y)}};
}

[[noreturn]] void incomplete(const std::string& why) { fail(ErrorCode::IncompleteTrace, why); }

// Last sensing event strictly before t, if any.
const TraceView::SensingEv* sensing_before(const TraceView::Actor& a, std::int64_t t) {
  const TraceView::SensingEv* last = nullptr;
  for (const auto& s : a.sensing) {
    if (s.t >= t) break;
    last = &s;
  }
  return last;
}

bool sensing_change_after(const TraceView::Actor& a, std::int64_t t) {
  return std::any_of(a.sensing.begin(), a.sensing.end(), [t](const auto& s) { return s.t >= t; });
}

}  // namespace

const char* to_string(Status s) noexcept {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::Ambiguous: return "ambiguous";
  }
  return "?";
}

void Tally::fail(std::string why) {
  ++failed;
  if (witnesses.size() < kMaxWitnesses) witnesses.push_back(std::move(why));
}

Verdict Tally::verdict() const {
  if (failed) return {Status::Fail, witnesses.empty() ? "unspecified failure" : witnesses.front()};
  return {Status::Pass, {}};
}

Tally& Tally::operator+=(const Tally& o) {
  checked += o.checked;
  ambiguous += o.ambiguous;
  failed += o.failed;
  for (const auto& w : o.witnesses)
    if (witnesses.size() < kMaxWitnesses) witnesses.push_back(w);
  return *this;
}

std::ptrdiff_t TraceView::Actor::at(std::int64_t time) const {
  auto it = std::upper_bound(locs.begin(), locs.end(), time, [](std::int64_t t, const Loc& l) { return t < l.t; });
  return (it - locs.begin()) - 1;
}

std::ptrdiff_t TraceView::Actor::before(std::int64_t time) const {
  auto it = std::lower_bound(locs.begin(), locs.end(), time, [](const Loc& l, std::int64_t t) { return l.t < t; });
  return (it - locs.begin()) - 1;
}

ConvexPolygon TraceView::Actor::fence(std::size_t i) const { return ConvexPolygon::square(locs.at(i).p + offset, side); }

const TraceView::Flush* TraceView::Actor::flush(std::uint64_t epoch) const {
  auto it = std::lower_bound(flushes.begin(), flushes.end(), epoch,
                             [](const Flush& f, std::uint64_t e) { return f.epoch < e; });
  return it != flushes.end() && it->epoch == epoch ? &*it : nullptr;
}

TraceView::TraceView(std::map<std::string, std::string> meta, std::vector<Event> events)
    : meta_(std::move(meta)), events_(std::move(events)) {
  std::stable_sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
  if (auto it = meta_.find("snapshot_start_ns"); it != meta_.end()) snapshot_start_ = std::stoll(it->second);
  for (const Event& e : events_) {
    const std::uint64_t key = e.actor.key;
    switch (e.kind) {
      case EventKind::Spawn: {
        const auto& p = e.as<trace::SpawnP>();
        Actor& a = actors_[key];
        if (a.spawned) incomplete("actor " + std::to_string(key) + " spawned twice");
        a.spawned = true;
        a.offset = p.fence_offset;
        a.side = p.fence_side;
        a.locs.push_back({e.time, kNoStart, p.loc});
        break;
      }
      case EventKind::MoveDone: {
        Actor& a = actors_[key];
        if (!a.spawned) incomplete("move of unspawned actor " + std::to_string(key));
        if (e.time <= a.locs.back().t) incomplete("non-increasing t_u for actor " + std::to_string(key));
        a.locs.push_back({e.time, e.as<trace::MoveP>().start, e.as<trace::MoveP>().to});
        break;
      }
      case EventKind::QueryStart: {
        const auto& p = e.as<trace::QueryStartP>();
        queries_[p.qid] = Query{p.qid, key, e.time, p.range, false, 0, {}};
        break;
      }
      case EventKind::QueryEnd: {
        const auto& p = e.as<trace::QueryEndP>();
        auto it = queries_.find(p.qid);
        if (it == queries_.end()) incomplete("query " + std::to_string(p.qid) + " ended without starting");
        it->second.ended = true;
        it->second.t_e = e.time;
        it->second.end = p;
        break;
      }
      case EventKind::SensingOn:
        actors_[key].sensing.push_back({e.time, true, e.as<trace::SensingP>().predicate});
        break;
      case EventKind::SensingOff: actors_[key].sensing.push_back({e.time, false, Predicate::Cross}); break;
      case EventKind::FlushSent: {
        const auto& p = e.as<trace::FlushP>();
        auto& fl = actors_[key].flushes;
        if (!fl.empty() && fl.back().epoch >= p.epoch) incomplete("flush epochs out of order for " + std::to_string(key));
        fl.push_back({p.epoch, e.time, p.count, p.first, p.last});
        break;
      }
      case EventKind::SnapshotApplied:
        if (e.actor.kind == kernel::ActorKind::SnapshotController) {
          rounds_[e.as<trace::AppliedP>().epoch] = e.time;
          census_[e.as<trace::AppliedP>().epoch] = e.as<trace::AppliedP>().residents;
        }
        break;
      case EventKind::Relayed: {
        const auto& p = e.as<trace::RelayP>();
        auto& slot = relays_[{p.mover, p.t_u}];
        slot = std::max(slot, e.time);
        break;
      }
      case EventKind::ReactionFired:
      case EventKind::ReactionSkipped: break;
    }
  }
}

const TraceView::Actor* TraceView::actor(std::uint64_t key) const {
  auto it = actors_.find(key);
  return it == actors_.end() ? nullptr : &it->second;
}

std::optional<std::int64_t> TraceView::relay_max(std::uint64_t mover, std::int64_t t_u) const {
  auto it = relays_.find({mover, t_u});
  if (it == relays_.end()) return std::nullopt;
  return it->second;
}

bool TraceView::is_joiner(std::uint64_t key) const {
  const Actor* a = actor(key);
  return a && a->spawned && meta_.contains("snapshot_start_ns") && a->locs.front().t > snapshot_start_;
}

// ---------------------------------------------------------------------------------------------
// Freshness queries: one decision per (query, actor).

namespace {
// Last location with t <= time, searching forward from a previous answer when time has not gone back.
std::ptrdiff_t at_from(const TraceView::Actor& a, std::int64_t time, std::ptrdiff_t& hint) {
  const auto n = static_cast<std::ptrdiff_t>(a.locs.size());
  if (hint < 0 || hint >= n || a.locs[static_cast<std::size_t>(hint)].t > time) return hint = a.at(time);
  while (hint + 1 < n && a.locs[static_cast<std::size_t>(hint + 1)].t <= time) ++hint;
  return hint;
}

Verdict fresh_query(const TraceView& v, std::uint64_t qid, Tally* tally, std::vector<std::ptrdiff_t>* hints) {
  Tally local;
  Tally& t = tally ? *tally : local;
  const std::uint64_t failed_before = t.failed;
  std::string first_witness;
  auto fail = [&](std::string why) {
    if (first_witness.empty()) first_witness = why;
    t.fail(std::move(why));
  };

  auto qit = v.queries().find(qid);
  if (qit == v.queries().end()) incomplete("unknown query " + std::to_string(qid));
  const auto& q = qit->second;
  if (!q.ended) incomplete("query " + std::to_string(qid) + " never ended");
  const std::string tag = "query " + std::to_string(qid) + ": ";
  if (q.end.status != trace::QueryStatus::Ok) {
    fail(tag + "did not complete normally");
    return {Status::Fail, first_witness};
  }

  std::map<std::uint64_t, Point> got;
  for (const auto& h : q.end.results)
    if (!got.emplace(h.key, h.p).second) fail(tag + "actor " + std::to_string(h.key) + " returned twice");
  for (const auto& [key, p] : got)
    if (!v.actor(key) || !v.actor(key)->spawned) fail(tag + "returned unknown actor " + std::to_string(key));

  auto it = got.begin();
  std::size_t slot = 0;
  for (const auto& [key, a] : v.actors()) {
    const std::size_t my = slot++;
    if (!a.spawned) continue;
    while (it != got.end() && it->first < key) ++it;
    const bool returned = it != got.end() && it->first == key;
    const std::ptrdiff_t base = hints ? at_from(a, q.t_s, (*hints)[my]) : a.at(q.t_s);
    const bool maybe_absent = base < 0;
    // Locations the index could hold during [t_s, t_e]: the one standing at t_s plus every move
    // whose processing began before t_e.
    const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(base, 0));
    std::size_t hi = lo;
    while (hi < a.locs.size() &&
           !(static_cast<std::ptrdiff_t>(hi) > base && a.locs[hi].start != kNoStart && a.locs[hi].start >= q.t_e))
      ++hi;
    std::size_t inside = 0;
    for (std::size_t i = lo; i < hi; ++i) inside += geometry::envelope_contains(q.range, a.locs[i].p);
    const std::size_t span = hi - lo;
    const bool must_in = !maybe_absent && span > 0 && inside == span;
    const bool must_out = inside == 0;
    ++t.checked;
    if (returned) {
      bool held = false;
      for (std::size_t i = lo; i < hi && !held; ++i) held = same(a.locs[i].p, it->second);
      if (!held)
        fail(tag + "actor " + std::to_string(key) + " returned at " + pt(it->second) +
             ", not a location it held during the query");
      else if (must_out)
        fail(tag + "actor " + std::to_string(key) + " returned at " + pt(it->second) +
             " but never inside the range during the query");
    } else if (must_in) {
      fail(tag + "actor " + std::to_string(key) + " at " + pt(a.locs[lo].p) + " missing from the result");
    }
    if (!must_in && !must_out) ++t.ambiguous;
  }
  if (t.failed > failed_before) return {Status::Fail, first_witness};
  return {Status::Pass, {}};
}
}  // namespace

Verdict check_fresh_query(const TraceView& v, std::uint64_t qid, Tally* tally) {
  return fresh_query(v, qid, tally, nullptr);
}

Tally check_fresh_queries(const TraceView& v) {
  Tally t;
  std::vector<std::ptrdiff_t> hints(v.actors().size(), -1);
  for (const auto& [qid, q] : v.queries()) fresh_query(v, qid, &t, &hints);
  return t;
}

// ---------------------------------------------------------------------------------------------
// Freshness reactions.

namespace {
using PairKey = std::tuple<std::uint64_t, std::uint64_t, std::int64_t>;  // sensor, mover, t_u

struct HopRef {
  const TraceView::Actor* mover;
  std::size_t idx;  // locs[idx] is the hop's destination
};

std::optional<HopRef> find_hop(const TraceView& v, std::uint64_t mover, std::int64_t t_u) {
  const auto* a = v.actor(mover);
  if (!a) return std::nullopt;
  const std::ptrdiff_t i = a->at(t_u);
  if (i < 1 || a->locs[static_cast<std::size_t>(i)].t != t_u) return std::nullopt;
  return HopRef{a, static_cast<std::size_t>(i)};
}

// A pair is decided when the sensor held the same fence and sensing spec from the hop's completion
// until every relay of the hop had read the subscriber sets.
bool fresh_pair_decided(const TraceView& v, const TraceView::Actor& s, std::size_t f0, std::uint64_t mover,
                        std::int64_t t_u) {
  if (sensing_change_after(s, t_u)) return false;
  const auto rmax = v.relay_max(mover, t_u);
  if (!rmax) return false;
  return f0 + 1 >= s.locs.size() || s.locs[f0 + 1].start > *rmax;
}
}  // namespace

Tally check_fresh_reactions(const TraceView& v) {
  Tally t;
  std::map<PairKey, std::vector<const Event*>> fired, skipped;
  for (const Event& e : v.events()) {
    if (e.kind != EventKind::ReactionFired && e.kind != EventKind::ReactionSkipped) continue;
    const auto& r = e.as<ReactionP>();
    (e.kind == EventKind::ReactionFired ? fired : skipped)[{e.actor.key, r.mover, r.mover_t_u}].push_back(&e);
  }

  auto check_record = [&](const Event& e, bool did_fire) {
    const auto& r = e.as<ReactionP>();
    const std::uint64_t sk = e.actor.key;
    const std::string tag = std::string(did_fire ? "reaction" : "skip") + " at sensor " + std::to_string(sk) +
                            " for mover " + std::to_string(r.mover) + " t_u " + std::to_string(r.mover_t_u) + ": ";
    ++t.checked;
    if (r.mover == sk) return t.fail(tag + "sensor reacted to itself");
    const auto hop = find_hop(v, r.mover, r.mover_t_u);
    if (!hop) return t.fail(tag + "no such move");
    const auto* s = v.actor(sk);
    if (!s || !s->spawned) return t.fail(tag + "unknown sensor");
    const std::ptrdiff_t used = s->at(r.fence_t_u);
    if (used < 0 || s->locs[static_cast<std::size_t>(used)].t != r.fence_t_u)
      return t.fail(tag + "evaluated fence matches no sensor location");
    const std::ptrdiff_t f0 = s->at(r.mover_t_u);
    if (used < f0) return t.fail(tag + "evaluated a fence older than the one held at t_u");
    const auto* sense = sensing_before(*s, e.time);
    if (!sense || !sense->on) {
      if (did_fire) return t.fail(tag + "fired while not sensing");
      return;
    }
    const Segment seg{hop->mover->locs[hop->idx - 1].p, hop->mover->locs[hop->idx].p};
    const bool holds = geometry::eval_predicate(sense->predicate, seg, s->fence(static_cast<std::size_t>(used)));
    if (did_fire && !holds) t.fail(tag + "predicate does not hold against the evaluated fence");
    if (!did_fire && holds) t.fail(tag + "predicate holds against the evaluated fence but nothing fired");
  };
  for (const auto& [k, evs] : fired) {
    if (evs.size() > 1) t.fail("sensor " + std::to_string(std::get<0>(k)) + " fired " + std::to_string(evs.size()) +
                               " times for one move of " + std::to_string(std::get<1>(k)));
    for (const Event* e : evs) check_record(*e, true);
  }
  for (const auto& [k, evs] : skipped)
    for (const Event* e : evs) {
      if (e->as<ReactionP>().fence_t_u <= std::get<2>(k)) t.fail("skip recorded without a newer fence");
      check_record(*e, false);
    }

  // Sweep hops in t_u order against a bucket grid of each sensor's fence as of that instant.
  struct Sensor {
    std::uint64_t key;
    const TraceView::Actor* a;
    std::vector<std::int64_t> cells;
  };
  std::vector<Sensor> sensors;
  double cell = 0;
  for (const auto& [key, a] : v.actors())
    if (!a.sensing.empty() && a.spawned) {
      sensors.push_back({key, &a, {}});
      cell = std::max(cell, a.side);
    }
  if (sensors.empty()) return t;
  if (cell <= 0) cell = 1;

  struct Change {
    std::int64_t t;
    std::uint32_t sensor;
    std::uint32_t loc;
  };
  struct Hop {
    std::int64_t t_u;
    std::uint64_t mover;
    const TraceView::Actor* m;
    std::uint32_t j;
  };
  std::vector<Change> changes;
  for (std::uint32_t i = 0; i < sensors.size(); ++i)
    for (std::uint32_t k = 0; k < sensors[i].a->locs.size(); ++k) changes.push_back({sensors[i].a->locs[k].t, i, k});
  std::vector<Hop> hops;
  for (const auto& [mk, m] : v.actors())
    for (std::uint32_t j = 1; j < m.locs.size(); ++j) hops.push_back({m.locs[j].t, mk, &m, j});
  std::stable_sort(changes.begin(), changes.end(), [](const Change& x, const Change& y) { return x.t < y.t; });
  std::stable_sort(hops.begin(), hops.end(), [](const Hop& x, const Hop& y) { return x.t_u < y.t_u; });

  auto cell_key = [](std::int64_t cx, std::int64_t cy) { return cx * 0x100000 + cy; };
  auto span = [&](const Envelope& e, auto&& fn) {
    const auto x0 = static_cast<std::int64_t>(std::floor(e.min.x / cell)), x1 = static_cast<std::int64_t>(std::floor(e.max.x / cell));
    const auto y0 = static_cast<std::int64_t>(std::floor(e.min.y / cell)), y1 = static_cast<std::int64_t>(std::floor(e.max.y / cell));
    for (auto cx = x0; cx <= x1; ++cx)
      for (auto cy = y0; cy <= y1; ++cy) fn(cell_key(cx, cy));
  };
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets;
  std::vector<std::ptrdiff_t> current(sensors.size(), -1);
  std::vector<std::size_t> stamp(sensors.size(), 0);

  std::size_t ci = 0;
  for (std::size_t hi = 0; hi < hops.size(); ++hi) {
    const Hop& h = hops[hi];
    for (; ci < changes.size() && changes[ci].t <= h.t_u; ++ci) {
      Sensor& sr = sensors[changes[ci].sensor];
      for (std::int64_t k : sr.cells) std::erase(buckets[k], changes[ci].sensor);
      sr.cells.clear();
      current[changes[ci].sensor] = changes[ci].loc;
      const Point c = sr.a->locs[changes[ci].loc].p + sr.a->offset;
      const double half = sr.a->side / 2;
      span(Envelope{{c.x - half, c.y - half}, {c.x + half, c.y + half}}, [&](std::int64_t k) {
        buckets[k].push_back(changes[ci].sensor);
        sr.cells.push_back(k);
      });
    }
    const Point from = h.m->locs[h.j - 1].p, to = h.m->locs[h.j].p;
    const Envelope hb = seg_bounds(from, to);
    span(hb, [&](std::int64_t k) {
      auto bit = buckets.find(k);
      if (bit == buckets.end()) return;
      for (std::uint32_t si : bit->second) {
        if (stamp[si] == hi + 1) continue;
        stamp[si] = hi + 1;
        const Sensor& sr = sensors[si];
        if (sr.key == h.mover) continue;
        const auto f0 = static_cast<std::size_t>(current[si]);
        const ConvexPolygon fence = sr.a->fence(f0);
        if (!hb.intersects(fence.bounds())) continue;
        const auto* sense = sensing_before(*sr.a, h.t_u);
        if (!sense || !sense->on) continue;
        if (!geometry::eval_predicate(sense->predicate, Segment{from, to}, fence)) continue;
        ++t.checked;
        const PairKey key{sr.key, h.mover, h.t_u};
        if (fired.contains(key) || skipped.contains(key)) continue;
        if (fresh_pair_decided(v, *sr.a, f0, h.mover, h.t_u))
          t.fail("sensor " + std::to_string(sr.key) + " missed move of " + std::to_string(h.mover) + " at t_u " +
                 std::to_string(h.t_u) + " " + pt(from) + "->" + pt(to) + " against its fence centred " +
                 pt(sr.a->locs[f0].p));
        else
          ++t.ambiguous;
      }
    });
  }
  return t;
}

// ---------------------------------------------------------------------------------------------
// Snapshot contents.

namespace {

// Location an actor's flush for `epoch` carried as its last point.
std::optional<Point> epoch_location(const TraceView::Actor& a, std::uint64_t epoch) {
  const auto* f = a.flush(epoch);
  if (!f) return std::nullopt;
  const std::ptrdiff_t i = a.before(f->t);
  if (i < 0) return std::nullopt;
  return a.locs[static_cast<std::size_t>(i)].p;
}

std::uint64_t first_epoch(const TraceView::Actor& a) { return a.flushes.empty() ? 0 : a.flushes.front().epoch; }

// What version n must say about each spawned actor, ascending by key.
struct Expected {
  enum Kind { Required, Optional, Hidden, Missing } kind = Required;
  std::uint64_t key = 0;
  Point p, carried;
  bool carried_mismatch = false;
  std::vector<Point> options;
};

std::vector<Expected> expectations(const TraceView& v, std::uint64_t n) {
  std::vector<Expected> out;
  for (const auto& [key, a] : v.actors()) {
    if (!a.spawned) continue;
    Expected x;
    x.key = key;
    if (v.is_joiner(key)) {
      const std::uint64_t f = first_epoch(a);
      if (f == 0 || n < f) {
        x.kind = Expected::Hidden;
        out.push_back(std::move(x));
        continue;
      }
      if (n <= f + 2 || !a.flush(n)) {
        x.kind = Expected::Optional;
        for (std::uint64_t m = f; m <= n; ++m)
          if (auto p = epoch_location(a, m)) x.options.push_back(*p);
        out.push_back(std::move(x));
        continue;
      }
    }
    const auto expect = epoch_location(a, n);
    if (!expect) {
      x.kind = Expected::Missing;
    } else {
      x.p = *expect;
      x.carried = a.flush(n)->last;
      x.carried_mismatch = !same(x.carried, x.p);
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

Tally check_snapshot_contents(const TraceView& v) {
  Tally t;
  std::vector<std::pair<std::uint64_t, const TraceView::Actor*>> residents;
  for (const auto& [key, a] : v.actors())
    if (a.spawned && !v.is_joiner(key)) residents.emplace_back(key, &a);
  std::map<std::uint64_t, std::vector<Expected>> cache;

  for (const auto& [qid, q] : v.queries()) {
    if (!q.ended) incomplete("query " + std::to_string(qid) + " never ended");
    const std::string tag = "query " + std::to_string(qid) + ": ";
    const auto& vs = q.end.versions;
    if (vs.empty()) {
      t.fail(tag + "no versions recorded");
      continue;
    }
    const bool uniform = std::adjacent_find(vs.begin(), vs.end(), std::not_equal_to<>()) == vs.end();
    if (q.end.status == trace::QueryStatus::Unstable) {
      ++t.checked;
      ++t.ambiguous;
      if (uniform) t.fail(tag + "reported unstable with equal versions");
      continue;
    }
    if (q.end.status != trace::QueryStatus::Ok) {
      t.fail(tag + "did not complete normally");
      continue;
    }
    if (!uniform) {
      t.fail(tag + "cells answered from different versions");
      continue;
    }
    const std::uint64_t n = vs.front();

    std::uint64_t lower = 0;
    for (const auto& [m, tj] : v.rounds_done())
      if (tj < q.t_s) lower = std::max(lower, m);
    std::uint64_t upper = std::numeric_limits<std::uint64_t>::max();
    for (const auto& [key, a] : residents) {
      std::uint64_t last = 0;
      for (const auto& f : a->flushes)
        if (f.t < q.t_e) last = f.epoch;
      upper = std::min(upper, last);
    }
    if (residents.empty()) upper = n;
    if (n < lower) t.fail(tag + "read version " + std::to_string(n) + " after version " + std::to_string(lower) + " completed");
    if (n > upper) t.fail(tag + "read version " + std::to_string(n) + " before every actor flushed it");

    std::map<std::uint64_t, Point> got;
    for (const auto& h : q.end.results)
      if (!got.emplace(h.key, h.p).second) t.fail(tag + "actor " + std::to_string(h.key) + " returned twice");
    for (const auto& [key, p] : got)
      if (!v.actor(key)) t.fail(tag + "returned unknown actor " + std::to_string(key));
    if (n == 0) {
      ++t.checked;
      if (!got.empty()) t.fail(tag + "the initial empty version returned actors");
      continue;
    }

    auto ce = cache.find(n);
    if (ce == cache.end()) ce = cache.emplace(n, expectations(v, n)).first;
    auto it = got.begin();
    for (const Expected& x : ce->second) {
      while (it != got.end() && it->first < x.key) ++it;
      const bool returned = it != got.end() && it->first == x.key;
      ++t.checked;
      auto who = [&] { return tag + "actor " + std::to_string(x.key) + " in version " + std::to_string(n) + ": "; };
      switch (x.kind) {
        case Expected::Hidden:
          if (returned) t.fail(who() + "visible before its first flush");
          continue;
        case Expected::Optional: {
          ++t.ambiguous;
          if (!returned) continue;
          bool known = false;
          for (const Point& p : x.options) known = known || same(p, it->second);
          if (!known) t.fail(who() + "returned at " + pt(it->second) + ", not a flushed location");
          continue;
        }
        case Expected::Missing:
          t.fail(who() + "no flush for this version");
          continue;
        case Expected::Required:
          break;
      }
      if (x.carried_mismatch)
        t.fail(who() + "flush carried " + pt(x.carried) + " but the move history ends at " + pt(x.p));
      const bool in = geometry::envelope_contains(q.range, x.p);
      if (!returned) {
        if (in) t.fail(who() + "expected at " + pt(x.p) + " but missing");
      } else if (!in) {
        t.fail(who() + "returned at " + pt(it->second) + " but its snapshot location " + pt(x.p) + " is outside");
      } else if (!same(it->second, x.p)) {
        t.fail(who() + "returned at " + pt(it->second) + ", snapshot holds " + pt(x.p));
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------------------------
// Snapshot reactions.

namespace {

struct EpochIti {
  std::vector<Point> points;
  std::vector<std::int64_t> times;
  Envelope bounds;
};

std::optional<EpochIti> epoch_itinerary(const TraceView::Actor& a, std::uint64_t n) {
  const auto* f = a.flush(n);
  if (!f) return std::nullopt;
  const auto* prev = a.flush(n - 1);
  std::size_t first = 0;
  if (prev) {
    const std::ptrdiff_t i = a.before(prev->t);
    if (i < 0) return std::nullopt;
    first = static_cast<std::size_t>(i);
  }
  EpochIti it;
  for (std::size_t i = first; i < a.locs.size() && a.locs[i].t < f->t; ++i) {
    it.points.push_back(a.locs[i].p);
    it.times.push_back(a.locs[i].t);
  }
  if (it.points.empty()) return std::nullopt;
  it.bounds = Envelope::of(it.points);
  return it;
}

struct SensorEpoch {
  bool sensing = false;  // sensing at the flush
  bool decided = false;  // no sensing change could have altered the outcome
  Predicate predicate = Predicate::Cross;
  ConvexPolygon acc;
};

SensorEpoch sensor_epoch(const TraceView::Actor& s, std::uint64_t n) {
  SensorEpoch out;
  const auto* f = s.flush(n);
  if (!f) return out;
  const auto* on = sensing_before(s, f->t);
  if (!on || !on->on) return out;
  out.sensing = true;
  out.predicate = on->predicate;
  const auto* prev = s.flush(n - 1);
  const std::int64_t from = prev ? std::max(prev->t, on->t) : on->t;
  // A sensing restart within the epoch keeps the earlier accumulated fence; only a single
  // uninterrupted sensing period is reconstructed exactly.
  out.decided = !sensing_change_after(s, on->t + 1) &&
                std::count_if(s.sensing.begin(), s.sensing.end(), [&](const auto& e) { return e.t <= on->t; }) == 1;
  std::vector<Point> pts;
  const std::ptrdiff_t base = s.before(from);
  if (base >= 0) pts.push_back(s.locs[static_cast<std::size_t>(base)].p);
  for (std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(base + 1, 0)); i < s.locs.size() && s.locs[i].t < f->t; ++i)
    pts.push_back(s.locs[i].p);
  const Point off = s.offset;
  const double side = s.side;
  out.acc = geometry::accumulated_fence(pts, [off, side](Point p) { return ConvexPolygon::square(p + off, side); });
  return out;
}

}  // namespace

Tally check_snap_reactions(const TraceView& v) {
  Tally t;
  using Key = std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>;  // sensor, mover, epoch
  std::map<Key, std::vector<const Event*>> fired;
  for (const Event& e : v.events()) {
    if (e.kind != EventKind::ReactionFired) continue;
    const auto& r = e.as<ReactionP>();
    if (!r.epoch) {
      t.fail("snapshot reaction at sensor " + std::to_string(e.actor.key) + " without an epoch");
      continue;
    }
    if (r.mover == e.actor.key) t.fail("sensor " + std::to_string(r.mover) + " reacted to itself");
    fired[{e.actor.key, r.mover, *r.epoch}].push_back(&e);
  }
  for (const auto& [k, evs] : fired) {
    const auto [sk, mk, n] = k;
    if (evs.size() > 1)
      t.fail("sensor " + std::to_string(sk) + " fired " + std::to_string(evs.size()) + " times for mover " +
             std::to_string(mk) + " in epoch " + std::to_string(n));
    const auto* s = v.actor(sk);
    if (!s || !s->flush(n)) t.fail("sensor " + std::to_string(sk) + " fired for epoch " + std::to_string(n) + " it never flushed");
    const auto* m = v.actor(mk);
    if (!m) continue;
    if (auto iti = epoch_itinerary(*m, n))
      for (const Event* e : evs)
        if (std::find(iti->times.begin(), iti->times.end(), e->as<ReactionP>().mover_t_u) == iti->times.end() &&
            !v.is_joiner(mk))
          t.fail("reaction of sensor " + std::to_string(sk) + " names a t_u outside mover " + std::to_string(mk) +
                 "'s epoch " + std::to_string(n));
  }

  std::map<std::pair<std::uint64_t, std::uint64_t>, std::optional<EpochIti>> itis;
  auto iti_of = [&](std::uint64_t key, const TraceView::Actor& a, std::uint64_t n) -> const std::optional<EpochIti>& {
    auto [it, fresh] = itis.try_emplace({key, n});
    if (fresh) it->second = epoch_itinerary(a, n);
    return it->second;
  };

  for (const auto& [sk, s] : v.actors()) {
    if (s.sensing.empty() || !s.spawned) continue;
    for (const auto& [n, tj] : v.rounds_done()) {
      if (!s.flush(n)) continue;
      const SensorEpoch se = sensor_epoch(s, n);
      if (!se.sensing) {
        for (auto it = fired.lower_bound({sk, 0, 0}); it != fired.end() && std::get<0>(it->first) == sk; ++it)
          if (std::get<2>(it->first) == n)
            t.fail("sensor " + std::to_string(sk) + " fired in epoch " + std::to_string(n) + " without sensing at its flush");
        continue;
      }
      const Envelope ab = se.acc.bounds();
      for (const auto& [mk, m] : v.actors()) {
        if (mk == sk || !m.spawned) continue;
        const auto& iti = iti_of(mk, m, n);
        if (!iti) continue;
        const auto* mf = m.flush(n);
        if (iti->points.size() != mf->count && !v.is_joiner(mk))
          t.fail("mover " + std::to_string(mk) + " flushed " + std::to_string(mf->count) + " points in epoch " +
                 std::to_string(n) + " but moved through " + std::to_string(iti->points.size()));
        const bool expect =
            iti->bounds.intersects(ab) && geometry::eval_predicate(se.predicate, iti->points, se.acc);
        auto fit = fired.find({sk, mk, n});
        const std::size_t count = fit == fired.end() ? 0 : fit->second.size();
        if (!expect && count == 0) continue;
        ++t.checked;
        const bool decided = se.decided && !(v.is_joiner(mk) && n <= first_epoch(m) + 2);
        if (!decided) {
          ++t.ambiguous;
          continue;
        }
        if (expect && count == 0)
          t.fail("sensor " + std::to_string(sk) + " missed mover " + std::to_string(mk) + " in epoch " + std::to_string(n));
        else if (!expect && count > 0)
          t.fail("sensor " + std::to_string(sk) + " fired for mover " + std::to_string(mk) + " in epoch " +
                 std::to_string(n) + " although its itinerary does not satisfy the predicate");
      }
    }
  }
  return t;
}

double Report::ambiguous_fraction() const noexcept {
  const std::uint64_t c = queries.checked + reactions.checked;
  return c ? static_cast<double>(queries.ambiguous + reactions.ambiguous) / static_cast<double>(c) : 0.0;
}

Report verify(const TraceView& v) {
  Report r;
  auto it = v.meta().find("semantics");
  r.semantics = it == v.meta().end() ? "fresh" : it->second;
  if (r.semantics == "snap") {
    r.queries = check_snapshot_contents(v);
    r.reactions = check_snap_reactions(v);
  } else if (r.semantics == "fresh") {
    r.queries = check_fresh_queries(v);
    r.reactions = check_fresh_reactions(v);
  } else {
    fail(ErrorCode::IncompleteTrace, "trace names unknown semantics '" + r.semantics + "'");
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Perturbations.

namespace {
bool is_snap(const TraceView& v) {
  auto it = v.meta().find("semantics");
  return it != v.meta().end() && it->second == "snap";
}

std::vector<Event> resorted(std::vector<Event> ev) {
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
  return ev;
}

std::uint64_t next_seq(const std::vector<Event>& ev) {
  std::uint64_t s = 0;
  for (const auto& e : ev) s = std::max(s, e.seq);
  return s + 1;
}
}  // namespace

std::optional<std::vector<Event>> drop_mandated_reaction(const TraceView& v) {
  const auto& ev = v.events();
  for (std::size_t i = 0; i < ev.size(); ++i) {
    const Event& e = ev[i];
    if (e.kind != EventKind::ReactionFired) continue;
    const auto& r = e.as<ReactionP>();
    const auto* s = v.actor(e.actor.key);
    if (!s) continue;
    bool mandated = false;
    if (is_snap(v)) {
      mandated = r.epoch && v.rounds_done().contains(*r.epoch) && !v.is_joiner(r.mover) &&
                 sensor_epoch(*s, *r.epoch).decided;
    } else {
      const std::ptrdiff_t f0 = s->at(r.mover_t_u);
      mandated = f0 >= 0 && s->locs[static_cast<std::size_t>(f0)].t == r.fence_t_u &&
                 fresh_pair_decided(v, *s, static_cast<std::size_t>(f0), r.mover, r.mover_t_u);
    }
    if (!mandated) continue;
    std::vector<Event> out = ev;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
    return out;
  }
  return std::nullopt;
}

std::optional<std::vector<Event>> inject_spurious_reaction(const TraceView& v) {
  std::vector<Event> out = v.events();
  for (const auto& [sk, s] : v.actors()) {
    if (s.sensing.empty() || !s.sensing.front().on) continue;
    if (is_snap(v)) {
      for (const auto& [n, tj] : v.rounds_done()) {
        const SensorEpoch se = sensor_epoch(s, n);
        if (!se.sensing || !se.decided) continue;
        for (const auto& [mk, m] : v.actors()) {
          if (mk == sk || v.is_joiner(mk)) continue;
          const auto iti = epoch_itinerary(m, n);
          if (!iti || iti->bounds.intersects(se.acc.bounds())) continue;
          out.push_back(Event{s.flush(n)->t + 1, EventKind::ReactionFired, {kernel::ActorKind::Moving, sk},
                              ReactionP{mk, iti->times.back(), 0, n}, next_seq(out)});
          return resorted(std::move(out));
        }
      }
      continue;
    }
    for (const auto& [mk, m] : v.actors()) {
      if (mk == sk) continue;
      for (std::size_t j = 1; j < m.locs.size(); ++j) {
        const std::int64_t t_u = m.locs[j].t;
        const std::ptrdiff_t f0 = s.at(t_u);
        if (f0 < 0 || s.sensing.front().t >= t_u) continue;
        if (seg_bounds(m.locs[j - 1].p, m.locs[j].p).intersects(s.fence(static_cast<std::size_t>(f0)).bounds())) continue;
        out.push_back(Event{t_u + 1, EventKind::ReactionFired, {kernel::ActorKind::Moving, sk},
                            ReactionP{mk, t_u, s.locs[static_cast<std::size_t>(f0)].t, std::nullopt}, next_seq(out)});
        return resorted(std::move(out));
      }
    }
  }
  return std::nullopt;
}

std::optional<std::vector<Event>> shift_visible_update(const TraceView& v) {
  for (const auto& [qid, q] : v.queries()) {
    if (!q.ended || q.end.status != trace::QueryStatus::Ok) continue;
    for (const auto& h : q.end.results) {
      const auto* a = v.actor(h.key);
      if (!a || v.is_joiner(h.key)) continue;
      std::int64_t boundary = 0;
      std::ptrdiff_t idx = -1;
      if (is_snap(v)) {
        if (q.end.versions.empty() || q.end.versions.front() == 0) continue;
        const auto* f = a->flush(q.end.versions.front());
        if (!f) continue;
        boundary = f->t;
        idx = a->before(boundary);
      } else {
        boundary = q.t_e;
        idx = a->at(q.t_s);
      }
      if (idx < 1) continue;
      const auto i = static_cast<std::size_t>(idx);
      if (!same(a->locs[i].p, h.p) || same(a->locs[i - 1].p, h.p)) continue;
      if (i + 1 < a->locs.size() && a->locs[i + 1].start <= boundary + 1) continue;
      std::vector<Event> out = v.events();
      for (Event& e : out) {
        if (e.kind != EventKind::MoveDone || e.actor.key != h.key || e.time != a->locs[i].t) continue;
        e.time = boundary + 1;
        std::get<trace::MoveP>(e.payload).start = boundary + 1;
        return resorted(std::move(out));
      }
    }
  }
  return std::nullopt;
}

}  // namespace maodb::oracle
