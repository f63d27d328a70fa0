#include <filesystem>

#include "bench.hpp"
#include "doctest.h"
#include "error.hpp"
#include "oracle.hpp"

using namespace maodb;
using namespace maodb::trace;
using geometry::Envelope;
using geometry::Point;
using geometry::Predicate;
using kernel::ActorKind;
using oracle::Status;
using oracle::TraceView;

namespace {

// Builds traces event by event; times are plain integers.
struct Tb {
  std::map<std::string, std::string> meta;
  std::vector<Event> ev;
  std::map<std::uint64_t, Point> at;
  std::uint64_t seq = 0;

  void add(std::int64_t t, EventKind k, std::uint64_t key, Payload p, ActorKind ak = ActorKind::Moving) {
    ev.push_back(Event{t, k, {ak, key}, std::move(p), ++seq});
  }
  Tb& spawn(std::int64_t t, std::uint64_t key, Point p, double side = 1000) {
    at[key] = p;
    add(t, EventKind::Spawn, key, SpawnP{p, side, {0, 0}});
    return *this;
  }
  Tb& move(std::int64_t start, std::int64_t t_u, std::uint64_t key, Point to) {
    add(t_u, EventKind::MoveDone, key, MoveP{start, at[key], to});
    at[key] = to;
    return *this;
  }
  Tb& sense(std::int64_t t, std::uint64_t key) {
    add(t, EventKind::SensingOn, key, SensingP{Predicate::Cross});
    return *this;
  }
  Tb& relay(std::int64_t t, std::uint64_t mover, std::int64_t t_u) {
    add(t, EventKind::Relayed, 0, RelayP{mover, t_u, 0, 1}, ActorKind::Monitor);
    return *this;
  }
  Tb& fired(std::int64_t t, std::uint64_t sensor, std::uint64_t mover, std::int64_t t_u, std::int64_t fence_t_u,
            std::optional<std::uint64_t> epoch = std::nullopt) {
    add(t, EventKind::ReactionFired, sensor, ReactionP{mover, t_u, fence_t_u, epoch});
    return *this;
  }
  Tb& query(std::int64_t ts, std::int64_t te, std::uint64_t qid, std::uint64_t who, Envelope r, std::vector<Hit> hits,
            std::vector<std::uint64_t> versions = {}) {
    add(ts, EventKind::QueryStart, who, QueryStartP{qid, r});
    add(te, EventKind::QueryEnd, who, QueryEndP{qid, QueryStatus::Ok, std::move(versions), std::move(hits)});
    return *this;
  }
  Tb& flush(std::int64_t t, std::uint64_t key, std::uint64_t epoch, std::uint64_t count, Point first) {
    add(t, EventKind::FlushSent, key, FlushP{epoch, count, first, at[key]});
    return *this;
  }
  Tb& applied(std::int64_t t, std::uint64_t epoch, std::uint64_t residents) {
    add(t, EventKind::SnapshotApplied, 0, AppliedP{epoch, residents}, ActorKind::SnapshotController);
    return *this;
  }
  TraceView view() const { return TraceView(meta, ev); }
};

const Envelope kBox{{0, 0}, {1000, 1000}};

Tb snap_base() {
  Tb b;
  b.meta = {{"semantics", "snap"}, {"snapshot_start_ns", "50"}};
  b.spawn(10, 1, {500, 500}).spawn(10, 2, {5000, 5000});
  return b;
}

bench::BenchConfig small_run(Semantics s, std::uint64_t seed) {
  bench::BenchConfig c;
  c.semantics = s;
  c.wl.num_actors = 150;
  c.wl.sensing_pct = 0.2;
  c.wl.query_ratio = 0.3;
  c.wl.duration_s = 2.5;
  c.wl.seed = seed;
  c.wl.clients_per_shard = 4;
  c.snapshot_interval_ms = 300;
  c.workers_per_shard = 2;
  c.finalize();
  return c;
}

}  // namespace

TEST_CASE("fresh query verdicts") {
  SUBCASE("stationary inside and returned") {
    Tb b;
    b.spawn(10, 1, {500, 500}).spawn(10, 2, {5000, 5000}).query(100, 200, 1, 2, kBox, {{1, {500, 500}}});
    CHECK(oracle::check_fresh_query(b.view(), 1).status == Status::Pass);
  }
  SUBCASE("stationary inside and missing") {
    Tb b;
    b.spawn(10, 1, {500, 500}).spawn(10, 2, {5000, 5000}).query(100, 200, 1, 2, kBox, {});
    auto v = oracle::check_fresh_query(b.view(), 1);
    CHECK(v.status == Status::Fail);
    CHECK_FALSE(v.witness.empty());
  }
  SUBCASE("stationary outside and returned") {
    Tb b;
    b.spawn(10, 1, {1500, 500}).spawn(10, 2, {5000, 5000}).query(100, 200, 1, 2, kBox, {{1, {1500, 500}}});
    CHECK(oracle::check_fresh_query(b.view(), 1).status == Status::Fail);
  }
  SUBCASE("entered during the window and missing") {
    Tb b;
    b.spawn(10, 1, {2000, 2000}).spawn(10, 2, {5000, 5000}).move(140, 150, 1, {500, 500});
    b.query(100, 200, 1, 2, kBox, {});
    auto v = oracle::check_fresh_query(b.view(), 1);
    CHECK(v.status != Status::Fail);
    b.ev.clear();
    b.spawn(10, 1, {2000, 2000}).spawn(10, 2, {5000, 5000}).move(140, 150, 1, {500, 500});
    b.query(100, 200, 1, 2, kBox, {{1, {500, 500}}});
    CHECK(oracle::check_fresh_query(b.view(), 1).status != Status::Fail);
  }
  SUBCASE("moved before the window: old position is stale") {
    Tb b;
    b.spawn(10, 1, {500, 500}).spawn(10, 2, {5000, 5000}).move(40, 50, 1, {3000, 3000});
    b.query(100, 200, 1, 2, kBox, {{1, {500, 500}}});
    CHECK(oracle::check_fresh_query(b.view(), 1).status == Status::Fail);
  }
  SUBCASE("incomplete traces are rejected") {
    Tb b;
    b.spawn(10, 1, {500, 500}).move(40, 50, 3, {1, 1});
    CHECK_THROWS_AS(b.view(), Error);
  }
}

TEST_CASE("fresh reaction verdicts") {
  // Sensor 1 holds the fence [0,1000]^2; mover 2 crosses it at t_u 100.
  auto base = [] {
    Tb b;
    b.spawn(1, 1, {500, 500}).sense(20, 1).spawn(10, 2, {-500, 500});
    b.move(90, 100, 2, {1500, 500}).relay(105, 2, 100);
    return b;
  };
  SUBCASE("crossing a stationary fence with a reaction") {
    Tb b = base();
    b.fired(110, 1, 2, 100, 1);
    auto t = oracle::check_fresh_reactions(b.view());
    CHECK(t.ok());
    CHECK(t.checked > 0);
  }
  SUBCASE("crossing a stationary fence without a reaction") {
    auto t = oracle::check_fresh_reactions(base().view());
    CHECK_FALSE(t.ok());
    REQUIRE_FALSE(t.witnesses.empty());
    CHECK(t.witnesses.front().find("missed") != std::string::npos);
  }
  SUBCASE("spurious reaction for a hop far from the fence") {
    Tb b = base();
    b.spawn(10, 3, {5000, 5000}).move(150, 160, 3, {6000, 5000}).relay(165, 3, 160);
    b.fired(110, 1, 2, 100, 1).fired(170, 1, 3, 160, 1);
    CHECK_FALSE(oracle::check_fresh_reactions(b.view()).ok());
  }
  SUBCASE("two reactions for one move") {
    Tb b = base();
    b.fired(110, 1, 2, 100, 1).fired(111, 1, 2, 100, 1);
    CHECK_FALSE(oracle::check_fresh_reactions(b.view()).ok());
  }
  SUBCASE("sensor moving concurrently: either outcome passes") {
    auto moving = [] {
      Tb b;
      b.spawn(1, 1, {500, 500}).sense(20, 1).spawn(10, 2, {-500, 500});
      b.move(95, 104, 1, {5500, 500});  // f_d is far from the hop
      b.move(90, 100, 2, {1500, 500}).relay(105, 2, 100);
      return b;
    };
    auto quiet = oracle::check_fresh_reactions(moving().view());
    CHECK(quiet.ok());
    CHECK(quiet.ambiguous > 0);
    Tb b = moving();
    b.fired(110, 1, 2, 100, 1);
    CHECK(oracle::check_fresh_reactions(b.view()).ok());
  }
  SUBCASE("reaction while not sensing") {
    Tb b;
    b.spawn(1, 1, {500, 500}).spawn(10, 2, {-500, 500}).move(90, 100, 2, {1500, 500}).relay(105, 2, 100);
    b.fired(110, 1, 2, 100, 1);
    CHECK_FALSE(oracle::check_fresh_reactions(b.view()).ok());
  }
}

TEST_CASE("snapshot content verdicts") {
  SUBCASE("move before the flush is visible in the next version") {
    Tb b = snap_base();
    b.move(490, 500, 1, {600, 600}).flush(1000, 1, 1, 2, {500, 500}).flush(1000, 2, 1, 1, {5000, 5000});
    b.applied(1100, 1, 2).query(1200, 1250, 1, 2, kBox, {{1, {600, 600}}}, {1});
    auto t = oracle::check_snapshot_contents(b.view());
    CHECK(t.ok());
    CHECK(t.checked > 0);
  }
  SUBCASE("move after the flush leaks into that version") {
    Tb b = snap_base();
    b.flush(1000, 1, 1, 1, {500, 500}).flush(1000, 2, 1, 1, {5000, 5000}).move(1040, 1050, 1, {700, 700});
    b.applied(1100, 1, 2).query(1200, 1250, 1, 2, kBox, {{1, {700, 700}}}, {1});
    CHECK_FALSE(oracle::check_snapshot_contents(b.view()).ok());
  }
  SUBCASE("query straddling the switch reads the previous version") {
    Tb b = snap_base();
    b.move(490, 500, 1, {600, 600}).flush(1000, 1, 1, 2, {500, 500}).flush(1000, 2, 1, 1, {5000, 5000});
    b.applied(1100, 1, 2).move(1490, 1500, 1, {800, 800});
    b.flush(2000, 1, 2, 2, {600, 600}).flush(2000, 2, 2, 1, {5000, 5000}).applied(2100, 2, 2);
    b.query(2050, 2150, 1, 2, kBox, {{1, {600, 600}}}, {1});
    b.query(2060, 2160, 2, 2, kBox, {{1, {800, 800}}}, {2});
    CHECK(oracle::check_snapshot_contents(b.view()).ok());
  }
  SUBCASE("stale version after a newer one completed") {
    Tb b = snap_base();
    b.flush(1000, 1, 1, 1, {500, 500}).flush(1000, 2, 1, 1, {5000, 5000}).applied(1100, 1, 2);
    b.flush(2000, 1, 2, 1, {500, 500}).flush(2000, 2, 2, 1, {5000, 5000}).applied(2100, 2, 2);
    b.query(2200, 2250, 1, 2, kBox, {{1, {500, 500}}}, {1});
    CHECK_FALSE(oracle::check_snapshot_contents(b.view()).ok());
  }
  SUBCASE("mixed versions in one answer") {
    Tb b = snap_base();
    b.flush(1000, 1, 1, 1, {500, 500}).flush(1000, 2, 1, 1, {5000, 5000}).applied(1100, 1, 2);
    b.query(1200, 1250, 1, 2, kBox, {{1, {500, 500}}}, {1, 0});
    CHECK_FALSE(oracle::check_snapshot_contents(b.view()).ok());
  }
}

TEST_CASE("snapshot reaction verdicts") {
  auto base = [](Point to) {
    Tb b;
    b.meta = {{"semantics", "snap"}, {"snapshot_start_ns", "50"}};
    b.spawn(1, 1, {500, 500}).sense(20, 1).spawn(10, 2, {-500, 500});
    b.move(290, 300, 2, to).flush(1000, 1, 1, 1, {500, 500}).flush(1000, 2, 1, 2, {-500, 500});
    b.applied(1100, 1, 2);
    return b;
  };
  SUBCASE("itinerary crosses the accumulated fence once") {
    Tb b = base({1500, 500});
    b.fired(1050, 1, 2, 300, 0, 1);
    auto t = oracle::check_snap_reactions(b.view());
    CHECK(t.ok());
    CHECK(t.checked == 1);
  }
  SUBCASE("two reactions for one epoch") {
    Tb b = base({1500, 500});
    b.fired(1050, 1, 2, 300, 0, 1).fired(1060, 1, 2, 300, 0, 1);
    CHECK_FALSE(oracle::check_snap_reactions(b.view()).ok());
  }
  SUBCASE("missed reaction") { CHECK_FALSE(oracle::check_snap_reactions(base({1500, 500}).view()).ok()); }
  SUBCASE("predicate false and nothing fired") {
    auto t = oracle::check_snap_reactions(base({-500, 3000}).view());
    CHECK(t.ok());
  }
  SUBCASE("predicate false but fired") {
    Tb b = base({-500, 3000});
    b.fired(1050, 1, 2, 300, 0, 1);
    CHECK_FALSE(oracle::check_snap_reactions(b.view()).ok());
  }
  SUBCASE("the accumulated fence catches a hop the final fence misses") {
    // Sensor walks away during the epoch; the mover crosses where the sensor started.
    Tb b;
    b.meta = {{"semantics", "snap"}, {"snapshot_start_ns", "50"}};
    b.spawn(1, 1, {500, 500}).sense(20, 1).spawn(10, 2, {-500, 500});
    b.move(190, 200, 1, {4000, 4000}).move(290, 300, 2, {2500, 500});
    b.flush(1000, 1, 1, 2, {500, 500}).flush(1000, 2, 1, 2, {-500, 500}).applied(1100, 1, 2);
    CHECK_FALSE(oracle::check_snap_reactions(b.view()).ok());
    b.fired(1050, 1, 2, 300, 0, 1);
    CHECK(oracle::check_snap_reactions(b.view()).ok());
  }
}

TEST_CASE("mutations of passing runs flip the verdict") {
  for (Semantics s : {Semantics::Freshness, Semantics::Snapshot}) {
    CAPTURE(static_cast<int>(s));
    auto res = bench::run_benchmark(small_run(s, 5));
    TraceView v(res.meta, res.events);
    auto base = oracle::verify(v);
    REQUIRE_MESSAGE(base.ok(), (base.queries.witnesses.empty() ? "" : base.queries.witnesses.front()));

    auto mutated = [&](const std::optional<std::vector<Event>>& ev) {
      REQUIRE(ev.has_value());
      return oracle::verify(TraceView(res.meta, *ev)).ok();
    };
    CHECK_FALSE(mutated(oracle::drop_mandated_reaction(v)));
    CHECK_FALSE(mutated(oracle::inject_spurious_reaction(v)));
    CHECK_FALSE(mutated(oracle::shift_visible_update(v)));
  }
}

TEST_CASE("trace files round trip") {
  auto res = bench::run_benchmark(small_run(Semantics::Snapshot, 9));
  auto path = std::filesystem::temp_directory_path() / "maodb_roundtrip.trace";
  write_trace(path.string(), res.meta, res.events);
  TraceFile tf = read_trace(path.string());
  CHECK(tf.meta == res.meta);
  REQUIRE(tf.events.size() == res.events.size());
  for (std::size_t i = 0; i < tf.events.size(); ++i) REQUIRE(format_event(tf.events[i]) == format_event(res.events[i]));
  CHECK(oracle::verify(TraceView(tf)).ok());
  std::filesystem::remove(path);

  CHECK_THROWS_AS(parse_event("12 Bogus moving:1", 1), Error);
  CHECK_THROWS_AS(read_trace("/nonexistent/x.trace"), Error);
}
