#include <atomic>
#include <mutex>
#include <thread>

#include "dbsupport.hpp"
#include "doctest.h"

using namespace maodb;
using geometry::Envelope;
using geometry::Point;
using geometry::Predicate;
using kernel::ActorKind;
using namespace std::chrono_literals;

namespace {

struct Reactions {
  std::mutex mu;
  std::vector<ReactionEvent> events;
  ReactionFn fn() {
    return [this](const ReactionEvent& e) {
      std::lock_guard lk(mu);
      events.push_back(e);
    };
  }
  std::size_t size() {
    std::lock_guard lk(mu);
    return events.size();
  }
};

std::uint64_t cell_messages(Database& db) {
  auto& k = db.kernel();
  return k.messages_to(ActorKind::Index) + k.messages_to(ActorKind::Monitor) +
         k.messages_to(ActorKind::SnapshotUpdate) + k.messages_to(ActorKind::SnapshotController);
}

void wait_rounds(Database& db, std::uint64_t extra) {
  const auto target = db.context().stats.snapshot_rounds.load() + extra;
  for (int i = 0; i < 400 && db.context().stats.snapshot_rounds.load() < target; ++i)
    std::this_thread::sleep_for(25ms);
  REQUIRE(db.context().stats.snapshot_rounds.load() >= target);
}

std::size_t count(const std::vector<trace::Event>& ev, trace::EventKind k) {
  return static_cast<std::size_t>(std::count_if(ev.begin(), ev.end(), [k](const auto& e) { return e.kind == k; }));
}

}  // namespace

TEST_CASE("freshness move message counts") {
  Database db(testsupport::db_config());
  db.spawn(1, {200, 200});
  REQUIRE(db.quiesce());
  auto& k = db.kernel();
  auto idx0 = k.messages_to(ActorKind::Index), mon0 = k.messages_to(ActorKind::Monitor);
  db.move(1, {400, 400});
  REQUIRE(db.quiesce());
  CHECK(k.messages_to(ActorKind::Index) - idx0 == 1);
  CHECK(k.messages_to(ActorKind::Monitor) - mon0 == 1);

  idx0 = k.messages_to(ActorKind::Index);
  mon0 = k.messages_to(ActorKind::Monitor);
  db.move(1, {1400, 400});
  REQUIRE(db.quiesce());
  CHECK(k.messages_to(ActorKind::Index) - idx0 == 2);
  CHECK(k.messages_to(ActorKind::Monitor) - mon0 == 2);
  db.shutdown();
}

TEST_CASE("snapshot moves only buffer") {
  Database db(testsupport::db_config(Semantics::Snapshot));
  db.spawn(1, {200, 200});
  REQUIRE(db.quiesce());
  const auto before = cell_messages(db);
  for (int i = 1; i <= 5; ++i) db.move(1, {200.0 + 100 * i, 200});
  REQUIRE(db.quiesce());
  CHECK(cell_messages(db) == before);
  auto* a = db.kernel().peek<moving::MovingActor>(moving_id(1));
  CHECK(a->buffer().size() == 6);
  db.shutdown();
}

TEST_CASE("query with only a distant issuer returns nothing") {
  Database db(testsupport::db_config());
  db.spawn(1, {4900, 4900});
  const auto r = db.find_actors(1, {{0, 0}, {1000, 1000}});
  CHECK(r.hits.empty());
  CHECK(r.status == trace::QueryStatus::Ok);
  CHECK_THROWS_AS(db.find_actors(2, {{0, 0}, {1, 1}}), Error);
  CHECK_THROWS_AS(db.find_actors(1, {{6000, 6000}, {7000, 7000}}), Error);
  db.shutdown();
}

TEST_CASE("freshness sensing reacts to a crossing peer exactly once") {
  Database db(testsupport::db_config());
  Reactions r;
  db.spawn(1, {2500, 2500});  // fence [2000, 3000]^2
  db.spawn(2, {1500, 2500});
  db.start_sensing(1, Predicate::Cross, r.fn());
  const auto t_u = db.move(2, {2500, 2600});  // crosses from cell (1,2) into (2,2)
  REQUIRE(db.quiesce());
  REQUIRE(r.size() == 1);
  CHECK(r.events[0].sensor == 1);
  CHECK(r.events[0].mover == 2);
  CHECK(r.events[0].mover_t_u == t_u);
  CHECK_FALSE(r.events[0].epoch.has_value());

  // Both cells relayed the hop to the sensor; the copy was dropped.
  const auto ev = db.trace().merged();
  int relays = 0;
  for (const auto& e : ev)
    if (e.kind == trace::EventKind::Relayed && e.as<trace::RelayP>().t_u == t_u) {
      ++relays;
      CHECK(e.as<trace::RelayP>().receivers == 1);
    }
  CHECK(relays == 2);

  // Hop entirely outside the fence.
  db.move(2, {500, 500});
  db.move(2, {600, 4500});
  REQUIRE(db.quiesce());
  CHECK(r.size() == 2);  // the move back out to (500,500) crossed; the far hop did not
  db.shutdown();
}

TEST_CASE("sensing lifecycle") {
  Database db(testsupport::db_config());
  Reactions r;
  db.spawn(1, {2500, 2500});
  db.spawn(2, {1500, 2500});
  auto* s = db.kernel().peek<moving::MovingActor>(moving_id(1));

  SUBCASE("never enabled") {
    db.move(2, {2500, 2500});
    db.end_sensing(1);  // no-op
    REQUIRE(db.quiesce());
    CHECK(s->subscriptions().empty());
    CHECK(count(db.trace().merged(), trace::EventKind::ReactionFired) == 0);
  }
  SUBCASE("enable then disable") {
    db.start_sensing(1, Predicate::Cross, r.fn());
    CHECK_FALSE(s->subscriptions().empty());
    db.end_sensing(1);
    CHECK(s->subscriptions().empty());
    db.move(2, {2500, 2500});
    REQUIRE(db.quiesce());
    CHECK(r.size() == 0);
  }
  SUBCASE("second enable replaces the predicate") {
    db.start_sensing(1, Predicate::Cross, r.fn());
    db.start_sensing(1, Predicate::Cover, r.fn());
    db.move(2, {1600, 2500});  // outside: neither
    db.move(2, {2500, 2500});  // crosses in: Cross would fire, Cover does not
    db.move(2, {2600, 2600});  // inside hop: Cover fires
    REQUIRE(db.quiesce());
    REQUIRE(r.size() == 1);
    CHECK(count(db.trace().merged(), trace::EventKind::ReactionFired) == 1);
  }
  db.shutdown();
}

TEST_CASE("sensors never react to themselves and track their fence cells") {
  Database db(testsupport::db_config());
  Reactions r;
  db.spawn(1, {2500, 2500});
  db.start_sensing(1, Predicate::Overlap, r.fn());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 5000);
  for (int i = 0; i < 200; ++i) db.move(1, {u(rng), u(rng)});
  REQUIRE(db.quiesce());
  CHECK(r.size() == 0);
  auto* s = db.kernel().peek<moving::MovingActor>(moving_id(1));
  const auto want = grid::cells_of_envelope(db.config().grid, s->fence().bounds());
  CHECK(std::vector<grid::CellId>(s->subscriptions().begin(), s->subscriptions().end()) == want);
  for (grid::CellId c : want) {
    const auto subs = db.kernel().subscribers(c);
    CHECK(std::count(subs.begin(), subs.end(), moving_id(1)) == 1);
  }
  db.shutdown();
}

TEST_CASE("subscriptions at quiescence match fences for many sensors") {
  Database db(testsupport::db_config());
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 5000);
  for (std::uint64_t k = 0; k < 50; ++k) {
    db.spawn(k, {u(rng), u(rng)});
    if (k % 2 == 0) db.start_sensing(k, Predicate::Cross, nullptr);
  }
  std::vector<std::future<std::int64_t>> fs;
  for (int round = 0; round < 20; ++round)
    for (std::uint64_t k = 0; k < 50; ++k) fs.push_back(db.move_async(k, {u(rng), u(rng)}));
  for (auto& f : fs) f.get();
  REQUIRE(db.quiesce());
  for (std::uint64_t k = 0; k < 50; ++k) {
    auto* a = db.kernel().peek<moving::MovingActor>(moving_id(k));
    std::vector<grid::CellId> want;
    if (k % 2 == 0) want = grid::cells_of_envelope(db.config().grid, a->fence().bounds());
    CHECK(std::vector<grid::CellId>(a->subscriptions().begin(), a->subscriptions().end()) == want);
  }
  for (const auto& e : db.trace().merged())
    if (e.kind == trace::EventKind::ReactionFired) CHECK(e.as<trace::ReactionP>().mover != e.actor.key);
  db.shutdown();
}

TEST_CASE("snapshot reaction fires once for a multi-hop itinerary") {
  auto cfg = testsupport::db_config(Semantics::Snapshot);
  cfg.snapshot_interval_ns = 400'000'000;
  Database db(cfg);
  Reactions r;
  db.spawn(1, {2500, 2500});  // stationary sensor, fence [2000, 3000]^2
  db.spawn(2, {1500, 1500});
  db.start_sensing(1, Predicate::Cross, r.fn());
  db.start_snapshots();
  wait_rounds(db, 1);
  db.move(2, {1500, 2500});  // outside
  db.move(2, {3500, 2500});  // through the fence
  db.move(2, {3500, 1500});  // outside
  wait_rounds(db, 3);
  db.stop_snapshots();
  REQUIRE(db.quiesce());
  REQUIRE(r.size() == 1);
  CHECK(r.events[0].epoch.has_value());
  CHECK(r.events[0].mover == 2);
  db.shutdown();
}

TEST_CASE("accumulated fence grows with every buffered hop") {
  auto cfg = testsupport::db_config(Semantics::Snapshot);
  Database db(cfg);
  db.spawn(1, {2500, 2500});
  db.start_sensing(1, Predicate::Cross, nullptr);
  auto* a = db.kernel().peek<moving::MovingActor>(moving_id(1));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> step(-200, 200);
  Point p{2500, 2500};
  for (int i = 0; i < 30; ++i) {
    const auto prev = *a->accumulated_fence();
    p = p + Point{step(rng), step(rng)};
    db.move(1, p);
    const auto now = *a->accumulated_fence();
    for (Point v : prev.vertices()) CHECK(now.contains(v));
    for (Point v : a->fence().vertices()) CHECK(now.contains(v));
  }
  db.shutdown();
}

TEST_CASE("snapshot queries see one version across cells") {
  auto cfg = testsupport::db_config(Semantics::Snapshot);
  cfg.snapshot_interval_ns = 100'000'000;
  Database db(cfg);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 5000);
  for (std::uint64_t k = 0; k < 200; ++k) db.spawn(k, {u(rng), u(rng)});
  db.start_snapshots();
  std::atomic<bool> stop{false};
  std::thread mover([&] {
    std::mt19937_64 r2(9);
    while (!stop) db.move(r2() % 200, {u(r2), u(r2)});
  });
  int ok = 0;
  std::uint64_t max_version = 0;
  const auto until = std::chrono::steady_clock::now() + 1500ms;
  while (std::chrono::steady_clock::now() < until) {
    const double x = u(rng), y = u(rng);
    auto res = db.find_actors_async(0, {{x - 1500, y - 1500}, {x + 1500, y + 1500}}).get();
    if (res.status == trace::QueryStatus::Ok) {
      ++ok;
      max_version = std::max(max_version, res.versions.front());
      CHECK(std::adjacent_find(res.versions.begin(), res.versions.end(), std::not_equal_to<>()) ==
            res.versions.end());
    }
  }
  stop = true;
  mover.join();
  CHECK(ok > 0);
  CHECK(db.context().stats.snapshot_rounds.load() > 3);
  CHECK(max_version > 3);
  db.stop_snapshots();
  db.shutdown();
}
