#include <map>
#include <random>
#include <thread>

#include "dbsupport.hpp"
#include "doctest.h"
#include "versioned_index.hpp"

using namespace maodb;
using namespace maodb::spatial;
using geometry::Envelope;
using geometry::Point;

namespace {
std::vector<std::uint64_t> keys(std::vector<IndexEntry> es) {
  std::vector<std::uint64_t> out;
  for (const auto& e : es) out.push_back(e.key);
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace

TEST_CASE("index basics") {
  VersionedIndex ix;
  CHECK(ix.lookup({{0, 0}, {1000, 1000}}).empty());
  CHECK(ix.version() == 0);
  ix.upsert(1, {100, 100});
  CHECK(keys(ix.lookup({{50, 50}, {150, 150}})) == std::vector<std::uint64_t>{1});
  ix.upsert(1, {900, 900});
  CHECK(ix.lookup({{50, 50}, {150, 150}}).empty());
  CHECK(keys(ix.lookup({{900, 900}, {1000, 1000}})) == std::vector<std::uint64_t>{1});  // boundary is closed
  CHECK(ix.remove(1));
  CHECK_FALSE(ix.remove(1));
  CHECK(ix.size() == 0);
}

TEST_CASE("departed entries stay visible until purged") {
  VersionedIndex ix;
  ix.upsert(4, {10, 10});
  ix.mark_departed(4, 500);
  REQUIRE(ix.lookup({{0, 0}, {20, 20}}).size() == 1);
  CHECK(ix.lookup({{0, 0}, {20, 20}})[0].departed == 500);
  CHECK(ix.live_size() == 0);
  CHECK(ix.purge_departed(500) == 0);
  CHECK(ix.purge_departed(501) == 1);
  CHECK(ix.size() == 0);
  // Re-arrival cancels the departure mark.
  ix.upsert(5, {1, 1});
  ix.mark_departed(5, 10);
  ix.upsert(5, {2, 2});
  CHECK(ix.purge_departed(1000) == 0);
  CHECK(ix.find(5)->departed == -1);
}

TEST_CASE("batches advance one version at a time") {
  VersionedIndex ix;
  const std::vector<BatchOp> three{{1, Point{1, 1}}, {2, Point{2, 2}}, {3, Point{3, 3}}};
  ix.apply_batch(three, 1);
  CHECK(ix.version() == 1);
  CHECK(keys(ix.lookup({{0, 0}, {5, 5}})) == std::vector<std::uint64_t>{1, 2, 3});
  const std::vector<BatchOp> rm{{2, std::nullopt}};
  CHECK_THROWS_AS(ix.apply_batch(rm, 3), Error);
  try {
    ix.apply_batch(rm, 3);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionGap);
  }
  ix.apply_batch(rm, 2);
  CHECK(keys(ix.lookup({{0, 0}, {5, 5}})) == std::vector<std::uint64_t>{1, 3});
}

TEST_CASE("lookup equals a linear scan under random operations") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1000);
  for (int trial = 0; trial < 20; ++trial) {
    VersionedIndex ix;
    std::map<std::uint64_t, Point> truth;
    for (int op = 0; op < 1000; ++op) {
      const std::uint64_t key = rng() % 100;
      if (rng() % 5 == 0) {
        CHECK(ix.remove(key) == truth.erase(key) > 0);
      } else {
        const Point p{std::round(u(rng)), std::round(u(rng))};  // coarse so boundary hits happen
        ix.upsert(key, p);
        truth[key] = p;
      }
      if (op % 10 == 0) {
        double a = std::round(u(rng)), b = std::round(u(rng)), c = std::round(u(rng)), d = std::round(u(rng));
        const Envelope w{{std::min(a, b), std::min(c, d)}, {std::max(a, b), std::max(c, d)}};
        std::vector<std::uint64_t> expect;
        for (const auto& [k, p] : truth)
          if (geometry::envelope_contains(w, p)) expect.push_back(k);
        REQUIRE(keys(ix.lookup(w)) == expect);
      }
    }
    CHECK(ix.size() == truth.size());
  }
}

TEST_CASE("index actors through the database") {
  Database db(testsupport::db_config());
  // 5x5 cells of 1000 m.
  db.spawn(1, {100, 100});
  auto r = db.find_actors(1, {{3000, 3000}, {4000, 4000}});
  CHECK(r.hits.empty());
  r = db.find_actors(1, {{50, 50}, {150, 150}});
  REQUIRE(r.hits.size() == 1);
  CHECK(r.hits[0].key == 1);

  db.move(1, {300, 300});  // same cell
  CHECK(db.find_actors(1, {{50, 50}, {150, 150}}).hits.empty());
  db.move(1, {1300, 300});  // into cell 1
  REQUIRE(db.quiesce());
  CHECK(db.find_actors(1, {{0, 0}, {999, 999}}).hits.empty());
  CHECK(db.find_actors(1, {{1000, 0}, {1999, 999}}).hits.size() == 1);
  db.shutdown();
}

TEST_CASE("quiesced index matches the true locations") {
  Database db(testsupport::db_config());
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0, 5000);
  std::map<std::uint64_t, Point> truth;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const Point p = geometry::quantize({u(rng), u(rng)});
    db.spawn(k, p);
    truth[k] = p;
  }
  std::vector<std::future<std::int64_t>> fs;
  for (int round = 0; round < 3; ++round)
    for (std::uint64_t k = 0; k < 1000; ++k) {
      const Point p = geometry::quantize({u(rng), u(rng)});
      fs.push_back(db.move_async(k, p));
      truth[k] = p;
    }
  for (auto& f : fs) f.get();
  REQUIRE(db.quiesce());

  const auto live = testsupport::live_entries(db);
  CHECK(live.size() == 1000);
  for (const auto& [k, p] : truth) {
    REQUIRE(live.count(k) == 1);
    const auto& [cell, at] = live.find(k)->second;
    CHECK(at == p);
    CHECK(cell == grid::cell_of(db.config().grid, p));
  }

  // Departed entries are invisible to queries issued after the departure.
  for (int q = 0; q < 100; ++q) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const Envelope w{{std::min(a, b), std::min(c, d)}, {std::max(a, b), std::max(c, d)}};
    const Envelope wq{geometry::quantize(w.min), geometry::quantize(w.max)};
    std::vector<std::uint64_t> expect;
    for (const auto& [k, p] : truth)
      if (geometry::envelope_contains(wq, p)) expect.push_back(k);
    const auto res = db.find_actors(0, w);
    std::vector<std::uint64_t> got;
    for (const auto& h : res.hits) {
      got.push_back(h.key);
      CHECK(h.p == truth[h.key]);
    }
    REQUIRE(got == expect);
  }
  db.shutdown();
}
