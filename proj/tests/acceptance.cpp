// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>

#include "bench.hpp"
#include "dbsupport.hpp"
#include "oracle.hpp"
#include "snapshot.hpp"
#include "support.hpp"

using namespace maodb;
using geometry::ConvexPolygon;
using geometry::Envelope;
using geometry::Point;
using geometry::Predicate;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kSweepBudgetS = 600.0;       // criteria 1 and 2
constexpr int kSweepRuns = 20;
constexpr double kGrazingMargin = 5.0;        // metres; criterion 3 excludes closer inputs
constexpr double kScaleOutMin = 1.5;          // criterion 6
constexpr double kLatencyGap = 10.0;          // criterion 7
constexpr double kRoadTolerance = 1e-6;       // criterion 10, metres
constexpr int kMedianRuns = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bench::BenchConfig sweep_config(Semantics s, std::uint64_t seed) {
  bench::BenchConfig c;
  c.semantics = s;
  c.snapshot_interval_ms = 1000;
  c.cells = 25;
  c.wl.num_actors = 500;
  c.wl.sensing_pct = 0.125;
  c.wl.query_ratio = 0.2;
  c.wl.duration_s = 10;
  c.wl.seed = seed;
  c.finalize();
  return c;
}

// Counts mutations of `v` the full verifier rejects.
int mutation_flips(const oracle::TraceView& v, std::string& note) {
  int flips = 0;
  const std::pair<const char*, std::optional<std::vector<trace::Event>> (*)(const oracle::TraceView&)> muts[] = {
      {"drop", oracle::drop_mandated_reaction},
      {"inject", oracle::inject_spurious_reaction},
      {"shift", oracle::shift_visible_update}};
  for (const auto& [name, fn] : muts) {
    auto ev = fn(v);
    if (!ev) {
      note += std::string(" ") + name + ":no-site";
      continue;
    }
    const bool ok = oracle::verify(oracle::TraceView(v.meta(), std::move(*ev))).ok();
    if (!ok) ++flips;
    else note += std::string(" ") + name + ":undetected";
  }
  return flips;
}

Outcome semantics_sweep(Semantics s) {
  const auto t0 = Clock::now();
  std::uint64_t fails = 0, checked = 0, ambiguous = 0, queries = 0, mixed = 0, unstable = 0, repeats = 0;
  int flips = 0;
  std::string first_witness, note;
  for (int run = 1; run <= kSweepRuns; ++run) {
    auto res = bench::run_benchmark(sweep_config(s, static_cast<std::uint64_t>(run)));
    unstable += res.report.unstable_queries;
    oracle::TraceView v(std::move(res.meta), std::move(res.events));
    oracle::Tally q, r;
    if (s == Semantics::Freshness) {
      q = oracle::check_fresh_queries(v);
      r = oracle::check_fresh_reactions(v);
    } else {
      q = oracle::check_snapshot_contents(v);
      r = oracle::check_snap_reactions(v);
      for (const auto& [qid, qq] : v.queries()) {
        ++queries;
        const auto& vs = qq.end.versions;
        if (vs.empty() || std::adjacent_find(vs.begin(), vs.end(), std::not_equal_to<>()) != vs.end()) ++mixed;
      }
      std::map<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>, int> per;
      for (const auto& e : v.events())
        if (e.kind == trace::EventKind::ReactionFired) {
          const auto& p = e.as<trace::ReactionP>();
          if (++per[{e.actor.key, p.mover, p.epoch.value_or(~0ull)}] == 2) ++repeats;
        }
    }
    fails += q.failed + r.failed;
    checked += q.checked + r.checked;
    ambiguous += q.ambiguous + r.ambiguous;
    if (first_witness.empty()) {
      if (!q.witnesses.empty()) first_witness = q.witnesses.front();
      else if (!r.witnesses.empty()) first_witness = r.witnesses.front();
    }
    if (run == 1) flips = mutation_flips(v, note);
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = fails == 0 && flips == 3 && elapsed < kSweepBudgetS &&
           (s == Semantics::Freshness || (mixed == 0 && unstable == 0 && repeats == 0));
  o.detail = fmt("%d runs, %llu decisions, %llu fails, ambiguous %.4f, mutations flipped %d/3%s, %.0f s", kSweepRuns,
                 (unsigned long long)checked, (unsigned long long)fails,
                 checked ? double(ambiguous) / double(checked) : 0.0, flips, note.c_str(), elapsed);
  if (s == Semantics::Snapshot)
    o.detail += fmt("; %llu queries, %llu mixed-version, %llu unstable, %llu repeated reactions",
                    (unsigned long long)queries, (unsigned long long)mixed, (unsigned long long)unstable,
                    (unsigned long long)repeats);
  if (!first_witness.empty()) o.detail += "; first fail: " + first_witness;
  return o;
}

ConvexPolygon random_fence(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2000, 2000);
  if (rng() % 2) return ConvexPolygon::square({u(rng), u(rng)}, 200 + std::fabs(u(rng)) / 2);
  std::vector<Point> pts;
  const Point c{u(rng), u(rng)};
  for (int i = 0; i < 12; ++i) pts.push_back(testsupport::in_disk(rng, c, 800));
  return geometry::convex_hull(pts);
}

Outcome geometry_oracles() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-3000, 3000);
  int evaluated = 0, mismatched = 0, skipped = 0;
  while (evaluated < 10'000) {
    const ConvexPolygon f = random_fence(rng);
    std::vector<Point> line{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (rng() % 4 == 0) line.push_back({u(rng), u(rng)});  // some two-hop itineraries
    const auto pv = testsupport::verts(f);
    if (testsupport::grazing(line, pv, kGrazingMargin)) {
      ++skipped;
      continue;
    }
    ++evaluated;
    for (Predicate p : {Predicate::Cross, Predicate::Cover, Predicate::Overlap}) {
      const bool got = line.size() == 2 ? geometry::eval_predicate(p, geometry::Segment{line[0], line[1]}, f)
                                        : geometry::eval_predicate(p, line, f);
      if (got != testsupport::sampled_predicate(p, line, pv)) ++mismatched;
    }
  }
  int hulls = 0, hull_bad = 0;
  std::uniform_int_distribution<int> size(3, 60);
  while (hulls < 1000) {
    std::vector<Point> pts;
    const int n = size(rng);
    const double r = 10 + std::fabs(u(rng));
    for (int i = 0; i < n; ++i) pts.push_back(testsupport::in_disk(rng, {u(rng) / 10, u(rng) / 10}, r));
    ConvexPolygon h;
    try {
      h = geometry::convex_hull(pts);
    } catch (const Error&) {
      continue;  // collinear draw
    }
    ++hulls;
    if (testsupport::vertex_set(h) != testsupport::brute_hull(pts)) ++hull_bad;
  }
  return {mismatched == 0 && hull_bad == 0,
          fmt("%d predicate cases x 3 predicates, %d mismatches (%d grazing draws excluded); %d hulls, %d mismatches",
              evaluated, mismatched, skipped, hulls, hull_bad)};
}

Outcome index_equivalence() {
  Database db(testsupport::db_config());
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0, 5000), side(10, 2500);
  std::map<std::uint64_t, Point> truth;
  for (std::uint64_t k = 0; k < 1000; ++k) db.spawn(k, truth[k] = geometry::quantize({u(rng), u(rng)}));
  std::vector<std::future<std::int64_t>> fs;
  for (int round = 0; round < 5; ++round)
    for (std::uint64_t k = 0; k < 1000; ++k) fs.push_back(db.move_async(k, truth[k] = geometry::quantize({u(rng), u(rng)})));
  for (auto& f : fs) f.get();
  if (!db.quiesce()) return {false, "did not quiesce"};
  int bad = 0;
  std::size_t total = 0;
  for (int q = 0; q < 1000; ++q) {
    const Point c{u(rng), u(rng)};
    const double w = side(rng), h = side(rng);
    const Envelope r{geometry::quantize({c.x - w / 2, c.y - h / 2}), geometry::quantize({c.x + w / 2, c.y + h / 2})};
    std::vector<trace::Hit> expect;
    for (const auto& [k, p] : truth)
      if (p.x >= r.min.x && p.x <= r.max.x && p.y >= r.min.y && p.y <= r.max.y) expect.push_back({k, p});
    const auto res = db.find_actors(static_cast<std::uint64_t>(q) % 1000, r);
    total += expect.size();
    if (res.hits != expect) ++bad;
  }
  db.shutdown();
  return {bad == 0, fmt("1000 queries, %zu expected hits, %d mismatching answers", total, bad)};
}

Outcome snapshot_conservation() {
  auto cfg = testsupport::db_config(Semantics::Snapshot);
  cfg.snapshot_interval_ns = 200'000'000;
  Database db(cfg);
  constexpr std::uint64_t n = 1000;
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0, 5000), step(-800, 800);
  std::vector<Point> pos(n);
  for (std::uint64_t k = 0; k < n; ++k) db.spawn(k, pos[k] = {u(rng), u(rng)});
  db.start_snapshots();
  const auto t0 = Clock::now();
  while (db.context().stats.snapshot_rounds.load() < 10 && seconds_since(t0) < 120) {
    std::vector<std::future<std::int64_t>> fs;
    for (std::uint64_t k = 0; k < n; ++k) {
      pos[k] = {std::clamp(pos[k].x + step(rng), 0.0, 4999.0), std::clamp(pos[k].y + step(rng), 0.0, 4999.0)};
      fs.push_back(db.move_async(k, pos[k]));
    }
    for (auto& f : fs) f.get();
  }
  db.stop_snapshots();
  const bool quiet = db.quiesce();
  oracle::TraceView v(db.trace().meta(), db.trace().merged());
  std::map<std::uint64_t, int> cells_applied;
  for (const auto& e : v.events())
    if (e.kind == trace::EventKind::SnapshotApplied && e.actor.kind == kernel::ActorKind::SnapshotUpdate)
      cells_applied[e.as<trace::AppliedP>().epoch]++;
  std::uint64_t epochs = 0, census_bad = 0, partial = 0;
  for (const auto& [epoch, census] : v.round_census()) {
    ++epochs;
    if (census != n) ++census_bad;
    if (cells_applied[epoch] != cfg.grid.cells()) ++partial;
  }
  std::set<std::uint64_t> versions;
  for (grid::CellId c = 0; c < static_cast<grid::CellId>(cfg.grid.cells()); ++c)
    versions.insert(db.kernel().peek<spatial::IndexActor>(index_id(c))->index().version());
  const auto gaps = db.context().stats.version_gaps.load();
  const auto live = testsupport::live_entries(db).size();
  db.shutdown();
  return {quiet && epochs >= 10 && census_bad == 0 && partial == 0 && versions.size() == 1 && gaps == 0 && live == n,
          fmt("%llu epochs, %llu with census != %llu, %llu not applied by every cell, %zu distinct final versions, "
              "%llu VersionGap, %zu live entries",
              (unsigned long long)epochs, (unsigned long long)census_bad, (unsigned long long)n,
              (unsigned long long)partial, versions.size(), (unsigned long long)gaps, live)};
}

// Shards behave as separate servers: each worker pays a simulated service time per message.
bench::BenchConfig server_config(int shards, PlacementMode placement, std::uint64_t seed) {
  bench::BenchConfig c;
  c.semantics = Semantics::Freshness;
  c.placement = placement;
  c.shards = shards;
  c.workers_per_shard = 1;
  c.service_us = 200;
  c.remote_service_us = 100;
  c.latency_us = 200;
  c.wl.clients_per_shard = 4;
  c.wl.duration_s = 4;
  c.wl.seed = seed;
  return c;
}

double median_of(const std::function<double(std::uint64_t)>& f) {
  std::vector<double> v;
  for (int r = 1; r <= kMedianRuns; ++r) v.push_back(f(static_cast<std::uint64_t>(r)));
  return median(v);
}

Outcome scale_out() {
  // Load grows with the cluster: actors, area and cells scale with the shard count.
  auto tput = [](int shards, PlacementMode pl) {
    return median_of([=](std::uint64_t seed) {
      auto c = server_config(shards, pl, seed);
      c.wl.num_actors = 500 * static_cast<std::uint64_t>(shards);
      c.space_km2 = 25.0 * shards;
      c.cells = 16 * shards;
      c.finalize();
      return bench::run_benchmark(c).report.moves.per_s;
    });
  };
  const double one = tput(1, PlacementMode::Spatial);
  const double spatial = tput(4, PlacementMode::Spatial);
  const double random = tput(4, PlacementMode::Random);
  return {spatial >= kScaleOutMin * one && random <= spatial,
          fmt("moves/s 1 shard %.1f, 4 shards spatial %.1f (x%.2f), 4 shards random %.1f", one, spatial, spatial / one,
              random)};
}

Outcome reaction_latency() {
  auto p50 = [](Semantics s, double interval_ms) {
    auto c = sweep_config(s, 7);
    c.wl.query_ratio = 0.0;
    c.wl.duration_s = 12;
    c.snapshot_interval_ms = interval_ms;
    c.finalize();
    return bench::run_benchmark(c).report.reactions.p50_ms;
  };
  const double fresh = p50(Semantics::Freshness, 1000);
  const double snap1 = p50(Semantics::Snapshot, 1000);
  const double snap4 = p50(Semantics::Snapshot, 4000);
  return {fresh * kLatencyGap <= snap1 && snap1 < snap4,
          fmt("p50 reaction latency ms: fresh %.3f, snap(1 s) %.1f, snap(4 s) %.1f", fresh, snap1, snap4)};
}

Outcome query_move_cost() {
  std::vector<double> react;
  double q50 = 0, m50 = 0;
  for (double ratio : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    std::vector<bench::MetricsReport> runs;
    for (int r = 1; r <= kMedianRuns; ++r) {
      auto c = sweep_config(Semantics::Freshness, static_cast<std::uint64_t>(r));
      c.wl.query_ratio = ratio;
      c.wl.duration_s = 3;
      c.finalize();
      runs.push_back(bench::run_benchmark(c).report);
    }
    std::vector<double> rs, qs, ms;
    for (const auto& x : runs) {
      rs.push_back(x.reactions.per_s);
      qs.push_back(x.queries.p50_ms);
      ms.push_back(x.moves.p50_ms);
    }
    react.push_back(median(rs));
    if (ratio == 0.5) {
      q50 = median(qs);
      m50 = median(ms);
    }
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < react.size(); ++i) decreasing = decreasing && react[i] < react[i - 1];
  return {q50 > m50 && decreasing,
          fmt("at 50%% queries p50 query %.3f ms vs move %.3f ms; reactions/s over 0..100%%: %.1f %.1f %.1f %.1f %.1f",
              q50, m50, react[0], react[1], react[2], react[3], react[4])};
}

Outcome skew() {
  constexpr std::uint64_t n = 2000;
  std::vector<double> tput;
  for (std::uint64_t h : {n, n / 10, n / 100}) {
    tput.push_back(median_of([=](std::uint64_t seed) {
      auto c = server_config(4, PlacementMode::Spatial, seed);
      c.wl.model = workload::Model::Gaussian;
      c.wl.hotspots = h;
      c.wl.num_actors = n;
      c.space_km2 = 100;
      c.cells = 64;
      c.finalize();
      return bench::run_benchmark(c).report.moves.per_s;
    }));
  }
  return {tput[1] <= tput[0] && tput[2] <= tput[1],
          fmt("moves/s with %llu / %llu / %llu hotspots: %.1f %.1f %.1f", (unsigned long long)n,
              (unsigned long long)n / 10, (unsigned long long)n / 100, tput[0], tput[1], tput[2])};
}

// Bucketed nearest-edge distance, independent of the workload's own helper.
struct EdgeGrid {
  const workload::RoadGraph& g;
  double cell;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets;
  static std::int64_t key(std::int64_t x, std::int64_t y) { return x * 1'000'003 + y; }
  EdgeGrid(const workload::RoadGraph& graph, double c) : g(graph), cell(c) {
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      const Point a = g.nodes[g.edges[e].first], b = g.nodes[g.edges[e].second];
      for (auto x = std::int64_t(std::floor(std::min(a.x, b.x) / cell)) - 1; x <= std::floor(std::max(a.x, b.x) / cell) + 1; ++x)
        for (auto y = std::int64_t(std::floor(std::min(a.y, b.y) / cell)) - 1; y <= std::floor(std::max(a.y, b.y) / cell) + 1; ++y)
          buckets[key(x, y)].push_back(e);
    }
  }
  double distance(Point p) const {
    auto it = buckets.find(key(std::int64_t(std::floor(p.x / cell)), std::int64_t(std::floor(p.y / cell))));
    if (it == buckets.end()) return 1e300;
    double d = 1e300;
    for (std::size_t e : it->second)
      d = std::min(d, testsupport::seg_point_distance(p, g.nodes[g.edges[e].first], g.nodes[g.edges[e].second]));
    return d;
  }
};

Outcome road_network() {
  auto graph = std::make_shared<workload::RoadGraph>(workload::lattice_graph(20, 5000, 5000));
  const EdgeGrid edges(*graph, 250);
  std::string detail;
  bool pass = true;
  for (Semantics s : {Semantics::Freshness, Semantics::Snapshot}) {
    bench::BenchConfig c;
    c.semantics = s;
    c.wl.model = workload::Model::RoadNet;
    c.wl.num_actors = 2000;
    c.wl.duration_s = 30;
    c.finalize();
    auto res = bench::run_benchmark(c, graph);
    const auto moves = res.report.moves.total;
    std::uint64_t points = 0, off = 0;
    double worst = 0;
    for (const auto& e : res.events) {
      Point p;
      if (e.kind == trace::EventKind::Spawn) p = e.as<trace::SpawnP>().loc;
      else if (e.kind == trace::EventKind::MoveDone) p = e.as<trace::MoveP>().to;
      else continue;
      ++points;
      const double d = edges.distance(p);
      worst = std::max(worst, d);
      if (d > kRoadTolerance) ++off;
    }
    oracle::TraceView v(std::move(res.meta), std::move(res.events));
    const auto rep = oracle::verify(v);
    const std::uint64_t fails = rep.queries.failed + rep.reactions.failed;
    pass = pass && fails == 0 && off == 0 && moves > 0;
    detail += fmt("%s%s: %llu moves, %llu oracle fails, %llu/%llu points off-road (worst %.2e m)", detail.empty() ? "" : "; ",
                  s == Semantics::Freshness ? "fresh" : "snap", (unsigned long long)moves, (unsigned long long)fails,
                  (unsigned long long)off, (unsigned long long)points, worst);
    if (fails) detail += " first fail: " + (rep.queries.failed ? rep.queries.witnesses : rep.reactions.witnesses).front();
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"freshness oracle sweep", [] { return semantics_sweep(Semantics::Freshness); }}},
      {2, {"snapshot oracle sweep", [] { return semantics_sweep(Semantics::Snapshot); }}},
      {3, {"geometry oracles", geometry_oracles}},
      {4, {"index equivalence", index_equivalence}},
      {5, {"snapshot conservation", snapshot_conservation}},
      {6, {"scale-out trend", scale_out}},
      {7, {"reaction latency gap", reaction_latency}},
      {8, {"query/move cost ordering", query_move_cost}},
      {9, {"skew trend", skew}},
      {10, {"road network realism", road_network}},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, c] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s - %s\n", id, c.first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
