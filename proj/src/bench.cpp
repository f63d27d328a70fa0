// SPDX-License-Identifier: Apache-2.0
#include "bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "database.hpp"
#include "oracle.hpp"

namespace maodb::bench {

using Clock = std::chrono::steady_clock;

namespace {

std::string norm(std::string k) {
  std::replace(k.begin(), k.end(), '-', '_');
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return k;
}

double num(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "bad numeric value '" + v + "' for " + key);
  }
}

std::uint64_t count(const std::string& key, const std::string& v) {
  const double d = num(key, v);
  if (d < 0 || d != std::floor(d)) fail(ErrorCode::InvalidArgument, "bad count '" + v + "' for " + key);
  return static_cast<std::uint64_t>(d);
}

bool flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorCode::InvalidArgument, "bad boolean '" + v + "' for " + key);
}

std::int64_t us_to_ns(double us) { return static_cast<std::int64_t>(std::llround(us * 1000.0)); }

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void BenchConfig::set(const std::string& raw_key, const std::string& v) {
  const std::string k = norm(raw_key);
  if (k == "semantics") semantics = semantics_from_string(v);
  else if (k == "model") wl.model = workload::model_from_string(v);
  else if (k == "placement") {
    if (v == "spatial") placement = PlacementMode::Spatial;
    else if (v == "random") placement = PlacementMode::Random;
    else fail(ErrorCode::InvalidArgument, "unknown placement '" + v + "' (spatial|random)");
  }
  else if (k == "actors" || k == "num_actors") wl.num_actors = count(k, v);
  else if (k == "shards") shards = static_cast<int>(count(k, v));
  else if (k == "workers_per_shard") workers_per_shard = static_cast<int>(count(k, v));
  else if (k == "snapshot_interval_ms") snapshot_interval_ms = num(k, v);
  else if (k == "snapshot_jitter_ms") snapshot_jitter_ms = num(k, v);
  else if (k == "space_km2") space_km2 = num(k, v);
  else if (k == "cells") cells = static_cast<int>(count(k, v));
  else if (k == "hotspots") wl.hotspots = count(k, v);
  else if (k == "sigma") wl.sigma = num(k, v);
  else if (k == "sensing_pct") wl.sensing_pct = num(k, v);
  else if (k == "query_ratio") wl.query_ratio = num(k, v);
  else if (k == "duration_s" || k == "duration") wl.duration_s = num(k, v);
  else if (k == "seed") wl.seed = count(k, v);
  else if (k == "max_speed") wl.max_speed = num(k, v);
  else if (k == "fence_side") wl.fence_side = num(k, v);
  else if (k == "query_side") wl.query_side = num(k, v);
  else if (k == "road_file") wl.road_file = v;
  else if (k == "fixed_speed") wl.fixed_speed = num(k, v);
  else if (k == "clients_per_shard") wl.clients_per_shard = static_cast<int>(count(k, v));
  else if (k == "step_s") wl.step_s = num(k, v);
  else if (k == "redraw_every") wl.redraw_every = count(k, v);
  else if (k == "max_requests") max_requests = count(k, v);
  else if (k == "warmup_s") warmup_s = num(k, v);
  else if (k == "service_us") service_us = num(k, v);
  else if (k == "remote_service_us") remote_service_us = num(k, v);
  else if (k == "latency_us") latency_us = num(k, v);
  else if (k == "max_skew_us") max_skew_us = num(k, v);
  else if (k == "verify") verify = flag(k, v);
  else if (k == "trace") trace_path = v;
  else if (k == "out_csv") out_csv = v;
  else fail(ErrorCode::InvalidArgument, "unknown setting '" + raw_key + "'");
}

void BenchConfig::finalize() {
  if (!(space_km2 > 0) || cells < 1) fail(ErrorCode::InvalidArgument, "space_km2 and cells must be positive");
  if (shards < 1 || workers_per_shard < 1) fail(ErrorCode::InvalidArgument, "shards and workers must be positive");
  if (!(snapshot_interval_ms > 0) || snapshot_jitter_ms < 0 || 2 * snapshot_jitter_ms >= snapshot_interval_ms)
    fail(ErrorCode::InvalidArgument, "snapshot interval must exceed twice its jitter");
  if (warmup_s < 0 || service_us < 0 || remote_service_us < 0 || latency_us < 0 || max_skew_us < 0)
    fail(ErrorCode::InvalidArgument, "timing settings must be non-negative");
  if (wl.space.width == 0.0) wl.space = grid::square_grid(std::sqrt(space_km2) * 1000.0, cells);
  wl.validate();
}

kernel::KernelConfig BenchConfig::kernel_config() const {
  kernel::KernelConfig k;
  k.num_shards = shards;
  k.workers_per_shard = workers_per_shard;
  k.cross_shard_latency_ns = us_to_ns(latency_us);
  k.service_ns = us_to_ns(service_us);
  k.remote_service_ns = us_to_ns(remote_service_us);
  k.max_skew_ns = us_to_ns(max_skew_us);
  k.seed = wl.seed;
  return k;
}

DbConfig BenchConfig::db_config() const {
  DbConfig d;
  d.grid = wl.space;
  d.semantics = semantics;
  d.placement = placement;
  d.fence_side = wl.fence_side;
  d.snapshot_interval_ns = us_to_ns(snapshot_interval_ms * 1000.0);
  d.snapshot_jitter_ns = us_to_ns(snapshot_jitter_ms * 1000.0);
  d.kernel = kernel_config();
  return d;
}

std::string BenchConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "semantics=" << to_string(semantics) << "\nmodel=" << workload::to_string(wl.model)
     << "\nplacement=" << (placement == PlacementMode::Spatial ? "spatial" : "random") << "\nactors=" << wl.num_actors
     << "\nshards=" << shards << "\nworkers_per_shard=" << workers_per_shard
     << "\nsnapshot_interval_ms=" << snapshot_interval_ms << "\nsnapshot_jitter_ms=" << snapshot_jitter_ms
     << "\nspace_km2=" << space_km2 << "\ncells=" << cells << "\nhotspots=" << wl.hotspots << "\nsigma=" << wl.sigma
     << "\nsensing_pct=" << wl.sensing_pct << "\nquery_ratio=" << wl.query_ratio << "\nduration_s=" << wl.duration_s
     << "\nseed=" << wl.seed << "\nmax_speed=" << wl.max_speed << "\nfence_side=" << wl.fence_side
     << "\nquery_side=" << wl.query_side << "\nroad_file=" << wl.road_file << "\nfixed_speed=" << wl.fixed_speed
     << "\nclients_per_shard=" << wl.clients_per_shard << "\nstep_s=" << wl.step_s
     << "\nredraw_every=" << wl.redraw_every << "\nmax_requests=" << max_requests << "\nservice_us=" << service_us
     << "\nremote_service_us=" << remote_service_us << "\nlatency_us=" << latency_us
     << "\nmax_skew_us=" << max_skew_us << '\n';
  return os.str();
}

BenchConfig load_config_file(const std::string& path, BenchConfig base) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config '" + path + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, path + ":" + std::to_string(n) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(e.code(), path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) fail(ErrorCode::EmptySamples, "percentile of an empty sample set");
  if (!(q > 0.0 && q <= 1.0)) fail(ErrorCode::InvalidArgument, "percentile rank must lie in (0,1]");
  std::sort(samples.begin(), samples.end());
  const double rank = std::ceil(q * static_cast<double>(samples.size()) - 1e-9);
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(samples.size()))) - 1;
  return samples[idx];
}

namespace {

OpMetrics summarize(std::uint64_t total, const std::vector<double>& lat_ms, double seconds) {
  OpMetrics m;
  m.total = total;
  m.per_s = seconds > 0 ? static_cast<double>(total) / seconds : 0.0;
  if (!lat_ms.empty()) {
    m.p50_ms = percentile(lat_ms, 0.5);
    m.p99_ms = percentile(lat_ms, 0.99);
  }
  return m;
}

struct ClientLog {
  std::uint64_t moves = 0, queries = 0, unstable = 0;
  std::vector<double> move_ms, query_ms;
};

}  // namespace

BenchResult run_benchmark(const BenchConfig& in, std::shared_ptr<const workload::RoadGraph> graph) {
  BenchConfig cfg = in;
  cfg.finalize();
  auto wl = std::make_shared<workload::Workload>(cfg.wl, std::move(graph));
  const auto& g = cfg.wl.space;
  const std::uint64_t n = cfg.wl.num_actors;

  std::vector<double> weights(static_cast<std::size_t>(g.cells()), 0.0);
  for (std::uint64_t i = 0; i < n; ++i) weights[grid::cell_of(g, geometry::quantize(wl->initial(i)))] += 1.0;
  Database db(cfg.db_config(), weights);

  const int shards = cfg.shards;
  const int cps = cfg.wl.clients_per_shard;
  const int clients = shards * cps;

  auto parallel = [&](auto&& body) {
    std::vector<std::thread> ts;
    for (int c = 0; c < clients; ++c) ts.emplace_back([&, c] { body(c); });
    for (auto& t : ts) t.join();
  };
  parallel([&](int c) {
    for (std::uint64_t i = static_cast<std::uint64_t>(c); i < n; i += static_cast<std::uint64_t>(clients))
      db.spawn(i, wl->initial(i));
  });

  std::atomic<std::uint64_t> reactions{0};
  const std::uint64_t sensors = wl->sensors();
  parallel([&](int c) {
    for (std::uint64_t i = static_cast<std::uint64_t>(c); i < sensors; i += static_cast<std::uint64_t>(clients))
      db.start_sensing(i, Predicate::Cross, [&reactions](const ReactionEvent&) { reactions++; });
  });
  db.quiesce();
  db.start_snapshots();

  // Each client drives a fixed share of its shard's actors, round robin.
  std::vector<std::vector<std::uint64_t>> owned(static_cast<std::size_t>(clients));
  {
    std::vector<std::uint64_t> seen(static_cast<std::size_t>(shards), 0);
    for (std::uint64_t i = 0; i < n; ++i) {
      const int s = db.shard_of_actor(i);
      const std::uint64_t j = seen[static_cast<std::size_t>(s)]++ % static_cast<std::uint64_t>(cps);
      owned[static_cast<std::size_t>(s) + static_cast<std::size_t>(j) * static_cast<std::size_t>(shards)].push_back(i);
    }
  }
  std::vector<std::uint64_t> quota(static_cast<std::size_t>(clients), 0);
  if (cfg.max_requests > 0) {
    std::vector<std::size_t> busy;
    for (int c = 0; c < clients; ++c)
      if (!owned[static_cast<std::size_t>(c)].empty()) busy.push_back(static_cast<std::size_t>(c));
    for (std::size_t k = 0; k < busy.size(); ++k)
      quota[busy[k]] = cfg.max_requests / busy.size() + (k < cfg.max_requests % busy.size() ? 1 : 0);
  }

  std::vector<ClientLog> logs(static_cast<std::size_t>(clients));
  const auto t0 = Clock::now();
  const auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.wl.duration_s));
  const auto warm = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.warmup_s));
  parallel([&](int c) {
    auto& mine = owned[static_cast<std::size_t>(c)];
    if (mine.empty()) return;
    ClientLog& log = logs[static_cast<std::size_t>(c)];
    workload::Rng rng = workload::actor_rng(cfg.wl.seed, static_cast<std::uint64_t>(c), 2);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::uint64_t q = quota[static_cast<std::size_t>(c)];
    for (std::uint64_t k = 0;; ++k) {
      if (cfg.max_requests > 0 ? k >= q : Clock::now() >= deadline) break;
      const std::uint64_t a = mine[k % mine.size()];
      const bool query = u01(rng) < cfg.wl.query_ratio;
      const auto s = Clock::now();
      if (query) {
        auto res = db.find_actors_async(a, wl->query_window(geometry::quantize(wl->position(a)))).get();
        log.queries++;
        if (res.status == trace::QueryStatus::Unstable) log.unstable++;
      } else {
        db.move(a, wl->next_move(a));
        log.moves++;
      }
      if (s >= warm) (query ? log.query_ms : log.move_ms).push_back(std::chrono::duration<double, std::milli>(Clock::now() - s).count());
    }
  });
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

  Context& ctx = db.context();
  if (cfg.semantics == Semantics::Snapshot) {
    // Let the epochs holding the last moves complete so their reactions are delivered.
    const std::uint64_t target = ctx.stats.snapshot_rounds.load() + 2;
    const auto limit = Clock::now() + std::chrono::milliseconds(static_cast<std::int64_t>(cfg.snapshot_interval_ms * 4) + 5000);
    while (ctx.stats.snapshot_rounds.load() < target && Clock::now() < limit)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    db.stop_snapshots();
  }
  db.quiesce();

  BenchResult out;
  out.meta = db.trace().meta();
  out.events = db.trace().merged();
  out.meta["model"] = workload::to_string(cfg.wl.model);
  out.meta["seed"] = std::to_string(cfg.wl.seed);

  MetricsReport& r = out.report;
  r.semantics = to_string(cfg.semantics);
  r.model = workload::to_string(cfg.wl.model);
  r.shards = shards;
  r.actors = n;
  r.cells = g.cells();
  r.snapshot_interval_ms = cfg.snapshot_interval_ms;
  r.sensing_pct = cfg.wl.sensing_pct;
  r.query_ratio = cfg.wl.query_ratio;
  r.seed = cfg.wl.seed;
  r.duration_s = elapsed;

  std::uint64_t moves = 0, queries = 0;
  std::vector<double> move_ms, query_ms, reaction_ms;
  for (auto& l : logs) {
    moves += l.moves;
    queries += l.queries;
    r.unstable_queries += l.unstable;
    move_ms.insert(move_ms.end(), l.move_ms.begin(), l.move_ms.end());
    query_ms.insert(query_ms.end(), l.query_ms.begin(), l.query_ms.end());
  }
  std::uint64_t fired = 0;
  for (const auto& e : out.events)
    if (e.kind == trace::EventKind::ReactionFired) {
      ++fired;
      const auto& p = e.as<trace::ReactionP>();
      reaction_ms.push_back(static_cast<double>(e.time - p.mover_t_u) / 1e6);
    }
  r.moves = summarize(moves, move_ms, elapsed);
  r.queries = summarize(queries, query_ms, elapsed);
  r.reactions = summarize(fired, reaction_ms, elapsed);
  r.snapshot_rounds = ctx.stats.snapshot_rounds.load();
  r.query_retries = ctx.stats.query_retries.load();
  r.config_hash = [&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016zx", std::hash<std::string>{}(cfg.canonical()));
    return std::string(buf);
  }();
  out.meta["config_hash"] = r.config_hash;

  if (cfg.verify) {
    const oracle::TraceView view(out.meta, out.events);
    const oracle::Report rep = oracle::verify(view);
    r.oracle_ran = true;
    r.oracle_ok = rep.ok();
    r.ambiguous_fraction = rep.ambiguous_fraction();
    r.oracle_witnesses = rep.queries.witnesses;
    r.oracle_witnesses.insert(r.oracle_witnesses.end(), rep.reactions.witnesses.begin(), rep.reactions.witnesses.end());
  }
  if (!cfg.trace_path.empty()) trace::write_trace(cfg.trace_path, out.meta, out.events);
  if (!cfg.out_csv.empty()) emit_csv(r, cfg.out_csv);
  return out;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "semantics",      "model",          "shards",         "actors",          "cells",
      "snapshot_interval_ms", "sensing_pct", "query_ratio", "seed",          "duration_s",
      "moves_total",    "moves_per_s",    "move_p50_ms",    "move_p99_ms",     "queries_total",
      "queries_per_s",  "query_p50_ms",   "query_p99_ms",   "reactions_total", "reactions_per_s",
      "reaction_p50_ms", "reaction_p99_ms", "snapshot_rounds", "query_retries", "ambiguous_fraction"};
  return cols;
}

std::string csv_row(const MetricsReport& r) {
  std::vector<std::string> f{r.semantics,
                             r.model,
                             std::to_string(r.shards),
                             std::to_string(r.actors),
                             std::to_string(r.cells),
                             fmt3(r.snapshot_interval_ms),
                             fmt3(r.sensing_pct),
                             fmt3(r.query_ratio),
                             std::to_string(r.seed),
                             fmt3(r.duration_s),
                             std::to_string(r.moves.total),
                             fmt3(r.moves.per_s),
                             fmt3(r.moves.p50_ms),
                             fmt3(r.moves.p99_ms),
                             std::to_string(r.queries.total),
                             fmt3(r.queries.per_s),
                             fmt3(r.queries.p50_ms),
                             fmt3(r.queries.p99_ms),
                             std::to_string(r.reactions.total),
                             fmt3(r.reactions.per_s),
                             fmt3(r.reactions.p50_ms),
                             fmt3(r.reactions.p99_ms),
                             std::to_string(r.snapshot_rounds),
                             std::to_string(r.query_retries),
                             fmt3(r.ambiguous_fraction)};
  std::string out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i) out += ',';
    out += f[i];
  }
  return out;
}

MetricsReport parse_csv_row(const std::string& row) {
  std::vector<std::string> f;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != csv_columns().size())
    fail(ErrorCode::InvalidArgument, "csv row has " + std::to_string(f.size()) + " fields, expected " +
                                         std::to_string(csv_columns().size()));
  std::size_t i = 0;
  auto s = [&] { return f[i++]; };
  auto d = [&] { return std::stod(f[i++]); };
  auto u = [&] { return static_cast<std::uint64_t>(std::stoull(f[i++])); };
  MetricsReport r;
  r.semantics = s();
  r.model = s();
  r.shards = static_cast<int>(u());
  r.actors = u();
  r.cells = static_cast<int>(u());
  r.snapshot_interval_ms = d();
  r.sensing_pct = d();
  r.query_ratio = d();
  r.seed = u();
  r.duration_s = d();
  for (OpMetrics* m : {&r.moves, &r.queries, &r.reactions}) {
    m->total = u();
    m->per_s = d();
    m->p50_ms = d();
    m->p99_ms = d();
  }
  r.snapshot_rounds = u();
  r.query_retries = u();
  r.ambiguous_fraction = d();
  return r;
}

void emit_csv(const MetricsReport& r, const std::string& path) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorCode::Io, "cannot open csv '" + path + "' for appending");
  if (fresh) {
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
  }
  out << csv_row(r) << '\n';
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

}  // namespace maodb::bench
