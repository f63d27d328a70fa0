// SPDX-License-Identifier: Apache-2.0
#include "maodb/maodb.h"

#include <cmath>
#include <cstring>
#include <string>

#include "bench.hpp"
#include "database.hpp"
#include "oracle.hpp"

using namespace maodb;

static_assert(static_cast<int>(ErrorCode::Internal) == MAODB_INTERNAL);
static_assert(static_cast<int>(ErrorCode::Io) == MAODB_IO);
static_assert(static_cast<int>(ErrorCode::SnapshotUnstable) == MAODB_SNAPSHOT_UNSTABLE);

struct maodb_db {
  std::unique_ptr<Database> db;
};

struct maodb_bench_config {
  bench::BenchConfig cfg;
};

namespace {

thread_local std::string last_error;

template <class F>
maodb_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return MAODB_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return static_cast<maodb_status>(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return MAODB_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " is null");
}

void copy(char* dst, std::size_t cap, const std::string& s) {
  std::strncpy(dst, s.c_str(), cap - 1);
  dst[cap - 1] = '\0';
}

void fill(maodb_verify_result* out, const oracle::Report& r) {
  *out = {};
  oracle::Tally all = r.queries;
  all += r.reactions;
  out->ok = r.ok();
  out->checked = all.checked;
  out->ambiguous = all.ambiguous;
  out->failed = all.failed;
  out->ambiguous_fraction = r.ambiguous_fraction();
  copy(out->semantics, sizeof out->semantics, r.semantics);
  if (!all.witnesses.empty()) copy(out->witness, sizeof out->witness, all.witnesses.front());
}

std::int64_t ms_to_ns(double ms) { return static_cast<std::int64_t>(std::llround(ms * 1e6)); }

bench::MetricsReport from_c(const maodb_bench_report& c) {
  bench::MetricsReport r;
  r.semantics = c.semantics;
  r.model = c.model;
  r.shards = c.shards;
  r.actors = c.actors;
  r.cells = c.cells;
  r.snapshot_interval_ms = c.snapshot_interval_ms;
  r.sensing_pct = c.sensing_pct;
  r.query_ratio = c.query_ratio;
  r.seed = c.seed;
  r.duration_s = c.duration_s;
  auto op = [](const maodb_op_metrics& m) { return bench::OpMetrics{m.total, m.per_s, m.p50_ms, m.p99_ms}; };
  r.moves = op(c.moves);
  r.queries = op(c.queries);
  r.reactions = op(c.reactions);
  r.snapshot_rounds = c.snapshot_rounds;
  r.query_retries = c.query_retries;
  r.ambiguous_fraction = c.ambiguous_fraction;
  return r;
}

}  // namespace

extern "C" {

const char* maodb_last_error(void) { return last_error.c_str(); }

const char* maodb_status_name(maodb_status s) { return to_string(static_cast<ErrorCode>(s)).data(); }

void maodb_db_config_default(maodb_db_config* c) {
  if (!c) return;
  *c = {};
  c->semantics = MAODB_FRESHNESS;
  c->placement = MAODB_PLACE_SPATIAL;
  c->shards = 1;
  c->workers_per_shard = 1;
  c->width = c->height = 5000.0;
  c->nx = c->ny = 5;
  c->fence_side = 1000.0;
  c->snapshot_interval_ms = 1000.0;
  c->seed = 1;
}

maodb_status maodb_db_open(const maodb_db_config* c, maodb_db** out) {
  return guarded([&] {
    need(c, "config");
    need(out, "out");
    *out = nullptr;
    if (c->semantics != MAODB_FRESHNESS && c->semantics != MAODB_SNAPSHOT)
      fail(ErrorCode::InvalidArgument, "unknown semantics");
    if (c->placement != MAODB_PLACE_SPATIAL && c->placement != MAODB_PLACE_RANDOM)
      fail(ErrorCode::InvalidArgument, "unknown placement");
    DbConfig d;
    d.grid = {{c->origin_x, c->origin_y}, c->width, c->height, c->nx, c->ny};
    d.semantics = c->semantics == MAODB_SNAPSHOT ? Semantics::Snapshot : Semantics::Freshness;
    d.placement = c->placement == MAODB_PLACE_RANDOM ? PlacementMode::Random : PlacementMode::Spatial;
    d.fence_side = c->fence_side;
    d.snapshot_interval_ns = ms_to_ns(c->snapshot_interval_ms);
    d.snapshot_jitter_ns = ms_to_ns(c->snapshot_jitter_ms);
    d.kernel.num_shards = c->shards;
    d.kernel.workers_per_shard = c->workers_per_shard;
    d.kernel.max_skew_ns = ms_to_ns(c->max_skew_ms);
    d.kernel.seed = c->seed;
    auto h = std::make_unique<maodb_db>();
    h->db = std::make_unique<Database>(d);
    *out = h.release();
  });
}

void maodb_db_close(maodb_db* db) { delete db; }

maodb_status maodb_spawn(maodb_db* db, uint64_t key, double x, double y, int64_t* t_u) {
  return guarded([&] {
    need(db, "db");
    const auto t = db->db->spawn(key, {x, y});
    if (t_u) *t_u = t;
  });
}

maodb_status maodb_move(maodb_db* db, uint64_t key, double x, double y, int64_t* t_u) {
  return guarded([&] {
    need(db, "db");
    const auto t = db->db->move(key, {x, y});
    if (t_u) *t_u = t;
  });
}

maodb_status maodb_find_actors(maodb_db* db, uint64_t key, double min_x, double min_y, double max_x, double max_y,
                               maodb_hit* hits, size_t cap, size_t* count) {
  return guarded([&] {
    need(db, "db");
    if (cap > 0) need(hits, "hits");
    const auto res = db->db->find_actors(key, {{min_x, min_y}, {max_x, max_y}});
    for (std::size_t i = 0; i < res.hits.size() && i < cap; ++i)
      hits[i] = {res.hits[i].key, res.hits[i].p.x, res.hits[i].p.y};
    if (count) *count = res.hits.size();
  });
}

maodb_status maodb_start_sensing(maodb_db* db, uint64_t key, int predicate, maodb_reaction_fn fn, void* user) {
  return guarded([&] {
    need(db, "db");
    if (predicate < MAODB_CROSS || predicate > MAODB_OVERLAP) fail(ErrorCode::InvalidArgument, "unknown predicate");
    ReactionFn cb;
    if (fn)
      cb = [fn, user](const ReactionEvent& e) {
        const maodb_reaction r{e.sensor, e.mover, e.mover_t_u, e.trigger_time,
                               e.epoch ? static_cast<int64_t>(*e.epoch) : -1};
        fn(user, &r);
      };
    db->db->start_sensing(key, static_cast<Predicate>(predicate), std::move(cb));
  });
}

maodb_status maodb_end_sensing(maodb_db* db, uint64_t key) {
  return guarded([&] {
    need(db, "db");
    db->db->end_sensing(key);
  });
}

maodb_status maodb_start_snapshots(maodb_db* db) {
  return guarded([&] {
    need(db, "db");
    db->db->start_snapshots();
  });
}

maodb_status maodb_stop_snapshots(maodb_db* db) {
  return guarded([&] {
    need(db, "db");
    db->db->stop_snapshots();
  });
}

maodb_status maodb_quiesce(maodb_db* db, double timeout_ms) {
  return guarded([&] {
    need(db, "db");
    if (!db->db->quiesce(ms_to_ns(timeout_ms))) fail(ErrorCode::Timeout, "system still busy after timeout");
  });
}

maodb_status maodb_write_trace(maodb_db* db, const char* path) {
  return guarded([&] {
    need(db, "db");
    need(path, "path");
    db->db->trace().write(path);
  });
}

uint64_t maodb_snapshot_rounds(const maodb_db* db) {
  return db ? db->db->context().stats.snapshot_rounds.load() : 0;
}

maodb_status maodb_verify_trace(const char* path, maodb_verify_result* out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const oracle::TraceView v(trace::read_trace(path));
    fill(out, oracle::verify(v));
  });
}

maodb_status maodb_verify_db(maodb_db* db, maodb_verify_result* out) {
  return guarded([&] {
    need(db, "db");
    need(out, "out");
    const oracle::TraceView v(db->db->trace().meta(), db->db->trace().merged());
    fill(out, oracle::verify(v));
  });
}

maodb_status maodb_bench_config_new(maodb_bench_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new maodb_bench_config{};
  });
}

void maodb_bench_config_free(maodb_bench_config* cfg) { delete cfg; }

maodb_status maodb_bench_config_set(maodb_bench_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

maodb_status maodb_bench_config_load(maodb_bench_config* cfg, const char* path) {
  return guarded([&] {
    need(cfg, "config");
    need(path, "path");
    cfg->cfg = bench::load_config_file(path, cfg->cfg);
  });
}

maodb_status maodb_bench_run(const maodb_bench_config* cfg, maodb_bench_report* out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    const auto res = bench::run_benchmark(cfg->cfg);
    const auto& r = res.report;
    *out = {};
    copy(out->semantics, sizeof out->semantics, r.semantics);
    copy(out->model, sizeof out->model, r.model);
    out->shards = r.shards;
    out->actors = r.actors;
    out->cells = r.cells;
    out->snapshot_interval_ms = r.snapshot_interval_ms;
    out->sensing_pct = r.sensing_pct;
    out->query_ratio = r.query_ratio;
    out->seed = r.seed;
    out->duration_s = r.duration_s;
    auto op = [](const bench::OpMetrics& m) { return maodb_op_metrics{m.total, m.per_s, m.p50_ms, m.p99_ms}; };
    out->moves = op(r.moves);
    out->queries = op(r.queries);
    out->reactions = op(r.reactions);
    out->snapshot_rounds = r.snapshot_rounds;
    out->query_retries = r.query_retries;
    out->unstable_queries = r.unstable_queries;
    out->ambiguous_fraction = r.ambiguous_fraction;
    out->oracle_ran = r.oracle_ran;
    out->oracle_ok = r.oracle_ok;
    if (!r.oracle_witnesses.empty()) copy(out->witness, sizeof out->witness, r.oracle_witnesses.front());
    copy(out->config_hash, sizeof out->config_hash, r.config_hash);
  });
}

const char* maodb_csv_header(void) {
  static const std::string header = [] {
    std::string h;
    for (const auto& c : bench::csv_columns()) h += (h.empty() ? "" : ",") + c;
    return h;
  }();
  return header.c_str();
}

size_t maodb_csv_row(const maodb_bench_report* r, char* buf, size_t cap) {
  if (!r) return 0;
  const std::string row = bench::csv_row(from_c(*r));
  if (buf && cap > 0) copy(buf, cap, row);
  return row.size();
}

maodb_status maodb_percentile(const double* samples, size_t n, double q, double* out) {
  return guarded([&] {
    need(out, "out");
    if (n > 0) need(samples, "samples");
    *out = bench::percentile(std::vector<double>(samples, samples + n), q);
  });
}

maodb_status maodb_write_lattice(const char* path, size_t n, double width, double height) {
  return guarded([&] {
    need(path, "path");
    workload::write_road_graph(workload::lattice_graph(n, width, height), path, width, height);
  });
}

maodb_status maodb_graph_info(const char* path, size_t* nodes, size_t* edges) {
  return guarded([&] {
    need(path, "path");
    const auto g = workload::load_road_graph(path);
    if (nodes) *nodes = g.nodes.size();
    if (edges) *edges = g.edges.size();
  });
}

}  // extern "C"
