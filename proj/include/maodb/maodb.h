/* SPDX-License-Identifier: Apache-2.0 */
#ifndef MAODB_MAODB_H
#define MAODB_MAODB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(MAODB_BUILDING_LIBRARY)
#define MAODB_API __attribute__((visibility("default")))
#else
#define MAODB_API
#endif

typedef enum maodb_status {
  MAODB_OK = 0,
  MAODB_INVALID_ARGUMENT,
  MAODB_OUT_OF_BOUNDS,
  MAODB_DEGENERATE_INPUT,
  MAODB_INVALID_SHARD_COUNT,
  MAODB_KERNEL_STOPPED,
  MAODB_VERSION_GAP,
  MAODB_SNAPSHOT_UNSTABLE,
  MAODB_DUPLICATE_FLUSH,
  MAODB_STALE_ROUND,
  MAODB_INVALID_GRAPH,
  MAODB_INCOMPLETE_TRACE,
  MAODB_EMPTY_SAMPLES,
  MAODB_IO,
  MAODB_TIMEOUT,
  MAODB_INTERNAL
} maodb_status;

typedef enum maodb_semantics { MAODB_FRESHNESS = 0, MAODB_SNAPSHOT = 1 } maodb_semantics;
typedef enum maodb_predicate { MAODB_CROSS = 0, MAODB_COVER = 1, MAODB_OVERLAP = 2 } maodb_predicate;
typedef enum maodb_placement { MAODB_PLACE_SPATIAL = 0, MAODB_PLACE_RANDOM = 1 } maodb_placement;

/* Message describing the last failure on the calling thread; never NULL. */
MAODB_API const char* maodb_last_error(void);
MAODB_API const char* maodb_status_name(maodb_status s);

/* ---- database ---- */

typedef struct maodb_db maodb_db;

typedef struct maodb_db_config {
  int semantics;            /* maodb_semantics */
  int placement;            /* maodb_placement */
  int shards;               /* power of two, at most nx*ny */
  int workers_per_shard;
  double origin_x, origin_y, width, height; /* metres */
  int nx, ny;
  double fence_side;        /* metres */
  double snapshot_interval_ms;
  double snapshot_jitter_ms;
  double max_skew_ms;
  uint64_t seed;
} maodb_db_config;

/* 5 km x 5 km, 5 x 5 cells, one shard, freshness. */
MAODB_API void maodb_db_config_default(maodb_db_config* cfg);
MAODB_API maodb_status maodb_db_open(const maodb_db_config* cfg, maodb_db** out);
MAODB_API void maodb_db_close(maodb_db* db);

MAODB_API maodb_status maodb_spawn(maodb_db* db, uint64_t key, double x, double y, int64_t* t_u);
MAODB_API maodb_status maodb_move(maodb_db* db, uint64_t key, double x, double y, int64_t* t_u);

typedef struct maodb_hit {
  uint64_t key;
  double x, y;
} maodb_hit;

/* Writes at most `cap` hits and stores the full result size in *count. */
MAODB_API maodb_status maodb_find_actors(maodb_db* db, uint64_t key, double min_x, double min_y, double max_x,
                                         double max_y, maodb_hit* hits, size_t cap, size_t* count);

typedef struct maodb_reaction {
  uint64_t sensor;
  uint64_t mover;
  int64_t mover_t_u;
  int64_t trigger_time;
  int64_t epoch; /* -1 under freshness */
} maodb_reaction;

/* Called on the sensor's worker thread inside its turn. */
typedef void (*maodb_reaction_fn)(void* user, const maodb_reaction* r);

MAODB_API maodb_status maodb_start_sensing(maodb_db* db, uint64_t key, int predicate, maodb_reaction_fn fn,
                                           void* user);
MAODB_API maodb_status maodb_end_sensing(maodb_db* db, uint64_t key);
MAODB_API maodb_status maodb_start_snapshots(maodb_db* db);
MAODB_API maodb_status maodb_stop_snapshots(maodb_db* db);
/* MAODB_TIMEOUT if the system did not go idle in time. */
MAODB_API maodb_status maodb_quiesce(maodb_db* db, double timeout_ms);
MAODB_API maodb_status maodb_write_trace(maodb_db* db, const char* path);
MAODB_API uint64_t maodb_snapshot_rounds(const maodb_db* db);

/* ---- oracle ---- */

typedef struct maodb_verify_result {
  int ok;
  uint64_t checked;
  uint64_t ambiguous;
  uint64_t failed;
  double ambiguous_fraction;
  char semantics[8];
  char witness[512]; /* first failure, empty when ok */
} maodb_verify_result;

MAODB_API maodb_status maodb_verify_trace(const char* path, maodb_verify_result* out);
MAODB_API maodb_status maodb_verify_db(maodb_db* db, maodb_verify_result* out);

/* ---- benchmark ---- */

typedef struct maodb_bench_config maodb_bench_config;

typedef struct maodb_op_metrics {
  uint64_t total;
  double per_s, p50_ms, p99_ms;
} maodb_op_metrics;

typedef struct maodb_bench_report {
  char semantics[8];
  char model[16];
  int shards;
  uint64_t actors;
  int cells;
  double snapshot_interval_ms, sensing_pct, query_ratio;
  uint64_t seed;
  double duration_s;
  maodb_op_metrics moves, queries, reactions;
  uint64_t snapshot_rounds, query_retries, unstable_queries;
  double ambiguous_fraction;
  int oracle_ran, oracle_ok;
  char witness[512];
  char config_hash[20];
} maodb_bench_report;

MAODB_API maodb_status maodb_bench_config_new(maodb_bench_config** out);
MAODB_API void maodb_bench_config_free(maodb_bench_config* cfg);
/* Keys are the config-file names (dashes or underscores). */
MAODB_API maodb_status maodb_bench_config_set(maodb_bench_config* cfg, const char* key, const char* value);
MAODB_API maodb_status maodb_bench_config_load(maodb_bench_config* cfg, const char* path);
MAODB_API maodb_status maodb_bench_run(const maodb_bench_config* cfg, maodb_bench_report* out);

MAODB_API const char* maodb_csv_header(void);
/* Formats one CSV data row into buf (NUL terminated); returns the needed length excluding NUL. */
MAODB_API size_t maodb_csv_row(const maodb_bench_report* r, char* buf, size_t cap);
MAODB_API maodb_status maodb_percentile(const double* samples, size_t n, double q, double* out);

/* ---- road graphs ---- */

MAODB_API maodb_status maodb_write_lattice(const char* path, size_t n, double width, double height);
/* Node and edge counts of a road graph file. */
MAODB_API maodb_status maodb_graph_info(const char* path, size_t* nodes, size_t* edges);

#ifdef __cplusplus
}
#endif

#endif
