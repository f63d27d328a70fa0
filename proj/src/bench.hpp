// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "context.hpp"
#include "trace.hpp"
#include "workload.hpp"

namespace maodb::bench {

struct BenchConfig {
  workload::WorkloadConfig wl;
  Semantics semantics = Semantics::Freshness;
  PlacementMode placement = PlacementMode::Spatial;
  int shards = 1;
  int workers_per_shard = 1;
  double snapshot_interval_ms = 1000.0;
  double snapshot_jitter_ms = 0.0;
  double space_km2 = 25.0;
  int cells = 25;
  // Total requests across all clients; 0 runs for wl.duration_s instead.
  std::uint64_t max_requests = 0;
  double warmup_s = 0.0;
  // Simulated server costs, microseconds.
  double service_us = 0.0;
  double remote_service_us = 0.0;
  double latency_us = 0.0;
  double max_skew_us = 0.0;
  bool verify = false;
  std::string trace_path;
  std::string out_csv;

  // Sets one field from its config-file / flag name; dashes and underscores are interchangeable.
  void set(const std::string& key, const std::string& value);
  void finalize();  // derives wl.space from space_km2/cells if unset, checks ranges
  kernel::KernelConfig kernel_config() const;
  DbConfig db_config() const;
  std::string canonical() const;
};

BenchConfig load_config_file(const std::string& path, BenchConfig base = {});

struct OpMetrics {
  std::uint64_t total = 0;
  double per_s = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

struct MetricsReport {
  std::string semantics;
  std::string model;
  int shards = 1;
  std::uint64_t actors = 0;
  int cells = 0;
  double snapshot_interval_ms = 0.0;
  double sensing_pct = 0.0;
  double query_ratio = 0.0;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  OpMetrics moves, queries, reactions;
  std::uint64_t snapshot_rounds = 0;
  std::uint64_t query_retries = 0;
  double ambiguous_fraction = 0.0;

  // Not part of the CSV.
  std::uint64_t unstable_queries = 0;
  std::string config_hash;
  bool oracle_ran = false;
  bool oracle_ok = true;
  std::vector<std::string> oracle_witnesses;
};

struct BenchResult {
  MetricsReport report;
  std::map<std::string, std::string> meta;
  std::vector<trace::Event> events;
};

BenchResult run_benchmark(const BenchConfig& cfg, std::shared_ptr<const workload::RoadGraph> graph = nullptr);

// Nearest-rank percentile.
double percentile(std::vector<double> samples, double q);

const std::vector<std::string>& csv_columns();
std::string csv_row(const MetricsReport& r);
MetricsReport parse_csv_row(const std::string& row);
// Appends one data row, writing the header first when the file is new or empty.
void emit_csv(const MetricsReport& r, const std::string& path);

}  // namespace maodb::bench
