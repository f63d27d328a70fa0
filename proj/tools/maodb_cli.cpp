// SPDX-License-Identifier: Apache-2.0
// maodb: run benchmarks, check traces, generate road graphs.
#include <CLI11.hpp>

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "maodb/maodb.h"

namespace {

int report_error(maodb_status s) {
  std::fprintf(stderr, "error (%s): %s\n", maodb_status_name(s), maodb_last_error());
  return 2;
}

void print_report(const maodb_bench_report& r) {
  std::printf("%s\n", maodb_csv_header());
  std::vector<char> row(maodb_csv_row(&r, nullptr, 0) + 1);
  maodb_csv_row(&r, row.data(), row.size());
  std::printf("%s\n", row.data());
  std::fprintf(stderr, "config %s: %llu moves (%.1f/s), %llu queries, %llu reactions, %llu snapshot rounds\n",
               r.config_hash, static_cast<unsigned long long>(r.moves.total), r.moves.per_s,
               static_cast<unsigned long long>(r.queries.total), static_cast<unsigned long long>(r.reactions.total),
               static_cast<unsigned long long>(r.snapshot_rounds));
  if (r.unstable_queries) std::fprintf(stderr, "unstable queries: %llu\n", static_cast<unsigned long long>(r.unstable_queries));
  if (r.oracle_ran)
    std::fprintf(stderr, "oracle: %s (ambiguous %.4f)%s%s\n", r.oracle_ok ? "pass" : "FAIL", r.ambiguous_fraction,
                 r.oracle_ok ? "" : ": ", r.witness);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving actor database benchmark and trace checker"};
  app.require_subcommand(1);

  // run: every flag maps onto the config key of the same name.
  auto* run = app.add_subcommand("run", "run a closed-loop benchmark");
  std::string config_file;
  std::map<std::string, std::string> settings;
  run->add_option("--config", config_file, "key=value config file; flags override it")->check(CLI::ExistingFile);
  const std::vector<std::pair<std::string, std::string>> flags{
      {"semantics", "fresh|snap"},
      {"snapshot-interval-ms", "snapshot epoch length"},
      {"model", "uniform|gaussian|roadnet"},
      {"actors", "number of moving actors"},
      {"shards", "number of shards (power of two)"},
      {"space-km2", "area of the square space"},
      {"cells", "grid cells"},
      {"hotspots", "gaussian hotspot count"},
      {"sensing-pct", "fraction of sensing actors"},
      {"query-ratio", "fraction of requests that are queries"},
      {"duration-s", "run length in seconds"},
      {"seed", "workload seed"},
      {"out-csv", "append the metrics row to this file"},
      {"trace", "write the execution trace here"},
      {"placement", "spatial|random"},
      {"road-file", "road graph for the roadnet model"},
      {"clients-per-shard", "closed-loop clients per shard"},
      {"max-requests", "stop after this many requests instead of a duration"},
      {"service-us", "simulated per-message service time"},
      {"remote-service-us", "extra service time for cross-shard messages"},
      {"latency-us", "cross-shard message latency"},
      {"max-skew-us", "per-shard clock skew bound"},
      {"workers-per-shard", "worker threads per shard"},
  };
  for (const auto& [name, help] : flags) run->add_option("--" + name, settings[name], help);
  bool verify_run = false;
  run->add_flag("--verify", verify_run, "check the trace with the oracle after the run");

  auto* verify = app.add_subcommand("verify", "check a recorded trace");
  std::string trace_in;
  verify->add_option("trace", trace_in, "trace file")->required()->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-graph", "write a lattice road graph");
  std::size_t n = 20;
  double width = 5000, height = 5000;
  std::string graph_out;
  gen->add_option("-n,--nodes-per-side", n, "lattice nodes per side")->check(CLI::Range(2, 100000));
  gen->add_option("--width", width, "metres");
  gen->add_option("--height", height, "metres");
  gen->add_option("-o,--out", graph_out, "output path")->required();

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    maodb_bench_config* cfg = nullptr;
    if (auto s = maodb_bench_config_new(&cfg)) return report_error(s);
    auto s = config_file.empty() ? MAODB_OK : maodb_bench_config_load(cfg, config_file.c_str());
    for (const auto& [k, v] : settings) {
      if (s != MAODB_OK) break;
      if (!run->get_option("--" + k)->empty()) s = maodb_bench_config_set(cfg, k.c_str(), v.c_str());
    }
    if (s == MAODB_OK && verify_run) s = maodb_bench_config_set(cfg, "verify", "true");
    maodb_bench_report r{};
    if (s == MAODB_OK) s = maodb_bench_run(cfg, &r);
    maodb_bench_config_free(cfg);
    if (s != MAODB_OK) return report_error(s);
    print_report(r);
    return r.oracle_ran && !r.oracle_ok ? 1 : 0;
  }
  if (*verify) {
    maodb_verify_result v{};
    if (auto s = maodb_verify_trace(trace_in.c_str(), &v)) return report_error(s);
    std::printf("%s semantics: %s, %llu checked, %llu ambiguous (%.4f), %llu failed\n", v.semantics,
                v.ok ? "pass" : "FAIL", static_cast<unsigned long long>(v.checked),
                static_cast<unsigned long long>(v.ambiguous), v.ambiguous_fraction,
                static_cast<unsigned long long>(v.failed));
    if (!v.ok) std::printf("first failure: %s\n", v.witness);
    return v.ok ? 0 : 1;
  }
  if (*gen) {
    if (auto s = maodb_write_lattice(graph_out.c_str(), n, width, height)) return report_error(s);
    std::printf("wrote %zu nodes, %zu edges to %s\n", n * n, 2 * n * (n - 1), graph_out.c_str());
  }
  return 0;
}
