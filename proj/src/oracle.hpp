// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "geometry.hpp"
#include "trace.hpp"

// Offline checkers for recorded runs. Everything here is single threaded over a sorted trace.
namespace maodb::oracle {

using geometry::ConvexPolygon;
using geometry::Point;
using geometry::Predicate;
using trace::Event;

enum class Status : std::uint8_t { Pass, Fail, Ambiguous };
const char* to_string(Status s) noexcept;

struct Verdict {
  Status status = Status::Pass;
  std::string witness;  // set whenever status == Fail
};

// Aggregate over many individual decisions. Ambiguous decisions pass but are counted.
struct Tally {
  std::uint64_t checked = 0;
  std::uint64_t ambiguous = 0;
  std::uint64_t failed = 0;
  std::vector<std::string> witnesses;  // first few failures

  void fail(std::string why);
  bool ok() const noexcept { return failed == 0; }
  double ambiguous_fraction() const noexcept {
    return checked ? static_cast<double>(ambiguous) / static_cast<double>(checked) : 0.0;
  }
  Verdict verdict() const;
  Tally& operator+=(const Tally& o);
};

// Indexed view of one trace.
class TraceView {
 public:
  TraceView(std::map<std::string, std::string> meta, std::vector<Event> events);
  explicit TraceView(const trace::TraceFile& tf) : TraceView(tf.meta, tf.events) {}

  struct Loc {
    std::int64_t t = 0;      // t_u (spawn time for the first entry)
    std::int64_t start = 0;  // processing start; spawns use INT64_MIN since it is not recorded
    Point p;
  };
  struct SensingEv {
    std::int64_t t = 0;
    bool on = false;
    Predicate predicate = Predicate::Cross;
  };
  struct Flush {
    std::uint64_t epoch = 0;
    std::int64_t t = 0;
    std::uint64_t count = 0;
    Point first, last;
  };
  struct Actor {
    bool spawned = false;
    Point offset;
    double side = 0.0;
    std::vector<Loc> locs;
    std::vector<SensingEv> sensing;
    std::vector<Flush> flushes;  // ascending epoch

    // Index of the last location with t <= time, or -1.
    std::ptrdiff_t at(std::int64_t time) const;
    // Index of the last location with t < time, or -1.
    std::ptrdiff_t before(std::int64_t time) const;
    ConvexPolygon fence(std::size_t i) const;
    const Flush* flush(std::uint64_t epoch) const;
  };
  struct Query {
    std::uint64_t qid = 0;
    std::uint64_t actor = 0;
    std::int64_t t_s = 0;
    geometry::Envelope range;
    bool ended = false;
    std::int64_t t_e = 0;
    trace::QueryEndP end;
  };

  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }
  const std::vector<Event>& events() const noexcept { return events_; }
  const std::map<std::uint64_t, Actor>& actors() const noexcept { return actors_; }
  const Actor* actor(std::uint64_t key) const;
  const std::map<std::uint64_t, Query>& queries() const noexcept { return queries_; }
  const std::map<std::uint64_t, std::int64_t>& rounds_done() const noexcept { return rounds_; }
  const std::map<std::uint64_t, std::uint64_t>& round_census() const noexcept { return census_; }
  std::optional<std::int64_t> relay_max(std::uint64_t mover, std::int64_t t_u) const;
  std::int64_t snapshot_start() const noexcept { return snapshot_start_; }
  bool is_joiner(std::uint64_t key) const;

 private:
  std::map<std::string, std::string> meta_;
  std::vector<Event> events_;
  std::map<std::uint64_t, Actor> actors_;
  std::map<std::uint64_t, Query> queries_;
  std::map<std::uint64_t, std::int64_t> rounds_;
  std::map<std::uint64_t, std::uint64_t> census_;
  std::map<std::pair<std::uint64_t, std::int64_t>, std::int64_t> relays_;
  std::int64_t snapshot_start_ = 0;
};

Verdict check_fresh_query(const TraceView& v, std::uint64_t qid, Tally* tally = nullptr);
Tally check_fresh_queries(const TraceView& v);
Tally check_fresh_reactions(const TraceView& v);
Tally check_snapshot_contents(const TraceView& v);
Tally check_snap_reactions(const TraceView& v);

struct Report {
  std::string semantics;
  Tally queries;
  Tally reactions;
  bool ok() const noexcept { return queries.ok() && reactions.ok(); }
  double ambiguous_fraction() const noexcept;
};
// Runs the checkers matching the trace's semantics.
Report verify(const TraceView& v);

// Canned perturbations of a passing trace; nullopt when the trace offers no suitable spot.
std::optional<std::vector<Event>> drop_mandated_reaction(const TraceView& v);
std::optional<std::vector<Event>> inject_spurious_reaction(const TraceView& v);
std::optional<std::vector<Event>> shift_visible_update(const TraceView& v);

}  // namespace maodb::oracle
