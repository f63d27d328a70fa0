// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "geometry.hpp"
#include "kernel.hpp"

namespace maodb::trace {

using geometry::Envelope;
using geometry::Point;
using geometry::Predicate;
using kernel::ActorId;

enum class EventKind : std::uint8_t {
  Spawn,
  MoveDone,
  QueryStart,
  QueryEnd,
  ReactionFired,
  ReactionSkipped,
  FlushSent,
  SnapshotApplied,
  SensingOn,
  SensingOff,
  Relayed,
};

const char* kind_name(EventKind k) noexcept;

enum class QueryStatus : std::uint8_t { Ok, Unstable, Error };

struct Hit {
  std::uint64_t key = 0;
  Point p;
  friend bool operator==(const Hit&, const Hit&) = default;
};

struct SpawnP {
  Point loc;
  double fence_side = 0.0;
  Point fence_offset;
};
struct MoveP {
  std::int64_t start = 0;  // when the actor began processing the move; event time is t_u
  Point from, to;
};
struct QueryStartP {
  std::uint64_t qid = 0;
  Envelope range;
};
struct QueryEndP {
  std::uint64_t qid = 0;
  QueryStatus status = QueryStatus::Ok;
  std::vector<std::uint64_t> versions;  // one per cell looked up, in cell order
  std::vector<Hit> results;
};
struct ReactionP {
  std::uint64_t mover = 0;
  std::int64_t mover_t_u = 0;
  std::int64_t fence_t_u = 0;  // t_u of the sensor's move that set the fence it evaluated
  std::optional<std::uint64_t> epoch;
};
struct FlushP {
  std::uint64_t epoch = 0;
  std::uint64_t count = 0;
  Point first, last;
};
struct AppliedP {
  std::uint64_t epoch = 0;
  std::uint64_t residents = 0;
};
struct RelayP {
  std::uint64_t mover = 0;
  std::int64_t t_u = 0;
  std::uint64_t cell = 0;
  std::uint64_t receivers = 0;
};
struct SensingP {
  Predicate predicate = Predicate::Cross;
};

using Payload = std::variant<std::monostate, SpawnP, MoveP, QueryStartP, QueryEndP, ReactionP, FlushP,
                             AppliedP, SensingP, RelayP>;

struct Event {
  std::int64_t time = 0;
  EventKind kind = EventKind::Spawn;
  ActorId actor;
  Payload payload;
  std::uint64_t seq = 0;  // tie-break for equal timestamps

  template <class T>
  const T& as() const {
    return std::get<T>(payload);
  }
};

// Append-only collector. Each thread appends to its own buffer; merged() sorts the union.
class Trace {
 public:
  Trace();
  ~Trace();
  Trace(const Trace&) = delete;
  Trace& operator=(const Trace&) = delete;

  void record(std::int64_t time, EventKind kind, ActorId actor, Payload payload = {});
  void set_meta(const std::string& key, const std::string& value);
  std::map<std::string, std::string> meta() const;

  // Sorted by (time, seq). Safe to call while recording continues; sees a prefix per thread.
  std::vector<Event> merged() const;
  std::size_t size() const;

  void write(const std::string& path) const;

 private:
  struct Buffer {
    std::mutex mu;
    std::vector<Event> events;
  };
  Buffer& local();

  std::uint64_t serial_;
  std::atomic<std::uint64_t> seq_{0};
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Buffer>> buffers_;
  std::map<std::string, std::string> meta_;
};

struct TraceFile {
  std::map<std::string, std::string> meta;
  std::vector<Event> events;
};

std::string format_event(const Event& e);
Event parse_event(const std::string& line, std::size_t line_no);
TraceFile read_trace(const std::string& path);
void write_trace(const std::string& path, const std::map<std::string, std::string>& meta,
                 const std::vector<Event>& events);

}  // namespace maodb::trace
