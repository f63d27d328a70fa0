// SPDX-License-Identifier: Apache-2.0
#include "trace.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace maodb::trace {

namespace {
std::atomic<std::uint64_t> next_serial{1};
thread_local std::vector<std::pair<std::uint64_t, void*>> tl_buffers;

constexpr const char* kKindNames[] = {"Spawn",         "MoveDone",        "QueryStart", "QueryEnd",
                                      "ReactionFired", "ReactionSkipped", "FlushSent",  "SnapshotApplied",
                                      "SensingOn",     "SensingOff",      "Relayed"};

const char* status_name(QueryStatus s) {
  switch (s) {
    case QueryStatus::Ok: return "ok";
    case QueryStatus::Unstable: return "unstable";
    case QueryStatus::Error: return "error";
  }
  return "?";
}

void put(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, " %.6f", v);
  out += buf;
}
void put(std::string& out, Point p) {
  put(out, p.x);
  put(out, p.y);
}
template <class I>
void put_int(std::string& out, I v) {
  out += ' ';
  out += std::to_string(v);
}

[[noreturn]] void bad(std::size_t line_no, const std::string& why) {
  fail(ErrorCode::IncompleteTrace, "trace line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

const char* kind_name(EventKind k) noexcept { return kKindNames[static_cast<std::size_t>(k)]; }

Trace::Trace() : serial_(next_serial++) {}
Trace::~Trace() = default;

Trace::Buffer& Trace::local() {
  for (auto& [serial, buf] : tl_buffers)
    if (serial == serial_) return *static_cast<Buffer*>(buf);
  auto b = std::make_unique<Buffer>();
  Buffer* raw = b.get();
  {
    std::lock_guard lk(mu_);
    buffers_.push_back(std::move(b));
  }
  tl_buffers.emplace_back(serial_, raw);
  return *raw;
}

void Trace::record(std::int64_t time, EventKind kind, ActorId actor, Payload payload) {
  Buffer& b = local();
  std::lock_guard lk(b.mu);
  b.events.push_back(Event{time, kind, actor, std::move(payload), seq_++});
}

void Trace::set_meta(const std::string& key, const std::string& value) {
  std::lock_guard lk(mu_);
  meta_[key] = value;
}

std::map<std::string, std::string> Trace::meta() const {
  std::lock_guard lk(mu_);
  return meta_;
}

std::vector<Event> Trace::merged() const {
  std::vector<Event> all;
  {
    std::lock_guard lk(mu_);
    for (const auto& b : buffers_) {
      std::lock_guard blk(b->mu);
      all.insert(all.end(), b->events.begin(), b->events.end());
    }
  }
  std::sort(all.begin(), all.end(),
            [](const Event& a, const Event& b) { return a.time != b.time ? a.time < b.time : a.seq < b.seq; });
  return all;
}

std::size_t Trace::size() const {
  std::lock_guard lk(mu_);
  std::size_t n = 0;
  for (const auto& b : buffers_) {
    std::lock_guard blk(b->mu);
    n += b->events.size();
  }
  return n;
}

void Trace::write(const std::string& path) const { write_trace(path, meta(), merged()); }

std::string format_event(const Event& e) {
  std::string out = std::to_string(e.time);
  out += ' ';
  out += kind_name(e.kind);
  out += ' ';
  out += kernel::to_string(e.actor);
  switch (e.kind) {
    case EventKind::Spawn: {
      const auto& p = e.as<SpawnP>();
      put(out, p.loc);
      put(out, p.fence_side);
      put(out, p.fence_offset);
      break;
    }
    case EventKind::MoveDone: {
      const auto& p = e.as<MoveP>();
      put_int(out, p.start);
      put(out, p.from);
      put(out, p.to);
      break;
    }
    case EventKind::QueryStart: {
      const auto& p = e.as<QueryStartP>();
      put_int(out, p.qid);
      put(out, p.range.min);
      put(out, p.range.max);
      break;
    }
    case EventKind::QueryEnd: {
      const auto& p = e.as<QueryEndP>();
      put_int(out, p.qid);
      out += ' ';
      out += status_name(p.status);
      put_int(out, p.versions.size());
      for (auto v : p.versions) put_int(out, v);
      put_int(out, p.results.size());
      for (const Hit& h : p.results) {
        put_int(out, h.key);
        put(out, h.p);
      }
      break;
    }
    case EventKind::ReactionFired:
    case EventKind::ReactionSkipped: {
      const auto& p = e.as<ReactionP>();
      put_int(out, p.mover);
      put_int(out, p.mover_t_u);
      put_int(out, p.fence_t_u);
      if (p.epoch)
        put_int(out, *p.epoch);
      else
        out += " -";
      break;
    }
    case EventKind::FlushSent: {
      const auto& p = e.as<FlushP>();
      put_int(out, p.epoch);
      put_int(out, p.count);
      put(out, p.first);
      put(out, p.last);
      break;
    }
    case EventKind::SnapshotApplied: {
      const auto& p = e.as<AppliedP>();
      put_int(out, p.epoch);
      put_int(out, p.residents);
      break;
    }
    case EventKind::SensingOn:
      out += ' ';
      out += geometry::to_string(e.as<SensingP>().predicate);
      break;
    case EventKind::SensingOff:
      break;
    case EventKind::Relayed: {
      const auto& p = e.as<RelayP>();
      put_int(out, p.mover);
      put_int(out, p.t_u);
      put_int(out, p.cell);
      put_int(out, p.receivers);
      break;
    }
  }
  return out;
}

Event parse_event(const std::string& line, std::size_t line_no) {
  std::istringstream in(line);
  Event e;
  std::string kind, actor;
  if (!(in >> e.time >> kind >> actor)) bad(line_no, "missing time, kind or actor");
  auto k = std::find(std::begin(kKindNames), std::end(kKindNames), kind);
  if (k == std::end(kKindNames)) bad(line_no, "unknown event kind '" + kind + "'");
  e.kind = static_cast<EventKind>(k - std::begin(kKindNames));
  const auto colon = actor.find(':');
  if (colon == std::string::npos) bad(line_no, "malformed actor '" + actor + "'");
  try {
    e.actor = {kernel::kind_from_name(actor.substr(0, colon)), std::stoull(actor.substr(colon + 1))};
  } catch (const std::exception&) {
    bad(line_no, "malformed actor '" + actor + "'");
  }
  auto need = [&](bool ok) {
    if (!ok) bad(line_no, std::string("truncated ") + kind + " payload");
  };
  switch (e.kind) {
    case EventKind::Spawn: {
      SpawnP p;
      need(static_cast<bool>(in >> p.loc.x >> p.loc.y >> p.fence_side >> p.fence_offset.x >> p.fence_offset.y));
      e.payload = p;
      break;
    }
    case EventKind::MoveDone: {
      MoveP p;
      need(static_cast<bool>(in >> p.start >> p.from.x >> p.from.y >> p.to.x >> p.to.y));
      e.payload = p;
      break;
    }
    case EventKind::QueryStart: {
      QueryStartP p;
      need(static_cast<bool>(in >> p.qid >> p.range.min.x >> p.range.min.y >> p.range.max.x >> p.range.max.y));
      e.payload = p;
      break;
    }
    case EventKind::QueryEnd: {
      QueryEndP p;
      std::string status;
      std::size_t nv = 0, nr = 0;
      need(static_cast<bool>(in >> p.qid >> status >> nv));
      if (status == "ok")
        p.status = QueryStatus::Ok;
      else if (status == "unstable")
        p.status = QueryStatus::Unstable;
      else if (status == "error")
        p.status = QueryStatus::Error;
      else
        bad(line_no, "unknown query status '" + status + "'");
      p.versions.resize(nv);
      for (auto& v : p.versions) need(static_cast<bool>(in >> v));
      need(static_cast<bool>(in >> nr));
      p.results.resize(nr);
      for (Hit& h : p.results) need(static_cast<bool>(in >> h.key >> h.p.x >> h.p.y));
      e.payload = std::move(p);
      break;
    }
    case EventKind::ReactionFired:
    case EventKind::ReactionSkipped: {
      ReactionP p;
      std::string epoch;
      need(static_cast<bool>(in >> p.mover >> p.mover_t_u >> p.fence_t_u >> epoch));
      if (epoch != "-") p.epoch = std::stoull(epoch);
      e.payload = p;
      break;
    }
    case EventKind::FlushSent: {
      FlushP p;
      need(static_cast<bool>(in >> p.epoch >> p.count >> p.first.x >> p.first.y >> p.last.x >> p.last.y));
      e.payload = p;
      break;
    }
    case EventKind::SnapshotApplied: {
      AppliedP p;
      need(static_cast<bool>(in >> p.epoch >> p.residents));
      e.payload = p;
      break;
    }
    case EventKind::SensingOn: {
      std::string pred;
      need(static_cast<bool>(in >> pred));
      e.payload = SensingP{geometry::predicate_from_string(pred)};
      break;
    }
    case EventKind::SensingOff:
      break;
    case EventKind::Relayed: {
      RelayP p;
      need(static_cast<bool>(in >> p.mover >> p.t_u >> p.cell >> p.receivers));
      e.payload = p;
      break;
    }
  }
  return e;
}

void write_trace(const std::string& path, const std::map<std::string, std::string>& meta,
                 const std::vector<Event>& events) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot open trace file '" + path + "' for writing");
  for (const auto& [k, v] : meta) out << "# " << k << ' ' << v << '\n';
  for (const Event& e : events) out << format_event(e) << '\n';
  if (!out) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

TraceFile read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open trace file '" + path + "'");
  TraceFile tf;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string key, value;
      h >> key;
      std::getline(h >> std::ws, value);
      if (!key.empty()) tf.meta[key] = value;
      continue;
    }
    Event e = parse_event(line, n);
    e.seq = tf.events.size();
    tf.events.push_back(std::move(e));
  }
  std::stable_sort(tf.events.begin(), tf.events.end(),
                   [](const Event& a, const Event& b) { return a.time < b.time; });
  return tf;
}

}  // namespace maodb::trace
