// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "context.hpp"
#include "versioned_index.hpp"

namespace maodb::snapshot {

enum class Phase : std::uint8_t { Collecting, Exchanging, Applying, Idle };

struct Arrival {
  std::uint64_t key = 0;
  Point p;
};

class SnapshotUpdateActor : public kernel::Actor {
 public:
  SnapshotUpdateActor(Context& ctx, CellId cell) : ctx_(ctx), cell_(cell) {}

  void register_resident(std::uint64_t key);
  void ingest(std::uint64_t key, std::uint64_t epoch, Itinerary iti);
  void activated(std::uint64_t epoch);
  void expect(std::uint64_t epoch, std::vector<CellId> senders);
  void slice(std::uint64_t epoch, CellId from, std::vector<Arrival> arrivals);

  Phase phase() const noexcept { return phase_; }
  std::uint64_t collecting() const noexcept { return epoch_; }
  const std::unordered_set<std::uint64_t>& residents() const noexcept { return residents_; }

 private:
  bool active(std::uint64_t epoch) const;
  void try_barrier();
  void try_apply();
  void request_activation();

  Context& ctx_;
  CellId cell_;
  Phase phase_ = Phase::Collecting;
  std::uint64_t epoch_ = 1;  // epoch being collected or exchanged
  std::unordered_set<std::uint64_t> residents_;
  std::uint64_t resident_active_for_ = 0;
  std::set<std::uint64_t> activated_for_;
  bool activation_pending_ = false;
  // Flushes by epoch; later epochs are parked until the current one is applied.
  std::map<std::uint64_t, std::map<std::uint64_t, Itinerary>> received_;
  std::unordered_map<std::uint64_t, std::uint64_t> last_ingested_;  // newest epoch flushed per actor
  std::map<CellId, std::vector<Arrival>> outbound_;
  std::vector<spatial::BatchOp> local_ops_;
  std::vector<std::uint64_t> stayers_;
  std::optional<std::vector<CellId>> expected_;
  std::map<std::uint64_t, std::map<CellId, std::vector<Arrival>>> inbound_;
};

class ControllerActor : public kernel::Actor {
 public:
  explicit ControllerActor(Context& ctx) : ctx_(ctx) {}

  void activate(CellId cell);
  void announce(std::uint64_t epoch, CellId cell, std::vector<CellId> destinations);
  void done(std::uint64_t epoch, CellId cell, std::uint64_t residents);

  std::uint64_t round() const noexcept { return round_; }
  bool announcing() const noexcept { return announcing_; }
  const std::set<CellId>& active_cells() const noexcept { return active_; }

 private:
  void try_close_announcements();

  Context& ctx_;
  std::uint64_t round_ = 1;
  bool announcing_ = true;
  std::set<CellId> active_;
  std::set<CellId> next_active_;
  std::map<std::uint64_t, std::map<CellId, std::vector<CellId>>> announced_;
  std::map<CellId, std::uint64_t> done_;
};

// Reply table for one round: for every cell, the cells that named it as a destination.
std::vector<std::vector<CellId>> transpose(const std::map<CellId, std::vector<CellId>>& announcements,
                                           std::size_t num_cells);

}  // namespace maodb::snapshot
