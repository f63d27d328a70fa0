// SPDX-License-Identifier: Apache-2.0
#include "snapshot.hpp"

#include <algorithm>

#include "spatial_actors.hpp"

namespace maodb::snapshot {

using kernel::Responder;
using spatial::ApplyReply;
using spatial::BatchOp;
using spatial::IndexActor;

std::vector<std::vector<CellId>> transpose(const std::map<CellId, std::vector<CellId>>& announcements,
                                           std::size_t num_cells) {
  std::vector<std::vector<CellId>> senders(num_cells);
  for (const auto& [from, dests] : announcements)
    for (CellId d : dests) {
      if (d >= num_cells) fail(ErrorCode::InvalidArgument, "announcement names an unknown cell");
      senders[d].push_back(from);
    }
  return senders;
}

bool SnapshotUpdateActor::active(std::uint64_t epoch) const {
  return resident_active_for_ == epoch || activated_for_.contains(epoch);
}

void SnapshotUpdateActor::request_activation() {
  if (activation_pending_) return;
  activation_pending_ = true;
  const CellId c = cell_;
  kernel().tell_as<ControllerActor>(controller_id(), [c](ControllerActor& ctl) { ctl.activate(c); });
}

void SnapshotUpdateActor::register_resident(std::uint64_t key) {
  residents_.insert(key);
  if (resident_active_for_ != epoch_) {
    resident_active_for_ = epoch_;
    request_activation();
  }
}

void SnapshotUpdateActor::activated(std::uint64_t epoch) {
  activation_pending_ = false;
  activated_for_.insert(epoch);
  // Newcomers parked for epochs this cell sits out roll forward into the activated one.
  for (auto it = received_.begin(); it != received_.end() && it->first < epoch;) {
    if (active(it->first) || (it->first == epoch_ && phase_ != Phase::Collecting)) {
      ++it;
      continue;
    }
    auto& dst = received_[epoch];
    for (auto& [key, iti] : it->second) dst.emplace(key, std::move(iti));
    it = received_.erase(it);
  }
  try_barrier();
}

void SnapshotUpdateActor::ingest(std::uint64_t key, std::uint64_t epoch, Itinerary iti) {
  if (iti.empty()) fail(ErrorCode::InvalidArgument, "empty itinerary flushed");
  auto& last = last_ingested_[key];
  if (epoch <= last) {
    ctx_.stats.duplicate_flushes++;
    return;
  }
  last = epoch;
  // A flush for an epoch this cell already closed (a newcomer racing the barrier) rolls into the
  // epoch being collected, merged with anything already there.
  std::uint64_t target = std::max(epoch, epoch_);
  if (target == epoch_ && phase_ != Phase::Collecting) ++target;
  auto& slot = received_[target];
  if (auto it = slot.find(key); it != slot.end()) {
    Itinerary& mine = it->second;
    for (std::size_t i = 0; i < iti.size(); ++i)
      if (iti.timestamps[i] > mine.timestamps.back()) mine.append(iti.points[i], iti.timestamps[i]);
  } else {
    slot.emplace(key, std::move(iti));
  }
  if (!residents_.contains(key) && !active(target)) request_activation();
  try_barrier();
}

void SnapshotUpdateActor::try_barrier() {
  if (phase_ != Phase::Collecting || !active(epoch_)) return;
  auto& got = received_[epoch_];
  for (std::uint64_t r : residents_)
    if (!got.contains(r)) return;

  const auto& g = ctx_.cfg.grid;
  std::map<CellId, std::shared_ptr<EpochBatch>> batches;
  outbound_.clear();
  local_ops_.clear();
  stayers_.clear();
  for (const auto& [key, iti] : got) {
    std::set<CellId> spanned{grid::cell_of(g, iti.points.front())};
    for (std::size_t i = 1; i < iti.size(); ++i)
      for (CellId c : grid::cells_of_segment(g, {iti.points[i - 1], iti.points[i]})) spanned.insert(c);
    for (CellId c : spanned) {
      auto& b = batches[c];
      if (!b) b = std::make_shared<EpochBatch>(EpochBatch{epoch_, cell_, {}});
      b->items.push_back({key, iti});
    }
    const Point last = iti.points.back();
    const CellId dest = grid::cell_of(g, last);
    if (dest == cell_) {
      local_ops_.push_back({key, last});
      stayers_.push_back(key);
    } else {
      outbound_[dest].push_back({key, last});
      if (residents_.contains(key)) local_ops_.push_back({key, std::nullopt});
    }
  }
  for (auto& [c, b] : batches) {
    EpochBatchPtr shared = std::move(b);
    kernel().tell_as<spatial::MonitorActor>(monitor_id(c),
                                            [shared](spatial::MonitorActor& m) { m.relay_batch(shared); });
  }
  std::vector<CellId> dests;
  for (const auto& kv : outbound_) dests.push_back(kv.first);
  const std::uint64_t e = epoch_;
  const CellId me = cell_;
  kernel().tell_as<ControllerActor>(controller_id(), [e, me, dests = std::move(dests)](ControllerActor& c) mutable {
    c.announce(e, me, std::move(dests));
  });
  phase_ = Phase::Exchanging;
}

void SnapshotUpdateActor::expect(std::uint64_t epoch, std::vector<CellId> senders) {
  if (epoch != epoch_) {
    ctx_.stats.stale_rounds++;
    return;
  }
  if (phase_ == Phase::Collecting) {
    // Not part of this round's barrier: no flush of ours is applied now, newcomers wait a round.
    outbound_.clear();
    local_ops_.clear();
    stayers_.assign(residents_.begin(), residents_.end());
    if (auto it = received_.find(epoch_); it != received_.end()) {
      auto& dst = received_[epoch_ + 1];
      for (auto& [key, iti] : it->second) dst.emplace(key, std::move(iti));
      received_.erase(epoch_);
    }
    phase_ = Phase::Exchanging;
  }
  for (const auto& [dest, arrivals] : outbound_) {
    const std::uint64_t e = epoch_;
    const CellId me = cell_;
    kernel().tell_as<SnapshotUpdateActor>(sua_id(dest), [e, me, arrivals](SnapshotUpdateActor& s) mutable {
      s.slice(e, me, std::move(arrivals));
    });
  }
  expected_ = std::move(senders);
  try_apply();
}

void SnapshotUpdateActor::slice(std::uint64_t epoch, CellId from, std::vector<Arrival> arrivals) {
  inbound_[epoch][from] = std::move(arrivals);
  try_apply();
}

void SnapshotUpdateActor::try_apply() {
  if (phase_ != Phase::Exchanging || !expected_) return;
  auto& in = inbound_[epoch_];
  for (CellId s : *expected_)
    if (!in.contains(s)) return;

  std::vector<BatchOp> ops = local_ops_;
  std::unordered_set<std::uint64_t> next(stayers_.begin(), stayers_.end());
  for (const auto& [from, arrivals] : in)
    for (const Arrival& a : arrivals) {
      ops.push_back({a.key, a.p});
      next.insert(a.key);
    }
  phase_ = Phase::Applying;
  const std::uint64_t e = epoch_;
  kernel().ask<ApplyReply, IndexActor, SnapshotUpdateActor>(
      index_id(cell_),
      [ops = std::move(ops), e](IndexActor& ia, Responder<ApplyReply> r) { r.reply(ia.apply_batch(ops, e)); },
      [e, next = std::move(next)](SnapshotUpdateActor& self, ApplyReply rep) mutable {
        if (!rep.ok) fail(ErrorCode::VersionGap, rep.error);
        self.residents_ = std::move(next);
        self.resident_active_for_ = self.residents_.empty() ? 0 : e + 1;
        const std::uint64_t count = self.residents_.size();
        self.ctx_.record(self.kernel().now(), trace::EventKind::SnapshotApplied, self.id(),
                         trace::AppliedP{e, count});
        const CellId me = self.cell_;
        self.kernel().tell_as<ControllerActor>(controller_id(),
                                               [e, me, count](ControllerActor& c) { c.done(e, me, count); });
        self.received_.erase(e);
        self.inbound_.erase(e);
        self.expected_.reset();
        self.activated_for_.erase(self.activated_for_.begin(), self.activated_for_.upper_bound(e));
        self.phase_ = Phase::Collecting;
        self.epoch_ = e + 1;
        self.try_barrier();
      });
}

void ControllerActor::activate(CellId cell) {
  const std::uint64_t epoch = announcing_ ? round_ : round_ + 1;
  (announcing_ ? active_ : next_active_).insert(cell);
  kernel().tell_as<SnapshotUpdateActor>(sua_id(cell), [epoch](SnapshotUpdateActor& s) { s.activated(epoch); });
  try_close_announcements();
}

void ControllerActor::announce(std::uint64_t epoch, CellId cell, std::vector<CellId> destinations) {
  if (epoch < round_) {
    ctx_.stats.stale_rounds++;
    return;
  }
  announced_[epoch][cell] = std::move(destinations);
  if (epoch == round_) try_close_announcements();
}

void ControllerActor::try_close_announcements() {
  if (!announcing_ || active_.empty()) return;
  auto& got = announced_[round_];
  for (CellId c : active_)
    if (!got.contains(c)) return;
  const std::size_t n = static_cast<std::size_t>(ctx_.cfg.grid.cells());
  auto senders = transpose(got, n);
  // Every cell applies every round so that all index versions stay equal.
  for (CellId c = 0; c < n; ++c) {
    const std::uint64_t e = round_;
    kernel().tell_as<SnapshotUpdateActor>(sua_id(c), [e, s = std::move(senders[c])](SnapshotUpdateActor& u) mutable {
      u.expect(e, std::move(s));
    });
  }
  announcing_ = false;
  done_.clear();
}

void ControllerActor::done(std::uint64_t epoch, CellId cell, std::uint64_t residents) {
  if (epoch != round_ || announcing_) {
    ctx_.stats.stale_rounds++;
    return;
  }
  done_[cell] = residents;
  if (residents > 0) next_active_.insert(cell);
  if (done_.size() < static_cast<std::size_t>(ctx_.cfg.grid.cells())) return;
  std::uint64_t total = 0;
  for (const auto& kv : done_) total += kv.second;
  ctx_.record(kernel().now(), trace::EventKind::SnapshotApplied, id(), trace::AppliedP{round_, total});
  ctx_.stats.snapshot_rounds++;
  announced_.erase(round_);
  ++round_;
  active_ = std::move(next_active_);
  next_active_.clear();
  announcing_ = true;
  try_close_announcements();
}

}  // namespace maodb::snapshot
