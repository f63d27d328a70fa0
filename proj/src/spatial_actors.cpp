// SPDX-License-Identifier: Apache-2.0
#include "spatial_actors.hpp"

#include "moving_actor.hpp"

namespace maodb::spatial {

void IndexActor::upsert(std::uint64_t key, Point p) { index_.upsert(key, p); }

void IndexActor::depart(std::uint64_t key) {
  const std::int64_t now = ctx_.kernel->now();
  index_.mark_departed(key, now);
  index_.purge_departed(now - ctx_.cfg.departed_grace_ns);
}

LookupReply IndexActor::lookup(const Envelope& window) const {
  return {index_.lookup(window), index_.version()};
}

ApplyReply IndexActor::apply_batch(const std::vector<BatchOp>& ops, std::uint64_t new_version) {
  try {
    index_.apply_batch(ops, new_version);
    return {};
  } catch (const Error& e) {
    ctx_.stats.version_gaps++;
    return {false, e.what()};
  }
}

std::size_t MonitorActor::relay(const MoveUpdate& u) {
  const std::size_t n = kernel().publish(cell_, [u](kernel::Actor& a) {
    static_cast<moving::MovingActor&>(a).on_update(u);
  });
  // Stamped after the subscriber set was read, so the oracle can order it against fence changes.
  ctx_.record(kernel().now(), trace::EventKind::Relayed, id(), trace::RelayP{u.mover, u.t_u, cell_, n});
  return n;
}

std::size_t MonitorActor::relay_batch(EpochBatchPtr batch) {
  retained_[batch->epoch].push_back(batch);
  while (retained_.size() > static_cast<std::size_t>(ctx_.cfg.monitor_retained_epochs))
    retained_.erase(retained_.begin());
  return kernel().publish(cell_, [batch](kernel::Actor& a) {
    static_cast<moving::MovingActor&>(a).on_batch(batch);
  });
}

std::size_t MonitorActor::replay(ActorId who) {
  std::size_t n = 0;
  for (const auto& [epoch, batches] : retained_)
    for (const EpochBatchPtr& b : batches) {
      kernel().tell_as<moving::MovingActor>(who, [b](moving::MovingActor& m) { m.on_batch(b); });
      ++n;
    }
  return n;
}

}  // namespace maodb::spatial
