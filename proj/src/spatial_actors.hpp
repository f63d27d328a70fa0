// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <map>
#include <vector>

#include "context.hpp"
#include "versioned_index.hpp"

namespace maodb::spatial {

struct LookupReply {
  std::vector<IndexEntry> entries;
  std::uint64_t version = 0;
};

struct ApplyReply {
  bool ok = true;
  std::string error;
};

class IndexActor : public kernel::Actor {
 public:
  IndexActor(Context& ctx, CellId cell) : ctx_(ctx), cell_(cell) {}

  void upsert(std::uint64_t key, Point p);
  void depart(std::uint64_t key);
  LookupReply lookup(const Envelope& window) const;
  ApplyReply apply_batch(const std::vector<BatchOp>& ops, std::uint64_t new_version);

  const VersionedIndex& index() const noexcept { return index_; }
  CellId cell() const noexcept { return cell_; }

 private:
  Context& ctx_;
  CellId cell_;
  VersionedIndex index_;
};

class MonitorActor : public kernel::Actor {
 public:
  MonitorActor(Context& ctx, CellId cell) : ctx_(ctx), cell_(cell) {}

  // Freshness: publish one hop to every subscriber of this cell.
  std::size_t relay(const MoveUpdate& u);
  // Snapshot: remember the batch for late subscribers, then publish it.
  std::size_t relay_batch(EpochBatchPtr batch);
  // Re-sends the retained batches to one subscriber.
  std::size_t replay(ActorId who);

 private:
  Context& ctx_;
  CellId cell_;
  std::map<std::uint64_t, std::vector<EpochBatchPtr>> retained_;
};

}  // namespace maodb::spatial
