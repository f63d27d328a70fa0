// SPDX-License-Identifier: Apache-2.0
#include "versioned_index.hpp"

#include <string>

namespace maodb::spatial {

namespace bgi = boost::geometry::index;

void VersionedIndex::upsert(std::uint64_t key, Point p) {
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    tree_.remove(Value(to_b(it->second.p), key));
    if (it->second.departed >= 0) departed_count_--;
    it->second = IndexEntry{key, p, -1};
  } else {
    entries_.emplace(key, IndexEntry{key, p, -1});
  }
  tree_.insert(Value(to_b(p), key));
}

bool VersionedIndex::remove(std::uint64_t key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  tree_.remove(Value(to_b(it->second.p), key));
  if (it->second.departed >= 0) departed_count_--;
  entries_.erase(it);
  return true;
}

void VersionedIndex::mark_departed(std::uint64_t key, std::int64_t at) {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.departed >= 0) return;
  it->second.departed = at;
  departed_count_++;
  departures_.emplace_back(at, key);
}

std::size_t VersionedIndex::purge_departed(std::int64_t before) {
  std::size_t n = 0;
  while (!departures_.empty() && departures_.front().first < before) {
    auto [at, key] = departures_.front();
    departures_.pop_front();
    auto it = entries_.find(key);
    // The actor may have come back (upsert clears the mark) or left again later.
    if (it != entries_.end() && it->second.departed == at) {
      remove(key);
      ++n;
    }
  }
  return n;
}

std::vector<IndexEntry> VersionedIndex::lookup(const Envelope& window) const {
  std::vector<Value> hits;
  tree_.query(bgi::covered_by(BBox(to_b(window.min), to_b(window.max))), std::back_inserter(hits));
  std::vector<IndexEntry> out;
  out.reserve(hits.size());
  for (const Value& v : hits) out.push_back(entries_.at(v.second));
  return out;
}

std::optional<IndexEntry> VersionedIndex::find(std::uint64_t key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void VersionedIndex::apply_batch(std::span<const BatchOp> ops, std::uint64_t new_version) {
  if (new_version != version_ + 1)
    fail(ErrorCode::VersionGap, "batch version " + std::to_string(new_version) + " after " +
                                    std::to_string(version_));
  for (const BatchOp& op : ops) {
    if (op.p)
      upsert(op.key, *op.p);
    else
      remove(op.key);
  }
  version_ = new_version;
}

}  // namespace maodb::spatial
