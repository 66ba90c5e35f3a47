#pragma once

#include <list>
#include <map>
#include <memory>
#include <set>
#include <string>

#include "edb/core.hpp"
#include "edb/runtime.hpp"
#include "edb/sim.hpp"

namespace edb {

inline constexpr uint32_t kNoPage = UINT32_MAX;
inline constexpr uint32_t kVersionHeaderBytes = 32;

// Location of one record version inside a segment.
struct Loc {
  uint32_t page = kNoPage;
  uint16_t slot = 0;
  bool valid() const { return page != kNoPage; }
  auto operator<=>(const Loc&) const = default;
};

struct VersionRec {
  uint64_t key = 0;
  Payload payload;
  Ts begin = kOpenTs;  // commit ts; kOpenTs while creator uncommitted
  Ts end = kOpenTs;
  TxnId creator = 0;
  bool committed = false;
  bool tombstone = false;  // pending delete marker
  Loc prev;                // next-older version
};

struct Page {
  std::vector<std::optional<VersionRec>> slots;
  uint32_t used = 0;
  bool full() const { return used == slots.size(); }
};

struct TableDef {
  TableId id = 0;
  std::string name;
  uint32_t payload_size = 0;  // fixed-length rows, padded
  uint64_t max_key = 0;       // key domain is [0, max_key)
  uint32_t stride() const { return payload_size + kVersionHeaderBytes; }
};

class Catalog {
 public:
  TableId add(std::string name, uint32_t payload_size, uint64_t max_key) {
    TableId id = static_cast<TableId>(tables_.size() + 1);
    tables_.push_back(TableDef{id, std::move(name), payload_size, max_key});
    return id;
  }
  const TableDef& table(TableId id) const { return tables_.at(id - 1); }
  const std::vector<TableDef>& tables() const { return tables_; }
  uint16_t slots_per_page(TableId id, uint32_t page_size) const {
    uint32_t s = page_size / table(id).stride();
    return static_cast<uint16_t>(s > 0 ? s : 1);
  }

 private:
  std::vector<TableDef> tables_;
};

// Fixed-size unit of physical distribution. Carries its own primary-key
// index; moving the segment between nodes leaves the index byte-identical.
class Segment {
 public:
  Segment(Sim& sim, SegmentId id, TableId table, KeyRange range, NodeId home_node,
          DiskId home_disk, uint32_t page_count, uint16_t slots_per_page, uint32_t stride)
      : id(id),
        table(table),
        range(range),
        home_node(home_node),
        home_disk(home_disk),
        stride(stride),
        slots_per_page(slots_per_page),
        latch(sim),
        pages_(page_count) {
    for (auto& p : pages_) p.slots.resize(slots_per_page);
  }

  SegmentId id;
  TableId table;
  KeyRange range;
  NodeId home_node;
  DiskId home_disk;
  uint32_t stride;
  uint16_t slots_per_page;
  Resource latch;           // copy <-> query interleaving
  bool copy_active = false;

  std::map<uint64_t, Loc> local_index;  // key -> newest version
  uint64_t live_records = 0;            // keys with a committed live version
  uint64_t version_count = 0;

  uint32_t page_count() const { return static_cast<uint32_t>(pages_.size()); }
  uint64_t record_capacity() const { return static_cast<uint64_t>(pages_.size()) * slots_per_page; }
  uint64_t bytes() const { return static_cast<uint64_t>(pages_.size()) * slots_per_page * stride; }
  bool full() const { return version_count >= record_capacity(); }

  Page& page(uint32_t i) { return pages_[i]; }
  const Page& page(uint32_t i) const { return pages_[i]; }

  VersionRec& at(Loc loc) { return *pages_[loc.page].slots[loc.slot]; }
  const VersionRec& at(Loc loc) const { return *pages_[loc.page].slots[loc.slot]; }

  // Deterministic first-fit allocation, scanning from a moving hint.
  std::optional<Loc> alloc_slot() {
    for (uint32_t off = 0; off < pages_.size(); ++off) {
      uint32_t pi = (alloc_hint_ + off) % pages_.size();
      Page& p = pages_[pi];
      if (p.full()) continue;
      for (uint16_t s = 0; s < slots_per_page; ++s) {
        if (!p.slots[s].has_value()) {
          p.slots[s].emplace();
          p.used++;
          alloc_hint_ = pi;
          version_count++;
          return Loc{pi, s};
        }
      }
    }
    return std::nullopt;
  }

  void free_slot(Loc loc) {
    Page& p = pages_[loc.page];
    p.slots[loc.slot].reset();
    p.used--;
    version_count--;
  }

  // Stable byte serialization of the local index, for move-invariance checks.
  std::string serialize_index() const {
    std::string out;
    out.reserve(local_index.size() * 14);
    for (const auto& [k, loc] : local_index) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%llu:%u.%u;", (unsigned long long)k, loc.page, loc.slot);
      out += buf;
    }
    return out;
  }

  // Chain length for one key (pending + committed versions).
  uint32_t chain_length(uint64_t key) const {
    auto it = local_index.find(key);
    if (it == local_index.end()) return 0;
    uint32_t n = 0;
    Loc loc = it->second;
    while (loc.valid()) {
      ++n;
      loc = at(loc).prev;
    }
    return n;
  }

 private:
  std::vector<Page> pages_;
  uint32_t alloc_hint_ = 0;
};

// Reference from a partition's top index to a segment; the segment's bytes
// may be hosted on a different node than the partition owner (physical
// scheme).
struct SegmentRef {
  SegmentId id = 0;
  NodeId host = kNoNode;
};

enum class PartitionState { Stable, MovingOut, Forwarding, MovingIn };

const char* partition_state_name(PartitionState s);

// Node-owned key range with a small top index (one entry per segment).
class Partition {
 public:
  Partition(Sim& sim, PartitionId id, TableId table, NodeId owner, KeyRange range)
      : id(id), table(table), owner(owner), range(range), writer_queue(sim), mover_queue(sim),
        arrival_queue(sim) {}

  PartitionId id;
  TableId table;
  NodeId owner;
  KeyRange range;
  PartitionState state = PartitionState::Stable;
  NodeId move_peer = kNoNode;

  // sub-range low -> segment; consecutive lows delimit the sub-ranges
  std::map<uint64_t, SegmentRef> top;

  // Writer gate used by the move protocol (the "partition read lock").
  bool gate_closed = false;
  int active_writers = 0;
  WaitQueue writer_queue;   // writers blocked while the gate is closed
  WaitQueue mover_queue;    // mover waiting for active writers to commit
  WaitQueue arrival_queue;  // requests waiting for a segment to arrive (target side)

  // Segments already shipped away but retained for pre-move snapshots.
  std::set<SegmentId> retired;

  std::optional<SegmentRef> route(uint64_t pk) const {
    if (top.empty() || !range.contains(pk)) return std::nullopt;
    auto it = top.upper_bound(pk);
    if (it == top.begin()) return std::nullopt;
    --it;
    return it->second;
  }

  // Sub-range covered by the entry at `low` given the successor entry.
  KeyRange subrange_at(uint64_t low) const {
    auto it = top.find(low);
    auto next = std::next(it);
    return KeyRange{low, next == top.end() ? range.hi : next->first};
  }

  bool covers_contiguously() const {
    if (top.empty()) return false;
    if (top.begin()->first != range.lo) return false;
    return true;  // entries partition [lo,hi) by construction of subrange_at
  }
};

struct PageKey {
  SegmentId segment = 0;
  uint32_t page = 0;
  auto operator<=>(const PageKey&) const = default;
};

// LRU page buffer with write-back discipline and an optional remote
// extension on a helper node for spilled "warm" pages.
class BufferPool {
 public:
  explicit BufferPool(uint32_t capacity) : capacity_(capacity) {}

  struct Touch {
    bool hit = false;          // resident locally
    bool from_helper = false;  // fetched back from the remote extension
    bool evicted = false;
    bool evicted_dirty = false;  // caller must charge a flush write
    bool spilled = false;        // evicted page went to the helper
    PageKey evicted_page;
  };

  // Registers an access; the caller charges disk/network according to the
  // returned flags, then calls mark_dirty for writes.
  Touch touch(PageKey key) {
    Touch t;
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      t.hit = true;
      hits_++;
      lru_.erase(it->second.pos);
      lru_.push_front(key);
      it->second.pos = lru_.begin();
      return t;
    }
    misses_++;
    auto hit_helper = helper_entries_.find(key);
    if (hit_helper != helper_entries_.end()) {
      t.from_helper = true;
      helper_hits_++;
      helper_lru_.erase(hit_helper->second);
      helper_entries_.erase(hit_helper);
    }
    if (entries_.size() >= capacity_) {
      PageKey victim = lru_.back();
      lru_.pop_back();
      auto vit = entries_.find(victim);
      t.evicted = true;
      t.evicted_dirty = vit->second.dirty;
      t.evicted_page = victim;
      if (t.evicted_dirty) flushes_++;
      entries_.erase(vit);
      evictions_++;
      if (helper_node_ != kNoNode) {
        t.spilled = true;
        spills_++;
        helper_lru_.push_front(victim);
        helper_entries_[victim] = helper_lru_.begin();
        if (helper_entries_.size() > helper_capacity_) {
          helper_entries_.erase(helper_lru_.back());
          helper_lru_.pop_back();
        }
      }
    }
    lru_.push_front(key);
    entries_[key] = Entry{lru_.begin(), false};
    return t;
  }

  void mark_dirty(PageKey key) {
    auto it = entries_.find(key);
    if (it != entries_.end()) it->second.dirty = true;
  }

  bool resident(PageKey key) const { return entries_.count(key) > 0; }
  bool resident_dirty(PageKey key) const {
    auto it = entries_.find(key);
    return it != entries_.end() && it->second.dirty;
  }

  // Dirty pages of one segment (checkpoint flush); caller charges writes
  // and then calls clean().
  std::vector<PageKey> dirty_pages(SegmentId seg) const {
    std::vector<PageKey> out;
    for (const auto& [k, e] : entries_)
      if (e.dirty && k.segment == seg) out.push_back(k);
    return out;
  }
  std::vector<PageKey> dirty_pages_all() const {
    std::vector<PageKey> out;
    for (const auto& [k, e] : entries_)
      if (e.dirty) out.push_back(k);
    return out;
  }
  void clean(PageKey key) {
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      if (it->second.dirty) flushes_++;
      it->second.dirty = false;
    }
  }

  void drop_segment(SegmentId seg) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (it->first.segment == seg) {
        lru_.erase(it->second.pos);
        it = entries_.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = helper_entries_.begin(); it != helper_entries_.end();) {
      if (it->first.segment == seg) {
        helper_lru_.erase(it->second);
        it = helper_entries_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void attach_helper(NodeId helper, uint32_t pages) {
    helper_node_ = helper;
    helper_capacity_ = pages;
  }
  void detach_helper() {
    helper_node_ = kNoNode;
    helper_capacity_ = 0;
    helper_entries_.clear();
    helper_lru_.clear();
  }
  NodeId helper() const { return helper_node_; }

  uint32_t capacity() const { return capacity_; }
  size_t resident_count() const { return entries_.size(); }
  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }
  uint64_t evictions() const { return evictions_; }
  uint64_t flushes() const { return flushes_; }
  uint64_t helper_hits() const { return helper_hits_; }
  uint64_t spills() const { return spills_; }

 private:
  struct Entry {
    std::list<PageKey>::iterator pos;
    bool dirty;
  };
  uint32_t capacity_;
  std::list<PageKey> lru_;
  std::map<PageKey, Entry> entries_;
  NodeId helper_node_ = kNoNode;
  uint32_t helper_capacity_ = 0;
  std::list<PageKey> helper_lru_;
  std::map<PageKey, std::list<PageKey>::iterator> helper_entries_;
  uint64_t hits_ = 0, misses_ = 0, evictions_ = 0, flushes_ = 0, helper_hits_ = 0, spills_ = 0;
};

// Checks that sub-ranges in `parts` are pairwise disjoint and jointly
// cover `domain`. Used by tests and the master map auditor.
bool ranges_cover(const std::vector<KeyRange>& parts, KeyRange domain, std::string* why = nullptr);

}  // namespace edb
