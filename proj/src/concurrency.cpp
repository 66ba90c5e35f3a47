#include "edb/concurrency.hpp"

#include <algorithm>
#include <cassert>

namespace edb {

const char* lock_mode_name(LockMode m) {
  switch (m) {
    case LockMode::IR: return "IR";
    case LockMode::IX: return "IX";
    case LockMode::R: return "R";
    case LockMode::X: return "X";
  }
  return "?";
}

bool lock_compatible(LockMode a, LockMode b) {
  switch (a) {
    case LockMode::IR:
      return b != LockMode::X;
    case LockMode::IX:
      return b == LockMode::IR || b == LockMode::IX;
    case LockMode::R:
      return b == LockMode::IR || b == LockMode::R;
    case LockMode::X:
      return false;
  }
  return false;
}

bool LockTable::grantable(const Entry& e, const TxnCtx& txn, LockMode mode) const {
  for (const auto& [id, hm] : e.holders) {
    if (id == txn.id) continue;
    if (!lock_compatible(hm.second, mode)) return false;
  }
  for (const auto& w : e.queue) {
    if (w.txn->id == txn.id) continue;
    if (!lock_compatible(w.mode, mode)) return false;  // never pass an earlier incompatible waiter
  }
  return true;
}

void LockTable::collect_blockers(const Entry& e, const TxnCtx& waiter, LockMode mode,
                                 std::vector<TxnCtx*>& out) const {
  for (const auto& [id, hm] : e.holders) {
    if (id != waiter.id && !lock_compatible(hm.second, mode)) out.push_back(hm.first);
  }
  for (const auto& w : e.queue) {
    if (w.txn->id == waiter.id) break;  // only earlier waiters block
    if (!lock_compatible(w.mode, mode)) out.push_back(w.txn);
  }
}

TxnCtx* LockTable::detect_deadlock(TxnCtx& txn, const Entry& entry, LockMode mode) {
  // DFS over the waits-for graph starting from txn's prospective edges.
  std::vector<TxnCtx*> start;
  collect_blockers(entry, txn, mode, start);
  std::set<TxnId> seen;
  std::vector<TxnCtx*> in_cycle;
  std::function<bool(TxnCtx*)> walk = [&](TxnCtx* t) -> bool {
    if (t->id == txn.id) return true;
    if (seen.count(t->id)) return false;
    seen.insert(t->id);
    if (!(t->waiting_on && t->waiting_in)) return false;
    auto it = t->waiting_in->entries_.find(*t->waiting_on);
    if (it == t->waiting_in->entries_.end()) return false;
    LockMode wmode = LockMode::X;
    for (const auto& w : it->second.queue)
      if (w.txn->id == t->id) {
        wmode = w.mode;
        break;
      }
    std::vector<TxnCtx*> next;
    t->waiting_in->collect_blockers(it->second, *t, wmode, next);
    for (auto* n : next) {
      if (walk(n)) {
        in_cycle.push_back(t);
        return true;
      }
    }
    return false;
  };
  bool found = false;
  for (auto* s : start) {
    if (walk(s)) {
      in_cycle.push_back(s);
      found = true;
      break;
    }
  }
  if (!found) return nullptr;
  in_cycle.push_back(&txn);
  // Victim: youngest (largest id), user txns preferred over system txns.
  TxnCtx* victim = nullptr;
  for (auto* t : in_cycle) {
    if (!victim) {
      victim = t;
      continue;
    }
    bool t_user = t->kind == TxnKind::User;
    bool v_user = victim->kind == TxnKind::User;
    if (t_user != v_user) {
      if (t_user) victim = t;
    } else if (t->id > victim->id) {
      victim = t;
    }
  }
  return victim;
}

void LockTable::Awaiter::await_suspend(std::coroutine_handle<> h) {
  Entry& e = lt.entries_[res];
  auto held = e.holders.find(txn.id);
  bool regrant = false;
  if (held != e.holders.end()) {
    // Re-entrant or strengthened request from the same txn.
    if (held->second.second == mode || held->second.second == LockMode::X) {
      regrant = true;
    } else if (mode == LockMode::X || mode == LockMode::R) {
      // Upgrade allowed only when no other holder conflicts.
      bool ok = true;
      for (const auto& [id, hm] : e.holders)
        if (id != txn.id && !lock_compatible(hm.second, mode)) ok = false;
      if (ok && e.queue.empty()) {
        held->second.second = mode;
        regrant = true;
      }
    } else {
      regrant = true;  // weaker than held mode
    }
  }
  if (regrant) {
    result = LockResult::Granted;
    lt.sim_->schedule_handle(lt.sim_->now(), h);
    return;
  }
  if (lt.grantable(e, txn, mode)) {
    e.holders[txn.id] = {&txn, mode};
    txn.locks_held.push_back({&lt, res});
    result = LockResult::Granted;
    lt.sim_->schedule_handle(lt.sim_->now(), h);
    return;
  }
  // Must wait: run deadlock detection with the prospective edge in place.
  if (TxnCtx* victim = lt.detect_deadlock(txn, e, mode)) {
    lt.deadlocks_detected++;
    if (victim == &txn) {
      result = LockResult::Deadlock;
      lt.sim_->schedule_handle(lt.sim_->now(), h);
      return;
    }
    victim->deadlock_victim = true;
    // The victim is parked in some queue; yank it and resume with Deadlock.
    LockTable* vlt = victim->waiting_in;
    LockResId vres = *victim->waiting_on;
    auto it = vlt->entries_.find(vres);
    if (it != vlt->entries_.end()) {
      auto& q = it->second.queue;
      for (auto qi = q.begin(); qi != q.end(); ++qi) {
        if (qi->txn->id == victim->id) {
          Waiter w = *qi;
          q.erase(qi);
          w.awaiter->result = LockResult::Deadlock;
          victim->waiting_on = nullptr;
          victim->waiting_in = nullptr;
          vlt->sim_->schedule_handle(vlt->sim_->now(), w.handle);
          break;
        }
      }
      vlt->grant_waiters(vres);  // waiters behind the victim may unblock
    }
    // Breaking the cycle may have made this request grantable.
    Entry& e2 = lt.entries_[res];
    if (lt.grantable(e2, txn, mode)) {
      e2.holders[txn.id] = {&txn, mode};
      txn.locks_held.push_back({&lt, res});
      result = LockResult::Granted;
      lt.sim_->schedule_handle(lt.sim_->now(), h);
      return;
    }
  }
  waiting_res_ = res;
  txn.waiting_on = &waiting_res_;
  txn.waiting_in = &lt;
  lt.entries_[res].queue.push_back(Waiter{&txn, mode, h, this});
}

void LockTable::grant_waiters(LockResId res) {
  auto it = entries_.find(res);
  if (it == entries_.end()) return;
  Entry& e = it->second;
  while (!e.queue.empty()) {
    Waiter& w = e.queue.front();
    bool ok = true;
    for (const auto& [id, hm] : e.holders)
      if (id != w.txn->id && !lock_compatible(hm.second, w.mode)) ok = false;
    if (!ok) break;
    e.holders[w.txn->id] = {w.txn, w.mode};
    w.txn->locks_held.push_back({this, res});
    w.txn->waiting_on = nullptr;
    w.txn->waiting_in = nullptr;
    w.awaiter->result = LockResult::Granted;
    sim_->schedule_handle(sim_->now(), w.handle);
    e.queue.pop_front();
  }
  if (e.holders.empty() && e.queue.empty()) entries_.erase(it);
}

void LockTable::release_all(TxnCtx& txn) {
  std::vector<LockResId> released;
  for (auto& [lt, res] : txn.locks_held) {
    if (lt != this) continue;
    auto it = entries_.find(res);
    if (it == entries_.end()) continue;
    it->second.holders.erase(txn.id);
    released.push_back(res);
  }
  std::erase_if(txn.locks_held, [this](const auto& p) { return p.first == this; });
  for (const auto& res : released) grant_waiters(res);
}

bool LockTable::holds(const TxnCtx& txn, LockResId res) const {
  auto it = entries_.find(res);
  return it != entries_.end() && it->second.holders.count(txn.id) > 0;
}

size_t LockTable::holder_count(LockResId res) const {
  auto it = entries_.find(res);
  return it == entries_.end() ? 0 : it->second.holders.size();
}

size_t LockTable::queue_length(LockResId res) const {
  auto it = entries_.find(res);
  return it == entries_.end() ? 0 : it->second.queue.size();
}

bool LockTable::grants_consistent() const {
  for (const auto& [res, e] : entries_) {
    for (const auto& [id1, hm1] : e.holders)
      for (const auto& [id2, hm2] : e.holders)
        if (id1 < id2 && !lock_compatible(hm1.second, hm2.second)) return false;
  }
  return true;
}

// --- version chains ---

VisibleVersion chain_read(const Segment& seg, uint64_t key, Ts snapshot, TxnId self) {
  auto it = seg.local_index.find(key);
  if (it == seg.local_index.end()) return {};
  Loc loc = it->second;
  while (loc.valid()) {
    const VersionRec& v = seg.at(loc);
    if (!v.committed) {
      if (self != 0 && v.creator == self && !v.tombstone)
        return {true, v.payload, v.begin};
      if (self != 0 && v.creator == self && v.tombstone) return {};  // own pending delete
      loc = v.prev;
      continue;
    }
    if (v.begin <= snapshot && snapshot < v.end) return {true, v.payload, v.begin};
    loc = v.prev;
  }
  return {};
}

VisibleVersion chain_read_latest(const Segment& seg, uint64_t key) {
  auto it = seg.local_index.find(key);
  if (it == seg.local_index.end()) return {};
  Loc loc = it->second;
  while (loc.valid()) {
    const VersionRec& v = seg.at(loc);
    if (v.committed) {
      if (v.end != kOpenTs) return {};  // deleted
      return {true, v.payload, v.begin};
    }
    loc = v.prev;
  }
  return {};
}

bool chain_has_live(const Segment& seg, uint64_t key) {
  return chain_read_latest(seg, key).found;
}

namespace {

// Returns the head version if it is a pending write by another txn.
bool pending_by_other(const Segment& seg, uint64_t key, TxnId self, Loc* head_out) {
  auto it = seg.local_index.find(key);
  if (it == seg.local_index.end()) return false;
  if (head_out) *head_out = it->second;
  const VersionRec& head = seg.at(it->second);
  return !head.committed && head.creator != self;
}

WriteOutcome append_version(Segment& seg, uint64_t key, Payload payload, bool tombstone,
                            WriteKind kind, TxnCtx& txn, PartitionId partition, NodeId node) {
  auto idx = seg.local_index.find(key);
  Loc prev_head = idx == seg.local_index.end() ? Loc{} : idx->second;
  if (prev_head.valid()) {
    VersionRec& head = seg.at(prev_head);
    if (!head.committed && head.creator == txn.id) {
      // Second write by the same txn collapses in place.
      if (tombstone && head.tombstone) return WriteOutcome::Ok;
      head.payload = std::move(payload);
      head.tombstone = tombstone;
      return WriteOutcome::Ok;
    }
  }
  auto slot = seg.alloc_slot();
  if (!slot) return WriteOutcome::Full;  // caller gcs/splits, then retries
  VersionRec& v = seg.at(*slot);
  v.key = key;
  v.payload = std::move(payload);
  v.begin = kOpenTs;
  v.end = kOpenTs;
  v.creator = txn.id;
  v.committed = false;
  v.tombstone = tombstone;
  v.prev = prev_head;
  seg.local_index[key] = *slot;
  txn.writes.push_back(WriteRef{&seg, partition, node, key, *slot, kind});
  return WriteOutcome::Ok;
}

}  // namespace

WriteOutcome chain_insert(Segment& seg, uint64_t key, Payload payload, TxnCtx& txn) {
  if (pending_by_other(seg, key, txn.id, nullptr)) return WriteOutcome::Conflict;
  if (chain_has_live(seg, key)) return WriteOutcome::DuplicateKey;
  return append_version(seg, key, std::move(payload), false, WriteKind::Insert, txn, 0, kNoNode);
}

WriteOutcome chain_update(Segment& seg, uint64_t key, Payload payload, TxnCtx& txn) {
  if (pending_by_other(seg, key, txn.id, nullptr)) return WriteOutcome::Conflict;
  auto idx = seg.local_index.find(key);
  bool own_pending = false;
  if (idx != seg.local_index.end()) {
    const VersionRec& head = seg.at(idx->second);
    own_pending = !head.committed && head.creator == txn.id && !head.tombstone;
  }
  if (!own_pending && !chain_has_live(seg, key)) return WriteOutcome::NotFound;
  return append_version(seg, key, std::move(payload), false, WriteKind::Update, txn, 0, kNoNode);
}

WriteOutcome chain_delete(Segment& seg, uint64_t key, TxnCtx& txn) {
  if (pending_by_other(seg, key, txn.id, nullptr)) return WriteOutcome::Conflict;
  if (!chain_has_live(seg, key)) return WriteOutcome::NotFound;
  return append_version(seg, key, Payload{}, true, WriteKind::Delete, txn, 0, kNoNode);
}

void apply_commit(WriteRef& w, Ts commit_ts, bool prune_old_on_commit) {
  Segment& seg = *w.seg;
  VersionRec& v = seg.at(w.loc);
  if (v.tombstone) {
    Loc pred = v.prev;
    bool was_live = false;
    if (pred.valid()) {
      VersionRec& p = seg.at(pred);
      if (p.committed && p.end == kOpenTs) {
        p.end = commit_ts;
        was_live = true;
      }
      seg.local_index[w.key] = pred;
    } else {
      seg.local_index.erase(w.key);
    }
    seg.free_slot(w.loc);
    if (was_live) seg.live_records--;
    return;
  }
  v.begin = commit_ts;
  v.committed = true;
  bool was_live = false;
  if (v.prev.valid()) {
    VersionRec& p = seg.at(v.prev);
    if (p.committed && p.end == kOpenTs) {
      p.end = commit_ts;
      was_live = true;
    }
  }
  if (!was_live) seg.live_records++;
  if (prune_old_on_commit) {
    // Single-version store: drop the full tail.
    Loc loc = v.prev;
    v.prev = Loc{};
    while (loc.valid()) {
      Loc next = seg.at(loc).prev;
      seg.free_slot(loc);
      loc = next;
    }
  }
}

void apply_abort(WriteRef& w) {
  Segment& seg = *w.seg;
  auto idx = seg.local_index.find(w.key);
  if (idx == seg.local_index.end()) return;
  if (idx->second != w.loc) return;  // later writes already rewired the head
  VersionRec& v = seg.at(w.loc);
  if (v.prev.valid())
    seg.local_index[w.key] = v.prev;
  else
    seg.local_index.erase(w.key);
  seg.free_slot(w.loc);
}

uint32_t gc_chain(Segment& seg, uint64_t key, Ts oldest_active) {
  auto idx = seg.local_index.find(key);
  if (idx == seg.local_index.end()) return 0;
  uint32_t freed = 0;
  // Find the newest committed version; everything strictly older with
  // end <= horizon is unreachable.
  Loc newest_committed;
  for (Loc loc = idx->second; loc.valid(); loc = seg.at(loc).prev) {
    if (seg.at(loc).committed) {
      newest_committed = loc;
      break;
    }
  }
  if (!newest_committed.valid()) return 0;
  VersionRec& nc = seg.at(newest_committed);
  Loc tail = nc.prev;
  Loc keep_cursor = newest_committed;
  while (tail.valid()) {
    VersionRec& t = seg.at(tail);
    Loc next = t.prev;
    if (t.committed && t.end != kOpenTs && t.end <= oldest_active) {
      seg.at(keep_cursor).prev = next;
      seg.free_slot(tail);
      freed++;
    } else {
      keep_cursor = tail;
    }
    tail = next;
  }
  // A dead key whose last version nobody can see disappears entirely.
  if (nc.end != kOpenTs && nc.end <= oldest_active && idx->second == newest_committed) {
    if (!nc.prev.valid()) {
      seg.free_slot(newest_committed);
      seg.local_index.erase(idx);
      freed++;
    }
  }
  return freed;
}

uint32_t gc_segment(Segment& seg, Ts oldest_active) {
  uint32_t freed = 0;
  std::vector<uint64_t> keys;
  keys.reserve(seg.local_index.size());
  for (const auto& [k, loc] : seg.local_index) keys.push_back(k);
  for (uint64_t k : keys) freed += gc_chain(seg, k, oldest_active);
  return freed;
}

std::vector<uint32_t> chain_pages(const Segment& seg, uint64_t key) {
  std::vector<uint32_t> pages;
  auto it = seg.local_index.find(key);
  if (it == seg.local_index.end()) return pages;
  for (Loc loc = it->second; loc.valid(); loc = seg.at(loc).prev) {
    if (std::find(pages.begin(), pages.end(), loc.page) == pages.end())
      pages.push_back(loc.page);
  }
  return pages;
}

const char* wal_op_name(WalOp op) {
  switch (op) {
    case WalOp::Insert: return "insert";
    case WalOp::Update: return "update";
    case WalOp::Delete: return "delete";
    case WalOp::CheckpointMove: return "checkpoint-move";
  }
  return "?";
}

std::string WalLog::export_text() const {
  std::string out;
  for (const auto& r : records_) {
    out += std::to_string(r.lsn) + " " + std::to_string(r.txn) + " " + wal_op_name(r.op) + " " +
           std::to_string(r.key) + "\n";
  }
  return out;
}

}  // namespace edb
