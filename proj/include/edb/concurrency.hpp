#pragma once

#include <coroutine>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <set>

#include "edb/storage.hpp"

namespace edb {

enum class CcMode { Mvcc, MglRx };
enum class TxnMode { ReadOnly, ReadWrite };
enum class TxnKind { User, System };
enum class TxnStatus { Active, Committed, Aborted };

// Per-query simulated-time breakdown, the Fig.-7-style instrumentation.
struct Breakdown {
  double cpu = 0;
  double disk_io = 0;
  double locking = 0;
  double logging = 0;
  double network = 0;
  double total() const { return cpu + disk_io + locking + logging + network; }
  Breakdown& operator+=(const Breakdown& o) {
    cpu += o.cpu;
    disk_io += o.disk_io;
    locking += o.locking;
    logging += o.logging;
    network += o.network;
    return *this;
  }
};

enum class WriteKind { Insert, Update, Delete };

struct WriteRef {
  Segment* seg = nullptr;
  PartitionId partition = 0;
  NodeId node = kNoNode;  // node that executed the write (owner at that time)
  uint64_t key = 0;
  Loc loc;
  WriteKind kind = WriteKind::Update;
};

struct LockResId {
  uint8_t kind = 0;  // 0 = partition, 1 = key
  uint64_t a = 0;    // partition id | table id
  uint64_t b = 0;    // 0            | primary key
  auto operator<=>(const LockResId&) const = default;
  static LockResId partition(PartitionId p) { return {0, p, 0}; }
  static LockResId key(TableId t, uint64_t pk) { return {1, t, pk}; }
};

enum class LockMode : uint8_t { IR, IX, R, X };
const char* lock_mode_name(LockMode m);
bool lock_compatible(LockMode a, LockMode b);

class LockTable;

struct TxnCtx {
  TxnId id = 0;
  Ts snapshot = 0;
  TxnMode mode = TxnMode::ReadOnly;
  TxnKind kind = TxnKind::User;
  TxnStatus status = TxnStatus::Active;
  NodeId home = kNoNode;
  std::vector<WriteRef> writes;
  std::set<PartitionId> touched_partitions;
  std::vector<Partition*> gates_held;
  Breakdown bd;
  // MGL bookkeeping
  std::vector<std::pair<LockTable*, LockResId>> locks_held;
  const LockResId* waiting_on = nullptr;
  LockTable* waiting_in = nullptr;
  bool deadlock_victim = false;
};

// Global logical-timestamp authority plus active-transaction registry used
// for GC horizons and move drain detection. Callers own their TxnCtx; the
// registry tracks ids and snapshots only.
class TxnManager {
 public:
  std::unique_ptr<TxnCtx> begin(TxnMode mode, TxnKind kind) {
    auto ctx = std::make_unique<TxnCtx>();
    ctx->id = next_txn_++;
    ctx->snapshot = commit_counter_;
    ctx->mode = mode;
    ctx->kind = kind;
    active_.emplace(ctx->id, ctx->snapshot);
    return ctx;
  }

  Ts commit_counter() const { return commit_counter_; }
  Ts next_commit_ts() { return ++commit_counter_; }

  // Removes the txn from the active set and fires matured drain watches.
  void finish(TxnId id) {
    active_.erase(id);
    fire_watches();
  }

  Ts oldest_active_snapshot() const {
    Ts oldest = commit_counter_;
    for (const auto& [id, snap] : active_)
      if (snap < oldest) oldest = snap;
    return oldest;
  }

  size_t active_count() const { return active_.size(); }

  // fn fires once no active transaction has snapshot < ts.
  void watch_drain(Ts ts, std::function<void()> fn) {
    watches_.push_back({ts, std::move(fn)});
    fire_watches();
  }

 private:
  void fire_watches() {
    Ts oldest = oldest_active_snapshot();
    for (size_t i = 0; i < watches_.size();) {
      if (oldest >= watches_[i].ts) {
        auto fn = std::move(watches_[i].fn);
        watches_.erase(watches_.begin() + i);
        fn();
      } else {
        ++i;
      }
    }
  }

  struct Watch {
    Ts ts;
    std::function<void()> fn;
  };
  Ts commit_counter_ = 0;
  TxnId next_txn_ = 1;
  std::map<TxnId, Ts> active_;
  std::vector<Watch> watches_;
};

enum class LockResult { Granted, Deadlock };

// Strict MGL-RX lock table with FIFO queues and waits-for deadlock
// detection at block time (youngest victim, user txns preferred).
class LockTable {
 public:
  explicit LockTable(Sim& sim) : sim_(&sim) {}

  struct Awaiter {
    LockTable& lt;
    TxnCtx& txn;
    LockResId res;
    LockMode mode;
    LockResult result = LockResult::Granted;
    LockResId waiting_res_;  // stable storage for txn.waiting_on while parked
    bool await_ready() noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h);
    LockResult await_resume() noexcept { return result; }
  };

  Awaiter acquire(TxnCtx& txn, LockResId res, LockMode mode) {
    return Awaiter{*this, txn, res, mode};
  }

  // Releases everything this txn holds here and wakes grantable waiters.
  void release_all(TxnCtx& txn);

  bool holds(const TxnCtx& txn, LockResId res) const;
  size_t holder_count(LockResId res) const;
  size_t queue_length(LockResId res) const;

  // Debug invariant: no two incompatible modes simultaneously granted.
  bool grants_consistent() const;

  uint64_t deadlocks_detected = 0;

 private:
  struct Waiter {
    TxnCtx* txn;
    LockMode mode;
    std::coroutine_handle<> handle;
    Awaiter* awaiter;
  };
  struct Entry {
    std::map<TxnId, std::pair<TxnCtx*, LockMode>> holders;
    std::deque<Waiter> queue;
  };

  bool grantable(const Entry& e, const TxnCtx& txn, LockMode mode) const;
  void grant_waiters(LockResId res);
  // Returns the victim if enqueueing `txn` would close a waits-for cycle.
  TxnCtx* detect_deadlock(TxnCtx& txn, const Entry& e, LockMode mode);
  void collect_blockers(const Entry& e, const TxnCtx& waiter, LockMode mode,
                        std::vector<TxnCtx*>& out) const;

  Sim* sim_;
  std::map<LockResId, Entry> entries_;
};

// --- version-chain operations (shared by both CC engines) ---

enum class WriteOutcome { Ok, Conflict, DuplicateKey, NotFound, Full };

struct VisibleVersion {
  bool found = false;
  Payload payload;
  Ts begin = 0;
};

// Snapshot read: the unique version with begin <= snapshot < end whose
// creator committed; a txn always sees its own pending writes.
VisibleVersion chain_read(const Segment& seg, uint64_t key, Ts snapshot, TxnId self = 0);

// Latest committed state, ignoring snapshots (MGL read under R lock).
VisibleVersion chain_read_latest(const Segment& seg, uint64_t key);

bool chain_has_live(const Segment& seg, uint64_t key);

WriteOutcome chain_insert(Segment& seg, uint64_t key, Payload payload, TxnCtx& txn);
WriteOutcome chain_update(Segment& seg, uint64_t key, Payload payload, TxnCtx& txn);
WriteOutcome chain_delete(Segment& seg, uint64_t key, TxnCtx& txn);

// Applied at commit/abort by the transaction layer. prune_old_on_commit
// implements the single-version store used for the MGL-RX baseline.
void apply_commit(WriteRef& w, Ts commit_ts, bool prune_old_on_commit);
void apply_abort(WriteRef& w);

// Prunes versions no active snapshot can reach; keeps the newest committed
// version unless the key is dead past the horizon. Returns slots freed.
uint32_t gc_chain(Segment& seg, uint64_t key, Ts oldest_active);
uint32_t gc_segment(Segment& seg, Ts oldest_active);

// Pages a chain walk touches (for cost accounting).
std::vector<uint32_t> chain_pages(const Segment& seg, uint64_t key);

// --- write-ahead log ---

enum class WalOp { Insert, Update, Delete, CheckpointMove };
const char* wal_op_name(WalOp op);

struct WalRecord {
  uint64_t lsn = 0;
  NodeId node = kNoNode;
  TxnId txn = 0;
  PartitionId partition = 0;
  WalOp op = WalOp::Insert;
  uint64_t key = 0;
};

// Append-only per-node log; I/O (or shipping) is charged by the caller.
class WalLog {
 public:
  explicit WalLog(NodeId node) : node_(node) {}

  const WalRecord& append(TxnId txn, PartitionId partition, WalOp op, uint64_t key) {
    records_.push_back(WalRecord{next_lsn_++, node_, txn, partition, op, key});
    return records_.back();
  }

  const std::vector<WalRecord>& records() const { return records_; }
  uint64_t next_lsn() const { return next_lsn_; }

  NodeId ship_to = kNoNode;  // helper receiving log writes, if any

  std::string export_text() const;

 private:
  NodeId node_;
  uint64_t next_lsn_ = 1;
  std::vector<WalRecord> records_;
};

}  // namespace edb
