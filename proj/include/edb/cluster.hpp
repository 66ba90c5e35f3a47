#pragma once

#include <memory>
#include <string>
#include <vector>

#include "edb/concurrency.hpp"
#include "edb/coordinator.hpp"
#include "edb/core.hpp"
#include "edb/runtime.hpp"
#include "edb/sim.hpp"
#include "edb/storage.hpp"

namespace edb {

enum class OpStatus { Ok, Conflict, Deadlock, DuplicateKey, NotFound, RoutingError, StorageFull };

struct OpRead {
  bool found = false;
  Payload value;
  uint32_t hops = 0;  // network hops taken to resolve
  OpStatus status = OpStatus::Ok;
};

struct OpWrite {
  OpStatus status = OpStatus::Ok;
  bool ok() const { return status == OpStatus::Ok; }
};

struct ScanRow {
  uint64_t pk;
  Payload value;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  uint64_t pages_touched = 0;
  uint64_t segments_visited = 0;
};

enum class TxnEnd { Committed, Aborted };

// One process-wide simulated shared-nothing cluster: node 0 is the master
// (coordinator + client endpoint), the rest are data/helper nodes.
class Cluster {
 public:
  Cluster(ClusterConfig config, CcMode mode);

  Sim sim;
  ClusterConfig cfg;
  CcMode cc_mode;
  Catalog catalog;
  PowerModel power;
  TxnManager tm;
  Network net;
  PartitionMap map;
  Controller controller;
  Rng rng;

  struct NodeCtx {
    NodeCtx(Sim& sim, NodeId id, const ClusterConfig& cfg)
        : node(sim, id, cfg), buffer(cfg.buffer_pool_pages), locks(sim), wal(id) {}
    Node node;
    BufferPool buffer;
    std::map<SegmentId, std::unique_ptr<Segment>> segments;      // hosted bytes
    std::map<PartitionId, std::unique_ptr<Partition>> partitions;  // owned ranges
    LockTable locks;
    WalLog wal;
    bool is_helper = false;
    uint64_t remote_page_fetches = 0;
    uint64_t live_version_bytes = 0;  // versions resident here (all copies)
  };

  NodeCtx& nc(NodeId id) { return *nodes_.at(id); }
  const NodeCtx& nc(NodeId id) const { return *nodes_.at(id); }
  uint32_t node_count() const { return static_cast<uint32_t>(nodes_.size()); }

  // --- setup (pre-simulation, cost-free) ---
  void activate(NodeId id);  // immediate, used during cluster bring-up
  Partition& create_partition(NodeId owner, TableId table, KeyRange range);
  Segment& create_segment(NodeId host, TableId table, KeyRange range, DiskId disk = 0);
  // Loads one committed record; pages optionally pre-warmed into the buffer.
  void bulk_load(Partition& p, uint64_t pk, Payload payload, bool warm_buffer);
  void seal_bulk_load();

  PartitionId next_partition_id() { return next_partition_id_++; }
  SegmentId next_segment_id() { return next_segment_id_++; }

  Partition* find_partition(NodeId node, TableId table, uint64_t pk);
  Segment* find_segment(NodeId node, SegmentId id);

  // --- power (coordinator commands) ---
  Task<bool> power_on(NodeId id);  // resolves after the boot delay
  struct PowerOffResult {
    bool ok = false;
    std::string reason;
  };
  PowerOffResult power_off(NodeId id);

  // --- helpers (log shipping + remote buffer roles only) ---
  Task<uint32_t> helper_attach(uint32_t count);
  Task<void> helper_detach();
  std::vector<NodeId> helpers() const;

  // --- transactions ---
  std::unique_ptr<TxnCtx> begin(TxnMode mode, TxnKind kind, NodeId home);

  // Writer gates are acquired up front in global (table, lo, node) order;
  // write_ranges lists every range the txn may write.
  Task<void> acquire_write_gates(TxnCtx& txn,
                                 const std::vector<std::pair<TableId, KeyRange>>& write_ranges);

  Task<OpRead> op_read(TxnCtx& txn, TableId table, uint64_t pk);
  Task<OpWrite> op_insert(TxnCtx& txn, TableId table, uint64_t pk, Payload v);
  Task<OpWrite> op_update(TxnCtx& txn, TableId table, uint64_t pk, Payload v);
  Task<OpWrite> op_delete(TxnCtx& txn, TableId table, uint64_t pk);
  Task<ScanResult> op_scan(TxnCtx& txn, TableId table, KeyRange range);

  Task<TxnEnd> commit_txn(TxnCtx& txn);
  void abort_txn(TxnCtx& txn);

  // Request/handling hop between nodes, charged to the txn's network time.
  Task<bool> msg_hop(TxnCtx* txn, NodeId from, NodeId to, uint64_t bytes);
  Task<void> charge_cpu(TxnCtx* txn, NodeId at, double work, PartitionId attr);

  // Direct partition-level insert (unit-level surface; knows no routing).
  Task<OpWrite> partition_insert(TxnCtx& txn, Partition& p, uint64_t pk, Payload v);

  // --- page layer ---
  Task<void> page_access(TxnCtx* txn, NodeId at, SegmentRef ref, uint32_t page, bool write,
                         PartitionId attr);
  Task<void> flush_segment(NodeId at, Segment& seg, Breakdown* bd);
  Task<void> flush_all(NodeId at);

  // WAL append with cost: disk write on `at`, or network ship to a helper.
  Task<void> wal_charge(NodeId at, Breakdown* bd);

  // move protocol gate
  Task<void> gate_enter(TxnCtx& txn, Partition& p);
  void gate_exit_all(TxnCtx& txn);
  Task<void> gate_close(Partition& p);
  void gate_open(Partition& p);

  // --- monitoring / control loop ---
  bool monitoring_on = false;
  bool controller_enabled = false;
  void start_monitoring();
  NodeStats collect_stats(NodeId id, uint64_t interval_index);
  const std::map<NodeId, NodeStats>& last_stats() const { return last_stats_; }

  // node utilization over interval [i*dt,(i+1)*dt), for power/metrics
  double node_utilization(NodeId id, uint64_t interval_index) const;
  double cluster_power_at(uint64_t interval_index) const;

  // --- experiment bookkeeping ---
  uint64_t bytes_moved_cum = 0;
  uint64_t completed_queries = 0;
  std::vector<std::string> decision_log;
  std::vector<std::string> move_audit;
  void log_decision(const std::string& trigger, const std::string& action,
                    const std::string& target);
  void log_move(uint64_t plan, const std::string& step, uint64_t bytes);

  // executes controller actions (wired to repartition in cluster.cpp)
  void execute_actions(const std::vector<Action>& actions);

  // offload-hint state consumed by the query planner
  std::set<NodeId> offload_hinted;

  // --- introspection ---
  std::string dump_partitions() const;  // per-partition debug report
  // All live (committed, latest) records of a table, via direct walk.
  std::map<uint64_t, uint64_t> table_state(TableId table) const;
  uint64_t live_bytes_total() const;
  uint64_t table_record_count(TableId table) const;

  // GC sweep across all segments (harness-driven cadence).
  uint64_t run_gc();

  uint64_t txn_commits = 0;
  uint64_t txn_aborts = 0;
  uint64_t move_plans_started = 0;

 private:
  Task<void> monitor_loop(NodeId id);
  void master_ingest(NodeStats s);
  Task<void> page_access_local(TxnCtx* txn, NodeCtx& at, Segment& seg, uint32_t page, bool write,
                               PartitionId attr);
  Task<void> page_access_remote(TxnCtx* txn, NodeCtx& requester, NodeCtx& host, Segment& seg,
                                uint32_t page, bool write, PartitionId attr);
  Task<OpWrite> op_write_generic(TxnCtx& txn, TableId table, uint64_t pk, Payload v,
                                 WriteKind kind);
  Task<OpStatus> ensure_capacity(TxnCtx& txn, NodeId at, Partition& p, Segment& seg);

 public:
  // Splits seg at `at_key` (or its median key when absent); updates p.top.
  Segment& split_segment(NodeCtx& host, Partition& p, Segment& seg,
                         std::optional<uint64_t> at_key = std::nullopt);

 private:

  Task<void> controller_loop();

  std::vector<std::unique_ptr<NodeCtx>> nodes_;
  PartitionId next_partition_id_ = 1;
  SegmentId next_segment_id_ = 1;
  std::map<NodeId, NodeStats> last_stats_;
};

// Serial-oracle record of committed effects, for conservation checks.
struct CommitLogEntry {
  Ts ts;
  TableId table;
  uint64_t pk;
  WriteKind kind;
  uint64_t value;  // payload value for insert/update
};

}  // namespace edb
