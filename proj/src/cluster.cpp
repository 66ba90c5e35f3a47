#include "edb/cluster.hpp"

#include <algorithm>
#include <cassert>
#include <tuple>

namespace edb {

namespace {
constexpr uint64_t kControlMsgBytes = 64;
constexpr uint64_t kWalShipBytes = 128;
}  // namespace

Cluster::Cluster(ClusterConfig config, CcMode mode)
    : cfg(validate_config(config)),
      cc_mode(mode),
      net(sim, config.net_base_latency, config.net_bandwidth),
      controller(config.cpu_upper_threshold, config.cpu_lower_threshold,
                 config.threshold_intervals, config.disk_iops_high),
      rng(config.rng_seed) {
  power.p_idle = cfg.power_idle;
  power.p_max = cfg.power_max;
  power.p_standby = cfg.power_standby;
  power.p_switch = cfg.power_switch;
  controller.set_cooldown(cfg.threshold_intervals * cfg.monitor_interval);
  for (NodeId i = 0; i < cfg.node_count; ++i) {
    nodes_.push_back(std::make_unique<NodeCtx>(sim, i, cfg));
    nodes_.back()->node.cpu_resource().meter().configure(cfg.monitor_interval);
    for (uint32_t d = 0; d < cfg.disks_per_node; ++d)
      nodes_.back()->node.disk(d).resource().meter().configure(cfg.monitor_interval);
  }
}

void Cluster::activate(NodeId id) {
  nc(id).node.set_power_state(PowerState::Active);
  sim.trace(TraceKind::kPower, id, "active");
  if (monitoring_on) sim.spawn(monitor_loop(id));
}

Partition& Cluster::create_partition(NodeId owner, TableId table, KeyRange range) {
  auto p = std::make_unique<Partition>(sim, next_partition_id(), table, owner, range);
  Partition& ref = *p;
  nc(owner).partitions.emplace(ref.id, std::move(p));
  return ref;
}

Segment& Cluster::create_segment(NodeId host, TableId table, KeyRange range, DiskId disk) {
  auto seg = std::make_unique<Segment>(sim, next_segment_id(), table, range, host, disk,
                                       cfg.pages_per_segment,
                                       catalog.slots_per_page(table, cfg.page_size),
                                       catalog.table(table).stride());
  Segment& ref = *seg;
  nc(host).segments.emplace(ref.id, std::move(seg));
  return ref;
}

void Cluster::bulk_load(Partition& p, uint64_t pk, Payload payload, bool warm_buffer) {
  assert(p.range.contains(pk));
  Segment* seg = nullptr;
  if (p.top.empty()) {
    Segment& s = create_segment(p.owner, p.table, p.range);
    p.top[p.range.lo] = SegmentRef{s.id, p.owner};
    seg = &s;
  } else {
    auto last = std::prev(p.top.end());
    Segment* tail = find_segment(last->second.host, last->second.id);
    assert(pk >= tail->range.lo);  // bulk load feeds ascending keys
    if (tail->full()) {
      // Close the tail at pk and open a fresh segment for the rest.
      Segment& s = create_segment(p.owner, p.table, KeyRange{pk, p.range.hi});
      tail->range.hi = pk;
      p.top[pk] = SegmentRef{s.id, p.owner};
      seg = &s;
    } else {
      seg = tail;
    }
  }
  auto loc = seg->alloc_slot();
  assert(loc);
  VersionRec& v = seg->at(*loc);
  v.key = pk;
  v.payload = std::move(payload);
  v.begin = 0;
  v.end = kOpenTs;
  v.creator = 0;
  v.committed = true;
  v.tombstone = false;
  v.prev = Loc{};
  seg->local_index[pk] = *loc;
  seg->live_records++;
  if (warm_buffer) nc(p.owner).buffer.touch(PageKey{seg->id, loc->page});
}

void Cluster::seal_bulk_load() {
  // nothing to finalize currently; hook kept for symmetry with loaders
}

Partition* Cluster::find_partition(NodeId node, TableId table, uint64_t pk) {
  for (auto& [id, p] : nc(node).partitions)
    if (p->table == table && p->range.contains(pk)) return p.get();
  return nullptr;
}

Segment* Cluster::find_segment(NodeId node, SegmentId id) {
  auto& segs = nc(node).segments;
  auto it = segs.find(id);
  return it == segs.end() ? nullptr : it->second.get();
}

// --- power ---

Task<bool> Cluster::power_on(NodeId id) {
  NodeCtx& n = nc(id);
  if (n.node.power_state() != PowerState::Standby) co_return false;
  n.node.set_power_state(PowerState::Booting);
  sim.trace(TraceKind::kPower, id, "booting");
  co_await sim.delay(cfg.boot_delay);
  n.node.set_power_state(PowerState::Active);
  sim.trace(TraceKind::kPower, id, "active");
  if (monitoring_on) sim.spawn(monitor_loop(id));
  co_return true;
}

Cluster::PowerOffResult Cluster::power_off(NodeId id) {
  NodeCtx& n = nc(id);
  if (id == kMasterNode) return {false, "master node cannot shut down"};
  if (!n.partitions.empty()) return {false, "node owns partitions"};
  if (!n.segments.empty()) return {false, "node still hosts segment data"};
  if (n.node.active_tasks > 0) return {false, "node has active queries"};
  n.node.set_power_state(PowerState::Standby);
  sim.trace(TraceKind::kPower, id, "standby");
  return {true, ""};
}

// --- helpers ---

Task<uint32_t> Cluster::helper_attach(uint32_t count) {
  std::vector<NodeId> booted;
  for (NodeId i = 1; i < node_count() && booted.size() < count; ++i) {
    NodeCtx& n = nc(i);
    if (n.node.power_state() == PowerState::Standby && n.partitions.empty() &&
        n.segments.empty()) {
      n.is_helper = true;
      bool ok = co_await power_on(i);
      if (ok) booted.push_back(i);
    }
  }
  // Round-robin helpers over data nodes: log shipping + buffer extension.
  if (!booted.empty()) {
    size_t h = 0;
    for (NodeId i = 1; i < node_count(); ++i) {
      NodeCtx& n = nc(i);
      if (!n.node.active() || n.is_helper || n.partitions.empty()) continue;
      NodeId helper = booted[h % booted.size()];
      n.wal.ship_to = helper;
      n.buffer.attach_helper(helper, cfg.remote_buffer_pages);
      h++;
    }
  }
  co_return static_cast<uint32_t>(booted.size());
}

Task<void> Cluster::helper_detach() {
  for (NodeId i = 1; i < node_count(); ++i) {
    NodeCtx& n = nc(i);
    n.wal.ship_to = kNoNode;
    if (n.buffer.helper() != kNoNode) n.buffer.detach_helper();
  }
  for (NodeId i = 1; i < node_count(); ++i) {
    NodeCtx& n = nc(i);
    if (n.is_helper && n.node.active()) {
      auto r = power_off(i);
      (void)r;
      n.is_helper = false;
    }
  }
  co_return;
}

std::vector<NodeId> Cluster::helpers() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < node_count(); ++i)
    if (nc(i).is_helper && nc(i).node.active()) out.push_back(i);
  return out;
}

// --- transactions ---

std::unique_ptr<TxnCtx> Cluster::begin(TxnMode mode, TxnKind kind, NodeId home) {
  auto txn = tm.begin(mode, kind);
  txn->home = home;
  return txn;
}

Task<void> Cluster::gate_enter(TxnCtx& txn, Partition& p) {
  for (auto* g : txn.gates_held)
    if (g == &p) co_return;
  while (p.gate_closed) {
    double t0 = sim.now();
    co_await p.writer_queue.wait();
    txn.bd.locking += sim.now() - t0;
  }
  p.active_writers++;
  txn.gates_held.push_back(&p);
}

void Cluster::gate_exit_all(TxnCtx& txn) {
  for (auto* p : txn.gates_held) {
    p->active_writers--;
    if (p->active_writers == 0 && p->gate_closed) p->mover_queue.notify_all();
  }
  txn.gates_held.clear();
}

Task<void> Cluster::gate_close(Partition& p) {
  assert(!p.gate_closed);
  p.gate_closed = true;
  while (p.active_writers > 0) co_await p.mover_queue.wait();
}

void Cluster::gate_open(Partition& p) {
  p.gate_closed = false;
  p.writer_queue.notify_all();
}

Task<void> Cluster::acquire_write_gates(
    TxnCtx& txn, const std::vector<std::pair<TableId, KeyRange>>& write_ranges) {
  struct Cand {
    TableId table;
    uint64_t lo;
    NodeId node;
    Partition* p;
    bool operator<(const Cand& o) const {
      return std::tie(table, lo, node) < std::tie(o.table, o.lo, o.node);
    }
  };
  std::vector<Cand> cands;
  for (const auto& [table, range] : write_ranges) {
    for (const auto& [lo, e] : map.entries(table)) {
      KeyRange er{lo, e.hi};
      if (!er.overlaps(range)) continue;
      for (NodeId nid : {e.current, e.old}) {
        if (nid == kNoNode) continue;
        for (auto& [pid, p] : nc(nid).partitions) {
          if (p->table == table && p->range.overlaps(range))
            cands.push_back(Cand{table, p->range.lo, nid, p.get()});
        }
      }
    }
  }
  std::sort(cands.begin(), cands.end());
  Partition* last = nullptr;
  for (const auto& c : cands) {
    if (c.p == last) continue;
    last = c.p;
    co_await gate_enter(txn, *c.p);
  }
}

Task<bool> Cluster::msg_hop(TxnCtx* txn, NodeId from, NodeId to, uint64_t bytes) {
  double t0 = sim.now();
  auto r = co_await net.send(nc(from).node, nc(to).node, bytes);
  if (r.status != SendStatus::Delivered) co_return false;
  co_await nc(to).node.cpu(cfg.cpu_per_message);
  if (txn) txn->bd.network += sim.now() - t0;
  co_return true;
}

Task<void> Cluster::charge_cpu(TxnCtx* txn, NodeId at, double work, PartitionId attr) {
  double t0 = sim.now();
  co_await nc(at).node.cpu(work);
  if (txn) txn->bd.cpu += sim.now() - t0;
  if (attr != 0) nc(at).node.charge_partition_cpu(attr, work / cfg.cpu_capacity);
}

// --- page layer ---

Task<void> Cluster::page_access_local(TxnCtx* txn, NodeCtx& at, Segment& seg, uint32_t page,
                                      bool write, PartitionId attr) {
  if (seg.copy_active) {
    double t0 = sim.now();
    co_await seg.latch.use(0.0);
    if (txn) txn->bd.locking += sim.now() - t0;
  }
  if (attr != 0) at.node.charge_partition_page(attr);
  PageKey key{seg.id, page};
  auto touch = at.buffer.touch(key);
  if (touch.evicted_dirty) {
    Segment* vseg = find_segment(at.node.id(), touch.evicted_page.segment);
    DiskId d = vseg ? vseg->home_disk : 0;
    double t0 = sim.now();
    co_await at.node.disk(d).write_page();
    if (txn) txn->bd.disk_io += sim.now() - t0;
  }
  if (touch.spilled && at.buffer.helper() != kNoNode) {
    double t0 = sim.now();
    co_await net.send(at.node, nc(at.buffer.helper()).node, cfg.page_size);
    if (txn) txn->bd.network += sim.now() - t0;
  }
  if (touch.hit) {
    if (write) at.buffer.mark_dirty(key);
    co_return;
  }
  if (touch.from_helper) {
    NodeCtx& h = nc(at.buffer.helper());
    double t0 = sim.now();
    co_await net.send(at.node, h.node, kControlMsgBytes);
    co_await h.node.cpu(cfg.cpu_per_message);
    co_await net.send(h.node, at.node, cfg.page_size);
    if (txn) txn->bd.network += sim.now() - t0;
  } else {
    double t0 = sim.now();
    co_await at.node.disk(seg.home_disk).read_page();
    if (txn) txn->bd.disk_io += sim.now() - t0;
  }
  if (write) at.buffer.mark_dirty(key);
}

Task<void> Cluster::page_access_remote(TxnCtx* txn, NodeCtx& requester, NodeCtx& host,
                                       Segment& seg, uint32_t page, bool write,
                                       PartitionId attr) {
  requester.remote_page_fetches++;
  double t0 = sim.now();
  co_await net.send(requester.node, host.node, kControlMsgBytes);
  co_await host.node.cpu(cfg.cpu_per_message);
  if (txn) txn->bd.network += sim.now() - t0;
  co_await page_access_local(txn, host, seg, page, write, attr);
  t0 = sim.now();
  co_await net.send(host.node, requester.node, cfg.page_size);
  co_await requester.node.cpu(cfg.cpu_per_message);
  if (txn) txn->bd.network += sim.now() - t0;
  if (attr != 0) requester.node.charge_partition_net(attr, cfg.page_size);
}

Task<void> Cluster::page_access(TxnCtx* txn, NodeId at, SegmentRef ref, uint32_t page, bool write,
                                PartitionId attr) {
  Segment* seg = find_segment(ref.host, ref.id);
  assert(seg != nullptr);
  if (ref.host == at)
    co_await page_access_local(txn, nc(at), *seg, page, write, attr);
  else
    co_await page_access_remote(txn, nc(at), nc(ref.host), *seg, page, write, attr);
}

Task<void> Cluster::flush_segment(NodeId at, Segment& seg, Breakdown* bd) {
  NodeCtx& n = nc(at);
  auto dirty = n.buffer.dirty_pages(seg.id);
  for (const auto& pk : dirty) {
    double t0 = sim.now();
    co_await n.node.disk(seg.home_disk).write_page();
    if (bd) bd->disk_io += sim.now() - t0;
    n.buffer.clean(pk);
  }
}

Task<void> Cluster::flush_all(NodeId at) {
  NodeCtx& n = nc(at);
  auto dirty = n.buffer.dirty_pages_all();
  for (const auto& pk : dirty) {
    Segment* seg = find_segment(at, pk.segment);
    co_await n.node.disk(seg ? seg->home_disk : 0).write_page();
    n.buffer.clean(pk);
  }
}

Task<void> Cluster::wal_charge(NodeId at, Breakdown* bd) {
  NodeCtx& n = nc(at);
  double t0 = sim.now();
  if (n.wal.ship_to != kNoNode && nc(n.wal.ship_to).node.active()) {
    auto r = co_await net.send(n.node, nc(n.wal.ship_to).node, kWalShipBytes);
    if (r.status == SendStatus::Delivered) {
      co_await nc(n.wal.ship_to).node.cpu(cfg.cpu_per_message);
      if (bd) bd->logging += sim.now() - t0;
      co_return;
    }
  }
  co_await n.node.disk(0).charge_seconds(cfg.wal_append_time);
  if (bd) bd->logging += sim.now() - t0;
}

// --- record operations ---

Task<OpRead> Cluster::op_read(TxnCtx& txn, TableId table, uint64_t pk) {
  OpRead out;
  auto route = map.route(table, pk);
  NodeId targets[2] = {route.first, route.second};
  for (int i = 0; i < 2; ++i) {
    NodeId nid = targets[i];
    if (nid == kNoNode) continue;
    if (nid != txn.home) {
      co_await msg_hop(&txn, txn.home, nid, kControlMsgBytes);
      out.hops++;
    }
    Partition* p = find_partition(nid, table, pk);
    if (p) {
      auto ref = p->route(pk);
      if (ref) {
        if (cc_mode == CcMode::MglRx) {
          co_await charge_cpu(&txn, nid, cfg.cpu_lock_acquire * 2, p->id);
          double t0 = sim.now();
          auto r1 = co_await nc(nid).locks.acquire(txn, LockResId::partition(p->id), LockMode::IR);
          LockResult r2 = r1;
          if (r1 == LockResult::Granted)
            r2 = co_await nc(nid).locks.acquire(txn, LockResId::key(table, pk), LockMode::R);
          txn.bd.locking += sim.now() - t0;
          if (r1 == LockResult::Deadlock || r2 == LockResult::Deadlock) {
            out.status = OpStatus::Deadlock;
            co_return out;
          }
        }
        Segment* seg = find_segment(ref->host, ref->id);
        for (uint32_t pg : chain_pages(*seg, pk))
          co_await page_access(&txn, nid, *ref, pg, false, p->id);
        co_await charge_cpu(&txn, nid, cfg.cpu_op_read, p->id);
        VisibleVersion v = cc_mode == CcMode::Mvcc ? chain_read(*seg, pk, txn.snapshot, txn.id)
                                                   : chain_read_latest(*seg, pk);
        if (v.found) {
          out.found = true;
          out.value = v.payload;
        }
      }
    }
    if (nid != txn.home) {
      uint64_t bytes = kControlMsgBytes + (out.found ? catalog.table(table).stride() : 0);
      co_await msg_hop(&txn, nid, txn.home, bytes);
    }
    if (out.found) break;
  }
  co_return out;
}

Task<OpWrite> Cluster::op_write_generic(TxnCtx& txn, TableId table, uint64_t pk, Payload v,
                                        WriteKind kind) {
  const Payload payload = std::move(v);
  for (int attempt = 0; attempt < 8; ++attempt) {
    auto route = map.route(table, pk);
    NodeId targets[2] = {route.first, route.second};
    bool retry_later = false;
    for (int i = 0; i < 2; ++i) {
      NodeId nid = targets[i];
      if (nid == kNoNode) continue;
      if (nid != txn.home) co_await msg_hop(&txn, txn.home, nid, kControlMsgBytes + payload.size());
      Partition* p = find_partition(nid, table, pk);
      if (!p) continue;
      auto ref = p->route(pk);
      if (!ref) continue;  // segment not (yet / anymore) here: visit the peer
      Segment* seg = find_segment(ref->host, ref->id);

      // The move protocol: a closed gate means a copy is in flight; the
      // writer waits here and re-resolves once reopened.
      bool holds = std::find(txn.gates_held.begin(), txn.gates_held.end(), p) !=
                   txn.gates_held.end();
      if (!holds && p->gate_closed) {
        double t0 = sim.now();
        co_await gate_enter(txn, *p);  // waits for the copy, keeps the token
        txn.bd.locking += sim.now() - t0;
        retry_later = true;  // segment may have moved meanwhile
        break;
      }
      if (!holds) co_await gate_enter(txn, *p);

      if (cc_mode == CcMode::MglRx) {
        co_await charge_cpu(&txn, nid, cfg.cpu_lock_acquire * 2, p->id);
        double t0 = sim.now();
        auto r1 = co_await nc(nid).locks.acquire(txn, LockResId::partition(p->id), LockMode::IX);
        LockResult r2 = r1;
        if (r1 == LockResult::Granted)
          r2 = co_await nc(nid).locks.acquire(txn, LockResId::key(table, pk), LockMode::X);
        txn.bd.locking += sim.now() - t0;
        if (r1 == LockResult::Deadlock || r2 == LockResult::Deadlock)
          co_return OpWrite{OpStatus::Deadlock};
      } else {
        co_await charge_cpu(&txn, nid, cfg.cpu_version_append, p->id);
      }

      WriteOutcome w;
      switch (kind) {
        case WriteKind::Insert: w = chain_insert(*seg, pk, Payload(payload), txn); break;
        case WriteKind::Update: w = chain_update(*seg, pk, Payload(payload), txn); break;
        case WriteKind::Delete: w = chain_delete(*seg, pk, txn); break;
      }
      if (w == WriteOutcome::Full) {
        auto st = co_await ensure_capacity(txn, nid, *p, *seg);
        if (st != OpStatus::Ok) co_return OpWrite{st};
        retry_later = true;
        break;
      }
      if (w == WriteOutcome::Conflict) co_return OpWrite{OpStatus::Conflict};
      if (w == WriteOutcome::DuplicateKey) co_return OpWrite{OpStatus::DuplicateKey};
      if (w == WriteOutcome::NotFound) {
        // Under a dual pointer the live version may sit on the peer.
        if (i == 0 && targets[1] != kNoNode) continue;
        co_return OpWrite{OpStatus::NotFound};
      }
      // success: complete bookkeeping and charge the page write
      WriteRef& wr = txn.writes.back();
      wr.partition = p->id;
      wr.node = nid;
      txn.touched_partitions.insert(p->id);
      Loc head = seg->local_index[pk];
      co_await page_access(&txn, nid, *ref, head.page, true, p->id);
      co_await charge_cpu(&txn, nid, cfg.cpu_op_write, p->id);
      co_return OpWrite{OpStatus::Ok};
    }
    if (!retry_later) co_return OpWrite{OpStatus::NotFound};
  }
  co_return OpWrite{OpStatus::RoutingError};
}

Task<OpWrite> Cluster::op_insert(TxnCtx& txn, TableId table, uint64_t pk, Payload v) {
  return op_write_generic(txn, table, pk, std::move(v), WriteKind::Insert);
}
Task<OpWrite> Cluster::op_update(TxnCtx& txn, TableId table, uint64_t pk, Payload v) {
  return op_write_generic(txn, table, pk, std::move(v), WriteKind::Update);
}
Task<OpWrite> Cluster::op_delete(TxnCtx& txn, TableId table, uint64_t pk) {
  return op_write_generic(txn, table, pk, Payload{}, WriteKind::Delete);
}

Task<OpWrite> Cluster::partition_insert(TxnCtx& txn, Partition& p, uint64_t pk, Payload v) {
  if (!p.range.contains(pk)) co_return OpWrite{OpStatus::RoutingError};
  auto ref = p.route(pk);
  if (!ref) co_return OpWrite{OpStatus::RoutingError};
  Segment* seg = find_segment(ref->host, ref->id);
  const Payload payload = std::move(v);
  WriteOutcome w = chain_insert(*seg, pk, Payload(payload), txn);
  if (w == WriteOutcome::Full) {
    auto st = co_await ensure_capacity(txn, p.owner, p, *seg);
    if (st != OpStatus::Ok) co_return OpWrite{st};
    ref = p.route(pk);
    seg = find_segment(ref->host, ref->id);
    w = chain_insert(*seg, pk, Payload(payload), txn);
  }
  if (w != WriteOutcome::Ok) {
    co_return OpWrite{w == WriteOutcome::Conflict ? OpStatus::Conflict
                      : w == WriteOutcome::DuplicateKey ? OpStatus::DuplicateKey
                                                        : OpStatus::NotFound};
  }
  WriteRef& wr = txn.writes.back();
  wr.partition = p.id;
  wr.node = p.owner;
  Loc head = seg->local_index[pk];
  co_await page_access(&txn, p.owner, *ref, head.page, true, p.id);
  co_return OpWrite{OpStatus::Ok};
}

Task<ScanResult> Cluster::op_scan(TxnCtx& txn, TableId table, KeyRange range) {
  ScanResult out;
  auto entries = map.entries(table);
  for (const auto& [lo, e] : entries) {
    KeyRange er{lo, e.hi};
    if (!er.overlaps(range)) continue;
    NodeId venues[2] = {e.current, e.old};
    for (int i = 0; i < 2; ++i) {
      NodeId nid = venues[i];
      if (nid == kNoNode) continue;
      if (nid != txn.home) co_await msg_hop(&txn, txn.home, nid, kControlMsgBytes);
      uint64_t rows_before = out.rows.size();
      for (auto& [pid, part] : nc(nid).partitions) {
        Partition* p = part.get();
        if (p->table != table || !p->range.overlaps(er)) continue;
        if (cc_mode == CcMode::MglRx) {
          // Scans lock the partition coarsely.
          co_await charge_cpu(&txn, nid, cfg.cpu_lock_acquire, p->id);
          double t0 = sim.now();
          auto r = co_await nc(nid).locks.acquire(txn, LockResId::partition(p->id), LockMode::R);
          txn.bd.locking += sim.now() - t0;
          if (r == LockResult::Deadlock) co_return out;  // caller aborts on empty+deadlock
        }
        // Segment pruning: only segments intersecting the predicate.
        for (const auto& [slo, ref] : p->top) {
          KeyRange sr = p->subrange_at(slo);
          if (!sr.overlaps(range) || !sr.overlaps(er)) continue;
          Segment* seg = find_segment(ref.host, ref.id);
          out.segments_visited++;
          uint64_t klo = std::max({range.lo, sr.lo, er.lo});
          uint64_t khi = std::min({range.hi, sr.hi, er.hi});
          uint32_t last_page = kNoPage;
          uint64_t n_records = 0;
          for (auto it = seg->local_index.lower_bound(klo);
               it != seg->local_index.end() && it->first < khi; ++it) {
            for (uint32_t pg : chain_pages(*seg, it->first)) {
              if (pg == last_page) continue;
              co_await page_access(&txn, nid, ref, pg, false, p->id);
              last_page = pg;
              out.pages_touched++;
            }
            VisibleVersion v = cc_mode == CcMode::Mvcc
                                   ? chain_read(*seg, it->first, txn.snapshot, txn.id)
                                   : chain_read_latest(*seg, it->first);
            if (v.found) out.rows.push_back(ScanRow{it->first, v.payload});
            n_records++;
          }
          co_await charge_cpu(&txn, nid, cfg.cpu_per_record_scan * double(n_records), p->id);
        }
      }
      if (nid != txn.home) {
        uint64_t bytes = kControlMsgBytes +
                         (out.rows.size() - rows_before) * catalog.table(table).stride();
        co_await msg_hop(&txn, nid, txn.home, bytes);
      }
    }
  }
  std::sort(out.rows.begin(), out.rows.end(),
            [](const ScanRow& a, const ScanRow& b) { return a.pk < b.pk; });
  co_return out;
}

Task<OpStatus> Cluster::ensure_capacity(TxnCtx& txn, NodeId at, Partition& p, Segment& seg) {
  gc_segment(seg, tm.oldest_active_snapshot());
  if (!seg.full()) co_return OpStatus::Ok;
  if (seg.local_index.size() < 2) co_return OpStatus::StorageFull;
  NodeCtx& host = nc(seg.home_node);
  Segment& right = split_segment(host, p, seg);
  // Splitting rewrites both halves; charge the used pages of the new half.
  uint32_t used_pages = 0;
  for (uint32_t i = 0; i < right.page_count(); ++i)
    if (right.page(i).used > 0) used_pages++;
  double t0 = sim.now();
  co_await host.node.disk(right.home_disk).charge(used_pages * 2);
  txn.bd.disk_io += sim.now() - t0;
  co_return OpStatus::Ok;
}

Segment& Cluster::split_segment(NodeCtx& host, Partition& p, Segment& seg,
                                std::optional<uint64_t> at_key) {
  uint64_t split_key;
  if (at_key) {
    split_key = *at_key;
  } else {
    auto mid = seg.local_index.begin();
    std::advance(mid, seg.local_index.size() / 2);
    split_key = mid->first;
  }
  Segment& right = create_segment(host.node.id(), seg.table, KeyRange{split_key, seg.range.hi},
                                  seg.home_disk);
  // move chains >= split_key, preserving version order
  std::vector<uint64_t> keys;
  for (auto it = seg.local_index.lower_bound(split_key); it != seg.local_index.end(); ++it)
    keys.push_back(it->first);
  for (uint64_t k : keys) {
    // collect chain oldest-first
    std::vector<Loc> chain;
    for (Loc loc = seg.local_index[k]; loc.valid(); loc = seg.at(loc).prev) chain.push_back(loc);
    Loc prev_new;
    for (auto rit = chain.rbegin(); rit != chain.rend(); ++rit) {
      auto slot = right.alloc_slot();
      assert(slot);
      VersionRec& dst = right.at(*slot);
      dst = seg.at(*rit);
      dst.prev = prev_new;
      prev_new = *slot;
    }
    right.local_index[k] = prev_new;
    if (chain_has_live(right, k)) right.live_records++;
    for (Loc loc : chain) seg.free_slot(loc);
    if (chain_has_live(seg, k)) seg.live_records--;
    seg.local_index.erase(k);
  }
  seg.range.hi = split_key;
  p.top[split_key] = SegmentRef{right.id, seg.home_node};
  host.buffer.drop_segment(seg.id);  // page layout of the left half changed
  return right;
}

Task<TxnEnd> Cluster::commit_txn(TxnCtx& txn) {
  assert(txn.status == TxnStatus::Active);
  if (!txn.writes.empty()) {
    Ts cts = tm.next_commit_ts();
    bool prune = cc_mode == CcMode::MglRx;
    for (auto& w : txn.writes) apply_commit(w, cts, prune);
    // WAL records are grouped per executing node, one append op each.
    std::map<NodeId, std::vector<const WriteRef*>> by_node;
    for (const auto& w : txn.writes) by_node[w.node].push_back(&w);
    for (auto& [nid, writes] : by_node) {
      for (const auto* w : writes) {
        WalOp op = w->kind == WriteKind::Insert   ? WalOp::Insert
                   : w->kind == WriteKind::Update ? WalOp::Update
                                                  : WalOp::Delete;
        nc(nid).wal.append(txn.id, w->partition, op, w->key);
      }
      co_await wal_charge(nid, &txn.bd);
    }
    if (cc_mode == CcMode::Mvcc) {
      Ts oldest = tm.oldest_active_snapshot();
      for (auto& w : txn.writes)
        if (w.seg->chain_length(w.key) > cfg.gc_chain_threshold) gc_chain(*w.seg, w.key, oldest);
    }
  }
  txn.status = TxnStatus::Committed;
  gate_exit_all(txn);
  std::vector<LockTable*> tables;
  for (auto& [lt, res] : txn.locks_held)
    if (std::find(tables.begin(), tables.end(), lt) == tables.end()) tables.push_back(lt);
  for (auto* lt : tables) lt->release_all(txn);
  tm.finish(txn.id);
  txn_commits++;
  sim.trace(TraceKind::kTxn, txn.home, "commit txn=" + std::to_string(txn.id));
  co_return TxnEnd::Committed;
}

void Cluster::abort_txn(TxnCtx& txn) {
  assert(txn.status == TxnStatus::Active);
  for (auto it = txn.writes.rbegin(); it != txn.writes.rend(); ++it) apply_abort(*it);
  txn.writes.clear();
  txn.status = TxnStatus::Aborted;
  gate_exit_all(txn);
  std::vector<LockTable*> tables;
  for (auto& [lt, res] : txn.locks_held)
    if (std::find(tables.begin(), tables.end(), lt) == tables.end()) tables.push_back(lt);
  for (auto* lt : tables) lt->release_all(txn);
  tm.finish(txn.id);
  txn_aborts++;
  sim.trace(TraceKind::kTxn, txn.home, "abort txn=" + std::to_string(txn.id));
}

// --- monitoring ---

void Cluster::start_monitoring() {
  monitoring_on = true;
  for (NodeId i = 0; i < node_count(); ++i)
    if (nc(i).node.active()) sim.spawn(monitor_loop(i));
  sim.spawn(controller_loop());
}

NodeStats Cluster::collect_stats(NodeId id, uint64_t interval_index) {
  NodeCtx& n = nc(id);
  NodeStats s;
  s.node = id;
  s.interval_index = interval_index;
  s.cpu_utilization = n.node.cpu_busy_in(interval_index) / cfg.monitor_interval;
  s.mem_used_pages = n.buffer.resident_count();
  uint64_t disk_ops = 0;
  for (uint32_t d = 0; d < n.node.disk_count(); ++d) disk_ops += n.node.disk(d).total_ops();
  s.disk_iops = double(disk_ops - n.node.disk_ops_prev) / cfg.monitor_interval;
  n.node.disk_ops_prev = disk_ops;
  s.net_bytes = n.node.net_bytes_sent - n.node.net_bytes_prev;
  n.node.net_bytes_prev = n.node.net_bytes_sent;
  s.per_partition.clear();
  for (auto& [pid, load] : n.node.take_partition_loads()) s.per_partition[pid] = load;
  return s;
}

Task<void> Cluster::monitor_loop(NodeId id) {
  uint64_t idx = static_cast<uint64_t>(sim.now() / cfg.monitor_interval);
  while (true) {
    co_await sim.at(double(idx + 1) * cfg.monitor_interval);
    NodeCtx& n = nc(id);
    if (!n.node.active() || !monitoring_on) co_return;
    NodeStats s = collect_stats(id, idx);
    if (id != kMasterNode) {
      auto r = co_await net.send(n.node, nc(kMasterNode).node,
                                 256 + 64 * s.per_partition.size());
      if (r.status != SendStatus::Delivered) co_return;
    }
    master_ingest(std::move(s));
    idx++;
  }
}

void Cluster::master_ingest(NodeStats s) { last_stats_[s.node] = std::move(s); }

Task<void> Cluster::controller_loop() {
  uint64_t idx = static_cast<uint64_t>(sim.now() / cfg.monitor_interval);
  while (true) {
    // Evaluate shortly after the reports for interval idx have landed.
    co_await sim.at(double(idx + 1) * cfg.monitor_interval + 0.1);
    if (!monitoring_on) co_return;
    if (controller_enabled) {
      ClusterView view;
      view.now = sim.now();
      view.interval = cfg.monitor_interval;
      for (NodeId i = 0; i < node_count(); ++i) {
        const NodeCtx& n = nc(i);
        NodeView nv;
        nv.id = i;
        nv.power = n.node.power_state();
        nv.helper = n.is_helper;
        nv.data_node = i != kMasterNode && !n.is_helper && n.node.active();
        nv.disk_count = n.node.disk_count();
        nv.iops_cap = cfg.disk_iops_cap * n.node.disk_count();
        auto it = last_stats_.find(i);
        if (it != last_stats_.end() && it->second.interval_index == idx) {
          nv.cpu = it->second.cpu_utilization;
          nv.disk_iops = it->second.disk_iops;
          for (const auto& [pid, load] : it->second.per_partition)
            nv.partitions.emplace_back(pid, load.cpu_seconds);
        }
        view.nodes.push_back(std::move(nv));
      }
      auto actions = controller.evaluate(view);
      if (!actions.empty()) execute_actions(actions);
    }
    idx++;
  }
}

double Cluster::node_utilization(NodeId id, uint64_t interval_index) const {
  return nc(id).node.cpu_busy_in(interval_index) / cfg.monitor_interval;
}

double Cluster::cluster_power_at(uint64_t interval_index) const {
  std::vector<PowerState> states;
  std::vector<double> utils;
  for (NodeId i = 0; i < node_count(); ++i) {
    states.push_back(nc(i).node.power_state());
    utils.push_back(node_utilization(i, interval_index));
  }
  return power.cluster_power(states, utils);
}

void Cluster::log_decision(const std::string& trigger, const std::string& action,
                           const std::string& target) {
  decision_log.push_back(format_time(sim.now()) + "\t" + trigger + "\t" + action + "\t" + target);
  sim.trace(TraceKind::kController, kMasterNode, action + " " + target);
}

void Cluster::log_move(uint64_t plan, const std::string& step, uint64_t bytes) {
  move_audit.push_back(format_time(sim.now()) + "\tplan " + std::to_string(plan) + "\t" + step +
                       "\t" + std::to_string(bytes));
  sim.trace(TraceKind::kMove, kMasterNode, "plan " + std::to_string(plan) + " " + step);
}

// --- introspection ---

std::string Cluster::dump_partitions() const {
  std::string out;
  for (NodeId i = 0; i < node_count(); ++i) {
    for (const auto& [pid, p] : nc(i).partitions) {
      uint64_t live = 0;
      for (const auto& [lo, ref] : p->top) {
        const auto& segs = nc(ref.host).segments;
        auto it = segs.find(ref.id);
        if (it != segs.end()) live += it->second->live_records;
      }
      out += "partition " + std::to_string(pid) + " node " + std::to_string(i) + " table " +
             catalog.table(p->table).name + " state " + partition_state_name(p->state) +
             " range [" + std::to_string(p->range.lo) + "," + std::to_string(p->range.hi) +
             ") segments " + std::to_string(p->top.size()) + " live " + std::to_string(live) +
             "\n";
      for (const auto& [lo, ref] : p->top) {
        const auto& segs = nc(ref.host).segments;
        auto it = segs.find(ref.id);
        if (it == segs.end()) continue;
        const Segment& s = *it->second;
        out += "  segment " + std::to_string(s.id) + " range [" + std::to_string(s.range.lo) +
               "," + std::to_string(s.range.hi) + ") host " + std::to_string(ref.host) +
               " live " + std::to_string(s.live_records) + " versions " +
               std::to_string(s.version_count) + "\n";
      }
    }
  }
  return out;
}

std::map<uint64_t, uint64_t> Cluster::table_state(TableId table) const {
  std::map<uint64_t, uint64_t> out;
  for (NodeId i = 0; i < node_count(); ++i) {
    for (const auto& [pid, p] : nc(i).partitions) {
      if (p->table != table) continue;
      for (const auto& [lo, ref] : p->top) {
        const auto& segs = nc(ref.host).segments;
        auto it = segs.find(ref.id);
        if (it == segs.end()) continue;
        const Segment& s = *it->second;
        for (const auto& [k, loc] : s.local_index) {
          VisibleVersion v = chain_read_latest(s, k);
          if (v.found) out[k] = payload_value(v.payload);
        }
      }
    }
  }
  return out;
}

uint64_t Cluster::live_bytes_total() const {
  uint64_t sum = 0;
  for (NodeId i = 0; i < node_count(); ++i)
    for (const auto& [sid, seg] : nc(i).segments) sum += seg->version_count * seg->stride;
  return sum;
}

uint64_t Cluster::table_record_count(TableId table) const {
  uint64_t n = 0;
  for (NodeId i = 0; i < node_count(); ++i)
    for (const auto& [pid, p] : nc(i).partitions)
      if (p->table == table)
        for (const auto& [lo, ref] : p->top) {
          auto it = nc(ref.host).segments.find(ref.id);
          if (it != nc(ref.host).segments.end()) n += it->second->live_records;
        }
  return n;
}

uint64_t Cluster::run_gc() {
  Ts oldest = tm.oldest_active_snapshot();
  uint64_t freed = 0;
  for (NodeId i = 0; i < node_count(); ++i)
    for (auto& [sid, seg] : nc(i).segments) freed += gc_segment(*seg, oldest);
  return freed;
}

}  // namespace edb
