#pragma once

#include <map>
#include <memory>

#include "edb/core.hpp"
#include "edb/sim.hpp"

namespace edb {

enum class PowerState { Active, Booting, Standby };

const char* power_state_name(PowerState s);

// Simulated disk: FIFO service, per-op time = max(service_time, 1/iops_cap).
class SimDisk {
 public:
  SimDisk(Sim& sim, DiskId id, double service_time, double iops_cap)
      : id_(id), service_time_(service_time), iops_cap_(iops_cap), res_(sim) {}

  double op_time() const {
    double floor = iops_cap_ > 0 ? 1.0 / iops_cap_ : 0.0;
    return service_time_ > floor ? service_time_ : floor;
  }

  Resource::Awaiter read_page() { return charge(1); }
  Resource::Awaiter write_page() { return charge(1); }
  Resource::Awaiter charge(uint32_t pages) { return res_.use(op_time() * pages); }
  // Raw-duration op (log appends); still counts as one disk op.
  Resource::Awaiter charge_seconds(double seconds) { return res_.use(seconds); }

  DiskId id() const { return id_; }
  Resource& resource() { return res_; }
  uint64_t total_ops() const { return res_.ops(); }
  double busy_seconds() const { return res_.busy_seconds(); }

 private:
  DiskId id_;
  double service_time_;
  double iops_cap_;
  uint64_t reads_pending_ = 0;
  Resource res_;
};

// Per-partition utilization sample, the unit the controller correlates
// load back to DB entities with.
struct PartitionLoad {
  double cpu_seconds = 0.0;
  uint64_t page_requests = 0;
  uint64_t net_bytes = 0;
};

struct NodeStats {
  NodeId node = 0;
  uint64_t interval_index = 0;
  double cpu_utilization = 0.0;
  uint64_t mem_used_pages = 0;
  double disk_iops = 0.0;
  uint64_t net_bytes = 0;
  std::map<PartitionId, PartitionLoad> per_partition;
};

class Node {
 public:
  Node(Sim& sim, NodeId id, const ClusterConfig& cfg)
      : id_(id), sim_(&sim), cpu_(sim), cpu_capacity_(cfg.cpu_capacity) {
    for (uint32_t d = 0; d < cfg.disks_per_node; ++d)
      disks_.push_back(std::make_unique<SimDisk>(sim, d, cfg.disk_service_time, cfg.disk_iops_cap));
  }

  NodeId id() const { return id_; }
  PowerState power_state() const { return power_; }
  void set_power_state(PowerState s) { power_ = s; }
  bool active() const { return power_ == PowerState::Active; }

  // CPU work expressed in seconds at capacity 1.0.
  Resource::Awaiter cpu(double work) { return cpu_.use(work / cpu_capacity_); }
  Resource& cpu_resource() { return cpu_; }

  SimDisk& disk(DiskId d = 0) { return *disks_.at(d); }
  uint32_t disk_count() const { return static_cast<uint32_t>(disks_.size()); }

  // interval accounting for monitoring / power
  double cpu_busy_in(size_t interval_index) const { return cpu_.meter().busy_in(interval_index); }

  void charge_partition_cpu(PartitionId p, double seconds) {
    partition_accum_[p].cpu_seconds += seconds;
  }
  void charge_partition_page(PartitionId p, uint64_t n = 1) {
    partition_accum_[p].page_requests += n;
  }
  void charge_partition_net(PartitionId p, uint64_t bytes) {
    partition_accum_[p].net_bytes += bytes;
  }
  // Drain per-partition counters accumulated since the previous report.
  std::map<PartitionId, PartitionLoad> take_partition_loads() {
    auto out = std::move(partition_accum_);
    partition_accum_.clear();
    return out;
  }

  uint64_t net_bytes_sent = 0;
  uint64_t net_bytes_prev = 0;
  uint64_t disk_ops_prev = 0;
  uint64_t mem_pages_used = 0;

  // queries / mover tasks currently executing here
  int active_tasks = 0;

 private:
  NodeId id_;
  Sim* sim_;
  PowerState power_ = PowerState::Standby;
  Resource cpu_;
  double cpu_capacity_;
  std::vector<std::unique_ptr<SimDisk>> disks_;
  std::map<PartitionId, PartitionLoad> partition_accum_;
};

enum class SendStatus { Delivered, DestinationStandby };

struct SendResult {
  SendStatus status;
  double delivered_at;
};

// Full mesh; contention is per directed link: a link transfers one
// message at a time for its bandwidth portion, latency is pipelined.
class Network {
 public:
  Network(Sim& sim, double base_latency, double bandwidth)
      : sim_(&sim), base_latency_(base_latency), bandwidth_(bandwidth) {}

  double transfer_time(uint64_t bytes) const {
    return base_latency_ + static_cast<double>(bytes) / bandwidth_;
  }

  struct Link {
    explicit Link(Sim& sim) : res(sim) {}
    Resource res;
    uint64_t bytes = 0;
    uint64_t messages = 0;
  };

  Link& link(NodeId from, NodeId to) {
    auto key = std::make_pair(from, to);
    auto it = links_.find(key);
    if (it == links_.end())
      it = links_.emplace(key, std::make_unique<Link>(*sim_)).first;
    return *it->second;
  }

  struct SendAwaiter {
    Network& net;
    Node& from;
    Node& to;
    uint64_t bytes;
    SendResult result{};
    bool await_ready() noexcept {
      if (!to.active()) {
        result = {SendStatus::DestinationStandby, net.sim_->now()};
        return true;  // failure reported to sender immediately
      }
      return false;
    }
    void await_suspend(std::coroutine_handle<> h) {
      Link& l = net.link(from.id(), to.id());
      l.bytes += bytes;
      l.messages += 1;
      from.net_bytes_sent += bytes;
      auto use = l.res.reserve(static_cast<double>(bytes) / net.bandwidth_);
      double arrival = use.end + net.base_latency_;
      result = {SendStatus::Delivered, arrival};
      net.sim_->schedule_handle(arrival, h);
    }
    SendResult await_resume() const noexcept { return result; }
  };

  // Suspends the calling task until the message lands at `to`.
  SendAwaiter send(Node& from, Node& to, uint64_t bytes) {
    return SendAwaiter{*this, from, to, bytes, {}};
  }

  uint64_t total_bytes() const {
    uint64_t sum = 0;
    for (const auto& [k, l] : links_) sum += l->bytes;
    return sum;
  }
  uint64_t total_messages() const {
    uint64_t sum = 0;
    for (const auto& [k, l] : links_) sum += l->messages;
    return sum;
  }

  double base_latency() const { return base_latency_; }
  double bandwidth() const { return bandwidth_; }

 private:
  Sim* sim_;
  double base_latency_;
  double bandwidth_;
  std::map<std::pair<NodeId, NodeId>, std::unique_ptr<Link>> links_;
};

}  // namespace edb
