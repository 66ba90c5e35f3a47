#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "edb/runtime.hpp"
#include "edb/storage.hpp"

namespace edb {

// Master routing table: key range -> current owner, plus the old owner
// while a move is in flight (dual pointer).
class PartitionMap {
 public:
  struct Entry {
    uint64_t hi = 0;
    NodeId current = kNoNode;
    NodeId old = kNoNode;  // set iff moving
    bool moving() const { return old != kNoNode; }
  };

  struct Route {
    NodeId first = kNoNode;
    NodeId second = kNoNode;  // visit when first cannot resolve
    bool dual() const { return second != kNoNode; }
  };

  void set_table_domain(TableId table, KeyRange domain, NodeId owner) {
    tables_[table][domain.lo] = Entry{domain.hi, owner, kNoNode};
    domains_[table] = domain;
  }

  // Splits the entry covering `at` into two at `at`.
  void split(TableId table, uint64_t at);

  // Marks [range] as moving to target; the previous owner becomes the old
  // pointer. Range must align with entry boundaries (splits first).
  void begin_move(TableId table, KeyRange range, NodeId target);

  // Drops the old pointer once the move has drained.
  void finish_move(TableId table, KeyRange range);

  // Direct ownership rewrite for non-transferring updates.
  void set_owner(TableId table, KeyRange range, NodeId owner);

  // Stable -> {current}; Moving -> {current, old}, new owner tried first.
  Route route(TableId table, uint64_t pk) const;

  bool covered(TableId table, uint64_t pk) const;

  // Map audit: entries of each table are disjoint and cover its domain.
  bool coverage_ok(std::string* why = nullptr) const;

  std::vector<std::pair<uint64_t, Entry>> entries(TableId table) const;
  const std::map<TableId, KeyRange>& domains() const { return domains_; }

  // Nodes owning at least one range (current pointers only).
  std::vector<NodeId> owner_set() const;

 private:
  std::map<TableId, std::map<uint64_t, Entry>> tables_;
  std::map<TableId, KeyRange> domains_;
};

// Node and switch power figures with linear interpolation on utilization.
struct PowerModel {
  double p_idle = 22.0;
  double p_max = 26.0;
  double p_standby = 2.5;
  double p_switch = 20.0;

  double active_power(double utilization) const {
    if (utilization < 0) utilization = 0;
    if (utilization > 1) utilization = 1;
    return p_idle + (p_max - p_idle) * utilization;
  }

  // states/utilizations aligned by index; Booting counts as active-idle.
  double cluster_power(const std::vector<PowerState>& states,
                       const std::vector<double>& utilizations) const {
    double w = p_switch;
    for (size_t i = 0; i < states.size(); ++i) {
      if (states[i] == PowerState::Standby)
        w += p_standby;
      else
        w += active_power(i < utilizations.size() ? utilizations[i] : 0.0);
    }
    return w;
  }
};

struct EnergyPoint {
  double time = 0;
  double energy_j = 0;       // power * dt over the interval
  double per_query_j = 0;    // valid iff defined
  bool defined = false;      // false when no query completed (the NA guard)
};

struct EnergySeries {
  double total_j = 0;
  std::vector<EnergyPoint> points;
};

// power_w[i] holds over [t0 + i*dt, t0 + (i+1)*dt); completions aligned.
EnergySeries energy_accounting(const std::vector<double>& power_w,
                               const std::vector<uint64_t>& completions, double dt,
                               double t0 = 0.0);

// --- threshold controller ---

enum class ActionKind {
  OffloadHint,
  PowerOn,
  ScaleOutMove,  // move `partition` from `node` to `target`
  SplitAndMove,  // split `partition` first, move upper half
  ScaleInMove,   // move all partitions off `node`, then power it off
  PowerOff,
  IopsRebalance,
};

const char* action_kind_name(ActionKind k);

struct Action {
  ActionKind kind;
  NodeId node = kNoNode;
  NodeId target = kNoNode;
  PartitionId partition = 0;
  std::string trigger;  // metric that fired, for the decision log
};

// What the controller sees each interval.
struct NodeView {
  NodeId id = kNoNode;
  PowerState power = PowerState::Standby;
  bool data_node = false;  // hosts partitions (master and helpers excluded)
  bool helper = false;
  double cpu = 0.0;
  double disk_iops = 0.0;
  double iops_cap = 0.0;
  uint32_t disk_count = 1;
  std::vector<std::pair<PartitionId, double>> partitions;  // cpu-seconds per partition
};

struct ClusterView {
  double now = 0;
  double interval = 1.0;
  std::vector<NodeView> nodes;
};

class Controller {
 public:
  Controller(double cpu_upper, double cpu_lower, uint32_t k, double iops_high)
      : upper_(cpu_upper), lower_(cpu_lower), k_(k), iops_high_(iops_high) {}

  // Pure decision step: consumes one interval of stats, returns actions.
  std::vector<Action> evaluate(const ClusterView& view);

  // The executor reports structural work start/end so the controller keeps
  // at most one in flight and cools down afterwards.
  void structural_started() { in_flight_ = true; }
  void structural_finished(double now) {
    in_flight_ = false;
    cooldown_until_ = now + cooldown_;
  }
  void set_cooldown(double s) { cooldown_ = s; }
  bool in_flight() const { return in_flight_; }

 private:
  double upper_, lower_;
  uint32_t k_;
  double iops_high_;
  double cooldown_ = 0.0;
  bool in_flight_ = false;
  double cooldown_until_ = 0.0;
  std::map<NodeId, uint32_t> over_;
  std::map<NodeId, uint32_t> iops_over_;
  std::map<NodeId, bool> hinted_;
  uint32_t under_all_ = 0;
};

}  // namespace edb
