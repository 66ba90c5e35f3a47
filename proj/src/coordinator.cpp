#include "edb/coordinator.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace edb {

void PartitionMap::split(TableId table, uint64_t at) {
  auto& m = tables_.at(table);
  auto it = m.upper_bound(at);
  assert(it != m.begin());
  --it;
  if (it->first == at) return;  // already a boundary
  Entry right = it->second;
  Entry& left = it->second;
  assert(at < left.hi);
  right.hi = left.hi;
  left.hi = at;
  m[at] = right;
}

void PartitionMap::begin_move(TableId table, KeyRange range, NodeId target) {
  split(table, range.lo);
  if (range.hi < domains_.at(table).hi) split(table, range.hi);
  auto& m = tables_.at(table);
  for (auto it = m.lower_bound(range.lo); it != m.end() && it->first < range.hi; ++it) {
    assert(!it->second.moving());
    it->second.old = it->second.current;
    it->second.current = target;
  }
}

void PartitionMap::finish_move(TableId table, KeyRange range) {
  auto& m = tables_.at(table);
  for (auto it = m.lower_bound(range.lo); it != m.end() && it->first < range.hi; ++it)
    it->second.old = kNoNode;
}

void PartitionMap::set_owner(TableId table, KeyRange range, NodeId owner) {
  split(table, range.lo);
  if (range.hi < domains_.at(table).hi) split(table, range.hi);
  auto& m = tables_.at(table);
  for (auto it = m.lower_bound(range.lo); it != m.end() && it->first < range.hi; ++it) {
    it->second.current = owner;
    it->second.old = kNoNode;
  }
}

PartitionMap::Route PartitionMap::route(TableId table, uint64_t pk) const {
  auto t = tables_.find(table);
  if (t == tables_.end()) throw std::runtime_error("partition map: unknown table");
  const auto& m = t->second;
  auto it = m.upper_bound(pk);
  if (it == m.begin()) throw std::runtime_error("partition map corruption: uncovered key");
  --it;
  if (pk >= it->second.hi) throw std::runtime_error("partition map corruption: uncovered key");
  Route r;
  r.first = it->second.current;
  r.second = it->second.old;
  return r;
}

bool PartitionMap::covered(TableId table, uint64_t pk) const {
  auto t = tables_.find(table);
  if (t == tables_.end()) return false;
  auto it = t->second.upper_bound(pk);
  if (it == t->second.begin()) return false;
  --it;
  return pk < it->second.hi;
}

bool PartitionMap::coverage_ok(std::string* why) const {
  for (const auto& [table, m] : tables_) {
    std::vector<KeyRange> ranges;
    for (const auto& [lo, e] : m) ranges.push_back(KeyRange{lo, e.hi});
    if (!ranges_cover(ranges, domains_.at(table), why)) {
      if (why) *why = "table " + std::to_string(table) + ": " + *why;
      return false;
    }
  }
  return true;
}

std::vector<std::pair<uint64_t, PartitionMap::Entry>> PartitionMap::entries(TableId table) const {
  std::vector<std::pair<uint64_t, Entry>> out;
  auto t = tables_.find(table);
  if (t == tables_.end()) return out;
  for (const auto& [lo, e] : t->second) out.emplace_back(lo, e);
  return out;
}

std::vector<NodeId> PartitionMap::owner_set() const {
  std::vector<NodeId> owners;
  for (const auto& [table, m] : tables_)
    for (const auto& [lo, e] : m)
      if (std::find(owners.begin(), owners.end(), e.current) == owners.end())
        owners.push_back(e.current);
  std::sort(owners.begin(), owners.end());
  return owners;
}

EnergySeries energy_accounting(const std::vector<double>& power_w,
                               const std::vector<uint64_t>& completions, double dt, double t0) {
  EnergySeries s;
  for (size_t i = 0; i < power_w.size(); ++i) {
    EnergyPoint p;
    p.time = t0 + dt * static_cast<double>(i);
    p.energy_j = power_w[i] * dt;
    uint64_t q = i < completions.size() ? completions[i] : 0;
    if (q > 0) {
      p.per_query_j = p.energy_j / static_cast<double>(q);
      p.defined = true;
    }
    s.total_j += p.energy_j;
    s.points.push_back(p);
  }
  return s;
}

const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::OffloadHint: return "offload-hint";
    case ActionKind::PowerOn: return "power-on";
    case ActionKind::ScaleOutMove: return "scale-out-move";
    case ActionKind::SplitAndMove: return "split-and-move";
    case ActionKind::ScaleInMove: return "scale-in-move";
    case ActionKind::PowerOff: return "power-off";
    case ActionKind::IopsRebalance: return "iops-rebalance";
  }
  return "?";
}

std::vector<Action> Controller::evaluate(const ClusterView& view) {
  std::vector<Action> actions;
  if (in_flight_ || view.now < cooldown_until_) return actions;

  std::vector<const NodeView*> data_nodes;
  std::vector<const NodeView*> standby;
  for (const auto& n : view.nodes) {
    if (n.power == PowerState::Standby) {
      if (!n.helper) standby.push_back(&n);
      continue;
    }
    if (n.data_node) data_nodes.push_back(&n);
  }
  if (data_nodes.empty()) return actions;

  // --- per-node CPU upper threshold ---
  bool any_over = false;
  for (const auto* n : data_nodes) {
    if (n->cpu > upper_) {
      over_[n->id]++;
      any_over = true;
    } else {
      over_[n->id] = 0;
      hinted_[n->id] = false;
    }
  }
  // --- all-nodes lower threshold (scale-in) ---
  bool all_under = true;
  for (const auto* n : data_nodes)
    if (n->cpu >= lower_) all_under = false;
  under_all_ = (all_under && !any_over) ? under_all_ + 1 : 0;

  // --- disk IOPS high band ---
  for (const auto* n : data_nodes) {
    if (n->iops_cap > 0 && n->disk_iops > iops_high_ * n->iops_cap)
      iops_over_[n->id]++;
    else
      iops_over_[n->id] = 0;
  }

  // Scale-out path: offload first, structural action once overload persists.
  const NodeView* hottest = nullptr;
  for (const auto* n : data_nodes) {
    if (over_[n->id] >= k_ && (!hottest || n->cpu > hottest->cpu)) hottest = n;
  }
  if (hottest) {
    if (!hinted_[hottest->id]) {
      hinted_[hottest->id] = true;
      actions.push_back(Action{ActionKind::OffloadHint, hottest->id, kNoNode, 0,
                               "cpu " + format_double(hottest->cpu) + " > upper"});
      return actions;
    }
    if (over_[hottest->id] >= k_ + 1) {
      // Hottest partition by per-partition cpu cycles.
      PartitionId hot_part = 0;
      double hot_cpu = -1;
      for (const auto& [pid, cpu] : hottest->partitions) {
        if (cpu > hot_cpu) {
          hot_cpu = cpu;
          hot_part = pid;
        }
      }
      if (hot_part == 0) return actions;
      double est_share = view.interval > 0 ? hot_cpu / view.interval : 0.0;
      // Least-loaded active peer with headroom for the partition's load.
      const NodeView* target = nullptr;
      for (const auto* n : data_nodes) {
        if (n->id == hottest->id) continue;
        if (n->cpu + est_share > upper_) continue;
        if (!target || n->cpu < target->cpu) target = n;
      }
      std::string trigger = "cpu " + format_double(hottest->cpu) + " > upper for " +
                            std::to_string(over_[hottest->id]) + " intervals";
      ActionKind move_kind =
          hottest->partitions.size() <= 1 ? ActionKind::SplitAndMove : ActionKind::ScaleOutMove;
      if (target) {
        actions.push_back(Action{move_kind, hottest->id, target->id, hot_part, trigger});
      } else if (!standby.empty()) {
        NodeId boot = standby.front()->id;
        actions.push_back(Action{ActionKind::PowerOn, boot, kNoNode, 0, trigger});
        actions.push_back(Action{move_kind, hottest->id, boot, hot_part, trigger});
      }
      return actions;
    }
    return actions;
  }

  // Scale-in path.
  if (under_all_ >= k_ && data_nodes.size() > 1) {
    const NodeView* victim = nullptr;
    for (const auto* n : data_nodes)
      if (!victim || n->cpu < victim->cpu) victim = n;
    std::string trigger = "all cpu < lower for " + std::to_string(under_all_) + " intervals";
    actions.push_back(Action{ActionKind::ScaleInMove, victim->id, kNoNode, 0, trigger});
    actions.push_back(Action{ActionKind::PowerOff, victim->id, kNoNode, 0, trigger});
    return actions;
  }

  // Disk IOPS: local-first rebalancing hint.
  for (const auto* n : data_nodes) {
    if (iops_over_[n->id] >= k_) {
      actions.push_back(Action{ActionKind::IopsRebalance, n->id, kNoNode, 0,
                               "disk iops " + format_double(n->disk_iops) + " above band"});
      iops_over_[n->id] = 0;
      return actions;
    }
  }
  return actions;
}

}  // namespace edb
