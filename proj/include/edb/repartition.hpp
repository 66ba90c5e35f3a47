#pragma once

#include "edb/cluster.hpp"

namespace edb {

enum class MoveScheme { Physical, Logical, Physiological };

const char* move_scheme_name(MoveScheme s);

struct MoveStats {
  bool ok = true;
  std::string error;
  uint64_t plan_id = 0;
  uint64_t bytes_moved = 0;      // raw segment bytes (physical/physiological)
  uint64_t records_moved = 0;    // logical scheme
  uint64_t segments_moved = 0;
  uint64_t batches = 0;          // logical system txns
  uint64_t retries = 0;          // conflicted batches retried
  double started_at = 0;
  double data_done_at = 0;       // last byte/record landed
  double finished_at = 0;        // protocol complete (incl. drain hand-off)
};

// Physical scheme: relocate raw segment bytes between nodes/disks without
// touching logical ownership; only short page latches are taken.
Task<MoveStats> move_physical(Cluster& c, std::vector<SegmentId> segments, NodeId source,
                              NodeId target, DiskId target_disk = 0);

// Logical scheme: range moves record-by-record in batched system
// transactions; ownership of the range transfers as batches commit.
Task<MoveStats> move_logical(Cluster& c, KeyRange range, PartitionId source_partition,
                             NodeId target);

// Physiological scheme: the six-step segment relocation protocol with
// forward pointer, partition read lock, dual master pointers and drain.
Task<MoveStats> move_physiological(Cluster& c, PartitionId source_partition, NodeId target);

// Splits a partition in two; `at_key` snaps to the nearest segment
// boundary when `segment_aligned` is set. Returns the right partition.
struct SplitResult {
  bool ok = false;
  std::string error;
  Partition* left = nullptr;
  Partition* right = nullptr;
};
SplitResult split_partition(Cluster& c, Partition& p, uint64_t at_key, bool segment_aligned);

// Key count across a partition's top segments (split conservation checks).
uint64_t partition_live_records(const Cluster& c, const Partition& p);

}  // namespace edb
