#include "edb/storage.hpp"

#include <algorithm>

namespace edb {

const char* partition_state_name(PartitionState s) {
  switch (s) {
    case PartitionState::Stable: return "stable";
    case PartitionState::MovingOut: return "moving-out";
    case PartitionState::Forwarding: return "forwarding";
    case PartitionState::MovingIn: return "moving-in";
  }
  return "?";
}

bool ranges_cover(const std::vector<KeyRange>& parts, KeyRange domain, std::string* why) {
  std::vector<KeyRange> sorted = parts;
  std::sort(sorted.begin(), sorted.end());
  uint64_t cursor = domain.lo;
  for (const auto& r : sorted) {
    if (!r.valid()) {
      if (why) *why = "empty range";
      return false;
    }
    if (r.lo != cursor) {
      if (why)
        *why = (r.lo > cursor ? "gap at " : "overlap at ") + std::to_string(std::min(r.lo, cursor));
      return false;
    }
    cursor = r.hi;
  }
  if (cursor != domain.hi) {
    if (why) *why = "uncovered tail at " + std::to_string(cursor);
    return false;
  }
  return true;
}

}  // namespace edb
