#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace edb {

using NodeId = uint32_t;
using DiskId = uint32_t;
using TableId = uint16_t;
using SegmentId = uint64_t;
using PartitionId = uint64_t;
using TxnId = uint64_t;
using Ts = uint64_t;  // logical commit timestamp

inline constexpr Ts kOpenTs = UINT64_MAX;
inline constexpr NodeId kNoNode = UINT32_MAX;
inline constexpr NodeId kMasterNode = 0;

struct RecordKey {
  TableId table = 0;
  uint64_t pk = 0;
  auto operator<=>(const RecordKey&) const = default;
};

// Half-open primary-key interval [lo, hi).
struct KeyRange {
  uint64_t lo = 0;
  uint64_t hi = 0;
  bool contains(uint64_t pk) const { return pk >= lo && pk < hi; }
  bool valid() const { return lo < hi; }
  bool overlaps(const KeyRange& o) const { return lo < o.hi && o.lo < hi; }
  auto operator<=>(const KeyRange&) const = default;
};

using Payload = std::vector<uint8_t>;

Payload make_payload(uint64_t value);
uint64_t payload_value(const Payload& p);

// Deterministic splitmix64-based generator. Distribution helpers are
// hand-rolled so traces are reproducible independent of libstdc++.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n), n > 0.
  uint64_t uniform(uint64_t n) {
    uint64_t x, r;
    do {
      x = next_u64();
      r = x % n;
    } while (x - r > UINT64_MAX - (n - 1));
    return r;
  }

  uint64_t range(uint64_t lo, uint64_t hi_inclusive) {
    return lo + uniform(hi_inclusive - lo + 1);
  }

  double uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

  double exponential(double mean);

  bool chance(double p) { return uniform01() < p; }

  Rng fork(uint64_t stream) {
    Rng r(state_ ^ (0xd1342543de82ef95ULL * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

// Cluster-wide configuration. Desk-scale defaults; the "paper" profile
// (32 MiB segments, 8 KiB pages) is applied by apply_paper_profile().
struct ClusterConfig {
  // topology
  uint32_t node_count = 10;
  uint32_t disks_per_node = 1;
  // storage geometry
  uint32_t page_size = 4096;        // bytes
  uint32_t pages_per_segment = 64;  // desk default: 256 KiB segments
  uint32_t buffer_pool_pages = 1024;
  uint32_t remote_buffer_pages = 2048;  // per helper extension
  uint64_t disk_capacity_pages = 0;     // 0 = unbounded
  // network
  double net_base_latency = 0.0005;   // s, one way
  double net_bandwidth = 125.0e6;     // bytes/s (1 GbE)
  // disk
  double disk_service_time = 0.002;   // s per page op
  double disk_iops_cap = 500.0;       // ops/s
  double disk_iops_low = 0.2;         // band, fraction of cap
  double disk_iops_high = 0.8;
  // query engine
  uint32_t vector_size = 1024;        // records per vectorized call
  // controller
  double cpu_upper_threshold = 0.8;
  double cpu_lower_threshold = 0.3;
  double monitor_interval = 2.0;      // s
  uint32_t threshold_intervals = 3;   // consecutive intervals before acting
  double boot_delay = 5.0;            // s from power_on to usable
  // power model (watts)
  double power_idle = 22.0;
  double power_max = 26.0;
  double power_standby = 2.5;
  double power_switch = 20.0;
  // cpu cost model (seconds of cpu work at capacity 1.0)
  double cpu_capacity = 1.0;              // relative speed factor
  double cpu_op_read = 50.0e-6;           // per point read
  double cpu_op_write = 70.0e-6;          // per point write
  double cpu_per_record_scan = 10.0e-6;
  double cpu_per_record_project = 2.5e-6;
  double cpu_sort_unit = 2.0e-6;          // times n*log2(n)
  double cpu_per_message = 50.0e-6;
  double cpu_per_byte_serialize = 40.0e-9;
  double cpu_per_byte_deserialize = 10.0e-9;
  double cpu_lock_acquire = 20.0e-6;      // MGL lock table op
  double cpu_version_append = 5.0e-6;     // MVCC chain append
  // logging
  double wal_append_time = 0.002;     // s, disk portion of one commit append
  // concurrency / movement
  uint32_t logical_move_batch = 100;  // records per system txn
  uint32_t gc_chain_threshold = 4;
  double txn_retry_delay = 0.002;     // s before a conflicted txn retries
  // workload
  double think_time_mean = 0.1;       // s
  uint64_t rng_seed = 42;

  bool operator==(const ClusterConfig&) const = default;
};

// Names of every violated field, empty when the config is sound.
std::vector<std::string> config_violations(const ClusterConfig& cfg);

// Returns cfg unchanged when valid; throws std::invalid_argument naming
// every violated field otherwise.
ClusterConfig validate_config(const ClusterConfig& cfg);

// Paper-profile overrides: 8 KiB pages x 4096 pages/segment (32 MiB).
void apply_paper_profile(ClusterConfig& cfg);

// Flat key=value text file, '#' comments. Unknown keys are an error.
ClusterConfig load_config_file(const std::string& path, ClusterConfig base = {});
void apply_config_kv(ClusterConfig& cfg, const std::string& key, const std::string& value);

// Field registry so the file loader and CLI expose identical names.
struct ConfigField {
  const char* name;
  std::variant<uint32_t ClusterConfig::*, uint64_t ClusterConfig::*, double ClusterConfig::*> member;
};
const std::vector<ConfigField>& config_fields();

std::string format_time(double seconds);   // fixed %.6f
std::string format_double(double v);       // shortest stable form used in CSV

}  // namespace edb
