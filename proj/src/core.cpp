#include "edb/core.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace edb {

Payload make_payload(uint64_t value) {
  Payload p(8);
  for (int i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(value >> (8 * i));
  return p;
}

uint64_t payload_value(const Payload& p) {
  uint64_t v = 0;
  for (size_t i = 0; i < p.size() && i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

double Rng::exponential(double mean) {
  double u = uniform01();
  if (u >= 1.0) u = 0.9999999999999999;
  return -mean * std::log(1.0 - u);
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> kFields = {
      {"node_count", &ClusterConfig::node_count},
      {"disks_per_node", &ClusterConfig::disks_per_node},
      {"page_size", &ClusterConfig::page_size},
      {"pages_per_segment", &ClusterConfig::pages_per_segment},
      {"buffer_pool_pages", &ClusterConfig::buffer_pool_pages},
      {"remote_buffer_pages", &ClusterConfig::remote_buffer_pages},
      {"disk_capacity_pages", &ClusterConfig::disk_capacity_pages},
      {"net_base_latency", &ClusterConfig::net_base_latency},
      {"net_bandwidth", &ClusterConfig::net_bandwidth},
      {"disk_service_time", &ClusterConfig::disk_service_time},
      {"disk_iops_cap", &ClusterConfig::disk_iops_cap},
      {"disk_iops_low", &ClusterConfig::disk_iops_low},
      {"disk_iops_high", &ClusterConfig::disk_iops_high},
      {"vector_size", &ClusterConfig::vector_size},
      {"cpu_upper_threshold", &ClusterConfig::cpu_upper_threshold},
      {"cpu_lower_threshold", &ClusterConfig::cpu_lower_threshold},
      {"monitor_interval", &ClusterConfig::monitor_interval},
      {"threshold_intervals", &ClusterConfig::threshold_intervals},
      {"boot_delay", &ClusterConfig::boot_delay},
      {"power_idle", &ClusterConfig::power_idle},
      {"power_max", &ClusterConfig::power_max},
      {"power_standby", &ClusterConfig::power_standby},
      {"power_switch", &ClusterConfig::power_switch},
      {"cpu_capacity", &ClusterConfig::cpu_capacity},
      {"cpu_op_read", &ClusterConfig::cpu_op_read},
      {"cpu_op_write", &ClusterConfig::cpu_op_write},
      {"cpu_per_record_scan", &ClusterConfig::cpu_per_record_scan},
      {"cpu_per_record_project", &ClusterConfig::cpu_per_record_project},
      {"cpu_sort_unit", &ClusterConfig::cpu_sort_unit},
      {"cpu_per_message", &ClusterConfig::cpu_per_message},
      {"cpu_per_byte_serialize", &ClusterConfig::cpu_per_byte_serialize},
      {"cpu_per_byte_deserialize", &ClusterConfig::cpu_per_byte_deserialize},
      {"cpu_lock_acquire", &ClusterConfig::cpu_lock_acquire},
      {"cpu_version_append", &ClusterConfig::cpu_version_append},
      {"wal_append_time", &ClusterConfig::wal_append_time},
      {"logical_move_batch", &ClusterConfig::logical_move_batch},
      {"gc_chain_threshold", &ClusterConfig::gc_chain_threshold},
      {"txn_retry_delay", &ClusterConfig::txn_retry_delay},
      {"think_time_mean", &ClusterConfig::think_time_mean},
      {"rng_seed", &ClusterConfig::rng_seed},
  };
  return kFields;
}

std::vector<std::string> config_violations(const ClusterConfig& cfg) {
  std::vector<std::string> bad;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0.0)) bad.emplace_back(name);
  };
  positive("node_count", cfg.node_count);
  positive("disks_per_node", cfg.disks_per_node);
  positive("page_size", cfg.page_size);
  positive("pages_per_segment", cfg.pages_per_segment);
  positive("buffer_pool_pages", cfg.buffer_pool_pages);
  positive("net_base_latency", cfg.net_base_latency);
  positive("net_bandwidth", cfg.net_bandwidth);
  positive("disk_service_time", cfg.disk_service_time);
  positive("disk_iops_cap", cfg.disk_iops_cap);
  positive("disk_iops_low", cfg.disk_iops_low);
  positive("disk_iops_high", cfg.disk_iops_high);
  positive("vector_size", cfg.vector_size);
  positive("cpu_upper_threshold", cfg.cpu_upper_threshold);
  positive("cpu_lower_threshold", cfg.cpu_lower_threshold);
  positive("monitor_interval", cfg.monitor_interval);
  positive("threshold_intervals", cfg.threshold_intervals);
  positive("boot_delay", cfg.boot_delay);
  positive("power_idle", cfg.power_idle);
  positive("power_max", cfg.power_max);
  positive("power_standby", cfg.power_standby);
  positive("power_switch", cfg.power_switch);
  positive("cpu_capacity", cfg.cpu_capacity);
  positive("wal_append_time", cfg.wal_append_time);
  positive("logical_move_batch", cfg.logical_move_batch);
  positive("think_time_mean", cfg.think_time_mean);
  if (!(cfg.cpu_lower_threshold < cfg.cpu_upper_threshold)) bad.emplace_back("threshold order");
  if (cfg.disk_iops_low >= cfg.disk_iops_high) bad.emplace_back("disk iops band order");
  return bad;
}

ClusterConfig validate_config(const ClusterConfig& cfg) {
  auto bad = config_violations(cfg);
  if (bad.empty()) return cfg;
  std::string msg = "invalid config:";
  for (const auto& b : bad) msg += " " + b + ";";
  throw std::invalid_argument(msg);
}

void apply_paper_profile(ClusterConfig& cfg) {
  cfg.page_size = 8192;
  cfg.pages_per_segment = 4096;  // 32 MiB segments
  cfg.buffer_pool_pages = 65536;
}

void apply_config_kv(ClusterConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields()) {
    if (key != f.name) continue;
    if (auto* p = std::get_if<uint32_t ClusterConfig::*>(&f.member)) {
      cfg.*(*p) = static_cast<uint32_t>(std::stoul(value));
    } else if (auto* q = std::get_if<uint64_t ClusterConfig::*>(&f.member)) {
      cfg.*(*q) = std::stoull(value);
    } else {
      cfg.*std::get<double ClusterConfig::*>(f.member) = std::stod(value);
    }
    return;
  }
  throw std::invalid_argument("unknown config key: " + key);
}

ClusterConfig load_config_file(const std::string& path, ClusterConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    size_t b = 0, e = line.size();
    while (b < e && is_space(line[b])) ++b;
    while (e > b && is_space(line[e - 1])) --e;
    if (b == e) continue;
    std::string item = line.substr(b, e - b);
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = item.substr(0, eq);
    std::string value = item.substr(eq + 1);
    while (!key.empty() && is_space(key.back())) key.pop_back();
    size_t vb = 0;
    while (vb < value.size() && is_space(value[vb])) ++vb;
    apply_config_kv(base, key, value.substr(vb));
  }
  return base;
}

std::string format_time(double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", seconds);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace edb
