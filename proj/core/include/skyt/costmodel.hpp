#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skyt/config.hpp"
#include "skyt/queryplan.hpp"

namespace skyt {

// Calibration constants of one computational storage engine. Costs are
// relative to the client baseline (cpu_slowdown 1).
struct DeviceProfile {
  std::string name = "client";
  double cpu_slowdown = 1.0;
  double invocation_overhead_us = 50.0;
  double per_cell_ns = 2.0;
  double select_weight = 0.6;
  double project_weight = 0.4;
  double storage_MBps = 220.0;
  double network_MBps = 1250.0;
  std::uint32_t cold_slices = 0;
  double cold_penalty_factor = 1.0;
  std::uint32_t cores = 1;

  void validate() const;
  // Multiplies every time cost (overheads, per-cell work, inverse bandwidths) by c.
  DeviceProfile scaled(double c) const;

  static DeviceProfile client();
  static DeviceProfile kinetic_vm();
  static DeviceProfile envoy();
  // Overrides fields of `base` from keys named like the members.
  static DeviceProfile from(const Config& cfg, DeviceProfile base);
};

std::vector<std::string> builtin_profile_names();
DeviceProfile builtin_profile(std::string_view name);
// A builtin name, or a key=value file (optional "base" key names the builtin
// it starts from).
DeviceProfile resolve_profile(const std::string& name_or_path);

inline constexpr std::uint64_t kWarmInvocation = std::numeric_limits<std::uint64_t>::max();

double op_weight(const DeviceProfile& p, OpKind kind);

// invocations * overhead + rows * cols * per_cell_ns * slowdown * weight(op),
// in microseconds. Invocations with ordinal first_invocation + i below
// cold_slices are multiplied by cold_penalty_factor.
double charge_compute(const DeviceProfile& p, OpKind kind, std::uint64_t rows, std::uint64_t cols,
                      std::uint64_t invocations, std::uint64_t first_invocation);

enum class IoPath { storage, network };
double charge_io(const DeviceProfile& p, std::uint64_t bytes, IoPath path);

struct LedgerEntry {
  std::string label;
  double charged_us = 0;
  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

// Deterministic virtual time; every advance is recorded in the ledger.
class SimClock {
 public:
  void charge(std::string label, double us);
  double now_us() const { return now_us_; }
  const std::vector<LedgerEntry>& ledger() const { return ledger_; }
  double ledger_total() const;

 private:
  double now_us_ = 0;
  std::vector<LedgerEntry> ledger_;
};

struct PartitionStats {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint64_t slices = 1;
  double selectivity = 1.0;  // estimate for Select nodes over this partition
  std::uint64_t id_bytes = 8;  // average gene-id length
};

struct PlanStats {
  std::map<std::string, PartitionStats> partitions;
};

struct CostBreakdown {
  double compute_us = 0;
  double storage_us = 0;
  double network_us = 0;
  std::uint64_t transfer_bytes = 0;
  double total_us() const { return compute_us + storage_us + network_us; }
};

// Whole plan on one device; the root result is shipped over its network.
CostBreakdown estimate_plan_cost(const QueryPlan& plan, const DeviceProfile& p,
                                 const PlanStats& stats);

struct CutCost {
  double downstream_us = 0;
  double transfer_us = 0;
  double upstream_us = 0;
  std::uint64_t transfer_bytes = 0;
  std::size_t sub_plan_nodes = 0;
  double total_us() const { return downstream_us + transfer_us + upstream_us; }
};

CutCost evaluate_cut(const QueryPlan& plan, const std::vector<int>& frontier,
                     const DeviceProfile& upstream, const DeviceProfile& downstream,
                     const PlanStats& stats);

struct CutChoice {
  PlanCut cut;
  CutCost cost;
  std::size_t index = 0;  // position in enumerate_frontiers order
};

// Minimum modeled latency over all cuts; ties go to fewer transferred bytes,
// then to smaller sub-plans. With `placement` (partition -> device), cuts whose
// sub-plans read partitions on different devices are skipped.
CutChoice choose_cut(const QueryPlan& plan, const DeviceProfile& upstream,
                     const DeviceProfile& downstream, const PlanStats& stats,
                     const std::map<std::string, int>* placement = nullptr);

// Cells per microsecond of `devices` identical devices, each running `cores`
// lanes of warm Accumulate over slices of the given shape.
double aggregate_throughput(const DeviceProfile& p, unsigned devices, std::uint64_t slice_rows,
                            std::uint64_t cols);

}  // namespace skyt
