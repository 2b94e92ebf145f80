#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "skyt/aggregates.hpp"
#include "skyt/costmodel.hpp"
#include "skyt/kvstore.hpp"
#include "skyt/matrix.hpp"
#include "skyt/queryplan.hpp"

namespace skyt {

struct SliceTable {
  std::uint32_t slice_index = 0;
  Table table;
  friend bool operator==(const SliceTable&, const SliceTable&) = default;
};

struct SliceAggregate {
  std::uint32_t slice_index = 0;
  PartialAggregates agg;
  friend bool operator==(const SliceAggregate&, const SliceAggregate&) = default;
};

// What a node yields: per-slice tables, per-slice (or combined) aggregates, or
// the final t vector. Sequences are ordered by slice index.
using NodeValue = std::variant<std::vector<SliceTable>, std::vector<SliceAggregate>, TStatVector>;

enum class ExecMode { force_execute, adaptive, force_pushback };

std::string_view to_string(ExecMode mode);
ExecMode parse_exec_mode(std::string_view text);

struct ExecBudget {
  double max_per_slice_us = 0;
  std::uint32_t sample_slices = 5;
  ExecMode mode = ExecMode::force_execute;

  void validate() const;
  // Reads "budget_us", "sample_slices" and "mode", keeping `base` for absent keys.
  static ExecBudget from_qos(const std::map<std::string, std::string>& qos, ExecBudget base);
  static ExecBudget from_qos(const std::map<std::string, std::string>& qos);
};

// Inputs for executing a plan that contains placeholders or partially
// executed nodes.
struct Bindings {
  // Placeholder id -> bound value. Raw placeholders take tables.
  std::map<int, NodeValue> placeholders;
  // Node id -> outputs already computed for some of its slices; the engine
  // evaluates the remaining slices and merges by slice index.
  std::map<int, NodeValue> partial;
};

enum class BlockRole : std::uint8_t { output = 0, partial = 1, pushed_back = 2 };

// An aggregate left in the device namespace instead of being returned inline.
struct StoredRef {
  BlockRole role = BlockRole::output;
  int node_id = 0;
  std::uint32_t slice_index = 0;
  std::string key;
  friend bool operator==(const StoredRef&, const StoredRef&) = default;
};

struct ExecResult {
  QueryPlan plan;                                        // annotated
  std::optional<NodeValue> output;                       // root value when executed
  std::map<int, NodeValue> partial;                      // chain top -> executed slices
  std::map<int, std::vector<SliceTable>> pushed_back;    // scan id -> raw slices
  std::vector<StoredRef> stored;
  std::vector<LedgerEntry> ledger;
  std::uint64_t total_slices = 0;
  std::uint64_t executed_slices = 0;

  double elapsed_us() const;
  std::vector<std::uint32_t> pushed_back_slices() const;
  friend bool operator==(const ExecResult&, const ExecResult&) = default;
};

// Full bottom-up evaluation; every node ends up executed. `ns` may be null
// when the plan reads no Scan.
ExecResult execute_plan(const QueryPlan& plan, const KvNamespace* ns, const DeviceProfile& profile,
                        SimClock& clock, const Bindings& bindings = {});

// Downstream pass. Adaptive mode runs cold_slices + sample_slices slices,
// compares the mean of the warm ones with the budget, then either finishes or
// returns the executed part plus the remaining raw slices. With `out_prefix`,
// aggregates are written to "<out_prefix>.agg.<i>" and returned as references.
ExecResult execute_downstream(const QueryPlan& sub_plan, const ExecBudget& budget, KvNamespace& ns,
                              const DeviceProfile& profile, SimClock& clock,
                              const std::string& out_prefix = {});

// Replaces stored references by the values fetched through `fetch`.
void resolve_stored(ExecResult& result, const std::function<Bytes(const std::string&)>& fetch);

// Self-describing encodings used on the wire and for transfer accounting.
Bytes encode_table(const Table& t, std::uint32_t slice_index);
Table decode_table(ByteView bytes, std::uint32_t* slice_index = nullptr);
Bytes encode_tstat(const TStatVector& t);
TStatVector decode_tstat(ByteView bytes);
std::uint64_t encoded_size(const NodeValue& v);

// Bytes a device ships back for one execution.
std::uint64_t transfer_bytes(const ExecResult& r);

class Device {
 public:
  virtual ~Device() = default;
  virtual std::string name() const = 0;
  virtual const DeviceProfile& profile() const = 0;
  virtual bool holds(const std::string& partition_key) = 0;
  virtual ExecResult exec(const QueryPlan& sub_plan, const ExecBudget& budget) = 0;
};

class LocalDevice : public Device {
 public:
  LocalDevice(std::string name, KvNamespace& ns, DeviceProfile profile);

  std::string name() const override { return name_; }
  const DeviceProfile& profile() const override { return profile_; }
  bool holds(const std::string& partition_key) override;
  ExecResult exec(const QueryPlan& sub_plan, const ExecBudget& budget) override;

 private:
  std::string name_;
  KvNamespace& ns_;
  DeviceProfile profile_;
};

struct DeviceReport {
  std::string device;
  std::vector<int> sub_plan_roots;
  double compute_us = 0;   // device clock
  double transfer_us = 0;
  std::uint64_t transfer_bytes = 0;
  std::uint64_t total_slices = 0;
  std::uint64_t executed_slices = 0;
  std::vector<QueryPlan> annotated;
};

struct CoordinatorResult {
  TStatVector result;
  QueryPlan completed_plan;  // after merge_residual, as run upstream
  std::vector<DeviceReport> devices;
  double upstream_us = 0;
  double end_to_end_us = 0;
  // Charges along the critical path (slowest device, its transfer, upstream);
  // sums to end_to_end_us.
  std::vector<LedgerEntry> ledger;
};

// Runs every sub-plan of `cut` on the device holding its partitions (one
// budget per device, or a single shared one), merges push-backs and completes
// the super-plan with the upstream profile. Combine order follows the plan, not
// arrival order.
CoordinatorResult coordinate(const QueryPlan& plan, const PlanCut& cut,
                             const DeviceProfile& upstream, const std::vector<Device*>& devices,
                             const std::vector<ExecBudget>& budgets);

// Plan statistics read from partition metadata; `selectivity` is applied to
// every partition.
PlanStats stats_from_metadata(const std::map<std::string, MetadataSlice>& metas, double selectivity);

}  // namespace skyt
