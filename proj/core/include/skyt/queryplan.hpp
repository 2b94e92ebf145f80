#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "skyt/relops.hpp"

namespace skyt {

struct ScanOp {
  std::string partition_key;
  friend bool operator==(const ScanOp&, const ScanOp&) = default;
};
struct SelectOp {
  Predicate predicate;
  friend bool operator==(const SelectOp&, const SelectOp&) = default;
};
struct ProjectOp {
  Projection projection;
  friend bool operator==(const ProjectOp&, const ProjectOp&) = default;
};
struct AccumulateOp {
  std::vector<std::string> group;
  friend bool operator==(const AccumulateOp&, const AccumulateOp&) = default;
};
struct CombineOp {
  friend bool operator==(const CombineOp&, const CombineOp&) = default;
};
struct TStatOp {
  friend bool operator==(const TStatOp&, const TStatOp&) = default;
};
// Leaf standing in for a removed subtree. Its node id is the id of the node it
// replaces. Result placeholders receive the subtree's output; raw placeholders
// replace a Scan and receive pushed-back slices of `partition_key`.
struct PlaceholderOp {
  bool raw = false;
  std::string partition_key;
  friend bool operator==(const PlaceholderOp&, const PlaceholderOp&) = default;
};

using NodeOp =
    std::variant<ScanOp, SelectOp, ProjectOp, AccumulateOp, CombineOp, TStatOp, PlaceholderOp>;

enum class OpKind { scan, select, project, accumulate, combine, tstat, placeholder };

std::string_view to_string(OpKind kind);

struct NodeStatus {
  enum class State { not_executed, partial, executed };
  State state = State::not_executed;
  std::uint32_t k = 0;  // slices executed, for partial
  std::uint32_t n = 0;  // slices total, for partial

  static NodeStatus not_executed() { return {}; }
  static NodeStatus executed() { return {State::executed, 0, 0}; }
  // Collapses k == 0 to not-executed and k == n to executed.
  static NodeStatus partial(std::uint32_t k, std::uint32_t n);

  std::string to_string() const;
  friend bool operator==(const NodeStatus&, const NodeStatus&) = default;
};

struct PlanNode {
  int id = 0;
  NodeOp op;
  std::vector<PlanNode> children;
  NodeStatus status;

  OpKind kind() const { return static_cast<OpKind>(op.index()); }
  friend bool operator==(const PlanNode&, const PlanNode&) = default;
};

// A plan tree with in-tree annotations and an uninterpreted QoS map.
struct QueryPlan {
  PlanNode root;
  std::map<std::string, std::string> qos;

  friend bool operator==(const QueryPlan&, const QueryPlan&) = default;
};

struct PartitionGroup {
  std::string partition_key;
  std::vector<std::string> group;
};

// TStat(Combine(Accumulate(Project(Select(Scan)))...), Combine(...)), one
// Accumulate chain per partition; node ids are assigned in pre-order.
QueryPlan build_diffexpr_plan(const std::vector<PartitionGroup>& side_a,
                              const std::vector<PartitionGroup>& side_b,
                              const Predicate& noise_filter);
QueryPlan build_diffexpr_plan(const std::string& part_a, const std::vector<std::string>& group_a,
                              const std::string& part_b, const std::vector<std::string>& group_b,
                              const Predicate& noise_filter);

// Arity, leaf placement, unique ids and operand kinds. Throws invalid_plan.
void validate_plan(const QueryPlan& plan);

const PlanNode* find_node(const PlanNode& root, int id);
PlanNode* find_node(PlanNode& root, int id);
std::size_t count_nodes(const PlanNode& root);
void visit_preorder(const PlanNode& root, const std::function<void(const PlanNode&)>& fn);
void visit_preorder(PlanNode& root, const std::function<void(PlanNode&)>& fn);
bool all_executed(const PlanNode& root);

// JSON document {"version":1,"qos":{...},"nodes":[{id,op,params,children,status}]};
// nodes[0] is the root.
std::string serialize_plan(const QueryPlan& plan);
QueryPlan parse_plan(std::string_view document);

struct PlanCut {
  std::vector<int> frontier;           // ascending node ids
  std::vector<QueryPlan> sub_plans;    // one per frontier node, pre-order
  QueryPlan super_plan;                // frontier subtrees replaced by placeholders
};

// Every antichain covering all leaves, including {root} and the leaves alone.
std::vector<PlanCut> enumerate_cuts(const QueryPlan& plan);
std::vector<std::vector<int>> enumerate_frontiers(const PlanNode& root);

PlanCut decompose(const QueryPlan& plan, std::span<const int> frontier);
QueryPlan graft(const QueryPlan& super_plan, std::span<const QueryPlan> sub_plans);

// Grafts an incompletely executed sub-plan back under the super-plan with its
// Scan leaves turned into raw placeholders; annotations are preserved so the
// engine can splice in already-computed per-slice results.
QueryPlan merge_residual(const QueryPlan& super_plan, const QueryPlan& residual_sub);

}  // namespace skyt
