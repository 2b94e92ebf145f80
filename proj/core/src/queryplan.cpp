#include "skyt/queryplan.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace skyt {

using nlohmann::json;

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::scan: return "scan";
    case OpKind::select: return "select";
    case OpKind::project: return "project";
    case OpKind::accumulate: return "accumulate";
    case OpKind::combine: return "combine";
    case OpKind::tstat: return "tstat";
    case OpKind::placeholder: return "placeholder";
  }
  return "?";
}

NodeStatus NodeStatus::partial(std::uint32_t k, std::uint32_t n) {
  if (k > n) throw Error(ErrorCode::invalid_argument, "partial status with k > n");
  if (k == 0) return not_executed();
  if (k == n) return executed();
  return {State::partial, k, n};
}

std::string NodeStatus::to_string() const {
  switch (state) {
    case State::not_executed: return "not-executed";
    case State::executed: return "executed";
    case State::partial:
      return "partially-executed(" + std::to_string(k) + "_of_" + std::to_string(n) + ")";
  }
  return "?";
}

namespace {

// What a node yields, for operand checking.
enum class Produces { tables, aggregates, tstat, any };

Produces produces(const PlanNode& node) {
  switch (node.kind()) {
    case OpKind::scan:
    case OpKind::select:
    case OpKind::project: return Produces::tables;
    case OpKind::accumulate:
    case OpKind::combine: return Produces::aggregates;
    case OpKind::tstat: return Produces::tstat;
    case OpKind::placeholder:
      return std::get<PlaceholderOp>(node.op).raw ? Produces::tables : Produces::any;
  }
  return Produces::any;
}

[[noreturn]] void invalid(const PlanNode& node, const std::string& why) {
  throw Error(ErrorCode::invalid_plan, "node " + std::to_string(node.id) + " (" +
                                           std::string(to_string(node.kind())) + "): " + why);
}

void expect_operands(const PlanNode& node, Produces want) {
  for (const auto& c : node.children) {
    auto got = produces(c);
    if (got != Produces::any && got != want) invalid(node, "operand kind mismatch");
  }
}

void validate_node(const PlanNode& node, std::set<int>& ids) {
  if (!ids.insert(node.id).second) invalid(node, "duplicate node id");
  const auto arity = node.children.size();
  switch (node.kind()) {
    case OpKind::scan:
    case OpKind::placeholder:
      if (arity != 0) invalid(node, "must be a leaf");
      break;
    case OpKind::select:
    case OpKind::project:
      if (arity != 1) invalid(node, "needs exactly one child");
      expect_operands(node, Produces::tables);
      break;
    case OpKind::accumulate:
      if (arity != 1) invalid(node, "needs exactly one child");
      if (std::get<AccumulateOp>(node.op).group.empty()) {
        throw Error(ErrorCode::empty_group, "accumulate node " + std::to_string(node.id));
      }
      expect_operands(node, Produces::tables);
      break;
    case OpKind::combine:
      if (arity < 1) invalid(node, "needs at least one child");
      expect_operands(node, Produces::aggregates);
      break;
    case OpKind::tstat:
      if (arity != 2) invalid(node, "needs exactly two children");
      expect_operands(node, Produces::aggregates);
      break;
  }
  if (node.kind() == OpKind::project) std::get<ProjectOp>(node.op).projection.validate();
  for (const auto& c : node.children) validate_node(c, ids);
}

int next_id(int& counter) { return counter++; }

PlanNode side_plan(const std::vector<PartitionGroup>& side, const Predicate& filter, int& counter) {
  if (side.empty()) throw Error(ErrorCode::invalid_argument, "a side needs at least one partition");
  PlanNode combine{next_id(counter), CombineOp{}, {}, {}};
  for (const auto& pg : side) {
    if (pg.group.empty()) {
      throw Error(ErrorCode::empty_group, "group for partition '" + pg.partition_key + "'");
    }
    PlanNode acc{next_id(counter), AccumulateOp{pg.group}, {}, {}};
    PlanNode proj{next_id(counter), ProjectOp{Projection{pg.group}}, {}, {}};
    PlanNode sel{next_id(counter), SelectOp{filter}, {}, {}};
    PlanNode scan{next_id(counter), ScanOp{pg.partition_key}, {}, {}};
    sel.children.push_back(std::move(scan));
    proj.children.push_back(std::move(sel));
    acc.children.push_back(std::move(proj));
    combine.children.push_back(std::move(acc));
  }
  return combine;
}

// --- JSON ---------------------------------------------------------------

json params_of(const PlanNode& node) {
  return std::visit(
      [](const auto& op) -> json {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, ScanOp>) {
          return {{"partition", op.partition_key}};
        } else if constexpr (std::is_same_v<T, SelectOp>) {
          return {{"predicate", op.predicate.to_string()}};
        } else if constexpr (std::is_same_v<T, ProjectOp>) {
          return {{"columns", op.projection.columns}};
        } else if constexpr (std::is_same_v<T, AccumulateOp>) {
          return {{"group", op.group}};
        } else if constexpr (std::is_same_v<T, PlaceholderOp>) {
          return {{"raw", op.raw}, {"partition", op.partition_key}};
        } else {
          return json::object();
        }
      },
      node.op);
}

void emit(const PlanNode& node, json& nodes) {
  json j;
  j["id"] = node.id;
  j["op"] = std::string(to_string(node.kind()));
  j["params"] = params_of(node);
  auto children = json::array();
  for (const auto& c : node.children) children.push_back(c.id);
  j["children"] = std::move(children);
  switch (node.status.state) {
    case NodeStatus::State::not_executed: j["status"] = "not-executed"; break;
    case NodeStatus::State::executed: j["status"] = "executed"; break;
    case NodeStatus::State::partial:
      j["status"] = "partially-executed";
      j["k_of_n"] = {node.status.k, node.status.n};
      break;
  }
  nodes.push_back(std::move(j));
  for (const auto& c : node.children) emit(c, nodes);
}

[[noreturn]] void parse_fail(const std::string& where, const std::string& why) {
  throw Error(ErrorCode::parse, "plan document at " + where + ": " + why);
}

NodeOp parse_op(const json& j, const std::string& where) {
  const auto name = j.at("op").get<std::string>();
  const json params = j.contains("params") ? j.at("params") : json::object();
  if (name == "scan") return ScanOp{params.at("partition").get<std::string>()};
  if (name == "select") return SelectOp{Predicate::parse(params.at("predicate").get<std::string>())};
  if (name == "project") {
    return ProjectOp{Projection{params.at("columns").get<std::vector<std::string>>()}};
  }
  if (name == "accumulate") return AccumulateOp{params.at("group").get<std::vector<std::string>>()};
  if (name == "combine") return CombineOp{};
  if (name == "tstat") return TStatOp{};
  if (name == "placeholder") {
    return PlaceholderOp{params.value("raw", false), params.value("partition", std::string())};
  }
  parse_fail(where + ".op", "unknown op '" + name + "'");
}

NodeStatus parse_status(const json& j, const std::string& where) {
  const auto s = j.value("status", std::string("not-executed"));
  if (s == "not-executed") return NodeStatus::not_executed();
  if (s == "executed") return NodeStatus::executed();
  if (s == "partially-executed") {
    const auto& kn = j.at("k_of_n");
    auto k = kn.at(0).get<std::uint32_t>();
    auto n = kn.at(1).get<std::uint32_t>();
    if (!(k > 0 && k < n)) parse_fail(where + ".k_of_n", "requires 0 < k < n");
    return NodeStatus{NodeStatus::State::partial, k, n};
  }
  parse_fail(where + ".status", "unknown status '" + s + "'");
}

// --- cuts ---------------------------------------------------------------

void collect_leaves(const PlanNode& node, std::vector<int>& out) {
  if (node.children.empty()) out.push_back(node.id);
  for (const auto& c : node.children) collect_leaves(c, out);
}

// Path from root to every node, as parent pointers.
void index_parents(const PlanNode& node, int parent, std::unordered_map<int, int>& parents) {
  parents[node.id] = parent;
  for (const auto& c : node.children) index_parents(c, node.id, parents);
}

PlanNode replace_frontier(const PlanNode& node, const std::set<int>& frontier,
                          std::vector<QueryPlan>& subs, const QueryPlan& plan) {
  if (frontier.count(node.id)) {
    subs.push_back(QueryPlan{node, plan.qos});
    return PlanNode{node.id, PlaceholderOp{}, {}, NodeStatus::not_executed()};
  }
  PlanNode copy{node.id, node.op, {}, node.status};
  for (const auto& c : node.children) copy.children.push_back(replace_frontier(c, frontier, subs, plan));
  return copy;
}

bool graft_into(PlanNode& node, const std::unordered_map<int, const PlanNode*>& by_id,
                std::set<int>& used) {
  if (node.kind() == OpKind::placeholder && !std::get<PlaceholderOp>(node.op).raw) {
    auto it = by_id.find(node.id);
    if (it == by_id.end()) return false;
    node = *it->second;
    used.insert(it->first);
    return true;
  }
  bool ok = true;
  for (auto& c : node.children) ok = graft_into(c, by_id, used) && ok;
  return ok;
}

PlanNode scans_to_raw(const PlanNode& node) {
  if (node.kind() == OpKind::scan) {
    return PlanNode{node.id, PlaceholderOp{true, std::get<ScanOp>(node.op).partition_key}, {},
                    node.status};
  }
  PlanNode copy{node.id, node.op, {}, node.status};
  for (const auto& c : node.children) copy.children.push_back(scans_to_raw(c));
  return copy;
}

}  // namespace

QueryPlan build_diffexpr_plan(const std::vector<PartitionGroup>& side_a,
                              const std::vector<PartitionGroup>& side_b,
                              const Predicate& noise_filter) {
  int counter = 0;
  PlanNode root{next_id(counter), TStatOp{}, {}, {}};
  root.children.push_back(side_plan(side_a, noise_filter, counter));
  root.children.push_back(side_plan(side_b, noise_filter, counter));
  QueryPlan plan{std::move(root), {}};
  validate_plan(plan);
  return plan;
}

QueryPlan build_diffexpr_plan(const std::string& part_a, const std::vector<std::string>& group_a,
                              const std::string& part_b, const std::vector<std::string>& group_b,
                              const Predicate& noise_filter) {
  return build_diffexpr_plan({{part_a, group_a}}, {{part_b, group_b}}, noise_filter);
}

void validate_plan(const QueryPlan& plan) {
  std::set<int> ids;
  validate_node(plan.root, ids);
}

const PlanNode* find_node(const PlanNode& root, int id) {
  if (root.id == id) return &root;
  for (const auto& c : root.children) {
    if (auto* hit = find_node(c, id)) return hit;
  }
  return nullptr;
}

PlanNode* find_node(PlanNode& root, int id) {
  return const_cast<PlanNode*>(find_node(static_cast<const PlanNode&>(root), id));
}

std::size_t count_nodes(const PlanNode& root) {
  std::size_t n = 1;
  for (const auto& c : root.children) n += count_nodes(c);
  return n;
}

void visit_preorder(const PlanNode& root, const std::function<void(const PlanNode&)>& fn) {
  fn(root);
  for (const auto& c : root.children) visit_preorder(c, fn);
}

void visit_preorder(PlanNode& root, const std::function<void(PlanNode&)>& fn) {
  fn(root);
  for (auto& c : root.children) visit_preorder(c, fn);
}

bool all_executed(const PlanNode& root) {
  bool ok = true;
  visit_preorder(root, [&](const PlanNode& n) {
    ok = ok && n.status.state == NodeStatus::State::executed;
  });
  return ok;
}

std::string serialize_plan(const QueryPlan& plan) {
  json doc;
  doc["version"] = 1;
  doc["qos"] = plan.qos;
  auto nodes = json::array();
  emit(plan.root, nodes);
  doc["nodes"] = std::move(nodes);
  return doc.dump();
}

QueryPlan parse_plan(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, "plan document at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    if (!doc.is_object()) parse_fail("$", "expected an object");
    if (doc.value("version", 0) != 1) parse_fail("$.version", "unsupported version");
    const auto& nodes = doc.at("nodes");
    if (!nodes.is_array() || nodes.empty()) parse_fail("$.nodes", "expected a non-empty array");

    std::unordered_map<int, PlanNode> built;
    std::unordered_map<int, std::vector<int>> children;
    std::vector<int> order;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto where = "$.nodes[" + std::to_string(i) + "]";
      const auto& j = nodes[i];
      PlanNode node;
      node.id = j.at("id").get<int>();
      node.op = parse_op(j, where);
      node.status = parse_status(j, where);
      if (built.count(node.id)) parse_fail(where + ".id", "duplicate id");
      children[node.id] = j.value("children", std::vector<int>{});
      order.push_back(node.id);
      built.emplace(node.id, std::move(node));
    }
    std::set<int> referenced;
    for (const auto& [id, kids] : children) {
      for (int k : kids) {
        if (!built.count(k)) parse_fail("node " + std::to_string(id), "unknown child " + std::to_string(k));
        if (!referenced.insert(k).second || k == order.front()) {
          parse_fail("node " + std::to_string(id), "child " + std::to_string(k) + " has two parents");
        }
      }
    }
    if (referenced.size() + 1 != built.size()) parse_fail("$.nodes", "nodes unreachable from root");

    std::function<PlanNode(int, int)> assemble = [&](int id, int depth) {
      if (depth > static_cast<int>(built.size())) parse_fail("$.nodes", "cycle");
      PlanNode node = built.at(id);
      for (int k : children.at(id)) node.children.push_back(assemble(k, depth + 1));
      return node;
    };
    QueryPlan plan;
    plan.root = assemble(order.front(), 0);
    if (doc.contains("qos")) plan.qos = doc.at("qos").get<std::map<std::string, std::string>>();
    validate_plan(plan);
    return plan;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("plan document: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse) throw;
    throw Error(ErrorCode::parse, e.what());
  }
}

std::vector<std::vector<int>> enumerate_frontiers(const PlanNode& root) {
  std::vector<std::vector<int>> out{{root.id}};
  if (root.children.empty()) return out;
  std::vector<std::vector<int>> product{{}};
  for (const auto& c : root.children) {
    auto sub = enumerate_frontiers(c);
    std::vector<std::vector<int>> next;
    next.reserve(product.size() * sub.size());
    for (const auto& prefix : product) {
      for (const auto& s : sub) {
        auto f = prefix;
        f.insert(f.end(), s.begin(), s.end());
        next.push_back(std::move(f));
      }
    }
    product = std::move(next);
  }
  for (auto& f : product) {
    std::sort(f.begin(), f.end());
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<PlanCut> enumerate_cuts(const QueryPlan& plan) {
  std::vector<PlanCut> cuts;
  for (const auto& f : enumerate_frontiers(plan.root)) cuts.push_back(decompose(plan, f));
  return cuts;
}

PlanCut decompose(const QueryPlan& plan, std::span<const int> frontier) {
  std::unordered_map<int, int> parents;
  index_parents(plan.root, -1, parents);
  std::set<int> chosen;
  for (int id : frontier) {
    if (!parents.count(id)) throw Error(ErrorCode::invalid_cut, "unknown node " + std::to_string(id));
    if (!chosen.insert(id).second) throw Error(ErrorCode::invalid_cut, "repeated node " + std::to_string(id));
  }
  for (int id : chosen) {
    for (int up = parents.at(id); up != -1; up = parents.at(up)) {
      if (chosen.count(up)) {
        throw Error(ErrorCode::invalid_cut, "node " + std::to_string(up) + " is an ancestor of " +
                                                std::to_string(id));
      }
    }
  }
  std::vector<int> leaves;
  collect_leaves(plan.root, leaves);
  for (int leaf : leaves) {
    bool covered = false;
    for (int up = leaf; up != -1 && !covered; up = parents.at(up)) covered = chosen.count(up) != 0;
    if (!covered) {
      throw Error(ErrorCode::invalid_cut, "leaf " + std::to_string(leaf) + " is not below the frontier");
    }
  }
  PlanCut cut;
  cut.frontier.assign(chosen.begin(), chosen.end());
  cut.super_plan.qos = plan.qos;
  cut.super_plan.root = replace_frontier(plan.root, chosen, cut.sub_plans, plan);
  return cut;
}

static QueryPlan graft_impl(const QueryPlan& super_plan, std::span<const QueryPlan> sub_plans,
                     bool require_all) {
  std::unordered_map<int, const PlanNode*> by_id;
  for (const auto& s : sub_plans) {
    if (!by_id.emplace(s.root.id, &s.root).second) {
      throw Error(ErrorCode::invalid_cut, "two sub-plans share root " + std::to_string(s.root.id));
    }
  }
  QueryPlan out = super_plan;
  std::set<int> used;
  if (!graft_into(out.root, by_id, used) && require_all) {
    throw Error(ErrorCode::invalid_cut, "placeholder without a matching sub-plan");
  }
  if (used.size() != by_id.size()) {
    throw Error(ErrorCode::invalid_cut, "sub-plan without a matching placeholder");
  }
  return out;
}

QueryPlan graft(const QueryPlan& super_plan, std::span<const QueryPlan> sub_plans) {
  return graft_impl(super_plan, sub_plans, true);
}

QueryPlan merge_residual(const QueryPlan& super_plan, const QueryPlan& residual_sub) {
  if (all_executed(residual_sub.root)) {
    throw Error(ErrorCode::nothing_to_merge,
                "sub-plan rooted at " + std::to_string(residual_sub.root.id) + " is fully executed");
  }
  const auto* slot = find_node(super_plan.root, residual_sub.root.id);
  if (!slot || slot->kind() != OpKind::placeholder) {
    throw Error(ErrorCode::invalid_cut, "super-plan has no placeholder " +
                                            std::to_string(residual_sub.root.id));
  }
  QueryPlan residual{scans_to_raw(residual_sub.root), residual_sub.qos};
  QueryPlan merged = graft_impl(super_plan, std::span<const QueryPlan>(&residual, 1), false);
  for (const auto& [k, v] : residual_sub.qos) merged.qos.emplace(k, v);
  return merged;
}

}  // namespace skyt
