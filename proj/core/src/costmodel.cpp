#include "skyt/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

namespace skyt {

void DeviceProfile::validate() const {
  auto positive = [&](double v, const char* what) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument, "profile '" + name + "': " + what + " must be positive");
    }
  };
  if (!(cpu_slowdown >= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "profile '" + name + "': cpu_slowdown must be >= 1");
  }
  positive(invocation_overhead_us, "invocation_overhead_us");
  positive(per_cell_ns, "per_cell_ns");
  positive(select_weight, "select_weight");
  positive(project_weight, "project_weight");
  positive(storage_MBps, "storage_MBps");
  positive(network_MBps, "network_MBps");
  if (std::abs(select_weight + project_weight - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "profile '" + name + "': select_weight + project_weight != 1");
  }
  if (!(cold_penalty_factor >= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "profile '" + name + "': cold_penalty_factor must be >= 1");
  }
  if (cores == 0) throw Error(ErrorCode::invalid_argument, "profile '" + name + "': cores must be >= 1");
}

DeviceProfile DeviceProfile::scaled(double c) const {
  DeviceProfile out = *this;
  out.invocation_overhead_us *= c;
  out.per_cell_ns *= c;
  out.storage_MBps /= c;
  out.network_MBps /= c;
  return out;
}

DeviceProfile DeviceProfile::client() { return DeviceProfile{}; }

DeviceProfile DeviceProfile::kinetic_vm() {
  DeviceProfile p;
  p.name = "kineticvm";
  p.cpu_slowdown = 1.05;
  p.invocation_overhead_us = 50.0 * 1.05;
  return p;
}

DeviceProfile DeviceProfile::envoy() {
  DeviceProfile p;
  p.name = "envoy";
  p.cpu_slowdown = 15.0;
  p.invocation_overhead_us = 50.0 * 15.0;
  p.storage_MBps = 261.0;
  p.network_MBps = 312.5;
  p.cold_slices = 5;
  p.cold_penalty_factor = 3.0;
  p.cores = 2;
  return p;
}

DeviceProfile DeviceProfile::from(const Config& cfg, DeviceProfile base) {
  DeviceProfile p = std::move(base);
  p.name = cfg.get("name", p.name);
  p.cpu_slowdown = cfg.get_double("cpu_slowdown", p.cpu_slowdown);
  p.invocation_overhead_us = cfg.get_double("invocation_overhead_us", p.invocation_overhead_us);
  p.per_cell_ns = cfg.get_double("per_cell_ns", p.per_cell_ns);
  p.select_weight = cfg.get_double("select_weight", p.select_weight);
  p.project_weight = cfg.get_double("project_weight", p.project_weight);
  p.storage_MBps = cfg.get_double("storage_MBps", p.storage_MBps);
  p.network_MBps = cfg.get_double("network_MBps", p.network_MBps);
  auto cold = cfg.get_int("cold_slices", p.cold_slices);
  auto cores = cfg.get_int("cores", p.cores);
  if (cold < 0 || cores < 1) throw Error(ErrorCode::invalid_argument, "cold_slices/cores out of range");
  p.cold_slices = static_cast<std::uint32_t>(cold);
  p.cores = static_cast<std::uint32_t>(cores);
  p.cold_penalty_factor = cfg.get_double("cold_penalty_factor", p.cold_penalty_factor);
  p.validate();
  return p;
}

std::vector<std::string> builtin_profile_names() { return {"client", "kineticvm", "envoy"}; }

DeviceProfile builtin_profile(std::string_view name) {
  if (name == "client") return DeviceProfile::client();
  if (name == "kineticvm") return DeviceProfile::kinetic_vm();
  if (name == "envoy") return DeviceProfile::envoy();
  throw Error(ErrorCode::not_found, "no builtin profile '" + std::string(name) + "'");
}

DeviceProfile resolve_profile(const std::string& name_or_path) {
  for (const auto& n : builtin_profile_names()) {
    if (n == name_or_path) return builtin_profile(n);
  }
  if (!std::filesystem::exists(name_or_path)) {
    throw Error(ErrorCode::not_found, "profile '" + name_or_path + "' is neither builtin nor a file");
  }
  auto cfg = Config::load(name_or_path);
  return DeviceProfile::from(cfg, builtin_profile(cfg.get("base", "client")));
}

double op_weight(const DeviceProfile& p, OpKind kind) {
  switch (kind) {
    case OpKind::select: return 2.0 * p.select_weight;
    case OpKind::project: return 2.0 * p.project_weight;
    case OpKind::accumulate:
    case OpKind::combine:
    case OpKind::tstat: return 1.0;
    case OpKind::scan:
    case OpKind::placeholder: return 0.0;
  }
  return 0.0;
}

double charge_compute(const DeviceProfile& p, OpKind kind, std::uint64_t rows, std::uint64_t cols,
                      std::uint64_t invocations, std::uint64_t first_invocation) {
  const double weight = op_weight(p, kind);
  if (weight == 0.0 || invocations == 0) return 0.0;
  const double overhead = static_cast<double>(invocations) * p.invocation_overhead_us;
  const double cells = static_cast<double>(rows) * static_cast<double>(cols);
  const double work = cells * p.per_cell_ns * p.cpu_slowdown * weight / 1000.0;
  double total = overhead + work;
  if (first_invocation < p.cold_slices && p.cold_penalty_factor != 1.0) {
    const auto cold = std::min<std::uint64_t>(invocations, p.cold_slices - first_invocation);
    const double per_invocation = total / static_cast<double>(invocations);
    total += (p.cold_penalty_factor - 1.0) * static_cast<double>(cold) * per_invocation;
  }
  return total;
}

double charge_io(const DeviceProfile& p, std::uint64_t bytes, IoPath path) {
  // 1 MB/s moves one byte per microsecond.
  const double rate = path == IoPath::storage ? p.storage_MBps : p.network_MBps;
  return static_cast<double>(bytes) / rate;
}

void SimClock::charge(std::string label, double us) {
  if (!(us >= 0)) throw Error(ErrorCode::invalid_argument, "negative or NaN charge for " + label);
  now_us_ += us;
  ledger_.push_back({std::move(label), us});
}

double SimClock::ledger_total() const {
  double sum = 0;
  for (const auto& e : ledger_) sum += e.charged_us;
  return sum;
}

namespace {

struct Shape {
  enum class Kind { tables, aggregates, tstat } kind = Kind::tables;
  double rows = 0;    // total rows (or genes)
  double cols = 0;
  double items = 0;   // slices or aggregates in the stream
  double id_bytes = 8;
  std::uint64_t first_ordinal = kWarmInvocation;

  double bytes() const {
    const double header = static_cast<double>(kSliceHeaderBytes);
    const double ids = rows * (4.0 + id_bytes);
    switch (kind) {
      case Kind::tables: return items * header + ids + rows * cols * 8.0;
      case Kind::aggregates: return items * header + ids + rows * 3.0 * 8.0;
      case Kind::tstat: return header + ids + rows * 8.0;
    }
    return 0;
  }
};

std::uint64_t round_u64(double v) { return static_cast<std::uint64_t>(std::llround(std::max(0.0, v))); }

class Estimator {
 public:
  Estimator(const DeviceProfile& p, const PlanStats& stats) : p_(p), stats_(stats) {}

  Shape walk(const PlanNode& node) {
    std::vector<Shape> in;
    for (const auto& c : node.children) in.push_back(walk(c));
    Shape out;
    double compute = 0;
    switch (node.kind()) {
      case OpKind::scan: {
        const auto& key = std::get<ScanOp>(node.op).partition_key;
        auto it = stats_.partitions.find(key);
        if (it == stats_.partitions.end()) {
          throw Error(ErrorCode::invalid_argument, "no stats for partition '" + key + "'");
        }
        const auto& s = it->second;
        out = Shape{Shape::Kind::tables, double(s.rows), double(s.cols), double(s.slices),
                    double(s.id_bytes), counter_};
        selectivity_[node.id] = s.selectivity;
        counter_ += s.slices;
        storage_us_ += charge_io(p_, round_u64(out.bytes()), IoPath::storage);
        break;
      }
      case OpKind::select: {
        out = in.at(0);
        compute = charge_compute(p_, OpKind::select, round_u64(out.rows), round_u64(out.cols),
                                 round_u64(out.items), out.first_ordinal);
        out.rows *= scan_selectivity(node);
        break;
      }
      case OpKind::project: {
        out = in.at(0);
        compute = charge_compute(p_, OpKind::project, round_u64(out.rows), round_u64(out.cols),
                                 round_u64(out.items), out.first_ordinal);
        out.cols = double(std::get<ProjectOp>(node.op).projection.columns.size());
        break;
      }
      case OpKind::accumulate: {
        out = in.at(0);
        const double group = double(std::get<AccumulateOp>(node.op).group.size());
        compute = charge_compute(p_, OpKind::accumulate, round_u64(out.rows), round_u64(group),
                                 round_u64(out.items), out.first_ordinal);
        out.kind = Shape::Kind::aggregates;
        out.cols = 3;
        break;
      }
      case OpKind::combine: {
        double rows = 0, items = 0, input_rows = 0, id_bytes = 8;
        for (const auto& s : in) {
          rows = std::max(rows, s.rows);
          items += s.items;
          input_rows += s.rows;
          id_bytes = s.id_bytes;
        }
        // One merge invocation per folded aggregate over its genes.
        compute = charge_compute(p_, OpKind::combine, round_u64(input_rows), 3, round_u64(items),
                                 kWarmInvocation);
        out = Shape{Shape::Kind::aggregates, rows, 3, 1, id_bytes, kWarmInvocation};
        break;
      }
      case OpKind::tstat: {
        const double rows = std::max(in.at(0).rows, in.at(1).rows);
        compute = charge_compute(p_, OpKind::tstat, round_u64(rows), 3, 1, kWarmInvocation);
        out = Shape{Shape::Kind::tstat, rows, 1, 1, in.at(0).id_bytes, kWarmInvocation};
        break;
      }
      case OpKind::placeholder:
        throw Error(ErrorCode::invalid_argument, "cannot estimate a plan with placeholders");
    }
    compute_[node.id] = compute;
    shapes_[node.id] = out;
    return out;
  }

  double compute(int id) const { return compute_.at(id); }
  const Shape& shape(int id) const { return shapes_.at(id); }
  double storage_us() const { return storage_us_; }
  double total_compute() const {
    double sum = 0;
    for (const auto& [id, c] : compute_) sum += c;
    return sum;
  }

 private:
  // Selectivity of the Scan feeding this Select.
  double scan_selectivity(const PlanNode& node) const {
    const PlanNode* cur = &node;
    while (!cur->children.empty()) cur = &cur->children.front();
    auto it = selectivity_.find(cur->id);
    return it == selectivity_.end() ? 1.0 : it->second;
  }

  const DeviceProfile& p_;
  const PlanStats& stats_;
  std::uint64_t counter_ = 0;
  double storage_us_ = 0;
  std::map<int, double> compute_;
  std::map<int, Shape> shapes_;
  std::map<int, double> selectivity_;
};

bool better(const CutCost& a, std::size_t ia, const CutCost& b, std::size_t ib) {
  const double ta = a.total_us(), tb = b.total_us();
  const double tol = 1e-12 * std::max(std::abs(ta), std::abs(tb));
  if (std::abs(ta - tb) > tol) return ta < tb;
  if (a.transfer_bytes != b.transfer_bytes) return a.transfer_bytes < b.transfer_bytes;
  if (a.sub_plan_nodes != b.sub_plan_nodes) return a.sub_plan_nodes < b.sub_plan_nodes;
  return ia < ib;
}

}  // namespace

CostBreakdown estimate_plan_cost(const QueryPlan& plan, const DeviceProfile& p,
                                 const PlanStats& stats) {
  Estimator est(p, stats);
  auto root = est.walk(plan.root);
  CostBreakdown out;
  out.compute_us = est.total_compute();
  out.storage_us = est.storage_us();
  out.transfer_bytes = round_u64(root.bytes());
  out.network_us = charge_io(p, out.transfer_bytes, IoPath::network);
  return out;
}

CutCost evaluate_cut(const QueryPlan& plan, const std::vector<int>& frontier,
                     const DeviceProfile& upstream, const DeviceProfile& downstream,
                     const PlanStats& stats) {
  auto cut = decompose(plan, frontier);
  CutCost cost;
  std::set<int> downstream_nodes;
  for (const auto& sub : cut.sub_plans) {
    Estimator est(downstream, stats);
    auto root = est.walk(sub.root);
    cost.downstream_us += est.total_compute() + est.storage_us();
    cost.transfer_bytes += round_u64(root.bytes());
    cost.sub_plan_nodes += count_nodes(sub.root);
    visit_preorder(sub.root, [&](const PlanNode& n) { downstream_nodes.insert(n.id); });
  }
  cost.transfer_us = charge_io(downstream, cost.transfer_bytes, IoPath::network);
  Estimator up(upstream, stats);
  up.walk(plan.root);
  visit_preorder(plan.root, [&](const PlanNode& n) {
    if (!downstream_nodes.count(n.id)) cost.upstream_us += up.compute(n.id);
  });
  return cost;
}

CutChoice choose_cut(const QueryPlan& plan, const DeviceProfile& upstream,
                     const DeviceProfile& downstream, const PlanStats& stats,
                     const std::map<std::string, int>* placement) {
  // A sub-plan is always the whole subtree under its frontier node, so its
  // downstream cost, size and upstream savings can be computed once per node.
  struct NodeTerms {
    double downstream_us = 0;
    std::uint64_t bytes = 0;
    std::size_t nodes = 0;
    double upstream_us = 0;  // upstream compute of the subtree
    bool feasible = true;
  };
  std::map<int, NodeTerms> terms;
  Estimator up(upstream, stats);
  up.walk(plan.root);
  double upstream_total = 0;
  visit_preorder(plan.root, [&](const PlanNode& n) { upstream_total += up.compute(n.id); });
  visit_preorder(plan.root, [&](const PlanNode& n) {
    NodeTerms t;
    Estimator est(downstream, stats);
    auto root = est.walk(n);
    t.downstream_us = est.total_compute() + est.storage_us();
    t.bytes = round_u64(root.bytes());
    t.nodes = count_nodes(n);
    std::set<int> devices;
    visit_preorder(n, [&](const PlanNode& m) {
      t.upstream_us += up.compute(m.id);
      if (placement && m.kind() == OpKind::scan) {
        auto it = placement->find(std::get<ScanOp>(m.op).partition_key);
        if (it != placement->end()) devices.insert(it->second);
      }
    });
    t.feasible = devices.size() <= 1;
    terms[n.id] = t;
  });

  auto frontiers = enumerate_frontiers(plan.root);
  std::optional<std::size_t> best;
  CutCost best_cost;
  for (std::size_t i = 0; i < frontiers.size(); ++i) {
    CutCost c;
    bool ok = true;
    double saved = 0;
    for (int id : frontiers[i]) {
      const auto& t = terms.at(id);
      ok = ok && t.feasible;
      c.downstream_us += t.downstream_us;
      c.transfer_bytes += t.bytes;
      c.sub_plan_nodes += t.nodes;
      saved += t.upstream_us;
    }
    if (!ok) continue;
    c.transfer_us = charge_io(downstream, c.transfer_bytes, IoPath::network);
    c.upstream_us = std::max(0.0, upstream_total - saved);
    if (!best || better(c, i, best_cost, *best)) {
      best = i;
      best_cost = c;
    }
  }
  if (!best) throw Error(ErrorCode::invalid_cut, "no feasible cut for this placement");
  return CutChoice{decompose(plan, frontiers[*best]),
                   evaluate_cut(plan, frontiers[*best], upstream, downstream, stats), *best};
}

double aggregate_throughput(const DeviceProfile& p, unsigned devices, std::uint64_t slice_rows,
                            std::uint64_t cols) {
  const double per_slice = charge_compute(p, OpKind::accumulate, slice_rows, cols, 1, kWarmInvocation);
  const double cells = static_cast<double>(slice_rows) * static_cast<double>(cols);
  return static_cast<double>(devices) * static_cast<double>(p.cores) * cells / per_slice;
}

}  // namespace skyt
