#include "skyt/engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include "skyt/relops.hpp"

namespace skyt {

std::string_view to_string(ExecMode mode) {
  switch (mode) {
    case ExecMode::force_execute: return "force-execute";
    case ExecMode::adaptive: return "adaptive";
    case ExecMode::force_pushback: return "force-pushback";
  }
  return "?";
}

ExecMode parse_exec_mode(std::string_view text) {
  if (text == "force-execute") return ExecMode::force_execute;
  if (text == "adaptive") return ExecMode::adaptive;
  if (text == "force-pushback") return ExecMode::force_pushback;
  throw Error(ErrorCode::parse, "unknown execution mode '" + std::string(text) + "'");
}

void ExecBudget::validate() const {
  if (mode == ExecMode::adaptive && sample_slices < 1) {
    throw Error(ErrorCode::invalid_argument, "adaptive mode needs sample_slices >= 1");
  }
  if (std::isnan(max_per_slice_us) || max_per_slice_us < 0) {
    throw Error(ErrorCode::invalid_argument, "budget must be a non-negative number");
  }
}

ExecBudget ExecBudget::from_qos(const std::map<std::string, std::string>& qos, ExecBudget base) {
  ExecBudget b = base;
  try {
    if (auto it = qos.find("budget_us"); it != qos.end()) b.max_per_slice_us = std::stod(it->second);
    if (auto it = qos.find("sample_slices"); it != qos.end()) {
      auto v = std::stoll(it->second);
      if (v < 0 || v > UINT32_MAX) throw Error(ErrorCode::parse, "sample_slices out of range");
      b.sample_slices = static_cast<std::uint32_t>(v);
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::parse, "malformed budget_us or sample_slices");
  }
  if (auto it = qos.find("mode"); it != qos.end()) b.mode = parse_exec_mode(it->second);
  b.validate();
  return b;
}

ExecBudget ExecBudget::from_qos(const std::map<std::string, std::string>& qos) {
  return from_qos(qos, ExecBudget{});
}

double ExecResult::elapsed_us() const {
  double sum = 0;
  for (const auto& e : ledger) sum += e.charged_us;
  return sum;
}

std::vector<std::uint32_t> ExecResult::pushed_back_slices() const {
  std::vector<std::uint32_t> out;
  for (const auto& [id, slices] : pushed_back) {
    for (const auto& s : slices) out.push_back(s.slice_index);
  }
  return out;
}

// ---- value codecs ----

Bytes encode_table(const Table& t, std::uint32_t slice_index) {
  Bytes out;
  ByteWriter w(out);
  w.u32_le(static_cast<std::uint32_t>(t.columns.size()));
  for (const auto& c : t.columns) {
    w.u32_le(static_cast<std::uint32_t>(c.size()));
    w.raw(c);
  }
  Slice s{slice_index, t.row_ids, static_cast<std::uint32_t>(t.cols()), t.values};
  w.raw(encode_slice(s));
  return out;
}

Table decode_table(ByteView bytes, std::uint32_t* slice_index) {
  ByteReader r(bytes);
  Table t;
  const auto ncols = r.u32_le();
  if (ncols > r.remaining() / 4) throw Error(ErrorCode::format, "table column count too large");
  for (std::uint32_t i = 0; i < ncols; ++i) t.columns.push_back(r.str(r.u32_le()));
  auto s = decode_slice(r.rest());
  if (s.cols != ncols) throw Error(ErrorCode::format, "table header and body disagree on columns");
  if (slice_index) *slice_index = s.slice_index;
  t.row_ids = std::move(s.gene_ids);
  t.values = std::move(s.values);
  return t;
}

Bytes encode_tstat(const TStatVector& t) {
  return encode_slice(Slice{0, t.gene_ids, 1, t.t});
}

TStatVector decode_tstat(ByteView bytes) {
  auto s = decode_slice(bytes);
  if (s.cols != 1) throw Error(ErrorCode::format, "t vector must have one column");
  return {std::move(s.gene_ids), std::move(s.values)};
}

namespace {

std::uint64_t ids_size(const std::vector<std::string>& ids) {
  std::uint64_t n = 0;
  for (const auto& s : ids) n += 4 + s.size();
  return n;
}

std::uint64_t table_size(const Table& t) {
  return 4 + ids_size(t.columns) + kSliceHeaderBytes + ids_size(t.row_ids) + t.values.size() * 8;
}

std::uint64_t aggregate_size(const PartialAggregates& a) {
  return kSliceHeaderBytes + ids_size(a.gene_ids) + a.size() * 24;
}

}  // namespace

std::uint64_t encoded_size(const NodeValue& v) {
  std::uint64_t n = 0;
  if (auto* t = std::get_if<std::vector<SliceTable>>(&v)) {
    for (const auto& s : *t) n += table_size(s.table);
  } else if (auto* a = std::get_if<std::vector<SliceAggregate>>(&v)) {
    for (const auto& s : *a) n += aggregate_size(s.agg);
  } else {
    const auto& ts = std::get<TStatVector>(v);
    n += kSliceHeaderBytes + ids_size(ts.gene_ids) + ts.t.size() * 8;
  }
  return n;
}

std::uint64_t transfer_bytes(const ExecResult& r) {
  std::uint64_t n = 0;
  if (r.output) n += encoded_size(*r.output);
  for (const auto& [id, v] : r.partial) n += encoded_size(v);
  for (const auto& [id, v] : r.pushed_back) n += encoded_size(NodeValue(v));
  for (const auto& s : r.stored) n += 4 + s.key.size();
  return n;
}

// ---- evaluation ----

namespace {

struct Item {
  std::uint32_t slice = 0;
  std::variant<Table, PartialAggregates> v;
};

bool is_blocking(const PlanNode& n) {
  return n.kind() == OpKind::combine || n.kind() == OpKind::tstat;
}

bool is_source(const PlanNode& n) {
  return n.kind() == OpKind::scan || n.kind() == OpKind::placeholder;
}

// Bottom-up path [source, op..., top] of a per-slice chain.
std::vector<const PlanNode*> chain_of(const PlanNode& top) {
  std::vector<const PlanNode*> path{&top};
  while (!is_source(*path.back())) {
    const auto& n = *path.back();
    if (n.children.size() != 1 || is_blocking(n.children[0])) {
      throw Error(ErrorCode::invalid_plan, "node " + std::to_string(n.id) + " is not over a slice stream");
    }
    path.push_back(&n.children[0]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

void collect_chain_tops(const PlanNode& n, std::vector<const PlanNode*>& out) {
  if (!is_blocking(n)) {
    out.push_back(&n);
    return;
  }
  for (const auto& c : n.children) collect_chain_tops(c, out);
}

NodeValue to_value(std::vector<Item> items, OpKind top) {
  const bool aggregates = top == OpKind::accumulate ||
                          (!items.empty() && std::holds_alternative<PartialAggregates>(items[0].v));
  if (aggregates) {
    std::vector<SliceAggregate> out;
    for (auto& i : items) out.push_back({i.slice, std::get<PartialAggregates>(std::move(i.v))});
    return out;
  }
  std::vector<SliceTable> out;
  for (auto& i : items) out.push_back({i.slice, std::get<Table>(std::move(i.v))});
  return out;
}

std::vector<Item> to_items(const NodeValue& v, int node_id) {
  std::vector<Item> out;
  if (auto* t = std::get_if<std::vector<SliceTable>>(&v)) {
    for (const auto& s : *t) out.push_back({s.slice_index, s.table});
  } else if (auto* a = std::get_if<std::vector<SliceAggregate>>(&v)) {
    for (const auto& s : *a) out.push_back({s.slice_index, s.agg});
  } else {
    throw Error(ErrorCode::invalid_plan, "node " + std::to_string(node_id) + " bound to a t vector inside a slice stream");
  }
  return out;
}

const std::vector<SliceAggregate>& aggregates_of(const NodeValue& v, const PlanNode& at) {
  auto* a = std::get_if<std::vector<SliceAggregate>>(&v);
  if (!a) throw Error(ErrorCode::exec, "node " + std::to_string(at.id) + " expects aggregate operands");
  return *a;
}

PartialAggregates fold(const std::vector<SliceAggregate>& in) {
  if (in.empty()) return {};
  PartialAggregates acc = in.front().agg;
  for (std::size_t i = 1; i < in.size(); ++i) acc = merge_by_gene(acc, in[i].agg);
  return acc;
}

std::string label(const PlanNode& n, std::string_view what) {
  return "n" + std::to_string(n.id) + " " + std::string(what);
}

std::string label(const PlanNode& n, std::string_view what, std::uint32_t slice) {
  return label(n, what) + " s" + std::to_string(slice);
}

class Runtime {
 public:
  Runtime(const KvNamespace* ns, const DeviceProfile& p, SimClock& clock, const Bindings& bindings)
      : ns_(ns), p_(p), clock_(clock), bindings_(bindings) {}

  std::map<int, NodeValue> precomputed;
  std::uint64_t slices_read = 0;

  const MetadataSlice& meta(const PlanNode& scan) {
    const auto& key = std::get<ScanOp>(scan.op).partition_key;
    auto it = metas_.find(key);
    if (it != metas_.end()) return it->second;
    if (!ns_) throw Error(ErrorCode::not_found, "no namespace to read partition '" + key + "'");
    return metas_.emplace(key, get_metadata(*ns_, key)).first->second;
  }

  std::uint64_t ordinal(int source, std::uint32_t slice) {
    auto [it, fresh] = ordinals_.try_emplace({source, slice}, next_ordinal_);
    if (fresh) ++next_ordinal_;
    return it->second;
  }

  Item read(const PlanNode& scan, std::uint32_t index, std::string_view what = "scan") {
    const auto& m = meta(scan);
    auto slice = get_slice(*ns_, std::get<ScanOp>(scan.op).partition_key, index);
    if (slice.cols != m.cell_ids.size()) {
      throw Error(ErrorCode::schema_mismatch, "slice " + std::to_string(index) + " of '" +
                                                  std::get<ScanOp>(scan.op).partition_key +
                                                  "' disagrees with its schema");
    }
    clock_.charge(label(scan, what, index),
                  charge_io(p_, encoded_slice_size(slice.gene_ids, slice.cols), IoPath::storage));
    ++slices_read;
    return {index, to_table(slice, m.cell_ids)};
  }

  Item apply(const PlanNode& op, Item in, std::uint64_t ord) {
    auto* table = std::get_if<Table>(&in.v);
    if (!table) throw Error(ErrorCode::exec, label(op, "expects a table operand"));
    const auto rows = table->rows(), cols = table->cols();
    switch (op.kind()) {
      case OpKind::select: {
        auto r = select(*table, std::get<SelectOp>(op.op).predicate);
        clock_.charge(label(op, "select", in.slice), charge_compute(p_, OpKind::select, rows, cols, 1, ord));
        return {in.slice, std::move(r.table)};
      }
      case OpKind::project: {
        auto t = project(*table, std::get<ProjectOp>(op.op).projection);
        clock_.charge(label(op, "project", in.slice), charge_compute(p_, OpKind::project, rows, cols, 1, ord));
        return {in.slice, std::move(t)};
      }
      case OpKind::accumulate: {
        const auto& group = std::get<AccumulateOp>(op.op).group;
        auto a = accumulate(*table, group);
        clock_.charge(label(op, "accumulate", in.slice),
                      charge_compute(p_, OpKind::accumulate, rows, group.size(), 1, ord));
        return {in.slice, std::move(a)};
      }
      default:
        throw Error(ErrorCode::invalid_plan, label(op, "is not a per-slice operator"));
    }
  }

  Item run_ops(std::span<const PlanNode* const> ops, Item item, int source) {
    if (ops.empty()) return item;
    const auto ord = ordinal(source, item.slice);
    for (const auto* op : ops) item = apply(*op, std::move(item), ord);
    return item;
  }

  NodeValue eval(const PlanNode& node) {
    if (auto it = precomputed.find(node.id); it != precomputed.end()) return it->second;
    if (is_blocking(node)) return eval_blocking(node);
    return eval_chain(node);
  }

  NodeValue eval_blocking(const PlanNode& node) {
    std::vector<NodeValue> in;
    for (const auto& c : node.children) in.push_back(eval(c));
    if (node.kind() == OpKind::combine) {
      std::vector<SliceAggregate> all;
      std::uint64_t rows = 0;
      for (const auto& v : in) {
        for (const auto& s : aggregates_of(v, node)) {
          rows += s.agg.size();
          all.push_back(s);
        }
      }
      auto acc = fold(all);
      clock_.charge(label(node, "combine"),
                    charge_compute(p_, OpKind::combine, rows, 3, all.size(), kWarmInvocation));
      return std::vector<SliceAggregate>{{0, std::move(acc)}};
    }
    auto a = fold(aggregates_of(in.at(0), node));
    auto b = fold(aggregates_of(in.at(1), node));
    std::vector<std::string> genes = a.gene_ids;
    std::set<std::string> seen(genes.begin(), genes.end());
    for (const auto& g : b.gene_ids) {
      if (seen.insert(g).second) genes.push_back(g);
    }
    auto t = tstat(align(a, genes), align(b, genes));
    clock_.charge(label(node, "tstat"), charge_compute(p_, OpKind::tstat, genes.size(), 3, 1, kWarmInvocation));
    return t;
  }

  NodeValue eval_chain(const PlanNode& top) {
    auto path = chain_of(top);
    const PlanNode& source = *path.front();
    std::vector<const PlanNode*> ops(path.begin() + 1, path.end());

    if (source.kind() == OpKind::placeholder && ops.empty() && !bindings_.partial.count(source.id)) {
      return bound(source);
    }

    std::vector<Item> items;
    std::size_t start = 0;
    bool from_source = true;
    auto run = [&](std::size_t end) {
      std::span<const PlanNode* const> stage(ops.data() + start, end - start);
      std::vector<Item> out;
      if (from_source && source.kind() == OpKind::scan) {
        const auto n = meta(source).slice_count;
        for (std::uint32_t i = 0; i < n; ++i) out.push_back(run_ops(stage, read(source, i), source.id));
      } else {
        auto in = from_source ? source_items(source) : std::move(items);
        for (auto& item : in) out.push_back(run_ops(stage, std::move(item), source.id));
      }
      from_source = false;
      start = end;
      items = std::move(out);
    };

    for (std::size_t h = 0; h < ops.size(); ++h) {
      auto it = bindings_.partial.find(ops[h]->id);
      if (it == bindings_.partial.end()) continue;
      run(h + 1);
      merge_done(items, it->second, ops[h]->id);
    }
    run(ops.size());
    return to_value(std::move(items), top.kind());
  }

 private:
  // Merges already-computed slices into a stream, by slice index.
  static void merge_done(std::vector<Item>& items, const NodeValue& done_value, int node_id) {
    auto done = to_items(done_value, node_id);
    items.insert(items.end(), std::make_move_iterator(done.begin()), std::make_move_iterator(done.end()));
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.slice < b.slice; });
    for (std::size_t i = 1; i < items.size(); ++i) {
      if (items[i].slice == items[i - 1].slice) {
        throw Error(ErrorCode::protocol, "slice " + std::to_string(items[i].slice) + " of node " +
                                             std::to_string(node_id) + " produced twice");
      }
    }
  }

  // A raw placeholder's slices, plus any a device already read for it.
  std::vector<Item> source_items(const PlanNode& source) {
    auto items = to_items(bound(source), source.id);
    if (auto it = bindings_.partial.find(source.id); it != bindings_.partial.end()) {
      merge_done(items, it->second, source.id);
    }
    return items;
  }

  const NodeValue& bound(const PlanNode& ph) {
    auto it = bindings_.placeholders.find(ph.id);
    if (it == bindings_.placeholders.end()) {
      throw Error(ErrorCode::invalid_plan, "placeholder " + std::to_string(ph.id) + " is unbound");
    }
    return it->second;
  }

  const KvNamespace* ns_;
  const DeviceProfile& p_;
  SimClock& clock_;
  const Bindings& bindings_;
  std::map<std::string, MetadataSlice> metas_;
  std::map<std::pair<int, std::uint32_t>, std::uint64_t> ordinals_;
  std::uint64_t next_ordinal_ = 0;
};

std::vector<LedgerEntry> ledger_since(const SimClock& clock, std::size_t from) {
  return {clock.ledger().begin() + static_cast<std::ptrdiff_t>(from), clock.ledger().end()};
}

void mark_all(PlanNode& root, NodeStatus s) {
  visit_preorder(root, [&](PlanNode& n) { n.status = s; });
}

}  // namespace

ExecResult execute_plan(const QueryPlan& plan, const KvNamespace* ns, const DeviceProfile& profile,
                        SimClock& clock, const Bindings& bindings) {
  validate_plan(plan);
  const auto mark = clock.ledger().size();
  Runtime rt(ns, profile, clock, bindings);
  ExecResult r;
  r.output = rt.eval(plan.root);
  r.plan = plan;
  mark_all(r.plan.root, NodeStatus::executed());
  r.ledger = ledger_since(clock, mark);
  r.total_slices = r.executed_slices = rt.slices_read;
  return r;
}

ExecResult execute_downstream(const QueryPlan& sub_plan, const ExecBudget& budget, KvNamespace& ns,
                              const DeviceProfile& profile, SimClock& clock,
                              const std::string& out_prefix) {
  validate_plan(sub_plan);
  budget.validate();
  const auto mark = clock.ledger().size();
  Bindings none;
  Runtime rt(&ns, profile, clock, none);

  std::vector<const PlanNode*> tops;
  collect_chain_tops(sub_plan.root, tops);
  struct Chain {
    const PlanNode* top;
    const PlanNode* scan;
    std::vector<const PlanNode*> ops;
    std::uint32_t n = 0;
    std::vector<Item> done;
  };
  std::vector<Chain> chains;
  ExecResult r;
  for (const auto* top : tops) {
    auto path = chain_of(*top);
    if (path.front()->kind() != OpKind::scan) {
      throw Error(ErrorCode::invalid_plan, "downstream sub-plans must read their own Scan");
    }
    Chain c{top, path.front(), {path.begin() + 1, path.end()}, rt.meta(*path.front()).slice_count, {}};
    r.total_slices += c.n;
    chains.push_back(std::move(c));
  }

  const std::uint64_t window = std::uint64_t{profile.cold_slices} + budget.sample_slices;
  bool stop = budget.mode == ExecMode::force_pushback;
  bool decided = budget.mode != ExecMode::adaptive;
  double warm_sum = 0;
  std::uint64_t warm_count = 0;
  for (auto& c : chains) {
    for (std::uint32_t i = 0; i < c.n && !stop; ++i) {
      const double before = clock.now_us();
      const auto ord = rt.ordinal(c.scan->id, i);
      c.done.push_back(rt.run_ops(c.ops, rt.read(*c.scan, i), c.scan->id));
      ++r.executed_slices;
      if (ord >= profile.cold_slices) {
        warm_sum += clock.now_us() - before;
        ++warm_count;
      }
      if (!decided && r.executed_slices == window) {
        decided = true;
        stop = warm_count > 0 && warm_sum / static_cast<double>(warm_count) > budget.max_per_slice_us;
      }
    }
  }

  r.plan = sub_plan;
  if (r.executed_slices == r.total_slices) {
    for (auto& c : chains) rt.precomputed[c.top->id] = to_value(std::move(c.done), c.top->kind());
    r.output = rt.eval(sub_plan.root);
    mark_all(r.plan.root, NodeStatus::executed());
  } else {
    mark_all(r.plan.root, NodeStatus::not_executed());
    for (auto& c : chains) {
      const auto k = static_cast<std::uint32_t>(c.done.size());
      const auto status = NodeStatus::partial(k, c.n);
      for (auto* node = find_node(r.plan.root, c.top->id);;) {
        node->status = status;
        if (node->children.empty()) break;
        node = &node->children[0];
      }
      auto& raw = r.pushed_back[c.scan->id];
      for (std::uint32_t i = k; i < c.n; ++i) {
        auto item = rt.read(*c.scan, i, "pushback");
        raw.push_back({item.slice, std::get<Table>(std::move(item.v))});
      }
      if (k > 0) r.partial[c.top->id] = to_value(std::move(c.done), c.top->kind());
    }
  }

  if (!out_prefix.empty()) {
    std::size_t counter = 0;
    auto spill = [&](NodeValue& v, BlockRole role, int node_id) {
      auto* aggs = std::get_if<std::vector<SliceAggregate>>(&v);
      if (!aggs) return false;
      for (const auto& s : *aggs) {
        auto key = out_prefix + ".agg." + std::to_string(counter++);
        ns.put(key, encode_aggregates(s.agg, s.slice_index));
        r.stored.push_back({role, node_id, s.slice_index, std::move(key)});
      }
      return true;
    };
    if (r.output && spill(*r.output, BlockRole::output, r.plan.root.id)) r.output.reset();
    for (auto it = r.partial.begin(); it != r.partial.end();) {
      it = spill(it->second, BlockRole::partial, it->first) ? r.partial.erase(it) : std::next(it);
    }
  }
  r.ledger = ledger_since(clock, mark);
  return r;
}

void resolve_stored(ExecResult& result, const std::function<Bytes(const std::string&)>& fetch) {
  for (const auto& ref : result.stored) {
    std::uint32_t index = 0;
    auto agg = decode_aggregates(fetch(ref.key), &index);
    if (index != ref.slice_index) {
      throw Error(ErrorCode::protocol, "stored aggregate '" + ref.key + "' has the wrong slice index");
    }
    NodeValue* target = nullptr;
    if (ref.role == BlockRole::output) {
      if (!result.output) result.output = std::vector<SliceAggregate>{};
      target = &*result.output;
    } else if (ref.role == BlockRole::partial) {
      target = &result.partial.try_emplace(ref.node_id, std::vector<SliceAggregate>{}).first->second;
    } else {
      throw Error(ErrorCode::protocol, "raw slices are never stored");
    }
    auto* list = std::get_if<std::vector<SliceAggregate>>(target);
    if (!list) throw Error(ErrorCode::protocol, "stored aggregate mixed with inline tables");
    list->push_back({index, std::move(agg)});
  }
  result.stored.clear();
  auto sort = [](NodeValue& v) {
    if (auto* list = std::get_if<std::vector<SliceAggregate>>(&v)) {
      std::stable_sort(list->begin(), list->end(),
                       [](const auto& a, const auto& b) { return a.slice_index < b.slice_index; });
    }
  };
  if (result.output) sort(*result.output);
  for (auto& [id, v] : result.partial) sort(v);
}

LocalDevice::LocalDevice(std::string name, KvNamespace& ns, DeviceProfile profile)
    : name_(std::move(name)), ns_(ns), profile_(std::move(profile)) {
  profile_.validate();
}

bool LocalDevice::holds(const std::string& partition_key) {
  return ns_.try_get(meta_key_name(partition_key)).has_value();
}

ExecResult LocalDevice::exec(const QueryPlan& sub_plan, const ExecBudget& budget) {
  SimClock clock;
  return execute_downstream(sub_plan, budget, ns_, profile_, clock);
}

namespace {

std::vector<std::string> scan_keys(const PlanNode& root) {
  std::vector<std::string> keys;
  visit_preorder(root, [&](const PlanNode& n) {
    if (n.kind() == OpKind::scan) keys.push_back(std::get<ScanOp>(n.op).partition_key);
  });
  return keys;
}

std::size_t value_count(const NodeValue& v) {
  if (auto* t = std::get_if<std::vector<SliceTable>>(&v)) return t->size();
  if (auto* a = std::get_if<std::vector<SliceAggregate>>(&v)) return a->size();
  return 1;
}

// Checks that a returned annotation accounts for every slice.
void check_annotations(const QueryPlan& sent, const ExecResult& r) {
  if (r.plan.root.id != sent.root.id || count_nodes(r.plan.root) != count_nodes(sent.root)) {
    throw Error(ErrorCode::protocol, "annotated plan does not match the sub-plan sent");
  }
  const bool executed = r.plan.root.status.state == NodeStatus::State::executed;
  if (executed != r.output.has_value()) {
    throw Error(ErrorCode::protocol, "root annotation disagrees with the returned output");
  }
  if (executed) return;
  std::vector<const PlanNode*> tops;
  collect_chain_tops(r.plan.root, tops);
  for (const auto* top : tops) {
    const auto path = chain_of(*top);
    const auto& s = top->status;
    auto it = r.partial.find(top->id);
    const std::size_t have = it == r.partial.end() ? 0 : value_count(it->second);
    auto raw = r.pushed_back.find(path.front()->id);
    const std::size_t pushed = raw == r.pushed_back.end() ? 0 : raw->second.size();
    if (s.state == NodeStatus::State::partial && (have != s.k || pushed != s.n - s.k)) {
      throw Error(ErrorCode::protocol, "node " + std::to_string(top->id) + " reports " + s.to_string() +
                                           " but returned " + std::to_string(have) + " results and " +
                                           std::to_string(pushed) + " raw slices");
    }
    if (s.state == NodeStatus::State::not_executed && have != 0) {
      throw Error(ErrorCode::protocol, "node " + std::to_string(top->id) + " is not executed but returned results");
    }
    if (s.state == NodeStatus::State::executed && pushed != 0) {
      throw Error(ErrorCode::protocol, "node " + std::to_string(top->id) + " is executed but pushed back slices");
    }
  }
}

}  // namespace

CoordinatorResult coordinate(const QueryPlan& plan, const PlanCut& cut,
                             const DeviceProfile& upstream, const std::vector<Device*>& devices,
                             const std::vector<ExecBudget>& budgets) {
  validate_plan(plan);
  if (devices.empty()) throw Error(ErrorCode::invalid_argument, "no downstream devices");
  if (!budgets.empty() && budgets.size() != 1 && budgets.size() != devices.size()) {
    throw Error(ErrorCode::invalid_argument, "give one budget, or one per device");
  }
  auto budget_for = [&](std::size_t d) {
    if (budgets.empty()) return ExecBudget{};
    return budgets.size() == 1 ? budgets[0] : budgets[d];
  };

  // Placement: the first device holding every partition a sub-plan reads.
  std::vector<std::vector<std::size_t>> assigned(devices.size());
  for (std::size_t s = 0; s < cut.sub_plans.size(); ++s) {
    const auto keys = scan_keys(cut.sub_plans[s].root);
    std::optional<std::size_t> home;
    for (std::size_t d = 0; d < devices.size() && !home; ++d) {
      bool all = true;
      for (const auto& k : keys) all = all && devices[d]->holds(k);
      if (all) home = d;
    }
    if (!home) {
      throw Error(ErrorCode::not_found, "no device holds every partition of sub-plan " +
                                            std::to_string(cut.sub_plans[s].root.id));
    }
    assigned[*home].push_back(s);
  }

  // Devices run concurrently; each runs its sub-plans in plan order.
  std::vector<std::future<std::vector<ExecResult>>> futures;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    futures.push_back(std::async(std::launch::async, [&, d] {
      std::vector<ExecResult> out;
      for (auto s : assigned[d]) out.push_back(devices[d]->exec(cut.sub_plans[s], budget_for(d)));
      return out;
    }));
  }
  std::vector<std::vector<ExecResult>> results;
  std::exception_ptr failure;
  for (auto& f : futures) {
    try {
      results.push_back(f.get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
      results.emplace_back();
    }
  }
  if (failure) std::rethrow_exception(failure);

  CoordinatorResult out;
  std::vector<const ExecResult*> by_sub(cut.sub_plans.size());
  std::size_t slowest = 0;
  double slowest_us = -1;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    DeviceReport rep;
    rep.device = devices[d]->name();
    for (std::size_t j = 0; j < assigned[d].size(); ++j) {
      const auto& r = results[d][j];
      check_annotations(cut.sub_plans[assigned[d][j]], r);
      by_sub[assigned[d][j]] = &r;
      rep.sub_plan_roots.push_back(r.plan.root.id);
      rep.compute_us += r.elapsed_us();
      rep.transfer_bytes += transfer_bytes(r);
      rep.total_slices += r.total_slices;
      rep.executed_slices += r.executed_slices;
      rep.annotated.push_back(r.plan);
    }
    rep.transfer_us = charge_io(devices[d]->profile(), rep.transfer_bytes, IoPath::network);
    if (rep.compute_us + rep.transfer_us > slowest_us) {
      slowest_us = rep.compute_us + rep.transfer_us;
      slowest = d;
    }
    out.devices.push_back(std::move(rep));
  }

  QueryPlan merged = cut.super_plan;
  Bindings bindings;
  for (std::size_t s = 0; s < cut.sub_plans.size(); ++s) {
    const auto& r = *by_sub[s];
    if (r.plan.root.status.state == NodeStatus::State::executed) {
      bindings.placeholders[r.plan.root.id] = *r.output;
      continue;
    }
    merged = merge_residual(merged, r.plan);
    for (const auto& [id, v] : r.partial) bindings.partial[id] = v;
    visit_preorder(r.plan.root, [&](const PlanNode& n) {
      if (n.kind() != OpKind::scan) return;
      auto it = r.pushed_back.find(n.id);
      bindings.placeholders[n.id] =
          it == r.pushed_back.end() ? std::vector<SliceTable>{} : it->second;
    });
  }

  SimClock clock;
  auto done = execute_plan(merged, nullptr, upstream, clock, bindings);
  out.completed_plan = merged;
  out.upstream_us = clock.now_us();
  if (auto* t = std::get_if<TStatVector>(&*done.output)) {
    out.result = std::move(*t);
  } else {
    throw Error(ErrorCode::invalid_plan, "coordinated plans must end in TStat");
  }

  const auto& crit = out.devices[slowest];
  for (std::size_t j = 0; j < assigned[slowest].size(); ++j) {
    for (const auto& e : results[slowest][j].ledger) out.ledger.push_back({crit.device + ": " + e.label, e.charged_us});
  }
  out.ledger.push_back({crit.device + ": transfer", crit.transfer_us});
  for (const auto& e : done.ledger) out.ledger.push_back({"upstream: " + e.label, e.charged_us});
  for (const auto& e : out.ledger) out.end_to_end_us += e.charged_us;
  return out;
}

PlanStats stats_from_metadata(const std::map<std::string, MetadataSlice>& metas, double selectivity) {
  PlanStats stats;
  for (const auto& [key, m] : metas) {
    PartitionStats s;
    s.rows = m.gene_ids.size();
    s.cols = m.cell_ids.size();
    s.slices = m.slice_count;
    s.selectivity = selectivity;
    std::uint64_t total = 0;
    for (const auto& g : m.gene_ids) total += g.size();
    s.id_bytes = m.gene_ids.empty() ? 0 : (total + m.gene_ids.size() / 2) / m.gene_ids.size();
    stats.partitions[key] = s;
  }
  return stats;
}

}  // namespace skyt
