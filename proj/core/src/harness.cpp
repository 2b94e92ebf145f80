#include "skyt/harness.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>
#include <random>
#include <sstream>

#include "skyt/client.hpp"
#include "skyt/kvstore.hpp"

#ifndef SKYT_BUILD_TAG
#define SKYT_BUILD_TAG "unknown"
#endif

namespace skyt {

std::string_view build_tag() { return SKYT_BUILD_TAG; }

namespace {

std::string padded(const char* stem, std::uint64_t i, int width) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%0*llu", stem, width, static_cast<unsigned long long>(i));
  return buf;
}

}  // namespace

std::string cell_name(std::uint64_t i) { return padded("cell", i, 4); }
std::string gene_name(std::uint64_t i) { return padded("gene", i, 5); }

ExprMatrix gen_matrix(std::uint64_t genes, std::uint64_t cells, std::uint64_t seed,
                      std::optional<double> target_selectivity, double literal) {
  if (target_selectivity && !(*target_selectivity >= 0 && *target_selectivity <= 1)) {
    throw Error(ErrorCode::invalid_argument, "target selectivity must lie in [0, 1]");
  }
  if (!(literal > 0)) throw Error(ErrorCode::invalid_argument, "predicate literal must be positive");
  ExprMatrix m;
  m.domain = "synthetic";
  m.metadata["seed"] = std::to_string(seed);
  m.gene_ids.reserve(genes);
  for (std::uint64_t g = 0; g < genes; ++g) m.gene_ids.push_back(gene_name(g));
  for (std::uint64_t c = 0; c < cells; ++c) m.cell_ids.push_back(cell_name(c));
  m.values.resize(genes * cells);

  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> dist(1.0, 1.0);
  for (auto& v : m.values) v = dist(rng);
  if (!target_selectivity || genes == 0) return m;

  // Scale each column so the threshold falls between two order statistics.
  const auto above = static_cast<std::uint64_t>(std::llround(*target_selectivity * double(genes)));
  std::vector<double> column(genes);
  for (std::uint64_t c = 0; c < cells; ++c) {
    for (std::uint64_t g = 0; g < genes; ++g) column[g] = m.values[g * cells + c];
    std::sort(column.begin(), column.end());
    double scale;
    if (above == 0) {
      scale = 0.5 * literal / column.back();
    } else if (above == genes) {
      scale = 2.0 * literal / column.front();
    } else {
      const double lo = column[genes - above - 1], hi = column[genes - above];
      scale = 2.0 * literal / (lo + hi);
    }
    for (std::uint64_t g = 0; g < genes; ++g) m.values[g * cells + c] *= scale;
  }
  return m;
}

double measured_selectivity(const ExprMatrix& m, double literal) {
  if (m.values.empty()) return 0;
  const auto n = std::count_if(m.values.begin(), m.values.end(), [&](double v) { return v > literal; });
  return static_cast<double>(n) / static_cast<double>(m.values.size());
}

Scenario Scenario::exp1() {
  Scenario s;
  s.id = "exp1";
  s.genes = 14400;  // 300 slices of 48 rows, 30 of 480
  s.heights = {48, 480};
  s.widths = {100, 400, 1600};
  s.profiles = {"client", "envoy"};
  s.max_kv_bytes = 16u << 20;
  return s;
}

Scenario Scenario::exp2() {
  Scenario s;
  s.id = "exp2";
  s.genes = 3120;  // 24 full slices of 130 rows at 1 MiB
  s.cells = 1000;
  return s;
}

Scenario Scenario::exp3() {
  Scenario s;
  s.id = "exp3";
  s.genes = 12000;
  s.cells = 2000;
  s.widths = {60, 140, 280};
  s.profiles = {"client", "envoy"};
  s.selectivity = 0.169;
  s.max_kv_bytes = 16u << 20;  // about 1000 rows per slice
  return s;
}

Scenario Scenario::pipeline() {
  Scenario s;
  s.id = "pipeline";
  s.genes = 2000;
  s.cells = 400;
  s.profiles = {"envoy"};
  s.selectivity = 0.169;
  s.devices = 4;
  s.max_kv_bytes = 64u << 10;
  return s;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void Report::write_csv(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      const auto& c = cells[i];
      if (c.find_first_of(",\"\n") == std::string::npos) {
        out << c;
      } else {
        out << '"';
        for (char ch : c) out << (ch == '"' ? "\"\"" : std::string(1, ch));
        out << '"';
      }
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string Report::to_csv() const {
  std::ostringstream out;
  write_csv(out);
  return out.str();
}

std::size_t Report::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::unknown_column, std::string(name));
}

double quantile_linear(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::nan("");
  const double h = (static_cast<double>(sorted.size()) - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  if (values.empty()) {
    s.mean = s.stddev = s.min = s.q1 = s.median = s.q3 = s.max = std::nan("");
    return s;
  }
  std::sort(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_linear(values, 0.25);
  s.median = quantile_linear(values, 0.5);
  s.q3 = quantile_linear(values, 0.75);
  return s;
}

std::uint64_t t_checksum(const TStatVector& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : t.t) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> stamp(const Scenario& s, const std::string& profile) {
  return {s.id, std::to_string(s.seed), profile, std::string(build_tag())};
}

const std::vector<std::string> kStampHeader = {"scenario", "seed", "profile", "build_tag"};

std::vector<std::string> header_with(std::initializer_list<std::string> extra) {
  auto h = kStampHeader;
  h.insert(h.end(), extra.begin(), extra.end());
  return h;
}

void require_shape(const Scenario& s, bool need_cells) {
  if (s.genes == 0 || (need_cells && s.cells == 0)) {
    throw Error(ErrorCode::invalid_argument, "scenario '" + s.id + "' needs genes and cells");
  }
}

std::vector<std::string> first_columns(const ExprMatrix& m, std::size_t n) {
  return {m.cell_ids.begin(), m.cell_ids.begin() + static_cast<std::ptrdiff_t>(n)};
}

ExprMatrix take_columns(const ExprMatrix& m, std::size_t n) {
  ExprMatrix out;
  out.gene_ids = m.gene_ids;
  out.cell_ids = first_columns(m, n);
  out.domain = m.domain;
  out.metadata = m.metadata;
  out.values.reserve(m.rows() * n);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    out.values.insert(out.values.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

ExprMatrix take_rows(const ExprMatrix& m, std::size_t begin, std::size_t end) {
  ExprMatrix out;
  out.cell_ids = m.cell_ids;
  out.domain = m.domain;
  out.metadata = m.metadata;
  out.gene_ids.assign(m.gene_ids.begin() + static_cast<std::ptrdiff_t>(begin),
                      m.gene_ids.begin() + static_cast<std::ptrdiff_t>(end));
  out.values.assign(m.values.begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
                    m.values.begin() + static_cast<std::ptrdiff_t>(end * m.cols()));
  return out;
}

PlanNode leaf_scan(int id, const std::string& key) { return PlanNode{id, ScanOp{key}, {}, {}}; }

PlanNode unary(int id, NodeOp op, PlanNode child) {
  PlanNode n{id, std::move(op), {}, {}};
  n.children.push_back(std::move(child));
  return n;
}

// Sum of ledger charges whose label names the given operator.
double charged(const std::vector<LedgerEntry>& ledger, std::string_view op) {
  double sum = 0;
  for (const auto& e : ledger) {
    if (e.label.find(" " + std::string(op)) != std::string::npos) sum += e.charged_us;
  }
  return sum;
}

std::uint64_t aggregates_checksum(const NodeValue& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t bits) {
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& s : std::get<std::vector<SliceAggregate>>(v)) {
    for (std::size_t i = 0; i < s.agg.size(); ++i) {
      mix(s.agg.n[i]);
      mix(std::bit_cast<std::uint64_t>(s.agg.mean[i]));
    }
  }
  return h;
}

}  // namespace

Report run_exp1(const Scenario& s) {
  require_shape(s, false);
  Report rep;
  rep.header = header_with({"rows_per_slice", "cols", "slices", "cells", "modeled_us", "aggregate_checksum"});
  std::uint32_t max_width = 0;
  for (auto w : s.widths) max_width = std::max(max_width, w);
  if (max_width == 0) throw Error(ErrorCode::invalid_argument, "exp1 needs widths");
  const auto full = gen_matrix(s.genes, max_width, s.seed);
  for (auto h : s.heights) {
    for (auto w : s.widths) {
      KvNamespace ns(KvConfig{s.max_kv_bytes, 1, std::nullopt});
      {
        auto m = take_columns(full, w);
        SlicingOptions opt{s.max_kv_bytes, 1, std::size_t{h}};
        put_partition(ns, slice_partition(m, "exp1", opt));
      }
      QueryPlan plan{unary(0, AccumulateOp{first_columns(full, w)}, leaf_scan(1, "exp1")), {}};
      for (const auto& name : s.profiles) {
        // The device is warmed up before timing, so no cold-start penalty.
        auto p = resolve_profile(name);
        p.cold_slices = 0;
        SimClock clock;
        auto r = execute_plan(plan, &ns, p, clock);
        auto row = stamp(s, p.name);
        row.insert(row.end(), {std::to_string(h), std::to_string(w), std::to_string(r.total_slices),
                               std::to_string(s.genes * w), format_double(charged(r.ledger, "accumulate")),
                               hex64(aggregates_checksum(*r.output))});
        rep.rows.push_back(std::move(row));
      }
    }
  }
  return rep;
}

Report run_exp2(const Scenario& s) {
  require_shape(s, true);
  struct Config {
    std::string label;
    DeviceProfile compute;
    DeviceProfile io;
  };
  const std::vector<Config> configs = {
      {"Client|KineticVM", DeviceProfile::client(), DeviceProfile::kinetic_vm()},
      {"KineticVM|KineticVM", DeviceProfile::kinetic_vm(), DeviceProfile::kinetic_vm()},
      {"Client|Envoy", DeviceProfile::client(), DeviceProfile::envoy()},
      {"Envoy|Envoy", DeviceProfile::envoy(), DeviceProfile::envoy()},
  };
  KvNamespace ns(KvConfig{s.max_kv_bytes, 1, std::nullopt});
  const auto m = gen_matrix(s.genes, s.cells, s.seed);
  put_partition(ns, slice_partition(m, "exp2", SlicingOptions{s.max_kv_bytes, 1, std::nullopt}));
  QueryPlan plan{unary(0, AccumulateOp{m.cell_ids}, leaf_scan(1, "exp2")), {}};

  Report rep;
  rep.header = header_with({"kind", "slice", "stat", "compute_us", "storage_us"});
  for (const auto& c : configs) {
    auto p = c.compute;
    p.storage_MBps = c.io.storage_MBps;
    SimClock clock;
    auto r = execute_plan(plan, &ns, p, clock);
    std::vector<double> compute(r.total_slices, 0), storage(r.total_slices, 0);
    for (const auto& e : r.ledger) {
      auto at = e.label.rfind(" s");
      const auto slice = std::stoul(e.label.substr(at + 2));
      (e.label.find(" scan ") != std::string::npos ? storage : compute)[slice] += e.charged_us;
    }
    for (std::size_t i = 0; i < compute.size(); ++i) {
      auto row = stamp(s, c.label);
      row.insert(row.end(), {"slice", std::to_string(i), "", format_double(compute[i]), format_double(storage[i])});
      rep.rows.push_back(std::move(row));
    }
    // Slices after the first five are summarized; the first five are shown apart.
    const std::size_t skip = std::min<std::size_t>(5, compute.size());
    auto stats = summarize({compute.begin() + static_cast<std::ptrdiff_t>(skip), compute.end()});
    auto io = summarize({storage.begin() + static_cast<std::ptrdiff_t>(skip), storage.end()});
    const std::pair<const char*, double SummaryStats::*> fields[] = {
        {"mean", &SummaryStats::mean}, {"stddev", &SummaryStats::stddev}, {"min", &SummaryStats::min},
        {"q1", &SummaryStats::q1},     {"median", &SummaryStats::median}, {"q3", &SummaryStats::q3},
        {"max", &SummaryStats::max}};
    for (const auto& [name, field] : fields) {
      auto row = stamp(s, c.label);
      row.insert(row.end(), {"summary", "", name, format_double(stats.*field), format_double(io.*field)});
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

Report run_exp3(const Scenario& s) {
  require_shape(s, true);
  KvNamespace ns(KvConfig{s.max_kv_bytes, 1, std::nullopt});
  const auto m = gen_matrix(s.genes, s.cells, s.seed, s.selectivity, s.literal);
  put_partition(ns, slice_partition(m, "exp3", SlicingOptions{s.max_kv_bytes, 1, std::nullopt}));
  const Predicate pred{m.cell_ids.front(), Comparator::gt, s.literal};

  Report rep;
  rep.header = header_with({"width", "width_fraction", "select_us", "project_us", "project_share", "selected_rows"});
  for (const auto& name : s.profiles) {
    auto p = resolve_profile(name);
    p.cold_slices = 0;
    // Both operators are measured over the full input partition.
    QueryPlan sel{unary(0, SelectOp{pred}, leaf_scan(1, "exp3")), {}};
    SimClock sc;
    auto sr = execute_plan(sel, &ns, p, sc);
    std::uint64_t selected = 0;
    for (const auto& t : std::get<std::vector<SliceTable>>(*sr.output)) selected += t.table.rows();
    const double select_us = charged(sr.ledger, "select");
    for (auto w : s.widths) {
      if (w == 0 || w > s.cells) throw Error(ErrorCode::invalid_argument, "projection width out of range");
      QueryPlan proj{unary(0, ProjectOp{Projection{first_columns(m, w)}}, leaf_scan(1, "exp3")), {}};
      SimClock pc;
      auto pr = execute_plan(proj, &ns, p, pc);
      const double project_us = charged(pr.ledger, "project");
      auto row = stamp(s, p.name);
      row.insert(row.end(), {std::to_string(w), format_double(double(w) / double(s.cells)),
                             format_double(select_us), format_double(project_us),
                             format_double(project_us / (select_us + project_us)), std::to_string(selected)});
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

PipelineOutcome run_pipeline(const Scenario& s, const std::vector<std::string>& remote_devices) {
  require_shape(s, true);
  if (s.cells < 2) throw Error(ErrorCode::invalid_argument, "pipeline needs at least two cells");
  const std::uint32_t n_dev = remote_devices.empty() ? s.devices : static_cast<std::uint32_t>(remote_devices.size());
  if (n_dev == 0 || n_dev > s.genes) throw Error(ErrorCode::invalid_argument, "device count out of range");
  const auto profile = resolve_profile(s.profiles.empty() ? "envoy" : s.profiles.front());
  const auto upstream = resolve_profile(s.upstream_profile);

  const auto m = gen_matrix(s.genes, s.cells, s.seed, s.selectivity, s.literal);
  const std::size_t half = s.cells / 2;
  std::vector<std::string> group_a(m.cell_ids.begin(), m.cell_ids.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::string> group_b(m.cell_ids.begin() + static_cast<std::ptrdiff_t>(half), m.cell_ids.end());

  std::vector<std::unique_ptr<KvNamespace>> namespaces;
  std::vector<std::unique_ptr<Device>> owned;
  std::vector<PartitionGroup> side_a, side_b;
  std::map<std::string, MetadataSlice> metas;
  std::map<std::string, int> placement;
  for (std::uint32_t d = 0; d < n_dev; ++d) {
    const auto begin = s.genes * d / n_dev, end = s.genes * (d + 1) / n_dev;
    const auto key = "part" + std::to_string(d);
    auto part = slice_partition(take_rows(m, begin, end), key, SlicingOptions{s.max_kv_bytes, 1, std::nullopt});
    metas[key] = part.meta;
    placement[key] = static_cast<int>(d);
    side_a.push_back({key, group_a});
    side_b.push_back({key, group_b});
    const auto name = "dev" + std::to_string(d);
    if (remote_devices.empty()) {
      namespaces.push_back(std::make_unique<KvNamespace>(KvConfig{s.max_kv_bytes, 1, std::nullopt}));
      put_partition(*namespaces.back(), part);
      owned.push_back(std::make_unique<LocalDevice>(name, *namespaces.back(), profile));
    } else {
      Client c(remote_devices[d]);
      put_partition_remote(c, part);
      owned.push_back(std::make_unique<RemoteDevice>(name, remote_devices[d], profile));
    }
  }

  PipelineOutcome out;
  out.plan = build_diffexpr_plan(side_a, side_b, Predicate{m.cell_ids.front(), Comparator::gt, s.literal});
  out.stats = stats_from_metadata(metas, s.selectivity.value_or(1.0));
  if (s.cut == "auto") {
    out.choice = choose_cut(out.plan, upstream, profile, out.stats, &placement);
    out.cut = out.choice->cut;
  } else {
    std::vector<int> frontier;
    std::stringstream ss(s.cut);
    for (std::string tok; std::getline(ss, tok, ',');) {
      int id = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
      if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty()) {
        throw Error(ErrorCode::parse, "cut list '" + s.cut + "': bad node id '" + tok + "'");
      }
      frontier.push_back(id);
    }
    out.cut = decompose(out.plan, frontier);
  }

  std::vector<Device*> devices;
  for (auto& d : owned) devices.push_back(d.get());
  out.result = coordinate(out.plan, out.cut, upstream, devices, {s.budget});
  out.checksum = t_checksum(out.result.result);

  std::string frontier;
  for (auto id : out.cut.frontier) frontier += (frontier.empty() ? "" : " ") + std::to_string(id);
  std::size_t nan_count = 0;
  for (double t : out.result.result.t) nan_count += std::isnan(t) ? 1 : 0;

  auto& rep = out.report;
  rep.header = header_with({"kind", "device", "frontier", "executed_slices", "total_slices",
                            "bytes_moved", "device_us", "transfer_us", "upstream_us", "end_to_end_us",
                            "genes", "nan_t", "t_checksum"});
  std::uint64_t bytes = 0;
  for (const auto& d : out.result.devices) {
    bytes += d.transfer_bytes;
    auto row = stamp(s, profile.name);
    row.insert(row.end(), {"device", d.device, frontier, std::to_string(d.executed_slices),
                           std::to_string(d.total_slices), std::to_string(d.transfer_bytes),
                           format_double(d.compute_us), format_double(d.transfer_us), "", "", "", "", ""});
    rep.rows.push_back(std::move(row));
  }
  auto row = stamp(s, profile.name);
  row.insert(row.end(), {"total", "", frontier, "", "", std::to_string(bytes), "", "",
                         format_double(out.result.upstream_us), format_double(out.result.end_to_end_us),
                         std::to_string(out.result.result.t.size()), std::to_string(nan_count),
                         hex64(out.checksum)});
  rep.rows.push_back(std::move(row));
  return out;
}

}  // namespace skyt
