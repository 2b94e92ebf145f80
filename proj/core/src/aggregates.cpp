#include "skyt/aggregates.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace skyt {
namespace {

struct Moments {
  std::uint64_t n = 0;
  double mean = 0;
  double m2 = 0;
};

Moments merge(const Moments& a, const Moments& b) {
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  const auto n = a.n + b.n;
  const double na = static_cast<double>(a.n);
  const double nb = static_cast<double>(b.n);
  const double delta = b.mean - a.mean;
  Moments out;
  out.n = n;
  out.mean = a.mean + delta * nb / static_cast<double>(n);
  out.m2 = a.m2 + b.m2 + delta * delta * na * nb / static_cast<double>(n);
  return out;
}

Moments at(const PartialAggregates& p, std::size_t i) { return {p.n[i], p.mean[i], p.m2[i]}; }

void push(PartialAggregates& p, const std::string& gene, const Moments& m) {
  p.gene_ids.push_back(gene);
  p.n.push_back(m.n);
  p.mean.push_back(m.mean);
  p.m2.push_back(m.m2);
}

void check_shape(const PartialAggregates& p) {
  if (p.n.size() != p.size() || p.mean.size() != p.size() || p.m2.size() != p.size()) {
    throw Error(ErrorCode::invalid_argument, "partial aggregate arrays differ in length");
  }
}

}  // namespace

PartialAggregates PartialAggregates::empty(std::vector<std::string> gene_ids) {
  PartialAggregates p;
  const auto k = gene_ids.size();
  p.gene_ids = std::move(gene_ids);
  p.n.assign(k, 0);
  p.mean.assign(k, 0.0);
  p.m2.assign(k, 0.0);
  return p;
}

double PartialAggregates::variance(std::size_t i) const {
  if (n[i] < 2) return std::numeric_limits<double>::quiet_NaN();
  return m2[i] / static_cast<double>(n[i] - 1);
}

std::uint64_t PartialAggregates::total_count() const {
  return std::accumulate(n.begin(), n.end(), std::uint64_t{0});
}

PartialAggregates accumulate_columns(const Table& table, std::span<const std::size_t> columns) {
  if (columns.empty()) throw Error(ErrorCode::empty_group, "accumulate needs at least one column");
  PartialAggregates out;
  out.gene_ids = table.row_ids;
  out.n.reserve(table.rows());
  out.mean.reserve(table.rows());
  out.m2.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    std::uint64_t n = 0;
    double mean = 0;
    double m2 = 0;
    for (auto c : columns) {
      const double x = row[c];
      ++n;
      const double delta = x - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (x - mean);
    }
    out.n.push_back(n);
    out.mean.push_back(mean);
    out.m2.push_back(m2);
  }
  return out;
}

PartialAggregates accumulate(const Table& table, std::span<const std::string> column_group) {
  if (column_group.empty()) throw Error(ErrorCode::empty_group, "column group is empty");
  return accumulate_columns(table, table.column_indices(column_group));
}

PartialAggregates combine(const PartialAggregates& a, const PartialAggregates& b) {
  check_shape(a);
  check_shape(b);
  if (a.gene_ids != b.gene_ids) {
    throw Error(ErrorCode::schema_mismatch, "combine inputs list different genes");
  }
  PartialAggregates out;
  out.gene_ids = a.gene_ids;
  out.n.resize(a.size());
  out.mean.resize(a.size());
  out.m2.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto m = merge(at(a, i), at(b, i));
    out.n[i] = m.n;
    out.mean[i] = m.mean;
    out.m2[i] = m.m2;
  }
  return out;
}

PartialAggregates merge_by_gene(const PartialAggregates& a, const PartialAggregates& b) {
  check_shape(a);
  check_shape(b);
  if (a.gene_ids == b.gene_ids) return combine(a, b);
  PartialAggregates out = a;
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) index.emplace(a.gene_ids[i], i);
  for (std::size_t j = 0; j < b.size(); ++j) {
    auto it = index.find(b.gene_ids[j]);
    if (it == index.end()) {
      push(out, b.gene_ids[j], at(b, j));
      continue;
    }
    auto m = merge(at(out, it->second), at(b, j));
    out.n[it->second] = m.n;
    out.mean[it->second] = m.mean;
    out.m2[it->second] = m.m2;
  }
  return out;
}

PartialAggregates align(const PartialAggregates& a, std::span<const std::string> gene_ids) {
  check_shape(a);
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) index.emplace(a.gene_ids[i], i);
  PartialAggregates out;
  for (const auto& g : gene_ids) {
    auto it = index.find(g);
    push(out, g, it == index.end() ? Moments{} : at(a, it->second));
  }
  return out;
}

double pooled_t(std::uint64_t n_a, double mean_a, double m2_a, std::uint64_t n_b, double mean_b,
                double m2_b) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  if (n_a == 0 || n_b == 0 || n_a + n_b < 3) return kNaN;
  const double na = static_cast<double>(n_a);
  const double nb = static_cast<double>(n_b);
  const double sp2 = (m2_a + m2_b) / (na + nb - 2.0);
  const double diff = mean_a - mean_b;
  if (sp2 == 0.0) {
    if (diff == 0.0) return 0.0;
    return std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return diff / (std::sqrt(sp2) * std::sqrt(1.0 / na + 1.0 / nb));
}

TStatVector tstat(const PartialAggregates& a, const PartialAggregates& b) {
  check_shape(a);
  check_shape(b);
  if (a.gene_ids != b.gene_ids) {
    throw Error(ErrorCode::schema_mismatch, "tstat inputs list different genes");
  }
  TStatVector out;
  out.gene_ids = a.gene_ids;
  out.t.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.t.push_back(pooled_t(a.n[i], a.mean[i], a.m2[i], b.n[i], b.mean[i], b.m2[i]));
  }
  return out;
}

Bytes encode_aggregates(const PartialAggregates& agg, std::uint32_t slice_index) {
  check_shape(agg);
  Slice s;
  s.slice_index = slice_index;
  s.gene_ids = agg.gene_ids;
  s.cols = 3;
  s.values.reserve(agg.size() * 3);
  for (std::size_t i = 0; i < agg.size(); ++i) {
    s.values.push_back(static_cast<double>(agg.n[i]));
    s.values.push_back(agg.mean[i]);
    s.values.push_back(agg.m2[i]);
  }
  return encode_slice(s);
}

PartialAggregates decode_aggregates(ByteView bytes, std::uint32_t* slice_index) {
  auto s = decode_slice(bytes);
  if (s.cols != 3) throw Error(ErrorCode::format, "aggregate table must have 3 columns");
  if (slice_index) *slice_index = s.slice_index;
  PartialAggregates out;
  out.gene_ids = std::move(s.gene_ids);
  for (std::size_t i = 0; i < out.gene_ids.size(); ++i) {
    out.n.push_back(static_cast<std::uint64_t>(s.values[i * 3]));
    out.mean.push_back(s.values[i * 3 + 1]);
    out.m2.push_back(s.values[i * 3 + 2]);
  }
  return out;
}

}  // namespace skyt
