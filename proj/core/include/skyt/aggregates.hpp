#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skyt/bytes.hpp"
#include "skyt/matrix.hpp"

namespace skyt {

// Per-gene (n, mean, m2) triples; m2 is the sum of squared deviations from
// the mean. The canonical empty entry is (0, 0, 0).
struct PartialAggregates {
  std::vector<std::string> gene_ids;
  std::vector<std::uint64_t> n;
  std::vector<double> mean;
  std::vector<double> m2;

  static PartialAggregates empty(std::vector<std::string> gene_ids);

  std::size_t size() const { return gene_ids.size(); }
  // Sample variance m2/(n-1); NaN when n < 2.
  double variance(std::size_t i) const;
  std::uint64_t total_count() const;

  friend bool operator==(const PartialAggregates&, const PartialAggregates&) = default;
};

struct TStatVector {
  std::vector<std::string> gene_ids;
  std::vector<double> t;

  friend bool operator==(const TStatVector&, const TStatVector&) = default;
};

// Single-pass Welford update over the selected columns of every row.
PartialAggregates accumulate(const Table& table, std::span<const std::string> column_group);
PartialAggregates accumulate_columns(const Table& table, std::span<const std::size_t> columns);

// Pairwise (Chan) merge. Both inputs must list the same genes in the same order.
PartialAggregates combine(const PartialAggregates& a, const PartialAggregates& b);

// Merge keyed by gene id: genes in both inputs are merged, others carried
// over. Output order is a's genes followed by b-only genes in b's order.
PartialAggregates merge_by_gene(const PartialAggregates& a, const PartialAggregates& b);

// Reorders/pads `a` to the given gene order; absent genes become empty.
PartialAggregates align(const PartialAggregates& a, std::span<const std::string> gene_ids);

// Pooled-variance Student's t per gene. NaN when n_a + n_b < 3 or either side
// is empty; with zero pooled variance, 0 for equal means and +/-inf otherwise.
TStatVector tstat(const PartialAggregates& a, const PartialAggregates& b);
double pooled_t(std::uint64_t n_a, double mean_a, double m2_a, std::uint64_t n_b, double mean_b,
                double m2_b);

// Aggregates travel in the slice container as a 3-column table (n, mean, m2).
Bytes encode_aggregates(const PartialAggregates& agg, std::uint32_t slice_index);
PartialAggregates decode_aggregates(ByteView bytes, std::uint32_t* slice_index = nullptr);

}  // namespace skyt
