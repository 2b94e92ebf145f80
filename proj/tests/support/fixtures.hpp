#pragma once

#include <cstdio>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "skyt/engine.hpp"
#include "skyt/kvstore.hpp"
#include "skyt/matrix.hpp"
#include "skyt/queryplan.hpp"

namespace fixture {

inline std::string id(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", stem, i);
  return buf;
}

// Lognormal values; gene ids "<gene_stem>NNN" starting at `first_gene`.
inline skyt::ExprMatrix random_matrix(std::uint64_t seed, std::size_t genes, std::size_t cells,
                                      const char* gene_stem = "g", std::size_t first_gene = 0) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> dist(1.0, 0.8);
  skyt::ExprMatrix m;
  for (std::size_t g = 0; g < genes; ++g) m.gene_ids.push_back(id(gene_stem, first_gene + g));
  for (std::size_t c = 0; c < cells; ++c) m.cell_ids.push_back(id("c", c));
  m.values.resize(genes * cells);
  for (auto& v : m.values) v = dist(rng);
  return m;
}

inline skyt::ExprMatrix rows_of(const skyt::ExprMatrix& m, std::size_t begin, std::size_t end) {
  skyt::ExprMatrix out;
  out.cell_ids = m.cell_ids;
  out.gene_ids.assign(m.gene_ids.begin() + begin, m.gene_ids.begin() + end);
  out.values.assign(m.values.begin() + begin * m.cols(), m.values.begin() + end * m.cols());
  return out;
}

inline skyt::Partition put_matrix(skyt::KvNamespace& ns, const std::string& key, const skyt::ExprMatrix& m,
                                  std::size_t height) {
  skyt::SlicingOptions opt;
  opt.max_kv_bytes = ns.config().max_kv_bytes;
  opt.stripe_factor = ns.config().stripe_factor;
  opt.slice_height = height;
  auto p = skyt::slice_partition(m, key, opt);
  skyt::put_partition(ns, p);
  return p;
}

// Two datasets over one cell schema ("pa" and "pb"); the gene sets overlap in
// part, so some genes exist on one side only. The filter keeps about half the rows.
struct DeCase {
  skyt::ExprMatrix a, b;
  std::vector<std::string> group_a, group_b;
  skyt::Predicate filter;
  skyt::QueryPlan plan;

  skyt::TStatVector oracle() const {
    const double lit = filter.literal;
    return oracle::differential_expression({{&a, group_a}}, {{&b, group_b}}, filter.column,
                                           [lit](double v) { return v > lit; });
  }
};

inline DeCase make_de_case(std::uint64_t seed, std::size_t genes, std::size_t cells) {
  DeCase c;
  c.a = random_matrix(seed, genes, cells, "g", 0);
  c.b = random_matrix(seed + 1, genes, cells, "g", genes / 4);
  std::mt19937_64 rng(seed + 2);
  auto pick = [&](std::size_t count) {
    std::vector<std::string> all = c.a.cell_ids, out;
    std::shuffle(all.begin(), all.end(), rng);
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
  };
  c.group_a = pick(std::max<std::size_t>(2, cells / 2));
  c.group_b = pick(std::max<std::size_t>(2, cells / 3));
  c.filter = skyt::Predicate{c.a.cell_ids.front(), skyt::Comparator::gt, 2.7};
  c.plan = skyt::build_diffexpr_plan("pa", c.group_a, "pb", c.group_b, c.filter);
  return c;
}

inline std::unique_ptr<skyt::KvNamespace> make_namespace(std::size_t max_kv = 1u << 20, unsigned stripes = 1) {
  return std::make_unique<skyt::KvNamespace>(skyt::KvConfig{max_kv, stripes, std::nullopt});
}

// Budget that makes a device execute exactly k of n slices of each sub-plan
// chain under a profile without cold slices.
inline skyt::ExecBudget budget_for_k(std::uint32_t k, std::uint32_t n) {
  skyt::ExecBudget b;
  if (k == 0) {
    b.mode = skyt::ExecMode::force_pushback;
  } else if (k >= n) {
    b.mode = skyt::ExecMode::force_execute;
  } else {
    b.mode = skyt::ExecMode::adaptive;
    b.sample_slices = k;
    b.max_per_slice_us = 0;
  }
  return b;
}

inline skyt::DeviceProfile warm_client() {
  auto p = skyt::DeviceProfile::client();
  p.cold_slices = 0;
  return p;
}

}  // namespace fixture
