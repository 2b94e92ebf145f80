#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "skyt/costmodel.hpp"
#include "skyt/engine.hpp"
#include "skyt/matrix.hpp"

namespace skyt {

std::string_view build_tag();

// Lognormal expression values. With a target, every column is rescaled so that
// exactly round(target * genes) of its values exceed `literal`.
ExprMatrix gen_matrix(std::uint64_t genes, std::uint64_t cells, std::uint64_t seed,
                      std::optional<double> target_selectivity = std::nullopt,
                      double literal = 10.0);

// Fraction of all cells with value > literal.
double measured_selectivity(const ExprMatrix& m, double literal);

std::string cell_name(std::uint64_t i);
std::string gene_name(std::uint64_t i);

struct Scenario {
  std::string id;
  std::uint64_t seed = 42;
  std::uint64_t genes = 0;
  std::uint64_t cells = 0;
  std::vector<std::uint32_t> heights;
  std::vector<std::uint32_t> widths;
  std::vector<std::string> profiles;  // builtin names or profile files
  std::string upstream_profile = "client";
  std::optional<double> selectivity;
  double literal = 10.0;
  std::uint32_t devices = 4;
  ExecBudget budget;
  std::size_t max_kv_bytes = 1u << 20;
  std::string cut = "auto";  // or comma-separated frontier node ids

  static Scenario exp1();
  static Scenario exp2();
  static Scenario exp3();
  static Scenario pipeline();
};

struct Report {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
  // Column lookup for tests and tools.
  std::size_t column(std::string_view name) const;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct SummaryStats {
  double mean = 0, stddev = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

// Sample standard deviation; quartiles by linear interpolation between order
// statistics (h = (n - 1) p).
SummaryStats summarize(std::vector<double> values);
double quantile_linear(const std::vector<double>& sorted, double p);

// FNV-1a over the bit patterns of the t values, in gene order.
std::uint64_t t_checksum(const TStatVector& t);

Report run_exp1(const Scenario& s);
Report run_exp2(const Scenario& s);
Report run_exp3(const Scenario& s);

struct PipelineOutcome {
  Report report;
  CoordinatorResult result;
  PlanCut cut;
  std::optional<CutChoice> choice;  // set for the automatic cut
  QueryPlan plan;
  PlanStats stats;
  std::uint64_t checksum = 0;
};

// Differential expression of the first half of the cells against the second
// half, with genes row-partitioned across `devices` in-process devices, or the
// given remote devices (one partition uploaded to each).
PipelineOutcome run_pipeline(const Scenario& s, const std::vector<std::string>& remote_devices = {});

}  // namespace skyt
