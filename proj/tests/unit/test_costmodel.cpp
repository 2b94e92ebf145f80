#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "fixtures.hpp"
#include "skyt/costmodel.hpp"
#include "skyt/engine.hpp"

using namespace skyt;

namespace {

struct StatsCase {
  fixture::DeCase de;
  std::unique_ptr<KvNamespace> ns;
  PlanStats stats;
};

// Differential-expression plan over two sliced partitions with measured selectivity.
StatsCase stats_case(std::size_t genes, std::size_t cells, std::size_t height) {
  StatsCase s{fixture::make_de_case(9, genes, cells), fixture::make_namespace(), {}};
  fixture::put_matrix(*s.ns, "pa", s.de.a, height);
  fixture::put_matrix(*s.ns, "pb", s.de.b, height);
  std::size_t kept = 0;
  for (std::size_t g = 0; g < s.de.a.rows(); ++g) kept += s.de.a.at(g, 0) > s.de.filter.literal;
  const double sel = double(kept) / double(s.de.a.rows());
  s.stats = stats_from_metadata({{"pa", get_metadata(*s.ns, "pa")}, {"pb", get_metadata(*s.ns, "pb")}}, sel);
  return s;
}

PlanStats simple_stats() {
  PlanStats st;
  st.partitions["pa"] = PartitionStats{4000, 200, 40, 0.3, 5};
  st.partitions["pb"] = PartitionStats{3000, 200, 30, 0.3, 5};
  return st;
}

QueryPlan fig2() {
  return build_diffexpr_plan("pa", {"c001", "c002", "c003"}, "pb", {"c004", "c005"},
                             Predicate{"c000", Comparator::gt, 2.7});
}

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)); }

}  // namespace

TEST(Profiles, BuiltinsAreValid) {
  for (const auto& n : builtin_profile_names()) {
    auto p = builtin_profile(n);
    EXPECT_EQ(p.name, n);
    EXPECT_NO_THROW(p.validate());
  }
  auto e = DeviceProfile::envoy();
  EXPECT_EQ(e.cpu_slowdown, 15.0);
  EXPECT_EQ(e.invocation_overhead_us, 750.0);
  EXPECT_EQ(e.cold_slices, 5u);
  EXPECT_EQ(e.cold_penalty_factor, 3.0);
  EXPECT_THROW(builtin_profile("toaster"), Error);
}

TEST(Profiles, ValidationRejectsNonsense) {
  auto p = DeviceProfile::client();
  p.cpu_slowdown = 0.5;
  EXPECT_THROW(p.validate(), Error);
  p = DeviceProfile::client();
  p.select_weight = 0.7;
  EXPECT_THROW(p.validate(), Error);
  p = DeviceProfile::client();
  p.network_MBps = 0;
  EXPECT_THROW(p.validate(), Error);
  p = DeviceProfile::client();
  p.cold_penalty_factor = 0.5;
  EXPECT_THROW(p.validate(), Error);
}

TEST(Profiles, ResolveFromFileWithBase) {
  const auto path = std::filesystem::temp_directory_path() / ("skyt_profile_" + std::to_string(::getpid()) + ".conf");
  {
    std::ofstream out(path);
    out << "base = envoy\nname = bigger\ncores = 4\n";
  }
  auto p = resolve_profile(path.string());
  EXPECT_EQ(p.name, "bigger");
  EXPECT_EQ(p.cores, 4u);
  EXPECT_EQ(p.cpu_slowdown, 15.0);
  EXPECT_EQ(resolve_profile("client").name, "client");
  EXPECT_THROW(resolve_profile("/nonexistent/profile.conf"), Error);
  std::filesystem::remove(path);
}

TEST(ChargeCompute, SliceCountGapIsPureOverhead) {
  // 14400 rows at heights 48 and 480: 300 versus 30 invocations.
  for (const auto& [p, gap] : {std::pair{DeviceProfile::client(), 13500.0}, std::pair{DeviceProfile::envoy(), 202500.0}}) {
    auto warm = p;
    warm.cold_slices = 0;
    const double small = charge_compute(warm, OpKind::accumulate, 14400, 100, 300, 0);
    const double large = charge_compute(warm, OpKind::accumulate, 14400, 100, 30, 0);
    EXPECT_TRUE(rel_close(small - large, gap, 1e-9)) << p.name << " " << small - large;
  }
  const double ratio = (charge_compute(DeviceProfile::envoy(), OpKind::accumulate, 14400, 400, 300, kWarmInvocation) -
                        charge_compute(DeviceProfile::envoy(), OpKind::accumulate, 14400, 400, 30, kWarmInvocation)) /
                       (charge_compute(DeviceProfile::client(), OpKind::accumulate, 14400, 400, 300, 0) -
                        charge_compute(DeviceProfile::client(), OpKind::accumulate, 14400, 400, 30, 0));
  EXPECT_NEAR(ratio, 15.0, 1e-9);
}

TEST(ChargeCompute, WorkIsInvariantUnderSliceHeight) {
  const auto p = DeviceProfile::kinetic_vm();
  const double ov = p.invocation_overhead_us;
  const double base = charge_compute(p, OpKind::select, 12000, 50, 1, 0) - ov;
  for (std::uint64_t n : {2u, 12u, 250u}) {
    EXPECT_TRUE(rel_close(charge_compute(p, OpKind::select, 12000, 50, n, 0) - double(n) * ov, base, 1e-12));
  }
}

TEST(ChargeCompute, ProjectShareOfOneTable) {
  const auto p = DeviceProfile::client();
  EXPECT_DOUBLE_EQ(op_weight(p, OpKind::project) / (op_weight(p, OpKind::project) + op_weight(p, OpKind::select)), 0.4);
  const double sel = charge_compute(p, OpKind::select, 12000, 2000, 1, 0);
  const double proj = charge_compute(p, OpKind::project, 12000, 2000, 1, 0);
  EXPECT_NEAR(proj / (sel + proj), 0.40, 0.001);
  EXPECT_EQ(charge_compute(p, OpKind::scan, 10, 10, 1, 0), 0.0);
  EXPECT_EQ(charge_compute(p, OpKind::select, 10, 10, 0, 0), 0.0);
}

TEST(ChargeCompute, ColdSlicesCostThreefold) {
  const auto p = DeviceProfile::envoy();
  const double warm = charge_compute(p, OpKind::accumulate, 130, 1000, 1, kWarmInvocation);
  for (std::uint64_t i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(charge_compute(p, OpKind::accumulate, 130, 1000, 1, i), 3 * warm);
  }
  EXPECT_DOUBLE_EQ(charge_compute(p, OpKind::accumulate, 130, 1000, 1, 5), warm);
  // Ten invocations from ordinal 0: five cold, five warm.
  EXPECT_NEAR(charge_compute(p, OpKind::accumulate, 1300, 1000, 10, 0), 20 * warm, 1e-6);
  EXPECT_NEAR(charge_compute(p, OpKind::accumulate, 1300, 1000, 10, 3), 14 * warm, 1e-6);
}

TEST(ChargeIo, Bandwidths) {
  EXPECT_EQ(charge_io(DeviceProfile::envoy(), 0, IoPath::storage), 0.0);
  EXPECT_DOUBLE_EQ(charge_io(DeviceProfile::envoy(), 261000000, IoPath::storage), 1e6);
  EXPECT_DOUBLE_EQ(charge_io(DeviceProfile::client(), 1250, IoPath::network), 1.0);
  const auto p = DeviceProfile::kinetic_vm();
  EXPECT_NEAR(charge_io(p, 1234, IoPath::network) + charge_io(p, 5678, IoPath::network),
              charge_io(p, 1234 + 5678, IoPath::network), 1e-12);
}

TEST(SimClock, LedgerConservation) {
  SimClock c;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) c.charge("step " + std::to_string(i), double(rng() % 1000) / 7.0);
  EXPECT_EQ(c.ledger().size(), 1000u);
  EXPECT_NEAR(c.ledger_total(), c.now_us(), 1e-9 * c.now_us());
  EXPECT_THROW(c.charge("neg", -1), Error);
  EXPECT_THROW(c.charge("nan", std::nan("")), Error);
}

TEST(Estimate, ScanOnlyIsPureIo) {
  QueryPlan p{PlanNode{0, ScanOp{"pa"}, {}, {}}, {}};
  auto st = simple_stats();
  auto c = estimate_plan_cost(p, DeviceProfile::envoy(), st);
  EXPECT_EQ(c.compute_us, 0.0);
  EXPECT_GT(c.storage_us, 0.0);
  EXPECT_DOUBLE_EQ(c.storage_us, charge_io(DeviceProfile::envoy(), c.transfer_bytes, IoPath::storage));
  EXPECT_DOUBLE_EQ(c.network_us, charge_io(DeviceProfile::envoy(), c.transfer_bytes, IoPath::network));
  QueryPlan missing{PlanNode{0, ScanOp{"nope"}, {}, {}}, {}};
  EXPECT_THROW(estimate_plan_cost(missing, DeviceProfile::client(), st), Error);
}

TEST(Estimate, AccumulatePushdownShrinksTransfer) {
  auto p = fig2();
  auto st = simple_stats();
  auto leaves = evaluate_cut(p, {5, 10}, DeviceProfile::client(), DeviceProfile::envoy(), st);
  auto accs = evaluate_cut(p, {2, 7}, DeviceProfile::client(), DeviceProfile::envoy(), st);
  auto root = evaluate_cut(p, {0}, DeviceProfile::client(), DeviceProfile::envoy(), st);
  EXPECT_LT(accs.transfer_bytes, leaves.transfer_bytes / 10);
  EXPECT_LT(root.transfer_bytes, accs.transfer_bytes);
  EXPECT_EQ(root.upstream_us, 0.0);
  EXPECT_EQ(leaves.sub_plan_nodes, 2u);
  EXPECT_EQ(root.sub_plan_nodes, 11u);
}

TEST(Estimate, WithinTwentyPercentOfExecution) {
  auto s = stats_case(600, 40, 25);
  for (const auto& profile : {fixture::warm_client(), DeviceProfile::envoy()}) {
    auto est = estimate_plan_cost(s.de.plan, profile, s.stats);
    SimClock clock;
    execute_plan(s.de.plan, s.ns.get(), profile, clock);
    const double modeled = est.compute_us + est.storage_us;
    EXPECT_NEAR(modeled / clock.now_us(), 1.0, 0.2) << profile.name;
  }
}

TEST(ChooseCut, SameProfileRunsEverythingDownstream) {
  auto st = simple_stats();
  auto choice = choose_cut(fig2(), DeviceProfile::client(), DeviceProfile::client(), st);
  EXPECT_EQ(choice.cut.frontier, (std::vector<int>{0}));
}

TEST(ChooseCut, HopelessDeviceOnlyScans) {
  auto st = simple_stats();
  auto slow = DeviceProfile::client();
  slow.cpu_slowdown = 1e6;
  slow.invocation_overhead_us = 5e7;
  auto choice = choose_cut(fig2(), DeviceProfile::client(), slow, st);
  EXPECT_EQ(choice.cut.frontier, (std::vector<int>{5, 10}));
}

TEST(ChooseCut, MatchesExhaustiveEvaluation) {
  auto p = fig2();
  auto st = simple_stats();
  for (const auto& down : {DeviceProfile::client(), DeviceProfile::kinetic_vm(), DeviceProfile::envoy()}) {
    auto choice = choose_cut(p, DeviceProfile::client(), down, st);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : enumerate_frontiers(p.root)) {
      best = std::min(best, evaluate_cut(p, f, DeviceProfile::client(), down, st).total_us());
    }
    EXPECT_TRUE(rel_close(choice.cost.total_us(), best, 1e-9)) << down.name;
    EXPECT_EQ(enumerate_frontiers(p.root).at(choice.index), choice.cut.frontier);
  }
}

TEST(ChooseCut, InvariantUnderUniformScaling) {
  auto p = fig2();
  auto st = simple_stats();
  auto base = choose_cut(p, DeviceProfile::client(), DeviceProfile::envoy(), st);
  for (double c : {0.25, 2.0, 8.0}) {
    auto scaled = choose_cut(p, DeviceProfile::client().scaled(c), DeviceProfile::envoy().scaled(c), st);
    EXPECT_EQ(scaled.cut.frontier, base.cut.frontier) << c;
    EXPECT_TRUE(rel_close(scaled.cost.total_us(), c * base.cost.total_us(), 1e-12));
  }
}

TEST(ChooseCut, Deterministic) {
  auto p = fig2();
  auto st = simple_stats();
  auto a = choose_cut(p, DeviceProfile::client(), DeviceProfile::envoy(), st);
  for (int i = 0; i < 5; ++i) {
    auto b = choose_cut(p, DeviceProfile::client(), DeviceProfile::envoy(), st);
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.cut.super_plan, b.cut.super_plan);
  }
}

TEST(ChooseCut, PlacementExcludesCrossDeviceSubPlans) {
  auto st = simple_stats();
  std::map<std::string, int> placement{{"pa", 0}, {"pb", 1}};
  auto p = fig2();
  auto choice = choose_cut(p, DeviceProfile::client(), DeviceProfile::client(), st, &placement);
  // Only the root reads both partitions.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : enumerate_frontiers(p.root)) {
    if (f == std::vector<int>{0}) continue;
    best = std::min(best, evaluate_cut(p, f, DeviceProfile::client(), DeviceProfile::client(), st).total_us());
  }
  EXPECT_NE(choice.cut.frontier, (std::vector<int>{0}));
  EXPECT_TRUE(rel_close(choice.cost.total_us(), best, 1e-9));
  std::map<std::string, int> split{{"pa", 0}, {"pb", 0}};
  EXPECT_EQ(choose_cut(p, DeviceProfile::client(), DeviceProfile::client(), st, &split).cut.frontier,
            (std::vector<int>{0}));
}

TEST(Throughput, EightEnvoysAgainstOneClient) {
  const double ratio = aggregate_throughput(DeviceProfile::envoy(), 8, 130, 1000) /
                       aggregate_throughput(DeviceProfile::client(), 1, 130, 1000);
  EXPECT_NEAR(ratio, 16.0 / 15.0, 1e-12);
  EXPECT_NEAR(aggregate_throughput(DeviceProfile::client(), 3, 130, 1000),
              3 * aggregate_throughput(DeviceProfile::client(), 1, 130, 1000), 1e-9);
}
