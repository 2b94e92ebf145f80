// Microbenchmarks of the hot paths: aggregation, slice codec, cut choice, framing.

#include <benchmark/benchmark.h>

#include <random>

#include "skyt/aggregates.hpp"
#include "skyt/costmodel.hpp"
#include "skyt/engine.hpp"
#include "skyt/harness.hpp"
#include "skyt/wire.hpp"

using namespace skyt;

namespace {

Table make_table(std::size_t rows, std::size_t cols) {
  return to_table(gen_matrix(rows, cols, 1));
}

void BM_Accumulate(benchmark::State& state) {
  const auto t = make_table(static_cast<std::size_t>(state.range(0)), 1000);
  for (auto _ : state) benchmark::DoNotOptimize(accumulate(t, t.columns));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t.values.size()));
}
BENCHMARK(BM_Accumulate)->Arg(48)->Arg(480);

void BM_Combine(benchmark::State& state) {
  const auto t = make_table(static_cast<std::size_t>(state.range(0)), 16);
  const auto a = accumulate(t, t.columns), b = accumulate(t, t.columns);
  for (auto _ : state) benchmark::DoNotOptimize(combine(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Combine)->Arg(1000)->Arg(14400);

void BM_TStat(benchmark::State& state) {
  const auto t = make_table(14400, 16);
  const auto a = accumulate(t, t.columns);
  for (auto _ : state) benchmark::DoNotOptimize(tstat(a, a));
}
BENCHMARK(BM_TStat);

void BM_SliceEncode(benchmark::State& state) {
  const auto m = gen_matrix(480, 1000, 2);
  SlicingOptions opt;
  opt.max_kv_bytes = 16u << 20;
  const auto p = slice_partition(m, "p", opt);
  for (auto _ : state) benchmark::DoNotOptimize(encode_slice(p.slices.front()));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(encode_slice(p.slices.front()).size()));
}
BENCHMARK(BM_SliceEncode);

void BM_SliceDecode(benchmark::State& state) {
  const auto m = gen_matrix(480, 1000, 2);
  SlicingOptions opt;
  opt.max_kv_bytes = 16u << 20;
  const auto enc = encode_slice(slice_partition(m, "p", opt).slices.front());
  for (auto _ : state) benchmark::DoNotOptimize(decode_slice(enc));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(enc.size()));
}
BENCHMARK(BM_SliceDecode);

void BM_ChooseCut(benchmark::State& state) {
  const std::vector<std::string> ga{"c0", "c1"}, gb{"c2", "c3"};
  const auto plan = build_diffexpr_plan("pa", ga, "pb", gb, Predicate{"c0", Comparator::gt, 10.0});
  PlanStats stats;
  stats.partitions["pa"] = PartitionStats{14400, 1000, 30, 0.169, 8};
  stats.partitions["pb"] = PartitionStats{14400, 1000, 30, 0.169, 8};
  for (auto _ : state) {
    benchmark::DoNotOptimize(choose_cut(plan, DeviceProfile::client(), DeviceProfile::envoy(), stats));
  }
}
BENCHMARK(BM_ChooseCut);

void BM_FrameRoundTrip(benchmark::State& state) {
  std::mt19937_64 rng(3);
  Bytes value(static_cast<std::size_t>(state.range(0)));
  for (auto& b : value) b = static_cast<std::uint8_t>(rng());
  const Request req = PutRequest{"p.00001", value};
  for (auto _ : state) {
    const auto wire = encode_frame(encode_request(req));
    benchmark::DoNotOptimize(decode_request(*decode_frame(wire).frame));
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FrameRoundTrip)->Arg(4096)->Arg(1 << 20);

}  // namespace
BENCHMARK_MAIN();
