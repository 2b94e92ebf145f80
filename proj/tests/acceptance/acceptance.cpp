// Acceptance suite: one PASS/FAIL line per criterion.
//
//   skyt_acceptance [--criterion N] [--cli PATH]
//
// Without --criterion every criterion runs. PATH is the skyt executable used
// by the bench determinism check. Exit status is non-zero when any selected
// criterion fails.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <latch>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "skyt/aggregates.hpp"
#include "skyt/client.hpp"
#include "skyt/costmodel.hpp"
#include "skyt/engine.hpp"
#include "skyt/harness.hpp"
#include "skyt/kvstore.hpp"
#include "skyt/server.hpp"
#include "skyt/wire.hpp"

using namespace skyt;

namespace {

// Collects the first few failures of one criterion.
class Check {
 public:
  void fail(const std::string& what) {
    ++failures_;
    if (notes_.size() < 5) notes_.push_back(what);
  }
  void expect(bool ok, const std::string& what) {
    if (!ok) fail(what);
  }
  void note(const std::string& line) { info_.push_back(line); }
  bool ok() const { return failures_ == 0; }
  std::size_t failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }
  const std::vector<std::string>& info() const { return info_; }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> notes_;
  std::vector<std::string> info_;
};

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

Bytes bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

bool reads_one_partition(const PlanNode& n) {
  std::set<std::string> keys;
  visit_preorder(n, [&](const PlanNode& m) {
    if (m.kind() == OpKind::scan) keys.insert(std::get<ScanOp>(m.op).partition_key);
  });
  return keys.size() <= 1;
}

std::vector<std::vector<int>> single_partition_frontiers(const QueryPlan& p) {
  std::vector<std::vector<int>> out;
  for (const auto& f : enumerate_frontiers(p.root)) {
    bool ok = true;
    for (int id : f) ok = ok && reads_one_partition(*find_node(p.root, id));
    if (ok) out.push_back(f);
  }
  return out;
}

std::string frontier_text(const std::vector<int>& f) {
  std::string s;
  for (int id : f) s += (s.empty() ? "" : ",") + std::to_string(id);
  return "{" + s + "}";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Streaming accumulate + combine against the two-pass oracle.

void criterion1(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t genes = 1 + rng() % 1000;
    const std::size_t cells = 1 + rng() % 200;
    const auto m = fixture::random_matrix(rng(), genes, cells);

    SlicingOptions opt;
    opt.max_kv_bytes = 16u << 20;
    opt.slice_height = 1 + rng() % genes;
    const auto part = slice_partition(m, "p", opt);

    // Random contiguous column groups, folded left to right.
    std::vector<std::size_t> cuts{0, cells};
    const std::size_t extra = rng() % std::min<std::size_t>(cells, 8);
    for (std::size_t i = 0; i < extra; ++i) cuts.push_back(rng() % cells);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<std::string> gene_order;
    std::size_t row = 0;
    for (const auto& slice : part.slices) {
      const auto table = to_table(slice, part.schema);
      auto acc = PartialAggregates::empty(table.row_ids);
      for (std::size_t g = 0; g + 1 < cuts.size(); ++g) {
        std::vector<std::string> group(table.columns.begin() + static_cast<std::ptrdiff_t>(cuts[g]),
                                       table.columns.begin() + static_cast<std::ptrdiff_t>(cuts[g + 1]));
        acc = combine(acc, accumulate(table, group));
      }
      for (std::size_t r = 0; r < acc.size(); ++r, ++row) {
        gene_order.push_back(acc.gene_ids[r]);
        std::vector<double> xs(m.values.begin() + static_cast<std::ptrdiff_t>(row * cells),
                               m.values.begin() + static_cast<std::ptrdiff_t>((row + 1) * cells));
        const auto want = oracle::two_pass(xs);
        const std::string where = "trial " + std::to_string(trial) + " gene " + acc.gene_ids[r];
        c.expect(acc.n[r] == want.n, where + ": n");
        c.expect(oracle::close_rel(acc.mean[r], want.mean, 1e-12), where + ": mean");
        c.expect(oracle::close_rel(acc.m2[r], want.m2, 1e-12), where + ": m2");
      }
    }
    c.expect(gene_order == m.gene_ids, "trial " + std::to_string(trial) + ": gene order");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 60, "runtime " + fmt(secs) + " s");
  c.note("200 matrices, " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 2. Every cut of the differential-expression plan equals direct execution.

void criterion2(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  auto de = fixture::make_de_case(2002, 96, 10);
  auto both = fixture::make_namespace();
  auto ns_a = fixture::make_namespace(), ns_b = fixture::make_namespace();
  const auto pa = fixture::put_matrix(*both, "pa", de.a, 8);
  const auto pb = fixture::put_matrix(*both, "pb", de.b, 8);
  fixture::put_matrix(*ns_a, "pa", de.a, 8);
  fixture::put_matrix(*ns_b, "pb", de.b, 8);
  c.expect(pa.slices.size() == 12 && pb.slices.size() == 12, "expected 12 slices per partition");

  SimClock clock;
  const auto direct_run = execute_plan(de.plan, both.get(), DeviceProfile::client(), clock);
  const auto& direct = std::get<TStatVector>(*direct_run.output);
  c.expect(oracle::t_mismatch(direct, de.oracle(), 1e-12).empty(), "direct execution disagrees with oracle");

  LocalDevice one("dev0", *both, fixture::warm_client());
  LocalDevice d0("dev0", *ns_a, fixture::warm_client()), d1("dev1", *ns_b, fixture::warm_client());
  const auto cuts = enumerate_cuts(de.plan);
  c.expect(cuts.size() == 26, "expected 26 cuts, got " + std::to_string(cuts.size()));
  std::size_t runs = 0;
  for (const auto& cut : cuts) {
    auto out = coordinate(de.plan, cut, DeviceProfile::client(), {&one}, {});
    ++runs;
    const auto why = oracle::t_mismatch(out.result, direct, 1e-10);
    c.expect(why.empty(), "one device, cut " + frontier_text(cut.frontier) + ": " + why);
  }
  for (const auto& f : single_partition_frontiers(de.plan)) {
    auto out = coordinate(de.plan, decompose(de.plan, f), DeviceProfile::client(), {&d0, &d1}, {});
    ++runs;
    const auto why = oracle::t_mismatch(out.result, direct, 1e-10);
    c.expect(why.empty(), "two devices, cut " + frontier_text(f) + ": " + why);
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 30, "runtime " + fmt(secs) + " s");
  c.note(std::to_string(cuts.size()) + " cuts, " + std::to_string(runs) + " coordinated runs, " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 3. Push-back at every k, and mixed per-device k.

void criterion3(Check& c) {
  {
    auto de = fixture::make_de_case(3003, 96, 10);
    auto ns_a = fixture::make_namespace(), ns_b = fixture::make_namespace();
    fixture::put_matrix(*ns_a, "pa", de.a, 8);
    fixture::put_matrix(*ns_b, "pb", de.b, 8);
    LocalDevice d0("dev0", *ns_a, fixture::warm_client()), d1("dev1", *ns_b, fixture::warm_client());
    const auto want = de.oracle();
    std::size_t runs = 0;
    for (const auto& f : single_partition_frontiers(de.plan)) {
      const auto cut = decompose(de.plan, f);
      const bool scan_only = find_node(de.plan.root, f[0])->kind() == OpKind::scan;
      for (std::uint32_t k = 0; k <= 12; ++k) {
        auto out = coordinate(de.plan, cut, DeviceProfile::client(), {&d0, &d1}, {fixture::budget_for_k(k, 12)});
        ++runs;
        const std::string where = "cut " + frontier_text(f) + " k=" + std::to_string(k);
        const auto why = oracle::t_mismatch(out.result, want, 1e-10);
        c.expect(why.empty(), where + ": " + why);
        for (const auto& d : out.devices) {
          c.expect(d.total_slices == 12, where + ": total slices");
          if (!scan_only) c.expect(d.executed_slices == k, where + ": executed slices");
        }
      }
    }
    c.note("two devices: " + std::to_string(runs) + " runs over k = 0..12");
  }

  // Four partitions of uneven height on four devices.
  auto a = fixture::random_matrix(3004, 80, 9, "g", 0);
  auto b = fixture::random_matrix(3005, 80, 9, "g", 30);
  const std::vector<std::string> ga{"c001", "c003", "c005", "c007"}, gb{"c000", "c002", "c004"};
  const Predicate filter{"c008", Comparator::gt, 2.7};
  const auto plan = build_diffexpr_plan({{"pa0", ga}, {"pa1", ga}}, {{"pb0", gb}, {"pb1", gb}}, filter);
  const auto a0 = fixture::rows_of(a, 0, 50), a1 = fixture::rows_of(a, 50, 80);
  const auto b0 = fixture::rows_of(b, 0, 20), b1 = fixture::rows_of(b, 20, 80);
  const double lit = filter.literal;
  const auto want = oracle::differential_expression({{&a0, ga}, {&a1, ga}}, {{&b0, gb}, {&b1, gb}}, "c008",
                                                    [lit](double v) { return v > lit; });
  std::vector<std::unique_ptr<KvNamespace>> ns;
  std::vector<std::unique_ptr<LocalDevice>> devs;
  std::vector<Device*> ptrs;
  const std::pair<const char*, const ExprMatrix*> parts[] = {{"pa0", &a0}, {"pa1", &a1}, {"pb0", &b0}, {"pb1", &b1}};
  for (std::size_t d = 0; d < 4; ++d) {
    ns.push_back(fixture::make_namespace());
    fixture::put_matrix(*ns.back(), parts[d].first, *parts[d].second, 6);
    devs.push_back(std::make_unique<LocalDevice>("dev" + std::to_string(d), *ns.back(), fixture::warm_client()));
    ptrs.push_back(devs.back().get());
  }
  const auto frontiers = single_partition_frontiers(plan);
  std::mt19937_64 rng(3006);
  std::size_t runs = 0;
  for (const auto& f : frontiers) {
    const auto cut = decompose(plan, f);
    for (int mix = 0; mix < 3; ++mix) {
      std::vector<ExecBudget> budgets;
      std::string ks;
      for (int d = 0; d < 4; ++d) {
        const auto k = static_cast<std::uint32_t>(rng() % 11);
        budgets.push_back(fixture::budget_for_k(k, 10));
        ks += std::to_string(k) + (d < 3 ? "/" : "");
      }
      auto out = coordinate(plan, cut, DeviceProfile::client(), ptrs, budgets);
      ++runs;
      const auto why = oracle::t_mismatch(out.result, want, 1e-10);
      c.expect(why.empty(), "four devices, cut " + frontier_text(f) + " k=" + ks + ": " + why);
    }
  }
  c.note("four devices: " + std::to_string(frontiers.size()) + " cuts, " + std::to_string(runs) + " mixed-k runs");
}

// ---------------------------------------------------------------------------
// 4. Pooled t against a scalar oracle, plus its symmetries.

Table one_row(const std::vector<double>& xs) {
  Table t;
  t.row_ids = {"g"};
  for (std::size_t i = 0; i < xs.size(); ++i) t.columns.push_back("c" + std::to_string(i));
  t.values = xs;
  return t;
}

double t_of(const std::vector<double>& xa, const std::vector<double>& xb) {
  const auto ta = one_row(xa), tb = one_row(xb);
  return tstat(accumulate(ta, ta.columns), accumulate(tb, tb.columns)).t.at(0);
}

void criterion4(Check& c) {
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> size(2, 60);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double mu = -100 + 200 * u(rng);
    const double sigma = 0.1 + 10 * u(rng);
    const double effect = (u(rng) - 0.5) * 6 * sigma;
    std::normal_distribution<double> da(mu, sigma), db(mu + effect, sigma);
    std::vector<double> xa(size(rng)), xb(size(rng));
    for (auto& x : xa) x = da(rng);
    for (auto& x : xb) x = db(rng);
    const std::string where = "pair " + std::to_string(trial);

    const double t = t_of(xa, xb);
    c.expect(oracle::close_rel(t, oracle::pooled_t(xa, xb), 1e-12), where + ": oracle");
    c.expect(oracle::close_rel(t_of(xb, xa), -t, 1e-9), where + ": antisymmetry");

    const double shift = -1000 + 2000 * u(rng);
    const double scale = std::exp(-5 + 10 * u(rng));
    auto sa = xa, sb = xb, ka = xa, kb = xb;
    for (auto& x : sa) x += shift;
    for (auto& x : sb) x += shift;
    for (auto& x : ka) x *= scale;
    for (auto& x : kb) x *= scale;
    c.expect(oracle::close_rel(t_of(sa, sb), t, 1e-9), where + ": shift by " + fmt(shift));
    c.expect(oracle::close_rel(t_of(ka, kb), t, 1e-9), where + ": scale by " + fmt(scale));
  }
  c.note("1000 pairs");
}

// ---------------------------------------------------------------------------
// 5. Calibration consistency of the latency model.

struct Sub {
  std::string id;
  bool ok;
  std::string detail;
};

std::vector<Sub> criterion5_parts() {
  std::vector<Sub> out;
  const auto exp1 = run_exp1(Scenario::exp1());
  const auto col = [&](std::size_t r, std::string_view name) -> const std::string& {
    return exp1.rows.at(r).at(exp1.column(name));
  };
  // (profile, height, width) -> modeled latency
  std::map<std::tuple<std::string, std::string, std::string>, double> us;
  for (std::size_t r = 0; r < exp1.rows.size(); ++r) {
    us[{col(r, "profile"), col(r, "rows_per_slice"), col(r, "cols")}] = std::stod(col(r, "modeled_us"));
  }

  {
    double worst = 0;
    std::size_t pairs = 0;
    for (const auto& [key, client_us] : us) {
      if (std::get<0>(key) != "client") continue;
      const auto envoy = us.find({"envoy", std::get<1>(key), std::get<2>(key)});
      if (envoy == us.end()) continue;
      worst = std::max(worst, std::fabs(envoy->second / client_us - 15.0));
      ++pairs;
    }
    out.push_back({"5a", pairs > 0 && worst <= 0.1,
                   "envoy/client ratio within " + fmt(worst) + " of 15 over " + std::to_string(pairs) + " configs"});
  }
  {
    const auto exp3 = run_exp3(Scenario::exp3());
    double lo = 1, hi = 0;
    for (const auto& row : exp3.rows) {
      const double share = std::stod(row.at(exp3.column("project_share")));
      lo = std::min(lo, share);
      hi = std::max(hi, share);
    }
    out.push_back({"5b", !exp3.rows.empty() && lo >= 0.39 && hi <= 0.41,
                   "projection share in [" + fmt(lo) + ", " + fmt(hi) + "]"});
  }
  {
    bool ok = true;
    std::size_t checked = 0;
    double worst = 0;
    for (const auto& [key, short_us] : us) {
      if (std::get<1>(key) != "48") continue;
      const auto tall = us.find({std::get<0>(key), "480", std::get<2>(key)});
      if (tall == us.end()) continue;
      const double overhead = resolve_profile(std::get<0>(key)).invocation_overhead_us;
      const double want = 270 * overhead;
      const double err = std::fabs((short_us - tall->second) - want) / want;
      worst = std::max(worst, err);
      ok = ok && err <= 1e-9;
      ++checked;
    }
    out.push_back({"5c", ok && checked > 0,
                   "300- vs 30-invocation gap = 270 overheads, max rel err " + fmt(worst) + " over " +
                       std::to_string(checked) + " configs"});
  }
  {
    const double ratio = aggregate_throughput(DeviceProfile::envoy(), 8, 480, 1000) /
                         aggregate_throughput(DeviceProfile::client(), 1, 480, 1000);
    out.push_back({"5d", std::fabs(ratio - 1.0) <= 0.05,
                   "8 envoy / 1 client throughput = " + fmt(ratio) + " (needs 1 +/- 0.05)"});
  }
  return out;
}

void criterion5(Check& c) {
  for (const auto& s : criterion5_parts()) {
    c.note(s.id + " " + (s.ok ? "PASS" : "FAIL") + ": " + s.detail);
    c.expect(s.ok, s.id);
  }
}

// ---------------------------------------------------------------------------
// 6. Generator selectivity by counting.

void criterion6(Check& c) {
  double lo = 1, hi = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = gen_matrix(2000, 300, seed, 0.169, 10.0);
    const double sel = static_cast<double>(oracle::count_above(m.values, 10.0)) / static_cast<double>(m.values.size());
    lo = std::min(lo, sel);
    hi = std::max(hi, sel);
    c.expect(std::fabs(sel - 0.169) <= 0.01, "seed " + std::to_string(seed) + ": " + fmt(sel));
  }
  c.note("measured selectivity in [" + fmt(lo) + ", " + fmt(hi) + "]");
}

// ---------------------------------------------------------------------------
// 7. Racing conflicting batches.

void criterion7(Check& c) {
  const std::vector<std::string> keys = {"s.00000", "s.00001", "s.00002", "s.00003"};
  std::size_t a_wins = 0;
  for (int trial = 0; trial < 500; ++trial) {
    KvNamespace ns;
    for (const auto& k : keys) ns.put(k, bytes("init"));
    // Writers overlap on the middle keys.
    auto make = [&](std::size_t first, const std::string& tag) {
      WriteBatch b;
      for (std::size_t i = first; i < first + 3; ++i) {
        b.writes.emplace_back(keys[i], bytes(tag));
        b.expected_versions.emplace_back(keys[i], ns.version(keys[i]));
      }
      return b;
    };
    const WriteBatch batches[2] = {make(0, "A"), make(1, "B")};
    std::atomic<bool> won[2] = {false, false};
    std::atomic<int> other_errors{0};
    std::latch start(2);
    auto writer = [&](int w) {
      start.arrive_and_wait();
      try {
        ns.atomic_multi_put(batches[w]);
        won[w] = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::conflict) ++other_errors;
      }
    };
    std::thread t0(writer, 0), t1(writer, 1);
    t0.join();
    t1.join();
    const std::string where = "trial " + std::to_string(trial);
    c.expect(other_errors == 0, where + ": non-conflict error");
    if (won[0] == won[1]) {
      c.fail(where + ": " + (won[0] ? "two winners" : "no winner"));
      continue;
    }
    const int w = won[0] ? 0 : 1;
    a_wins += w == 0;
    const auto tag = bytes(w == 0 ? "A" : "B");
    for (const auto& [k, v] : batches[w].writes) c.expect(ns.get(k) == tag, where + ": mixed state at " + k);
    c.expect(ns.get(w == 0 ? keys[3] : keys[0]) == bytes("init"), where + ": loser wrote");
  }
  c.note("500 trials, first batch won " + std::to_string(a_wins));
}

// ---------------------------------------------------------------------------
// 8. Wire fidelity.

struct LiveServer {
  KvNamespace ns;
  Server server;
  explicit LiveServer(DeviceProfile p, KvConfig kv = {})
      : ns(kv), server(ns, ServerOptions{"127.0.0.1:0", std::move(p), std::chrono::milliseconds(20000)}) {
    server.start();
  }
};

void frame_properties(Check& c) {
  std::mt19937_64 rng(8008);
  auto random_bytes = [&](std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
  };
  const std::uint8_t ops[] = {0x01, 0x02, 0x03, 0x04, 0x05, 0x81, 0x82, 0x83, 0x84, 0x85};
  for (int i = 0; i < 2000; ++i) {
    const Frame f{ops[rng() % 10], random_bytes(rng() % 4000)};
    const auto wire = encode_frame(f);
    const auto raw = oracle::read_frame(wire);
    const std::string where = "frame " + std::to_string(i);
    c.expect(raw && raw->length == f.payload.size() + 1 && raw->opcode == f.opcode && raw->payload == f.payload,
             where + ": byte layout");
    const auto d = decode_frame(wire);
    c.expect(d.frame && *d.frame == f && d.consumed == wire.size(), where + ": decode");
    const std::size_t cut = rng() % wire.size();
    const auto partial = decode_frame(ByteView(wire.data(), cut));
    c.expect(!partial.frame && partial.bytes_needed == (cut < 4 ? 4 - cut : wire.size() - cut),
             where + ": partial input");
  }
  for (int i = 0; i < 500; ++i) {
    std::string key(1 + rng() % 60, ' ');
    for (auto& ch : key) ch = static_cast<char>(rng());
    const std::vector<Request> all = {PutRequest{key, random_bytes(rng() % 800)}, GetRequest{key},
                                      DeleteRequest{key}, ScanRequest{key}, ExecRequest{key, "{}"}};
    for (const auto& r : all) {
      const auto wire = encode_frame(encode_request(r));
      const auto d = decode_frame(wire);
      c.expect(d.frame && decode_request(*d.frame) == r, "request round trip " + std::to_string(i));
    }
    const Response resp{static_cast<Opcode>(1 + rng() % 5), static_cast<Status>(rng() % 5), random_bytes(rng() % 200)};
    c.expect(decode_response(*decode_frame(encode_frame(encode_response(resp))).frame) == resp,
             "response round trip " + std::to_string(i));
  }
  const Bytes put_ab{0x00, 0x00, 0x00, 0x09, 0x01, 0x00, 0x01, 0x61, 0x00, 0x00, 0x00, 0x01, 0x62};
  c.expect(encode_frame(encode_request(PutRequest{"a", bytes("b")})) == put_ab, "PUT(a,b) bytes");
}

void networked_scenarios(Check& c) {
  std::mt19937_64 rng(8009);
  for (int sc = 0; sc < 50; ++sc) {
    const std::size_t genes = 20 + rng() % 120, cells = 4 + rng() % 14, height = 3 + rng() % 12;
    auto de = fixture::make_de_case(rng(), genes, cells);
    SlicingOptions opt;
    opt.slice_height = height;
    const auto pa = slice_partition(de.a, "pa", opt), pb = slice_partition(de.b, "pb", opt);
    auto profile = rng() % 2 ? DeviceProfile::envoy() : fixture::warm_client();

    LiveServer remote(profile);
    KvNamespace local;
    put_partition(local, pa);
    put_partition(local, pb);
    Client client(remote.server.address());
    put_partition_remote(client, pa);
    put_partition_remote(client, pb);

    const auto cuts = enumerate_cuts(de.plan);
    const auto& cut = cuts[rng() % cuts.size()];
    ExecBudget budget;
    switch (rng() % 4) {
      case 0: budget.mode = ExecMode::force_execute; break;
      case 1: budget.mode = ExecMode::force_pushback; break;
      default:
        budget.mode = ExecMode::adaptive;
        budget.sample_slices = static_cast<std::uint32_t>(1 + rng() % 8);
        budget.max_per_slice_us = rng() % 2 ? 0.0 : 1e9;
    }
    const std::string prefix = rng() % 4 == 0 ? "out" + std::to_string(sc) : "";
    for (std::size_t i = 0; i < cut.sub_plans.size(); ++i) {
      const auto name = "plan." + std::to_string(i);
      client.put_program(name, serialize_plan(cut.sub_plans[i]), 1 + rng() % 4096);
      const auto got = client.exec(name, ExecArgs{budget, prefix});
      SimClock clock;
      const auto want = execute_downstream(cut.sub_plans[i], budget, local, profile, clock, prefix);
      c.expect(encode_exec_result(got) == encode_exec_result(want),
               "scenario " + std::to_string(sc) + " cut " + frontier_text(cut.frontier) + " sub-plan " +
                   std::to_string(i) + ": result bytes differ");
    }
  }
}

void concurrent_clients(Check& c) {
  LiveServer s(DeviceProfile::client());
  const auto addr = s.server.address();
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int t = 0; t < 100; ++t) {
    threads.emplace_back([&, t] {
      try {
        Client client(addr);
        for (int i = 0; i < 20; ++i) {
          const auto key = "t" + std::to_string(t) + ".k" + std::to_string(i);
          client.put(key, bytes(key));
          if (client.get(key) != bytes(key)) ++failures;
        }
        if (client.scan("t" + std::to_string(t) + ".").size() != 20) ++failures;
      } catch (const std::exception&) {
        ++failures;
      }
    });
  }
  for (auto& th : threads) th.join();
  c.expect(failures == 0, std::to_string(failures.load()) + " client failures");
  c.expect(s.ns.size() == 2000, "namespace holds " + std::to_string(s.ns.size()) + " keys");
}

void criterion8(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  frame_properties(c);
  networked_scenarios(c);
  concurrent_clients(c);
  const double secs = seconds_since(t0);
  c.expect(secs < 60, "runtime " + fmt(secs) + " s");
  c.note("50 scenarios, frame properties, 100 clients, " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 9. Bench determinism through the CLI.

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion9(Check& c, const std::string& cli) {
  if (cli.empty() || !std::filesystem::exists(cli)) {
    c.fail("skyt executable not found (pass --cli)");
    return;
  }
  const auto dir = std::filesystem::temp_directory_path() / ("skyt_accept_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"exp1", "--seed 7 --width 100"},
      {"exp2", "--seed 7"},
      {"exp3", "--seed 7 --genes 3000"},
      {"pipeline", "--seed 7 --genes 1200 --cells 100"},
      {"pipeline", "--seed 7 --genes 1200 --cells 100 --mode adaptive --budget-us 20 --sample-slices 2"},
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::string csv[2];
    for (int rep = 0; rep < 2; ++rep) {
      const auto out = dir / ("run" + std::to_string(i) + "_" + std::to_string(rep) + ".csv");
      const auto cmd = "\"" + cli + "\" bench " + runs[i].first + " " + runs[i].second + " --out \"" +
                       out.string() + "\"";
      const int rc = std::system(cmd.c_str());
      c.expect(rc == 0, runs[i].first + ": exit status " + std::to_string(rc));
      csv[rep] = slurp(out);
    }
    c.expect(!csv[0].empty(), runs[i].first + ": empty report");
    c.expect(csv[0] == csv[1], runs[i].first + " " + runs[i].second + ": reports differ");
  }
  std::filesystem::remove_all(dir);
  c.note(std::to_string(runs.size()) + " bench invocations, each run twice");
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  std::string cli;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else {
      std::cerr << "usage: skyt_acceptance [--criterion N] [--cli PATH]\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"streaming aggregation equals two-pass oracle", criterion1},
      {"every cut matches direct execution", criterion2},
      {"push-back at every k matches the oracle", criterion3},
      {"t statistic matches scalar oracle", criterion4},
      {"latency model calibration", criterion5},
      {"generator selectivity", criterion6},
      {"racing batches have one winner", criterion7},
      {"wire fidelity", criterion8},
      {"bench determinism", [&cli](Check& c) { criterion9(c, cli); }},
  };
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "no criterion " << only << "\n";
    return 2;
  }
  bool all_ok = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.fail(std::string("exception: ") + e.what());
    }
    for (const auto& line : c.info()) std::cout << "  " << line << "\n";
    for (const auto& line : c.notes()) std::cout << "  failure: " << line << "\n";
    std::cout << "criterion " << i + 1 << ": " << (c.ok() ? "PASS" : "FAIL") << " - " << criteria[i].first;
    if (!c.ok()) std::cout << " (" << c.failures() << " failed checks)";
    std::cout << std::endl;
    all_ok = all_ok && c.ok();
  }
  return all_ok ? 0 : 1;
}
