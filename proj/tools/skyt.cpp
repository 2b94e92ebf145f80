// skyt: data generation, ingest, device daemon, EXEC client and experiment runner.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "skyt/client.hpp"
#include "skyt/harness.hpp"
#include "skyt/server.hpp"

namespace {

using namespace skyt;

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  return file;
}

Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skyt: computational-storage query pushdown simulator"};
  app.require_subcommand(1);

  std::string profile = "client";
  std::uint64_t seed = 42;
  std::string out;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic expression matrix (TSV)");
  std::uint64_t genes = 1000, cells = 200;
  std::optional<double> selectivity;
  double literal = 10.0;
  gen->add_option("--genes", genes, "Rows (genes)");
  gen->add_option("--cells", cells, "Columns (cells)");
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--selectivity", selectivity, "Fraction of values above --literal");
  gen->add_option("--literal", literal, "Predicate literal for --selectivity");
  gen->add_option("--out", out, "Output TSV (default stdout)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Slice a TSV matrix into a file-backed namespace");
  std::string in_path, key = "part0", data_dir;
  std::size_t max_kv = 1u << 20;
  unsigned stripes = 1;
  std::optional<std::size_t> height;
  ingest->add_option("--in", in_path, "Input TSV")->required();
  ingest->add_option("--key", key, "Partition key");
  ingest->add_option("--data-dir", data_dir, "Namespace directory")->required();
  ingest->add_option("--max-kv-bytes", max_kv, "Key-value size limit");
  ingest->add_option("--stripe-factor", stripes, "Key-values per slice");
  ingest->add_option("--slice-height", height, "Rows per slice");

  // put-partition
  auto* put = app.add_subcommand("put-partition", "Upload a partition from a namespace directory to a device");
  std::vector<std::string> device_addrs;
  put->add_option("--data-dir", data_dir, "Namespace directory")->required();
  put->add_option("--key", key, "Partition key");
  put->add_option("--device", device_addrs, "Device address host:port")->required()->expected(1);
  put->add_option("--stripe-factor", stripes, "Key-values per slice on the device");

  // exec
  auto* exec = app.add_subcommand("exec", "Store a plan on a device and run it with EXEC");
  std::string plan_path, mode = "force-execute", out_prefix;
  double budget_us = 0;
  std::uint32_t sample = 5;
  exec->add_option("--device", device_addrs, "Device address host:port")->required()->expected(1);
  exec->add_option("--plan", plan_path, "Plan document (JSON)")->required();
  exec->add_option("--mode", mode, "force-execute | adaptive | force-pushback");
  exec->add_option("--budget-us", budget_us, "Per-slice latency budget");
  exec->add_option("--sample-slices", sample, "Warm slices sampled in adaptive mode");
  exec->add_option("--out-prefix", out_prefix, "Write aggregates to <prefix>.agg.<i>");

  // serve
  auto* serve = app.add_subcommand("serve", "Run a device daemon");
  std::string listen = "127.0.0.1:7600";
  serve->add_option("--listen", listen, "Listen address host:port")->envname("SKYT_LISTEN");
  serve->add_option("--profile", profile, "Device profile name or file")->envname("SKYT_PROFILE");
  serve->add_option("--data-dir", data_dir, "Persist keys under this directory");
  serve->add_option("--max-kv-bytes", max_kv, "Key-value size limit");
  serve->add_option("--stripe-factor", stripes, "Key-values per slice");

  // bench
  auto* bench = app.add_subcommand("bench", "Run an experiment and write a CSV report");
  bench->require_subcommand(1);
  struct BenchFlags {
    std::optional<std::uint64_t> genes, cells;
    std::optional<std::uint32_t> devices;
    std::vector<std::uint32_t> heights, widths;
    std::vector<std::string> profiles;
    std::optional<std::string> mode;
    std::optional<double> budget;
    std::optional<std::uint32_t> sample;
    std::optional<std::string> cut;
  } bf;
  std::string bench_name;
  for (const char* name : {"exp1", "exp2", "exp3", "pipeline"}) {
    auto* sub = bench->add_subcommand(name, std::string("Experiment ") + name);
    sub->add_option("--seed", seed, "Scenario seed");
    sub->add_option("--out", out, "CSV output (default stdout)");
    sub->add_option("--profile", bf.profiles, "Device profile(s)")->envname("SKYT_PROFILE");
    sub->add_option("--genes", bf.genes, "Matrix rows");
    sub->add_option("--cells", bf.cells, "Matrix columns");
    if (std::string(name) == "exp1") sub->add_option("--height", bf.heights, "Slice heights to sweep");
    if (std::string(name) == "exp1" || std::string(name) == "exp3") {
      sub->add_option("--width", bf.widths, "Widths to sweep");
    }
    if (std::string(name) == "pipeline") {
      sub->add_option("--devices", bf.devices, "Simulated device count");
      sub->add_option("--device", device_addrs, "Remote device address (repeatable)");
      sub->add_option("--mode", bf.mode, "force-execute | adaptive | force-pushback");
      sub->add_option("--budget-us", bf.budget, "Per-slice latency budget");
      sub->add_option("--sample-slices", bf.sample, "Warm slices sampled in adaptive mode");
      sub->add_option("--cut", bf.cut, "auto, or comma-separated frontier node ids");
    }
    sub->callback([&bench_name, name] { bench_name = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    std::ofstream file;
    if (gen->parsed()) {
      auto m = gen_matrix(genes, cells, seed, selectivity, literal);
      write_matrix_tsv(open_out(out, file), m);
    } else if (ingest->parsed()) {
      std::ifstream in(in_path);
      if (!in) throw Error(ErrorCode::io, "cannot read '" + in_path + "'");
      auto m = ingest_matrix(in);
      KvNamespace ns(KvConfig{max_kv, stripes, std::filesystem::path(data_dir)});
      auto part = slice_partition(m, key, SlicingOptions{max_kv, stripes, height});
      put_partition(ns, part);
      std::cout << key << ": " << part.slices.size() << " slices of " << part.meta.slice_height
                << " rows\n";
    } else if (put->parsed()) {
      // The source stripe factor is recovered from the chunk keys of slice 0.
      const auto big = std::size_t{1} << 30;
      unsigned source_f = 1;
      {
        KvNamespace probe(KvConfig{big, 1, std::filesystem::path(data_dir)});
        const auto chunks = probe.scan_prefix(slice_key_name(key, 0) + ".s").size();
        if (chunks > 0) source_f = static_cast<unsigned>(chunks);
      }
      KvNamespace ns(KvConfig{big, source_f, std::filesystem::path(data_dir)});
      Partition p;
      p.partition_key = key;
      p.meta = get_metadata(ns, key);
      for (std::uint32_t i = 0; i < p.meta.slice_count; ++i) p.slices.push_back(get_slice(ns, key, i));
      Client c(device_addrs.front());
      put_partition_remote(c, p, stripes);
      std::cout << key << ": uploaded " << p.slices.size() << " slices to " << device_addrs.front() << "\n";
    } else if (exec->parsed()) {
      std::ifstream in(plan_path);
      if (!in) throw Error(ErrorCode::io, "cannot read '" + plan_path + "'");
      std::string doc((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      parse_plan(doc);
      Client c(device_addrs.front());
      const std::string prefix = "prog.cli";
      c.put_program(prefix, doc);
      ExecBudget b{budget_us, sample, parse_exec_mode(mode)};
      auto r = c.exec(prefix, ExecArgs{b, out_prefix});
      std::cout << serialize_plan(r.plan) << "\n";
      std::cout << "executed_slices=" << r.executed_slices << " total_slices=" << r.total_slices
                << " modeled_us=" << format_double(r.elapsed_us()) << " transfer_bytes=" << transfer_bytes(r)
                << "\n";
      for (const auto& s : r.stored) std::cout << "stored " << s.key << "\n";
      if (r.output) {
        if (auto* t = std::get_if<TStatVector>(&*r.output)) {
          for (std::size_t i = 0; i < t->t.size(); ++i) std::cout << t->gene_ids[i] << "\t" << format_double(t->t[i]) << "\n";
        }
      }
    } else if (serve->parsed()) {
      KvConfig kc{max_kv, stripes, std::nullopt};
      if (!data_dir.empty()) kc.backing_dir = data_dir;
      KvNamespace ns(kc);
      Server server(ns, ServerOptions{listen, resolve_profile(profile), std::chrono::milliseconds(60000)});
      server.start();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on " << server.address() << " with profile " << resolve_profile(profile).name << "\n";
      server.wait();
    } else if (bench->parsed()) {
      Scenario s = bench_name == "exp1"   ? Scenario::exp1()
                   : bench_name == "exp2" ? Scenario::exp2()
                   : bench_name == "exp3" ? Scenario::exp3()
                                          : Scenario::pipeline();
      s.seed = seed;
      if (bf.genes) s.genes = *bf.genes;
      if (bf.cells) s.cells = *bf.cells;
      if (bf.devices) s.devices = *bf.devices;
      if (!bf.heights.empty()) s.heights = bf.heights;
      if (!bf.widths.empty()) s.widths = bf.widths;
      if (!bf.profiles.empty()) s.profiles = bf.profiles;
      if (bf.mode) s.budget.mode = parse_exec_mode(*bf.mode);
      if (bf.budget) s.budget.max_per_slice_us = *bf.budget;
      if (bf.sample) s.budget.sample_slices = *bf.sample;
      if (bf.cut) s.cut = *bf.cut;
      Report rep = bench_name == "exp1"   ? run_exp1(s)
                   : bench_name == "exp2" ? run_exp2(s)
                   : bench_name == "exp3" ? run_exp3(s)
                                          : run_pipeline(s, device_addrs).report;
      rep.write_csv(open_out(out, file));
    }
  } catch (const Error& e) {
    std::cerr << "skyt: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "skyt: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
