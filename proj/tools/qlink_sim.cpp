// Command-line driver: single runs, sweeps, and reports.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qlink/experiment.hpp"

namespace fs = std::filesystem;
using namespace qlink;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvariant = 2;

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot write '" + p.string() + "'");
  return os;
}

void print_summary(const metrics::RunSummary& s) {
  std::cout << s.topology << ' ' << s.protocol << " F=" << fmt_fixed(s.fidelity, 2) << " seed=" << s.seed
            << ": n=" << s.requests << " incomplete=" << s.incomplete << " L=" << fmt_fixed(s.mean_latency_ms, 3)
            << "ms J=" << fmt_fixed(s.jitter_ms, 3) << "ms SL=" << fmt_fixed(s.mean_scaled_latency_ms, 3)
            << "ms T=" << fmt_fixed(s.throughput, 3) << "/s B=" << fmt_fixed(s.mean_busy_ms, 3)
            << "ms W=" << fmt_fixed(s.mean_queue_ms, 3) << "ms\n";
}

int cmd_run(const ExperimentConfig& base, const std::string& topology, const std::string& protocol, double fidelity,
            std::uint64_t seed, std::optional<double> sim_time, const std::string& out,
            const std::string& event_trace, const std::string& protocol_trace) {
  ExperimentConfig cfg = base;
  if (sim_time) cfg.sim_time_s = *sim_time;
  cfg.topologies = {topology};
  cfg.fidelities = {fidelity};
  cfg.seeds = {seed};
  cfg.validate();
  Cell cell{topology, parse_protocol(protocol), fidelity, seed};

  std::ofstream ev, pt;
  RunHooks hooks;
  if (!event_trace.empty()) {
    ev = open_out(event_trace);
    hooks.event_trace = &ev;
  }
  if (!protocol_trace.empty()) {
    pt = open_out(protocol_trace);
    hooks.protocol_trace = &pt;
  }
  const CellResult r = run_one(cfg, cell, hooks);
  if (!out.empty()) {
    fs::create_directories(out);
    auto req = open_out(fs::path(out) / "requests.csv");
    write_requests_csv(req, r);
    auto sum = open_out(fs::path(out) / "summary.csv");
    write_summary_csv(sum, {r.summary});
  }
  print_summary(r.summary);
  if (r.invariant_violation) {
    std::cerr << "invariant violation: " << r.error << '\n';
    return kExitInvariant;
  }
  return kExitClean;
}

int cmd_report(const std::string& in_dir) {
  std::ifstream in(fs::path(in_dir) / "summary.csv");
  if (!in) throw ConfigError("no summary.csv in '" + in_dir + "'");
  const auto rows = read_summary_csv(in);
  const auto report = build_report(rows);
  print_report(std::cout, report);
  auto os = open_out(fs::path(in_dir) / "report.json");
  os << report.dump(2) << '\n';
  return kExitClean;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out) {
  fs::create_directories(out);
  {
    auto os = open_out(fs::path(out) / "config.json");
    os << config_to_json(cfg).dump(2) << '\n';
  }
  const auto cells = expand_cells(cfg);
  if (cfg.per_request_csv) fs::create_directories(fs::path(out) / "requests");
  std::size_t done = 0;
  const auto results = run_cells(
      cfg, cells,
      [&](const CellResult& r) {
        ++done;
        std::cerr << '[' << done << '/' << cells.size() << "] " << r.cell.topology << ' ' << to_string(r.cell.protocol)
                  << " F=" << fmt_fixed(r.cell.fidelity, 2) << " seed=" << r.cell.seed
                  << (r.ok ? " ok" : " FAILED") << '\n';
        if (r.ok && cfg.per_request_csv) {
          auto os = open_out(fs::path(out) / "requests" / (cell_file_stem(r.cell) + ".csv"));
          write_requests_csv(os, r);
        }
      },
      false);

  bool violation = false;
  std::vector<metrics::RunSummary> rows;
  auto status = open_out(fs::path(out) / "cells.csv");
  status << "topology,protocol,fidelity,seed,status,stalled,unpaired_synrej,wall_s\n";
  for (const auto& r : results) {
    status << r.cell.topology << ',' << to_string(r.cell.protocol) << ',' << fmt_fixed(r.cell.fidelity, 2) << ','
           << r.cell.seed << ',' << (r.ok ? "ok" : r.invariant_violation ? "invariant_violation" : "error") << ','
           << r.stalled << ',' << r.unpaired_synrejs << ',' << fmt_fixed(r.wall_seconds, 3) << '\n';
    if (!r.ok) {
      std::cerr << "cell " << cell_file_stem(r.cell) << " failed: " << r.error << '\n';
      violation = violation || r.invariant_violation;
      continue;
    }
    rows.push_back(r.summary);
  }
  {
    auto os = open_out(fs::path(out) / "summary.csv");
    write_summary_csv(os, rows);
  }
  if (!rows.empty()) {
    const auto report = build_report(rows);
    auto os = open_out(fs::path(out) / "report.json");
    os << report.dump(2) << '\n';
    print_report(std::cout, report);
  }
  return violation ? kExitInvariant : kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-plane simulator for heralded entanglement generation (ESP vs DQP)"};
  app.require_subcommand(1);

  std::string config_path;

  auto* run = app.add_subcommand("run", "Simulate one topology/protocol/fidelity/seed cell");
  std::string topology = "complete:2", protocol = "esp", out, event_trace, protocol_trace;
  double fidelity = 0.75;
  std::uint64_t seed = 1;
  std::optional<double> sim_time;
  run->add_option("--topology", topology, "grid:2x3, complete:4, bipartite:2x3, star:4, friendship:3, wheel:6, cycle:5");
  run->add_option("--protocol", protocol, "esp or dqp")->check(CLI::IsMember({"esp", "dqp"}));
  run->add_option("--fidelity", fidelity, "Requested minimum fidelity in [0.5, 1)");
  run->add_option("--seed", seed, "Global seed");
  run->add_option("--sim-time", sim_time, "Simulated seconds (default 120)");
  run->add_option("--out", out, "Output directory for requests.csv and summary.csv");
  run->add_option("--config", config_path, "JSON config supplying physics/workload/protocol overrides");
  run->add_option("--event-trace", event_trace, "Write the dispatched-event trace to this file");
  run->add_option("--protocol-trace", protocol_trace, "Write the per-node protocol trace to this file");

  auto* sweep = app.add_subcommand("sweep", "Run every topology x protocol x fidelity x seed cell of a config");
  std::string sweep_out;
  std::optional<unsigned> jobs;
  sweep->add_option("--config", config_path, "JSON experiment config")->required();
  sweep->add_option("--out", sweep_out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Worker threads (default: config, else all cores)");

  auto* report = app.add_subcommand("report", "Regressions and comparison tables from a sweep directory");
  std::string in_dir;
  report->add_option("--in", in_dir, "Sweep output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitClean : kExitUsage;
  }

  try {
    if (*run) {
      ExperimentConfig base = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
      return cmd_run(base, topology, protocol, fidelity, seed, sim_time, out, event_trace, protocol_trace);
    }
    if (*sweep) {
      ExperimentConfig cfg = load_config(config_path);
      if (jobs) cfg.jobs = *jobs;
      return cmd_sweep(cfg, sweep_out);
    }
    if (*report) return cmd_report(in_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  }
  return kExitUsage;
}
