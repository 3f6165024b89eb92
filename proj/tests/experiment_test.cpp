#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "qlink/experiment.hpp"

using namespace qlink;
using nlohmann::json;

namespace {

ExperimentConfig short_config(double seconds = 5.0) {
  ExperimentConfig c;
  c.sim_time_s = seconds;
  return c;
}

std::string requests_csv(const CellResult& r) {
  std::ostringstream os;
  write_requests_csv(os, r);
  return os.str();
}

metrics::RunSummary row(const std::string& topo, const std::string& proto, double f, std::uint64_t seed, std::size_t edges,
                        int nu, double latency) {
  metrics::RunSummary s;
  s.topology = topo;
  s.protocol = proto;
  s.fidelity = f;
  s.seed = seed;
  s.edges = edges;
  s.matching = nu;
  s.requests = 10;
  s.mean_latency_ms = latency;
  s.jitter_ms = latency / 2;
  return s;
}

}  // namespace

TEST(Config, EmptyJsonKeepsDefaults) {
  const auto c = config_from_json(json::object());
  EXPECT_EQ(c.topologies.size(), 14u);
  EXPECT_EQ(c.fidelities.size(), 9u);
  EXPECT_EQ(c.seeds.size(), 10u);
  EXPECT_DOUBLE_EQ(c.sim_time_s, 120.0);
  EXPECT_DOUBLE_EQ(c.workload.lambda_ms, 50.0);
  EXPECT_EQ(c.esp.syn_sent_policy, esp::SynSentPolicy::kPriority);
}

TEST(Config, DeskProfile) {
  const auto c = config_from_json(json{{"profile", "desk"}});
  EXPECT_DOUBLE_EQ(c.sim_time_s, 30.0);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Config, Overrides) {
  const auto c = config_from_json(json::parse(R"({
    "topologies": ["complete:2", "grid:3x3"], "protocols": ["dqp"], "fidelities": [0.6],
    "sim_time_s": 10, "seeds": [4], "physics": {"detection_efficiency": 0.5, "link_length_m": 1000},
    "workload": {"lambda_ms": 20}, "esp": {"guard_ns": 500, "syn_sent_policy": "accept"}, "dqp": {"guard_ns": 7}
  })"));
  EXPECT_EQ(c.topologies.size(), 2u);
  EXPECT_EQ(c.protocols, (std::vector<ProtocolKind>{ProtocolKind::kDqp}));
  EXPECT_DOUBLE_EQ(c.physics.detection_efficiency, 0.5);
  EXPECT_DOUBLE_EQ(c.physics.link_length_m, 1000);
  EXPECT_DOUBLE_EQ(c.workload.lambda_ms, 20);
  EXPECT_EQ(c.esp.guard, SimTime(500));
  EXPECT_EQ(c.esp.syn_sent_policy, esp::SynSentPolicy::kAccept);
  EXPECT_EQ(c.dqp.guard, SimTime(7));
}

TEST(Config, RejectsBadInput) {
  for (const char* bad : {R"({"profile": "huge"})", R"({"fidelities": [1.0]})", R"({"topologies": ["cycle:2"]})",
                          R"({"protocols": ["tcp"]})", R"({"sim_time_s": "long"})", R"({"esp": {"syn_sent_policy": "x"}})",
                          R"({"request_timeout": {"enabled": true}})", R"({"workload": {"max_pairs": 9}})",
                          R"({"seeds": []})"})
    EXPECT_THROW(config_from_json(json::parse(bad)), ConfigError) << bad;
}

TEST(Config, JsonRoundTrip) {
  auto c = ExperimentConfig::desk();
  c.esp.syn_sent_policy = esp::SynSentPolicy::kAccept;
  c.physics.heralding_position = 0.3;
  const json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(RunOne, SingleLinkSmoke) {
  const auto r = run_one(short_config(), Cell{"complete:2", ProtocolKind::kEsp, 0.75, 1});
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_GT(r.summary.requests, 0u);
  EXPECT_FALSE(r.invariant_violation);
  EXPECT_EQ(r.generations, r.summary.requests);
  EXPECT_EQ(r.summary.edges, 1u);
  EXPECT_EQ(r.summary.matching, 1);
}

TEST(RunOne, RepeatableOutput) {
  for (auto proto : {ProtocolKind::kEsp, ProtocolKind::kDqp}) {
    const Cell cell{"friendship:2", proto, 0.65, 4};
    std::ostringstream ev1, ev2, pt1, pt2;
    const auto a = run_one(short_config(), cell, {&ev1, &pt1});
    const auto b = run_one(short_config(), cell, {&ev2, &pt2});
    EXPECT_EQ(requests_csv(a), requests_csv(b));
    EXPECT_EQ(ev1.str(), ev2.str());
    EXPECT_EQ(pt1.str(), pt2.str());
    EXPECT_FALSE(ev1.str().empty());
    // Tracing must not perturb the simulation.
    EXPECT_EQ(requests_csv(run_one(short_config(), cell)), requests_csv(a));
  }
}

TEST(RunOne, SeedsDiffer) {
  const auto a = run_one(short_config(), Cell{"grid:2x2", ProtocolKind::kEsp, 0.75, 1});
  const auto b = run_one(short_config(), Cell{"grid:2x2", ProtocolKind::kEsp, 0.75, 2});
  EXPECT_NE(requests_csv(a), requests_csv(b));
}

TEST(RunOne, TimelinesAreOrdered) {
  for (auto proto : {ProtocolKind::kEsp, ProtocolKind::kDqp}) {
    const auto r = run_one(short_config(), Cell{"wheel:6", proto, 0.8, 2});
    ASSERT_TRUE(r.ok);
    for (const auto& tl : r.timelines) {
      if (!tl.complete()) continue;
      ASSERT_LE(tl.nl_start, *tl.pl_start);
      ASSERT_LE(*tl.pl_start, *tl.pl_finish);
      ASSERT_LE(*tl.pl_finish, *tl.nl_finish);
    }
  }
}

TEST(RunOne, RequestCsvLayout) {
  const auto r = run_one(short_config(1.0), Cell{"complete:2", ProtocolKind::kDqp, 0.75, 1});
  std::istringstream in(requests_csv(r));
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "request_id,topology,protocol,fidelity,edge,pairs,NL_start_ns,PL_start_ns,PL_finish_ns,NL_finish_ns");
  EXPECT_EQ(first.rfind("0,complete:2,dqp,0.75,", 0), 0u) << first;
  EXPECT_EQ(std::count(first.begin(), first.end(), ','), 9);
}

TEST(SummaryCsv, RoundTrip) {
  std::vector<metrics::RunSummary> rows{row("grid:3x3", "esp", 0.75, 1, 12, 4, 37.25), row("complete:2", "dqp", 0.5, 2, 1, 1, 3.5)};
  rows[0].throughput = 1.234567;
  rows[1].incomplete = 3;
  std::stringstream ss;
  write_summary_csv(ss, rows);
  const auto back = read_summary_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].topology, "grid:3x3");
  EXPECT_DOUBLE_EQ(back[0].mean_latency_ms, 37.25);
  EXPECT_DOUBLE_EQ(back[0].throughput, 1.234567);
  EXPECT_EQ(back[1].incomplete, 3u);
  std::stringstream again;
  write_summary_csv(again, back);
  ss.clear();
  ss.seekg(0);
  EXPECT_EQ(again.str(), ss.str());

  std::istringstream bad("topology,protocol\n");
  EXPECT_THROW(read_summary_csv(bad), ConfigError);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  auto cfg = short_config(2.0);
  cfg.topologies = {"complete:3", "star:3", "cycle:5"};
  cfg.fidelities = {0.6, 0.8};
  cfg.seeds = {1, 2};
  const auto cells = expand_cells(cfg);
  ASSERT_EQ(cells.size(), 3u * 2 * 2 * 2);
  cfg.jobs = 1;
  const auto serial = run_cells(cfg, cells);
  cfg.jobs = 3;
  const auto parallel = run_cells(cfg, cells);
  for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(requests_csv(serial[i]), requests_csv(parallel[i]));
}

TEST(Report, IndependentOfRowOrder) {
  std::vector<metrics::RunSummary> rows;
  const std::pair<const char*, std::size_t> topos[] = {{"complete:2", 1}, {"star:3", 3}, {"grid:3x3", 12}};
  for (auto [t, e] : topos)
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      rows.push_back(row(t, "esp", 0.75, seed, e, 1, 10.0 + e * 2.0 + seed * 0.1));
      rows.push_back(row(t, "dqp", 0.75, seed, e, 1, 10.0 + e * 12.0 + seed * 0.3));
    }
  const auto a = build_report(rows).dump();
  std::reverse(rows.begin(), rows.end());
  std::rotate(rows.begin(), rows.begin() + 5, rows.end());
  EXPECT_EQ(build_report(rows).dump(), a);
}

TEST(Report, RegressionAndGroups) {
  std::vector<metrics::RunSummary> rows;
  // ESP L = 2|E| + 10, DQP L = 15|E| + 5.
  const std::tuple<const char*, std::size_t, int> topos[] = {{"complete:2", 1, 1}, {"star:3", 3, 1}, {"grid:3x3", 12, 4}};
  for (auto [t, e, nu] : topos) {
    rows.push_back(row(t, "esp", 0.75, 1, e, nu, 2.0 * e + 10));
    rows.push_back(row(t, "dqp", 0.75, 1, e, nu, 15.0 * e + 5));
  }
  const auto rep = build_report(rows);
  const auto& f = rep["per_fidelity"][0];
  EXPECT_NEAR(f["regressions"]["latency"]["esp"]["slope"].get<double>(), 2.0, 1e-9);
  EXPECT_NEAR(f["regressions"]["latency"]["dqp"]["slope"].get<double>(), 15.0, 1e-9);
  EXPECT_NEAR(f["latency_slope_ratio_dqp_over_esp"].get<double>(), 7.5, 1e-9);
  const auto groups = matching_groups(aggregate(rows), "0.75");
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].matching, 1);
  // (12 vs 20) and (16 vs 50): ESP 40% and 68% lower.
  EXPECT_NEAR(groups[0].mean_abs_pct_diff, (40.0 + 68.0) / 2, 1e-9);
  EXPECT_NEAR(groups[1].mean_improvement_pct, (185.0 - 34.0) / 185.0 * 100, 1e-9);
}

TEST(Report, FidelityRange) {
  std::vector<metrics::RunSummary> rows{row("grid:3x3", "esp", 0.5, 1, 12, 4, 20), row("grid:3x3", "esp", 0.9, 1, 12, 4, 90),
                                        row("grid:3x3", "esp", 0.7, 1, 12, 4, 40)};
  const auto r = fidelity_ranges(aggregate(rows));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_DOUBLE_EQ(r[0].latency_range_ms, 70.0);
  EXPECT_DOUBLE_EQ(r[0].f_low, 0.5);
}

TEST(Report, FileStem) {
  EXPECT_EQ(cell_file_stem(Cell{"grid:3x3", ProtocolKind::kDqp, 0.75, 3}), "grid-3x3_dqp_F0.75_s3");
}
