#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qlink/dqp.hpp"
#include "qlink/esp.hpp"
#include "qlink/metrics.hpp"
#include "qlink/topology.hpp"
#include "qlink/workload.hpp"

namespace qlink {

struct ExperimentConfig {
  std::vector<std::string> topologies;  // spec strings, e.g. "grid:3x3"
  std::vector<ProtocolKind> protocols{ProtocolKind::kEsp, ProtocolKind::kDqp};
  std::vector<double> fidelities{0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90};
  double sim_time_s = 120.0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  LinkPhysics physics;
  WorkloadOptions workload;
  esp::Options esp;
  dqp::Options dqp;
  bool per_request_csv = true;
  unsigned jobs = 0;  // 0 = hardware concurrency
  double liveness_margin_s = 5.0;

  ExperimentConfig() {
    for (const auto& s : evaluation_suite()) topologies.push_back(to_string(s));
  }

  SimTime sim_time() const { return SimTime::from_seconds(sim_time_s); }

  void validate() const {
    if (topologies.empty() || protocols.empty() || fidelities.empty() || seeds.empty())
      throw ConfigError("topologies, protocols, fidelities and seeds must be non-empty");
    for (const auto& t : topologies) build_topology(parse_topology_spec(t));
    for (double f : fidelities)
      if (!(f >= 0.5 && f < 1.0)) throw ConfigError("fidelities must lie in [0.5, 1)");
    if (!(sim_time_s > 0.0)) throw ConfigError("sim_time must be > 0");
    physics.validate();
    workload.validate(physics.qubits_per_node);
  }

  /// Short CI profile: 30 s, three seeds.
  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.sim_time_s = 30.0;
    c.seeds = {1, 2, 3};
    return c;
  }
};

inline std::string_view to_string(esp::SynSentPolicy p) {
  return p == esp::SynSentPolicy::kAccept ? "accept" : "priority";
}

/// Loads a JSON config. Every key is optional; absent keys keep defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("profile")) {
    const auto p = j.at("profile").get<std::string>();
    if (p == "desk") c = ExperimentConfig::desk();
    else if (p != "full") throw ConfigError("unknown profile '" + p + "' (expected desk or full)");
  }
  try {
    if (j.contains("topologies")) c.topologies = j.at("topologies").get<std::vector<std::string>>();
    if (j.contains("protocols")) {
      c.protocols.clear();
      for (const auto& p : j.at("protocols")) c.protocols.push_back(parse_protocol(p.get<std::string>()));
    }
    if (j.contains("fidelities")) c.fidelities = j.at("fidelities").get<std::vector<double>>();
    if (j.contains("sim_time_s")) c.sim_time_s = j.at("sim_time_s").get<double>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("per_request_csv")) c.per_request_csv = j.at("per_request_csv").get<bool>();
    if (j.contains("jobs")) c.jobs = j.at("jobs").get<unsigned>();
    if (j.contains("liveness_margin_s")) c.liveness_margin_s = j.at("liveness_margin_s").get<double>();
    if (j.contains("physics")) {
      const auto& p = j.at("physics");
      auto& ph = c.physics;
      ph.link_length_m = p.value("link_length_m", ph.link_length_m);
      ph.heralding_position = p.value("heralding_position", ph.heralding_position);
      ph.detection_window_ns = p.value("detection_window_ns", ph.detection_window_ns);
      ph.fiber_speed_mps = p.value("fiber_speed_mps", ph.fiber_speed_mps);
      ph.detection_efficiency = p.value("detection_efficiency", ph.detection_efficiency);
      ph.clock_period_min_ns = p.value("clock_period_min_ns", ph.clock_period_min_ns);
      ph.clock_period_max_ns = p.value("clock_period_max_ns", ph.clock_period_max_ns);
      ph.qubits_per_node = p.value("qubits_per_node", ph.qubits_per_node);
    }
    if (j.contains("workload")) {
      const auto& w = j.at("workload");
      c.workload.lambda_ms = w.value("lambda_ms", c.workload.lambda_ms);
      c.workload.lambda_is_rate = w.value("lambda_is_rate", c.workload.lambda_is_rate);
      c.workload.min_pairs = w.value("min_pairs", c.workload.min_pairs);
      c.workload.max_pairs = w.value("max_pairs", c.workload.max_pairs);
    }
    if (j.contains("esp")) {
      const auto& e = j.at("esp");
      c.esp.guard = SimTime(e.value("guard_ns", c.esp.guard.ns));
      c.esp.wake_timeout = e.value("wake_timeout", c.esp.wake_timeout);
      const auto policy = e.value("syn_sent_policy", std::string(to_string(c.esp.syn_sent_policy)));
      if (policy == "accept") c.esp.syn_sent_policy = esp::SynSentPolicy::kAccept;
      else if (policy == "priority") c.esp.syn_sent_policy = esp::SynSentPolicy::kPriority;
      else throw ConfigError("esp.syn_sent_policy must be 'accept' or 'priority'");
    }
    if (j.contains("dqp")) {
      const auto& d = j.at("dqp");
      c.dqp.scheduler_link_length_m = d.value("scheduler_link_length_m", c.dqp.scheduler_link_length_m);
      c.dqp.guard = SimTime(d.value("guard_ns", c.dqp.guard.ns));
    }
    if (j.contains("request_timeout") && j.at("request_timeout").value("enabled", false))
      throw ConfigError("request_timeout is not supported (stub only; must stay disabled)");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json protocols = nlohmann::json::array();
  for (auto p : c.protocols) protocols.push_back(std::string(to_string(p)));
  return {
      {"topologies", c.topologies},
      {"protocols", protocols},
      {"fidelities", c.fidelities},
      {"sim_time_s", c.sim_time_s},
      {"seeds", c.seeds},
      {"per_request_csv", c.per_request_csv},
      {"jobs", c.jobs},
      {"liveness_margin_s", c.liveness_margin_s},
      {"physics",
       {{"link_length_m", c.physics.link_length_m},
        {"heralding_position", c.physics.heralding_position},
        {"detection_window_ns", c.physics.detection_window_ns},
        {"fiber_speed_mps", c.physics.fiber_speed_mps},
        {"detection_efficiency", c.physics.detection_efficiency},
        {"clock_period_min_ns", c.physics.clock_period_min_ns},
        {"clock_period_max_ns", c.physics.clock_period_max_ns},
        {"qubits_per_node", c.physics.qubits_per_node}}},
      {"workload",
       {{"lambda_ms", c.workload.lambda_ms},
        {"lambda_is_rate", c.workload.lambda_is_rate},
        {"min_pairs", c.workload.min_pairs},
        {"max_pairs", c.workload.max_pairs}}},
      {"esp",
       {{"guard_ns", c.esp.guard.ns},
        {"wake_timeout", c.esp.wake_timeout},
        {"syn_sent_policy", std::string(to_string(c.esp.syn_sent_policy))}}},
      {"dqp", {{"scheduler_link_length_m", c.dqp.scheduler_link_length_m}, {"guard_ns", c.dqp.guard.ns}}},
      {"request_timeout", {{"enabled", false}}},
  };
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

struct Cell {
  std::string topology;
  ProtocolKind protocol = ProtocolKind::kEsp;
  double fidelity = 0.75;
  std::uint64_t seed = 1;
};

/// Pairs every SYNREJ a node emits with the WAKE it later sends back.
class WakeAudit {
 public:
  void on_send(SimTime t, const esp::Message& m) {
    const auto k = key(m.from, m.to);
    if (m.kind == esp::MessageKind::kSynRej) {
      auto& q = pending_[k];
      if (!q.empty()) ++coalesced_;
      q.push_back(t);
    } else if (m.kind == esp::MessageKind::kWake) {
      auto& q = pending_[k];
      if (q.empty()) ++unmatched_wakes_;
      else q.erase(q.begin());
      ++wakes_;
    }
    if (m.kind == esp::MessageKind::kSynRej) ++synrejs_;
  }

  /// SYNREJs emitted before `cutoff` that never got their WAKE.
  std::size_t unpaired_before(SimTime cutoff) const {
    std::size_t n = 0;
    for (const auto& [k, q] : pending_)
      for (SimTime t : q) n += t < cutoff ? 1 : 0;
    return n;
  }

  std::size_t synrejs() const { return synrejs_; }
  std::size_t wakes() const { return wakes_; }
  std::size_t unmatched_wakes() const { return unmatched_wakes_; }
  std::size_t coalesced() const { return coalesced_; }

 private:
  static std::uint64_t key(NodeId a, NodeId b) { return (std::uint64_t{to_index(a)} << 32) | to_index(b); }
  std::map<std::uint64_t, std::vector<SimTime>> pending_;
  std::size_t synrejs_ = 0, wakes_ = 0, unmatched_wakes_ = 0, coalesced_ = 0;
};

struct CellResult {
  Cell cell;
  metrics::RunSummary summary;
  std::vector<RequestTimeline> timelines;
  std::vector<std::string> node_names;
  bool ok = false;
  bool invariant_violation = false;
  std::string error;
  std::uint64_t generations = 0;
  std::uint64_t attempts = 0;
  std::size_t stalled = 0;  // submitted before sim_time - margin yet unfinished
  std::size_t synrejs = 0;
  std::size_t wakes = 0;
  std::size_t unmatched_wakes = 0;
  std::size_t unpaired_synrejs = 0;
  std::size_t coalesced_synrejs = 0;
  double wall_seconds = 0.0;
};

struct RunHooks {
  std::ostream* event_trace = nullptr;
  std::ostream* protocol_trace = nullptr;
};

/// Simulates one (topology, protocol, fidelity, seed) cell to sim_time.
/// Invariant violations are reported in the result, not thrown.
inline CellResult run_one(const ExperimentConfig& cfg, const Cell& cell, const RunHooks& hooks = {}) {
  const auto wall0 = std::chrono::steady_clock::now();
  CellResult res;
  res.cell = cell;
  const Topology topology = build_topology(parse_topology_spec(cell.topology));
  for (const auto& n : topology.names()) res.node_names.push_back(n);
  Engine engine(cell.seed);
  engine.keep_recent(16);
  if (hooks.event_trace) engine.set_trace(hooks.event_trace);
  PhysicalLayer phys(engine, topology, cfg.physics);
  WakeAudit audit;
  std::unique_ptr<ControlProtocol> protocol;
  if (cell.protocol == ProtocolKind::kEsp) {
    auto p = std::make_unique<esp::Protocol>(engine, topology, phys, cfg.esp);
    p->set_event_summaries(hooks.event_trace != nullptr);
    p->set_send_observer([&audit](SimTime t, const esp::Message& m) { audit.on_send(t, m); });
    protocol = std::move(p);
  } else {
    protocol = std::make_unique<dqp::Protocol>(engine, topology, phys, cfg.dqp);
  }
  if (hooks.protocol_trace)
    protocol->set_trace([os = hooks.protocol_trace](const ProtocolTraceRecord& r) { *os << format_trace_line(r) << '\n'; });
  Workload workload(engine, topology, *protocol, cell.fidelity, cfg.workload);
  workload.start();
  const SimTime end = cfg.sim_time();
  try {
    engine.run_until(end);
    res.ok = true;
  } catch (const InvariantViolation& e) {
    res.invariant_violation = true;
    std::ostringstream os;
    os << e.what() << "\nrecent events:";
    for (const auto& line : engine.recent()) os << "\n  " << line;
    res.error = os.str();
  }
  res.timelines = protocol->timelines();
  res.generations = phys.monitor().generations();
  res.attempts = phys.attempts();
  const SimTime cutoff = end - SimTime::from_seconds(cfg.liveness_margin_s);
  for (const auto& tl : res.timelines)
    if (!tl.complete() && tl.nl_start < cutoff) ++res.stalled;
  res.synrejs = audit.synrejs();
  res.wakes = audit.wakes();
  res.unmatched_wakes = audit.unmatched_wakes();
  res.unpaired_synrejs = audit.unpaired_before(cutoff);
  res.coalesced_synrejs = audit.coalesced();

  res.summary = metrics::summarize(res.timelines, topology.edge_count(), end);
  res.summary.topology = cell.topology;
  res.summary.protocol = std::string(to_string(cell.protocol));
  res.summary.fidelity = cell.fidelity;
  res.summary.seed = cell.seed;
  res.summary.matching = matching_number(topology);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return res;
}

// ---- CSV output -----------------------------------------------------------

inline std::string fmt_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline const char* kRequestCsvHeader =
    "request_id,topology,protocol,fidelity,edge,pairs,NL_start_ns,PL_start_ns,PL_finish_ns,NL_finish_ns";

inline void write_requests_csv(std::ostream& os, const CellResult& r, bool header = true) {
  if (header) os << kRequestCsvHeader << '\n';
  auto opt = [](const std::optional<SimTime>& t) { return t ? std::to_string(t->ns) : std::string(); };
  for (const auto& tl : r.timelines) {
    const auto& init = r.node_names[to_index(tl.initiator)];
    const NodeId other = tl.edge.a == tl.initiator ? tl.edge.b : tl.edge.a;
    os << to_index(tl.id) << ',' << r.cell.topology << ',' << to_string(r.cell.protocol) << ','
       << fmt_fixed(r.cell.fidelity, 2) << ',' << init << '-' << r.node_names[to_index(other)] << ',' << tl.pairs << ','
       << tl.nl_start.ns << ',' << opt(tl.pl_start) << ',' << opt(tl.pl_finish) << ',' << opt(tl.nl_finish) << '\n';
  }
}

inline const char* kSummaryCsvHeader =
    "topology,protocol,fidelity,seed,edges,matching,requests,incomplete,mean_latency_ms,jitter_ms,"
    "mean_scaled_latency_ms,throughput,mean_busy_ms,mean_queue_ms";

inline void write_summary_row(std::ostream& os, const metrics::RunSummary& s) {
  os << s.topology << ',' << s.protocol << ',' << fmt_fixed(s.fidelity, 2) << ',' << s.seed << ',' << s.edges << ','
     << s.matching << ',' << s.requests << ',' << s.incomplete << ',' << fmt_fixed(s.mean_latency_ms, 3) << ','
     << fmt_fixed(s.jitter_ms, 3) << ',' << fmt_fixed(s.mean_scaled_latency_ms, 3) << ','
     << fmt_fixed(s.throughput, 6) << ',' << fmt_fixed(s.mean_busy_ms, 3) << ',' << fmt_fixed(s.mean_queue_ms, 3)
     << '\n';
}

inline void write_summary_csv(std::ostream& os, const std::vector<metrics::RunSummary>& rows) {
  os << kSummaryCsvHeader << '\n';
  for (const auto& s : rows) write_summary_row(os, s);
}

inline std::vector<metrics::RunSummary> read_summary_csv(std::istream& in) {
  std::vector<metrics::RunSummary> rows;
  std::string line;
  if (!std::getline(in, line) || line != kSummaryCsvHeader) throw ConfigError("summary CSV has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 14) throw ConfigError("summary CSV row has " + std::to_string(f.size()) + " fields");
    metrics::RunSummary s;
    try {
      s.topology = f[0];
      s.protocol = f[1];
      s.fidelity = std::stod(f[2]);
      s.seed = std::stoull(f[3]);
      s.edges = std::stoul(f[4]);
      s.matching = std::stoi(f[5]);
      s.requests = std::stoul(f[6]);
      s.incomplete = std::stoul(f[7]);
      s.mean_latency_ms = std::stod(f[8]);
      s.jitter_ms = std::stod(f[9]);
      s.mean_scaled_latency_ms = std::stod(f[10]);
      s.throughput = std::stod(f[11]);
      s.mean_busy_ms = std::stod(f[12]);
      s.mean_queue_ms = std::stod(f[13]);
    } catch (const std::exception&) {
      throw ConfigError("summary CSV row is malformed: " + line);
    }
    rows.push_back(s);
  }
  return rows;
}

// ---- Sweeps ----------------------------------------------------------------

inline std::vector<Cell> expand_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const auto& t : cfg.topologies)
    for (auto p : cfg.protocols)
      for (double f : cfg.fidelities)
        for (auto s : cfg.seeds) cells.push_back(Cell{t, p, f, s});
  return cells;
}

/// Runs every cell; cells are independent and may run on several threads.
/// Results come back in expand_cells() order regardless of scheduling.
/// `on_done` sees each result (timelines included) under a lock; with
/// keep_timelines=false the timelines are dropped afterwards so large sweeps
/// hold only summaries.
template <typename OnDone>
std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells, OnDone&& on_done,
                                  bool keep_timelines = true) {
  std::vector<CellResult> results(cells.size());
  unsigned jobs = cfg.jobs ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, cells.size())));
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      CellResult r;
      try {
        r = run_one(cfg, cells[i]);
      } catch (const std::exception& e) {
        r.cell = cells[i];
        r.error = e.what();
      }
      std::lock_guard lock(done_mu);
      on_done(r);
      if (!keep_timelines) std::vector<RequestTimeline>().swap(r.timelines);
      results[i] = std::move(r);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

inline std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const std::vector<Cell>& cells) {
  return run_cells(cfg, cells, [](const CellResult&) {});
}

// ---- Reporting --------------------------------------------------------------

/// Seed-averaged means for one (topology, protocol, fidelity).
struct Aggregate {
  std::string topology;
  std::string protocol;
  double fidelity = 0.0;
  std::size_t edges = 0;
  int matching = 0;
  std::size_t seeds = 0;
  double mean_latency_ms = 0.0;
  double latency_seed_sd_ms = 0.0;
  double mean_jitter_ms = 0.0;
  double mean_scaled_latency_ms = 0.0;
  double throughput = 0.0;
  double mean_busy_ms = 0.0;
  double mean_queue_ms = 0.0;
};

inline std::string fidelity_key(double f) { return fmt_fixed(f, 2); }

/// Keyed (topology, protocol, fidelity "0.75"); independent of row order.
using AggregateTable = std::map<std::tuple<std::string, std::string, std::string>, Aggregate>;

inline AggregateTable aggregate(const std::vector<metrics::RunSummary>& rows) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const metrics::RunSummary*>> groups;
  for (const auto& r : rows) groups[{r.topology, r.protocol, fidelity_key(r.fidelity)}].push_back(&r);
  AggregateTable out;
  for (auto& [k, g] : groups) {
    // Sort by seed so floating-point sums do not depend on input order.
    std::sort(g.begin(), g.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    Aggregate a;
    a.topology = std::get<0>(k);
    a.protocol = std::get<1>(k);
    a.fidelity = g.front()->fidelity;
    a.edges = g.front()->edges;
    a.matching = g.front()->matching;
    a.seeds = g.size();
    std::vector<double> lat;
    for (auto* r : g) {
      lat.push_back(r->mean_latency_ms);
      a.mean_jitter_ms += r->jitter_ms;
      a.mean_scaled_latency_ms += r->mean_scaled_latency_ms;
      a.throughput += r->throughput;
      a.mean_busy_ms += r->mean_busy_ms;
      a.mean_queue_ms += r->mean_queue_ms;
    }
    const double n = static_cast<double>(g.size());
    a.mean_latency_ms = metrics::mean(lat);
    a.latency_seed_sd_ms = metrics::jitter(lat);
    a.mean_jitter_ms /= n;
    a.mean_scaled_latency_ms /= n;
    a.throughput /= n;
    a.mean_busy_ms /= n;
    a.mean_queue_ms /= n;
    out.emplace(k, a);
  }
  return out;
}

inline nlohmann::json fit_json(const metrics::LinearFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared}};
}

/// Latency/jitter regressions against |E_Q|, per protocol, at one fidelity.
/// Returns nothing for a protocol with fewer than two distinct edge counts.
inline std::optional<metrics::LinearFit> edges_fit(const AggregateTable& t, const std::string& protocol,
                                                   const std::string& fkey, bool jitter) {
  std::vector<metrics::Point> pts;
  for (const auto& [k, a] : t)
    if (std::get<1>(k) == protocol && std::get<2>(k) == fkey)
      pts.push_back({static_cast<double>(a.edges), jitter ? a.mean_jitter_ms : a.mean_latency_ms});
  try {
    return metrics::linear_fit(pts);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

struct MatchingGroup {
  int matching = 0;
  std::vector<std::string> topologies;
  double mean_abs_pct_diff = 0.0;
  double mean_improvement_pct = 0.0;  // (DQP - ESP) / DQP * 100
};

inline std::vector<MatchingGroup> matching_groups(const AggregateTable& t, const std::string& fkey) {
  std::map<int, MatchingGroup> groups;
  std::map<int, std::size_t> counts;
  for (const auto& [k, esp] : t) {
    if (std::get<1>(k) != "esp" || std::get<2>(k) != fkey) continue;
    auto d = t.find({std::get<0>(k), "dqp", fkey});
    if (d == t.end() || d->second.mean_latency_ms <= 0.0) continue;
    const double pct = (esp.mean_latency_ms - d->second.mean_latency_ms) / d->second.mean_latency_ms * 100.0;
    auto& g = groups[esp.matching];
    g.matching = esp.matching;
    g.topologies.push_back(esp.topology);
    g.mean_abs_pct_diff += std::abs(pct);
    g.mean_improvement_pct += -pct;
    ++counts[esp.matching];
  }
  std::vector<MatchingGroup> out;
  for (auto& [nu, g] : groups) {
    g.mean_abs_pct_diff /= static_cast<double>(counts[nu]);
    g.mean_improvement_pct /= static_cast<double>(counts[nu]);
    out.push_back(g);
  }
  return out;
}

struct FidelityRange {
  std::string topology;
  std::string protocol;
  double f_low = 0.0, f_high = 0.0;
  double latency_range_ms = 0.0;  // L(f_high) - L(f_low)
};

inline std::vector<FidelityRange> fidelity_ranges(const AggregateTable& t) {
  std::map<std::pair<std::string, std::string>, std::vector<const Aggregate*>> by;
  for (const auto& [k, a] : t) by[{a.topology, a.protocol}].push_back(&a);
  std::vector<FidelityRange> out;
  for (auto& [k, v] : by) {
    if (v.size() < 2) continue;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end(), [](auto* x, auto* y) { return x->fidelity < y->fidelity; });
    out.push_back({k.first, k.second, (*lo)->fidelity, (*hi)->fidelity,
                   (*hi)->mean_latency_ms - (*lo)->mean_latency_ms});
  }
  return out;
}

/// Regressions, the per-topology comparison table, matching-number groups
/// and fidelity ranges, as one JSON document.
inline nlohmann::json build_report(const std::vector<metrics::RunSummary>& rows) {
  const AggregateTable t = aggregate(rows);
  std::set<std::string> fkeys;
  for (const auto& [k, a] : t) fkeys.insert(std::get<2>(k));
  nlohmann::json report;
  report["per_fidelity"] = nlohmann::json::array();
  for (const auto& fk : fkeys) {
    nlohmann::json fj;
    fj["fidelity"] = std::stod(fk);
    for (const char* what : {"latency", "jitter"})
      for (const char* proto : {"esp", "dqp"})
        if (auto fit = edges_fit(t, proto, fk, std::string(what) == "jitter")) fj["regressions"][what][proto] = fit_json(*fit);
    if (fj.contains("regressions") && fj["regressions"].contains("latency") &&
        fj["regressions"]["latency"].contains("esp") && fj["regressions"]["latency"].contains("dqp")) {
      const double esp_slope = fj["regressions"]["latency"]["esp"]["slope"].get<double>();
      const double dqp_slope = fj["regressions"]["latency"]["dqp"]["slope"].get<double>();
      if (esp_slope != 0.0) fj["latency_slope_ratio_dqp_over_esp"] = dqp_slope / esp_slope;
    }
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [k, a] : t) {
      if (std::get<2>(k) != fk) continue;
      table.push_back({{"topology", a.topology},
                       {"protocol", a.protocol},
                       {"edges", a.edges},
                       {"matching", a.matching},
                       {"seeds", a.seeds},
                       {"mean_latency_ms", a.mean_latency_ms},
                       {"latency_seed_sd_ms", a.latency_seed_sd_ms},
                       {"mean_jitter_ms", a.mean_jitter_ms},
                       {"mean_scaled_latency_ms", a.mean_scaled_latency_ms},
                       {"throughput", a.throughput},
                       {"mean_busy_ms", a.mean_busy_ms},
                       {"mean_queue_ms", a.mean_queue_ms}});
    }
    fj["table"] = table;
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : matching_groups(t, fk))
      groups.push_back({{"matching", g.matching},
                        {"topologies", g.topologies},
                        {"mean_abs_pct_diff", g.mean_abs_pct_diff},
                        {"mean_improvement_pct", g.mean_improvement_pct}});
    fj["matching_groups"] = groups;
    report["per_fidelity"].push_back(fj);
  }
  nlohmann::json ranges = nlohmann::json::array();
  for (const auto& r : fidelity_ranges(t))
    ranges.push_back({{"topology", r.topology},
                      {"protocol", r.protocol},
                      {"f_low", r.f_low},
                      {"f_high", r.f_high},
                      {"latency_range_ms", r.latency_range_ms}});
  report["fidelity_ranges"] = ranges;
  return report;
}

/// Human-readable rendering of build_report().
inline void print_report(std::ostream& os, const nlohmann::json& report) {
  for (const auto& fj : report.at("per_fidelity")) {
    os << "== F = " << fmt_fixed(fj.at("fidelity").get<double>(), 2) << " ==\n";
    os << "topology        edges  nu  DQP L(ms)  DQP J(ms)  ESP L(ms)  ESP J(ms)\n";
    std::map<std::string, std::map<std::string, nlohmann::json>> rows;
    for (const auto& r : fj.at("table")) rows[r.at("topology").get<std::string>()][r.at("protocol").get<std::string>()] = r;
    for (const auto& [topo, by] : rows) {
      char line[160];
      auto get = [&](const char* p, const char* f) {
        auto it = by.find(p);
        return it == by.end() ? 0.0 : it->second.at(f).get<double>();
      };
      const auto& any = by.begin()->second;
      std::snprintf(line, sizeof line, "%-15s %5zu %3d %10.2f %10.2f %10.2f %10.2f\n", topo.c_str(),
                    any.at("edges").get<std::size_t>(), any.at("matching").get<int>(), get("dqp", "mean_latency_ms"),
                    get("dqp", "mean_jitter_ms"), get("esp", "mean_latency_ms"), get("esp", "mean_jitter_ms"));
      os << line;
    }
    if (fj.contains("regressions")) {
      for (const auto& [what, protos] : fj.at("regressions").items())
        for (const auto& [proto, fit] : protos.items())
          os << what << " vs |E_Q| " << proto << ": m=" << fmt_fixed(fit.at("slope").get<double>(), 3)
             << " c=" << fmt_fixed(fit.at("intercept").get<double>(), 3)
             << " R2=" << fmt_fixed(fit.at("r_squared").get<double>(), 3) << '\n';
    }
    for (const auto& g : fj.at("matching_groups"))
      os << "nu=" << g.at("matching").get<int>() << ": mean |diff| "
         << fmt_fixed(g.at("mean_abs_pct_diff").get<double>(), 2) << "%, mean improvement "
         << fmt_fixed(g.at("mean_improvement_pct").get<double>(), 2) << "%\n";
  }
  if (!report.at("fidelity_ranges").empty()) {
    os << "== latency range over fidelity ==\n";
    for (const auto& r : report.at("fidelity_ranges"))
      os << r.at("topology").get<std::string>() << ' ' << r.at("protocol").get<std::string>() << ": "
         << fmt_fixed(r.at("latency_range_ms").get<double>(), 2) << " ms (F " << fmt_fixed(r.at("f_low").get<double>(), 2)
         << " -> " << fmt_fixed(r.at("f_high").get<double>(), 2) << ")\n";
  }
}

inline std::string cell_file_stem(const Cell& c) {
  std::string t = c.topology;
  std::replace(t.begin(), t.end(), ':', '-');
  return t + "_" + std::string(to_string(c.protocol)) + "_F" + fidelity_key(c.fidelity) + "_s" + std::to_string(c.seed);
}

}  // namespace qlink
