#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qlink/network.hpp"

namespace qlink {

struct WorkloadOptions {
  double lambda_ms = 50.0;       // mean backoff, or a rate in 1/s when lambda_is_rate
  bool lambda_is_rate = false;
  int min_pairs = 1;
  int max_pairs = 6;

  double mean_backoff_ms() const { return lambda_is_rate ? 1000.0 / lambda_ms : lambda_ms; }

  void validate(int qubits_per_node) const {
    if (!(lambda_ms > 0.0)) throw ConfigError("workload lambda must be > 0");
    if (min_pairs < 1 || max_pairs < min_pairs) throw ConfigError("request size range must satisfy 1 <= min <= max");
    if (max_pairs > qubits_per_node) throw ConfigError("request size exceeds qubits per node");
  }
};

struct SampledRequest {
  NodeId initiator{};
  NodeId remote{};
  int pairs = 1;
};

/// Closed-loop generator for one edge: at most one outstanding request.
class EdgeGenerator {
 public:
  EdgeGenerator(Edge edge, WorkloadOptions options, RngStream rng)
      : edge_(edge), options_(options), rng_(std::move(rng)) {}

  const Edge& edge() const { return edge_; }
  bool outstanding() const { return outstanding_; }
  void set_outstanding(bool v) { outstanding_ = v; }
  std::uint64_t submitted() const { return submitted_; }
  void count_submission() { ++submitted_; }

  /// Exponential backoff, strictly positive once rounded up to ns.
  SimTime sample_backoff() {
    const double ns = rng_.exponential(options_.mean_backoff_ms() * 1e6);
    return SimTime(std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(ns))));
  }

  /// Fair coin over the endpoints, uniform request size.
  SampledRequest sample_request() {
    const bool flip = rng_.uniform_int(0, 1) == 1;
    const int pairs = static_cast<int>(rng_.uniform_int(options_.min_pairs, options_.max_pairs));
    return flip ? SampledRequest{edge_.b, edge_.a, pairs} : SampledRequest{edge_.a, edge_.b, pairs};
  }

 private:
  Edge edge_;
  WorkloadOptions options_;
  RngStream rng_;
  bool outstanding_ = false;
  std::uint64_t submitted_ = 0;
};

/// One generator per edge of the quantum topology, feeding a protocol.
class Workload {
 public:
  Workload(Engine& engine, const Topology& topology, ControlProtocol& protocol, double fidelity,
           WorkloadOptions options)
      : engine_(engine), topology_(topology), protocol_(protocol), fidelity_(fidelity) {
    for (const Edge& e : topology.edges()) {
      index_.emplace(key(e), generators_.size());
      generators_.emplace_back(e, options, engine.rng_stream("workload:" + topology.edge_label(e)));
    }
    protocol_.set_completion_listener([this](const RequestTimeline& tl) { on_complete(tl); });
  }

  /// Every edge submits its first request at now().
  void start() {
    for (std::size_t g = 0; g < generators_.size(); ++g)
      engine_.schedule_in(EventKind::kRequestArrival, SimTime(0), [this, g] { submit(g); },
                          "first_request edge=" + topology_.edge_label(generators_[g].edge()));
  }

  const std::vector<EdgeGenerator>& generators() const { return generators_; }

 private:
  static std::uint64_t key(const Edge& e) { return (std::uint64_t{to_index(e.a)} << 32) | to_index(e.b); }

  void submit(std::size_t g) {
    auto& gen = generators_[g];
    if (gen.outstanding()) throw InvariantViolation("closed-loop generator would have two outstanding requests");
    const SampledRequest s = gen.sample_request();
    gen.set_outstanding(true);
    gen.count_submission();
    protocol_.submit(s.initiator, s.remote, fidelity_, s.pairs);
  }

  void on_complete(const RequestTimeline& tl) {
    const std::size_t g = index_.at(key(tl.edge));
    auto& gen = generators_[g];
    gen.set_outstanding(false);
    engine_.schedule_in(EventKind::kWorkloadTimer, gen.sample_backoff(), [this, g] { submit(g); },
                        "backoff_expired edge=" + topology_.edge_label(gen.edge()));
  }

  Engine& engine_;
  const Topology& topology_;
  ControlProtocol& protocol_;
  double fidelity_;
  std::vector<EdgeGenerator> generators_;
  std::map<std::uint64_t, std::size_t> index_;
};

}  // namespace qlink
