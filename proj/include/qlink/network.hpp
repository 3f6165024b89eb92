#pragma once

#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qlink/engine.hpp"
#include "qlink/physical_layer.hpp"
#include "qlink/request.hpp"
#include "qlink/topology.hpp"

namespace qlink {

/// Tracks x_ij: which link each node is actively generating on. Fails the
/// run the moment a node would take part in two generations at once.
class InvariantMonitor {
 public:
  explicit InvariantMonitor(std::size_t nodes) : active_(nodes), last_finish_(nodes) {}

  void begin(RequestId r, NodeId a, NodeId b, SimTime start, SimTime finish) {
    for (NodeId n : {a, b}) {
      const auto i = to_index(n);
      if (active_[i]) fail(n, r, "node already generating for request " + std::to_string(to_index(*active_[i])));
      if (last_finish_[i] > start) fail(n, r, "generation starts before the node's previous one finished");
    }
    for (NodeId n : {a, b}) {
      active_[to_index(n)] = r;
      last_finish_[to_index(n)] = finish;
    }
    ++generations_;
  }

  void end(RequestId r, NodeId a, NodeId b) {
    for (NodeId n : {a, b}) {
      if (active_[to_index(n)] != r) fail(n, r, "generation end for a request the node is not generating");
      active_[to_index(n)].reset();
    }
  }

  bool generating(NodeId n) const { return active_.at(to_index(n)).has_value(); }
  std::uint64_t generations() const { return generations_; }
  const std::vector<std::string>& violations() const { return violations_; }

  [[noreturn]] void fail(NodeId n, RequestId r, const std::string& what) {
    std::ostringstream os;
    os << "mutual exclusion violated at node " << to_index(n) << " (request " << to_index(r) << "): " << what;
    violations_.push_back(os.str());
    throw InvariantViolation(os.str());
  }

 private:
  std::vector<std::optional<RequestId>> active_;
  std::vector<SimTime> last_finish_;
  std::vector<std::string> violations_;
  std::uint64_t generations_ = 0;
};

struct ProtocolTraceRecord {
  SimTime time;
  std::string node;
  std::string before;
  std::string event;
  std::string after;
  std::string detail;
};

/// `<time_ns>,<node>,<fsm_before>,<event>,<fsm_after>,<detail>`
inline std::string format_trace_line(const ProtocolTraceRecord& r) {
  std::ostringstream os;
  os << r.time.ns << ',' << r.node << ',' << r.before << ',' << r.event << ',' << r.after << ',' << r.detail;
  return os.str();
}

using ProtocolTraceSink = std::function<void(const ProtocolTraceRecord&)>;

/// Shared physical substrate: node clocks, per-link attempt streams, the
/// exclusivity monitor, and the joint start of a request's attempt process
/// once both endpoints are ready.
class PhysicalLayer {
 public:
  PhysicalLayer(Engine& engine, const Topology& topology, LinkPhysics physics)
      : engine_(engine), topology_(topology), physics_(physics), monitor_(topology.node_count()) {
    physics_.validate();
    for (std::uint32_t i = 0; i < topology.node_count(); ++i) {
      auto rng = engine.rng_stream("clock:" + topology.name(NodeId(i)));
      clocks_.push_back(NodeClock::sample(physics_, rng));
    }
    for (const Edge& e : topology.edges()) link_rngs_.emplace(key(e), engine.rng_stream("link:" + topology.edge_label(e)));
  }

  const LinkPhysics& physics() const { return physics_; }
  const NodeClock& clock(NodeId n) const { return clocks_.at(to_index(n)); }
  InvariantMonitor& monitor() { return monitor_; }
  const InvariantMonitor& monitor() const { return monitor_; }

  /// Endpoint `n` has entered BUSY for `r`. When both endpoints are in,
  /// attempts start at max(now, t_min) and `done` fires at PL_finish.
  void endpoint_ready(const Request& r, NodeId n, SimTime t_min, std::function<void(const BusySpan&)> done) {
    auto& s = sessions_[to_index(r.id)];
    if (n == r.initiator) s.initiator_ready = true;
    else if (n == r.remote) s.remote_ready = true;
    else throw InvariantViolation("endpoint_ready from a node that is not an endpoint");
    s.t_min = std::max(s.t_min, t_min);
    if (done) s.done = std::move(done);
    if (!(s.initiator_ready && s.remote_ready)) return;

    const SimTime start = std::max(engine_.now(), s.t_min);
    const double p = success_probability(alpha_for_fidelity(r.fidelity), physics_);
    const Edge e = make_edge(r.initiator, r.remote);
    auto span = generate_pairs(r.pairs, p, clock(r.initiator), clock(r.remote), physics_, link_rngs_.at(key(e)), start);
    attempts_ += span.attempts_total;
    monitor_.begin(r.id, r.initiator, r.remote, span.pl_start, span.pl_finish);
    auto finish = std::move(s.done);
    sessions_.erase(to_index(r.id));
    std::ostringstream summary;
    summary << "req=" << to_index(r.id) << " link=" << topology_.edge_label(e) << " attempts=" << span.attempts_total;
    engine_.schedule(
        EventKind::kAttemptCycle, span.pl_finish,
        [this, r, span, finish = std::move(finish)] {
          monitor_.end(r.id, r.initiator, r.remote);
          if (finish) finish(span);
        },
        summary.str());
  }

  std::uint64_t attempts() const { return attempts_; }

 private:
  struct Session {
    bool initiator_ready = false;
    bool remote_ready = false;
    SimTime t_min;
    std::function<void(const BusySpan&)> done;
  };

  static std::uint64_t key(const Edge& e) { return (std::uint64_t{to_index(e.a)} << 32) | to_index(e.b); }

  Engine& engine_;
  const Topology& topology_;
  LinkPhysics physics_;
  InvariantMonitor monitor_;
  std::vector<NodeClock> clocks_;
  std::map<std::uint64_t, RngStream> link_rngs_;
  std::unordered_map<std::uint64_t, Session> sessions_;
  std::uint64_t attempts_ = 0;
};

/// Common surface of the two control-plane protocols.
class ControlProtocol {
 public:
  using CompletionListener = std::function<void(const RequestTimeline&)>;
  virtual ~ControlProtocol() = default;

  /// Submits a request at now(). Throws std::invalid_argument if (initiator, remote) is not an edge.
  virtual RequestId submit(NodeId initiator, NodeId remote, double fidelity, int pairs) = 0;
  virtual const std::vector<RequestTimeline>& timelines() const = 0;

  void set_completion_listener(CompletionListener l) { on_complete_ = std::move(l); }
  void set_trace(ProtocolTraceSink sink) { trace_ = std::move(sink); }

 protected:
  void notify_complete(const RequestTimeline& tl) {
    if (on_complete_) on_complete_(tl);
  }
  void emit(const ProtocolTraceRecord& rec) const {
    if (trace_) trace_(rec);
  }
  bool tracing() const { return static_cast<bool>(trace_); }

 private:
  CompletionListener on_complete_;
  ProtocolTraceSink trace_;
};

}  // namespace qlink
