#pragma once

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qlink/network.hpp"

namespace qlink::dqp {

enum class MessageKind { kEnqueue, kGrant, kComplete };

constexpr std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kEnqueue: return "ENQUEUE";
    case MessageKind::kGrant: return "GRANT";
    case MessageKind::kComplete: return "COMPLETE";
  }
  return "?";
}

struct Options {
  double scheduler_link_length_m = 2000.0;
  SimTime guard = SimTime(1000);
};

struct SchedulerState {
  std::deque<RequestId> queue;
  std::optional<RequestId> active;
  std::vector<RequestId> arrival_order;  // ENQUEUE arrival order at S
};

/// Centralized baseline: one global FIFO at scheduler S, served strictly
/// from the head, one request network-wide at a time.
class Protocol final : public ControlProtocol {
 public:
  Protocol(Engine& engine, const Topology& topology, PhysicalLayer& phys, Options options = {})
      : engine_(engine),
        topology_(topology),
        phys_(phys),
        options_(options),
        plane_(control_plane(topology, ProtocolKind::kDqp)),
        hop_(propagation_delay(options.scheduler_link_length_m, phys.physics())),
        busy_(topology.node_count(), false) {}

  RequestId submit(NodeId initiator, NodeId remote, double fidelity, int pairs) override {
    return node_submit(initiator, remote, fidelity, pairs);
  }

  RequestId node_submit(NodeId initiator, NodeId remote, double fidelity, int pairs) {
    if (!topology_.adjacent(initiator, remote)) throw std::invalid_argument("request endpoints are not adjacent");
    if (pairs < 1) throw std::invalid_argument("pairs must be >= 1");
    Request r;
    r.id = RequestId(requests_.size());
    r.initiator = initiator;
    r.remote = remote;
    r.fidelity = fidelity;
    r.pairs = pairs;
    r.created_at = engine_.now();
    requests_.push_back(r);
    RequestTimeline tl;
    tl.id = r.id;
    tl.edge = make_edge(initiator, remote);
    tl.initiator = initiator;
    tl.pairs = pairs;
    tl.fidelity = fidelity;
    tl.nl_start = engine_.now();
    timelines_.push_back(tl);
    trace_node(initiator, "send_ENQUEUE", detail_req(r));
    send(MessageKind::kEnqueue, r.id, initiator, [this, id = r.id] { on_enqueue(id); });
    return r.id;
  }

  void scheduler_dispatch() {
    if (sched_.active || sched_.queue.empty()) return;
    const RequestId id = sched_.queue.front();
    sched_.queue.pop_front();
    sched_.active = id;
    Request& r = requests_[to_index(id)];
    r.t_min = engine_.now() + hop_ + options_.guard;
    trace_scheduler("IDLE", "dispatch", "BUSY", detail_req(r) + " t_min=" + std::to_string(r.t_min->ns));
    for (NodeId n : {r.initiator, r.remote})
      send(MessageKind::kGrant, id, n, [this, id, n] { on_grant(id, n); });
  }

  /// Initiator-side completion: COMPLETE goes to S.
  void node_complete(NodeId n, RequestId id) {
    const Request& r = requests_[to_index(id)];
    if (n != r.initiator) throw InvariantViolation("COMPLETE must come from the initiator");
    trace_node(n, "send_COMPLETE", detail_req(r));
    send(MessageKind::kComplete, id, n, [this, id] { on_scheduler_complete(id); });
  }

  const std::vector<RequestTimeline>& timelines() const override { return timelines_; }
  const SchedulerState& scheduler() const { return sched_; }
  const ControlPlane& plane() const { return plane_; }
  SimTime hop_delay() const { return hop_; }

 private:
  void on_enqueue(RequestId id) {
    const std::string before = sched_.active ? "BUSY" : "IDLE";
    sched_.queue.push_back(id);
    sched_.arrival_order.push_back(id);
    trace_scheduler(before, "recv_ENQUEUE", before,
                    detail_req(requests_[to_index(id)]) + " depth=" + std::to_string(sched_.queue.size()));
    scheduler_dispatch();
  }

  void on_grant(RequestId id, NodeId n) {
    const Request& r = requests_[to_index(id)];
    if (busy_[to_index(n)]) throw InvariantViolation("GRANT delivered to a node that is already generating");
    busy_[to_index(n)] = true;
    trace_node(n, "recv_GRANT", detail_req(r), "IDLE", "BUSY");
    phys_.endpoint_ready(r, n, *r.t_min, [this, id](const BusySpan& span) { on_generation_complete(id, span); });
  }

  void on_generation_complete(RequestId id, const BusySpan& span) {
    const Request& r = requests_[to_index(id)];
    RequestTimeline& tl = timelines_[to_index(id)];
    tl.pl_start = span.pl_start;
    tl.pl_finish = span.pl_finish;
    tl.nl_finish = engine_.now();
    busy_[to_index(r.initiator)] = false;
    busy_[to_index(r.remote)] = false;
    node_complete(r.initiator, id);
    notify_complete(tl);
  }

  void on_scheduler_complete(RequestId id) {
    if (sched_.active != id)
      throw InvariantViolation("COMPLETE for a request that is not active: req=" + std::to_string(to_index(id)));
    sched_.active.reset();
    trace_scheduler("BUSY", "recv_COMPLETE", "IDLE", "req=" + std::to_string(to_index(id)));
    scheduler_dispatch();
  }

  template <typename F>
  void send(MessageKind k, RequestId id, NodeId endpoint, F&& on_arrival) {
    std::string summary = std::string(to_string(k)) + " ";
    summary += k == MessageKind::kGrant ? "S->" + topology_.name(endpoint) : topology_.name(endpoint) + "->S";
    summary += " req=" + std::to_string(to_index(id));
    engine_.schedule_in(EventKind::kMessageDelivery, hop_, std::forward<F>(on_arrival), std::move(summary));
  }

  std::string detail_req(const Request& r) const {
    return "req=" + std::to_string(to_index(r.id)) + " edge=" + topology_.name(r.initiator) + ">" +
           topology_.name(r.remote) + " pairs=" + std::to_string(r.pairs);
  }

  void trace_node(NodeId n, std::string_view event, const std::string& detail, std::string_view before = {},
                  std::string_view after = {}) const {
    if (!tracing()) return;
    const std::string state = busy_[to_index(n)] ? "BUSY" : "IDLE";
    emit(ProtocolTraceRecord{engine_.now(), topology_.name(n), before.empty() ? state : std::string(before),
                             std::string(event), after.empty() ? state : std::string(after), detail});
  }

  void trace_scheduler(std::string_view before, std::string_view event, std::string_view after,
                       const std::string& detail) const {
    if (!tracing()) return;
    emit(ProtocolTraceRecord{engine_.now(), "S", std::string(before), std::string(event), std::string(after), detail});
  }

  Engine& engine_;
  const Topology& topology_;
  PhysicalLayer& phys_;
  Options options_;
  ControlPlane plane_;
  SimTime hop_;
  SchedulerState sched_;
  std::vector<bool> busy_;
  std::vector<Request> requests_;
  std::vector<RequestTimeline> timelines_;
};

}  // namespace qlink::dqp
