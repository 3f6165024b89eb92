#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qlink/network.hpp"

namespace qlink::esp {

enum class Fsm { kIdle, kSynSent, kSynReceived, kWakeSent, kReady, kBusy };

constexpr std::string_view to_string(Fsm s) {
  switch (s) {
    case Fsm::kIdle: return "IDLE";
    case Fsm::kSynSent: return "SYN_SENT";
    case Fsm::kSynReceived: return "SYN_RECEIVED";
    case Fsm::kWakeSent: return "WAKE_SENT";
    case Fsm::kReady: return "READY";
    case Fsm::kBusy: return "BUSY";
  }
  return "?";
}

/// A node is busy (holds its lock) in exactly these states.
constexpr bool lock_state(Fsm s) {
  return s == Fsm::kSynReceived || s == Fsm::kWakeSent || s == Fsm::kReady || s == Fsm::kBusy;
}

enum class MessageKind { kSyn, kSynAck, kSynRej, kAck, kNack, kWake };

constexpr std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kSyn: return "SYN";
    case MessageKind::kSynAck: return "SYNACK";
    case MessageKind::kSynRej: return "SYNREJ";
    case MessageKind::kAck: return "ACK";
    case MessageKind::kNack: return "NACK";
    case MessageKind::kWake: return "WAKE";
  }
  return "?";
}

struct Message {
  MessageKind kind = MessageKind::kSyn;
  NodeId from{};
  NodeId to{};
  // request_ref; unused for WAKE
  RequestId request{};
  NodeId initiator{};
  NodeId remote{};
  double fidelity = 0.0;
  int pairs = 0;
  SimTime created_at;
  std::optional<SimTime> t_min;  // SYNACK, echoed on ACK
};

struct WakeTicket {
  NodeId target{};
  std::uint64_t arrival_number = 0;
};

/// Q_main entry: an active request or a wake ticket, ordered by arrival number.
struct QueueEntry {
  std::uint64_t arrival_number = 0;
  bool wake = false;
  RequestId request{};  // active entries
  NodeId target{};      // wake entries

  friend bool operator<(const QueueEntry& x, const QueueEntry& y) { return x.arrival_number < y.arrival_number; }
};

struct NodeState {
  Fsm fsm = Fsm::kIdle;
  std::optional<RequestId> lock_request;  // holder when SYN_RECEIVED/READY/BUSY
  std::optional<WakeTicket> lock_wake;    // holder when WAKE_SENT
  std::multiset<QueueEntry> q_main;
  std::deque<RequestId> q_ready;
  std::vector<RequestId> s_sent;
  std::vector<RequestId> s_sleep;
  std::vector<WakeTicket> s_wake;
  std::set<std::uint32_t> queued_wake_targets;
  std::uint64_t next_arrival = 0;
  std::uint64_t reservation_epoch = 0;

  bool locked() const { return lock_request.has_value() || lock_wake.has_value(); }
};

/// How a node with a SYN outstanding treats an incoming SYN.
enum class SynSentPolicy {
  /// Accept exactly as IDLE would. Can livelock on cycles of crossing SYNs.
  kAccept,
  /// Accept only if the incoming request outranks our outstanding one on
  /// (created_at, initiator, id); otherwise reject and queue a wake ticket.
  kPriority,
};

struct Options {
  SimTime guard = SimTime(1000);
  SynSentPolicy syn_sent_policy = SynSentPolicy::kPriority;
  /// Bound WAKE_SENT reservations to 2 x propagation + guard. When false the
  /// waker stays reserved until the woken node's SYN arrives.
  bool wake_timeout = true;
};

struct Counters {
  std::uint64_t sent[6] = {};
  std::uint64_t dropped = 0;
  std::uint64_t wake_timeouts = 0;

  std::uint64_t operator[](MessageKind k) const { return sent[static_cast<int>(k)]; }
};

/// Decentralized synchronization: every node is a lockable resource, a
/// rejected initiator sleeps until the rejector wakes it.
class Protocol final : public ControlProtocol {
 public:
  Protocol(Engine& engine, const Topology& topology, PhysicalLayer& phys, Options options = {})
      : engine_(engine),
        topology_(topology),
        phys_(phys),
        options_(options),
        link_delay_(propagation_delay(phys.physics().link_length_m, phys.physics())),
        nodes_(topology.node_count()) {}

  RequestId submit(NodeId initiator, NodeId remote, double fidelity, int pairs) override {
    return submit_request(initiator, remote, fidelity, pairs);
  }

  RequestId submit_request(NodeId initiator, NodeId remote, double fidelity, int pairs) {
    if (!topology_.adjacent(initiator, remote)) throw std::invalid_argument("request endpoints are not adjacent");
    if (pairs < 1) throw std::invalid_argument("pairs must be >= 1");
    auto& st = node(initiator);
    const Fsm before = st.fsm;
    Request r;
    r.id = RequestId(requests_.size());
    r.initiator = initiator;
    r.remote = remote;
    r.fidelity = fidelity;
    r.pairs = pairs;
    r.created_at = engine_.now();
    r.arrival_number = st.next_arrival++;
    requests_.push_back(r);
    RequestTimeline tl;
    tl.id = r.id;
    tl.edge = make_edge(initiator, remote);
    tl.initiator = initiator;
    tl.pairs = pairs;
    tl.fidelity = fidelity;
    tl.nl_start = engine_.now();
    timelines_.push_back(tl);
    st.q_main.insert(QueueEntry{r.arrival_number, false, r.id, {}});
    trace(initiator, before, "submit", detail_req(r) + " A=" + std::to_string(r.arrival_number));
    process_next(initiator);
    return r.id;
  }

  /// One step of the request processor for `n`.
  void process_next(NodeId n) {
    auto& st = node(n);
    const Fsm before = st.fsm;
    if (st.fsm == Fsm::kReady && !st.q_ready.empty()) {
      const RequestId rid = st.q_ready.front();
      st.q_ready.pop_front();
      if (st.lock_request != rid) throw InvariantViolation("Q_ready head does not hold the lock");
      st.fsm = Fsm::kBusy;
      const Request& r = requests_[to_index(rid)];
      trace(n, before, "execute", detail_req(r));
      check(n);
      SimTime t_min = r.t_min.value_or(engine_.now());
      if (n == r.remote) {
        auto agreed = agreed_t_min_.find(to_index(rid));
        if (agreed != agreed_t_min_.end()) t_min = agreed->second;
      }
      phys_.endpoint_ready(r, n, t_min,
                           [this, rid](const BusySpan& span) { on_generation_complete(rid, span); });
      return;
    }
    if (st.fsm != Fsm::kIdle || st.q_main.empty()) return;
    const QueueEntry e = *st.q_main.begin();
    st.q_main.erase(st.q_main.begin());
    if (!e.wake) {
      const Request& r = requests_[to_index(e.request)];
      st.s_sent.push_back(r.id);
      st.fsm = Fsm::kSynSent;
      send(make_message(MessageKind::kSyn, n, r.remote, r));
      trace(n, before, "send_SYN", "to=" + topology_.name(r.remote) + " " + detail_req(r));
    } else {
      st.queued_wake_targets.erase(to_index(e.target));
      WakeTicket ticket{e.target, e.arrival_number};
      st.s_wake.push_back(ticket);
      st.lock_wake = ticket;
      st.fsm = Fsm::kWakeSent;
      Message m;
      m.kind = MessageKind::kWake;
      m.from = n;
      m.to = e.target;
      send(m);
      trace(n, before, "send_WAKE", "to=" + topology_.name(e.target) + " A=" + std::to_string(e.arrival_number));
      if (options_.wake_timeout) {
        const std::uint64_t epoch = ++st.reservation_epoch;
        engine_.schedule_in(
            EventKind::kCustom, link_delay_ * 2 + options_.guard, [this, n, epoch] { on_wake_timeout(n, epoch); },
            "wake_timeout node=" + topology_.name(n));
      }
    }
    check(n);
  }

  /// Entry point for every delivered control message.
  void deliver(const Message& m) {
    switch (m.kind) {
      case MessageKind::kSyn: on_syn(m); break;
      case MessageKind::kSynAck: on_synack(m); break;
      case MessageKind::kSynRej: on_synrej(m); break;
      case MessageKind::kAck: on_ack(m); break;
      case MessageKind::kNack: on_nack(m); break;
      case MessageKind::kWake: on_wake(m); break;
    }
  }

  void on_syn(const Message& m) {
    const NodeId n = m.to;
    if (m.from != m.initiator || m.remote != n || !topology_.adjacent(m.from, n)) {
      drop(n, m, "malformed or non-adjacent SYN");
      return;
    }
    auto& st = node(n);
    const Fsm before = st.fsm;
    bool accept = false;
    if (st.fsm == Fsm::kIdle) {
      accept = true;
    } else if (st.fsm == Fsm::kWakeSent) {
      accept = st.lock_wake && st.lock_wake->target == m.initiator;
    } else if (st.fsm == Fsm::kSynSent) {
      accept = options_.syn_sent_policy == SynSentPolicy::kAccept || outranks_outstanding(st, m);
    }
    if (accept) {
      if (st.fsm == Fsm::kWakeSent) {
        ++st.reservation_epoch;
        st.s_wake.clear();
        st.lock_wake.reset();
      }
      st.lock_request = m.request;
      st.fsm = Fsm::kSynReceived;
      Message reply = reply_to(m, MessageKind::kSynAck);
      reply.t_min = engine_.now() + link_delay_ + options_.guard;
      send(reply);
      trace(n, before, "recv_SYN", "from=" + topology_.name(m.from) + " req=" + std::to_string(to_index(m.request)) +
                                       " reply=SYNACK t_min=" + std::to_string(reply.t_min->ns));
    } else {
      send(reply_to(m, MessageKind::kSynRej));
      std::string ticket = "coalesced";
      if (st.queued_wake_targets.insert(to_index(m.initiator)).second) {
        const std::uint64_t a = st.next_arrival++;
        st.q_main.insert(QueueEntry{a, true, {}, m.initiator});
        ticket = "A=" + std::to_string(a);
      }
      trace(n, before, "recv_SYN", "from=" + topology_.name(m.from) + " req=" + std::to_string(to_index(m.request)) +
                                       " reply=SYNREJ wake_ticket=" + ticket);
    }
    check(n);
  }

  void on_synack(const Message& m) {
    const NodeId n = m.to;
    auto& st = node(n);
    auto it = std::find(st.s_sent.begin(), st.s_sent.end(), m.request);
    if (it == st.s_sent.end()) {
      drop(n, m, "SYNACK without matching S_sent entry");
      return;
    }
    const Fsm before = st.fsm;
    st.s_sent.erase(it);
    Request& r = requests_[to_index(m.request)];
    if (!st.locked()) {
      st.lock_request = r.id;
      r.t_min = m.t_min;
      st.q_ready.push_back(r.id);
      st.fsm = Fsm::kReady;
      Message ack = reply_to(m, MessageKind::kAck);
      ack.t_min = m.t_min;
      send(ack);
      trace(n, before, "recv_SYNACK", detail_req(r) + " reply=ACK");
      check(n);
      process_next(n);
    } else {
      // Lock taken by a peer handshake since our SYN went out.
      send(reply_to(m, MessageKind::kNack));
      st.q_main.insert(QueueEntry{r.arrival_number, false, r.id, {}});
      trace(n, before, "recv_SYNACK", detail_req(r) + " reply=NACK requeued");
      check(n);
    }
  }

  void on_synrej(const Message& m) {
    const NodeId n = m.to;
    auto& st = node(n);
    auto it = std::find(st.s_sent.begin(), st.s_sent.end(), m.request);
    if (it == st.s_sent.end()) {
      drop(n, m, "SYNREJ without matching S_sent entry");
      return;
    }
    const Fsm before = st.fsm;
    st.s_sent.erase(it);
    st.s_sleep.push_back(m.request);
    if (st.fsm == Fsm::kSynSent) st.fsm = Fsm::kIdle;
    trace(n, before, "recv_SYNREJ", detail_req(requests_[to_index(m.request)]) + " sleep");
    check(n);
    process_next(n);
  }

  void on_wake(const Message& m) {
    const NodeId n = m.to;
    auto& st = node(n);
    const Fsm before = st.fsm;
    // Every sleeper rejected by the waker retries; coalesced rejections share one ticket.
    std::string woken;
    for (auto it = st.s_sleep.begin(); it != st.s_sleep.end();) {
      const Request& r = requests_[to_index(*it)];
      if (r.remote != m.from) {
        ++it;
        continue;
      }
      st.q_main.insert(QueueEntry{r.arrival_number, false, r.id, {}});
      woken += " " + detail_req(r);
      it = st.s_sleep.erase(it);
    }
    if (woken.empty()) {
      trace(n, before, "recv_WAKE", "from=" + topology_.name(m.from) + " no_sleeper");
      return;
    }
    trace(n, before, "recv_WAKE", "from=" + topology_.name(m.from) + woken + " requeued");
    check(n);
    process_next(n);
  }

  void on_ack(const Message& m) {
    const NodeId n = m.to;
    auto& st = node(n);
    if (st.fsm != Fsm::kSynReceived || st.lock_request != m.request) {
      drop(n, m, "ACK does not match the accepted request");
      return;
    }
    const Fsm before = st.fsm;
    st.fsm = Fsm::kReady;
    st.q_ready.push_back(m.request);
    agreed_t_min_.insert_or_assign(to_index(m.request), m.t_min.value_or(engine_.now()));
    trace(n, before, "recv_ACK", "req=" + std::to_string(to_index(m.request)));
    check(n);
    process_next(n);
  }

  void on_nack(const Message& m) {
    const NodeId n = m.to;
    auto& st = node(n);
    if (st.fsm != Fsm::kSynReceived || st.lock_request != m.request) {
      drop(n, m, "NACK does not match the accepted request");
      return;
    }
    const Fsm before = st.fsm;
    st.lock_request.reset();
    st.fsm = unlocked_state(st);
    trace(n, before, "recv_NACK", "req=" + std::to_string(to_index(m.request)));
    check(n);
    process_next(n);
  }

  /// Completion of the physical process for `rid` at one endpoint.
  void release_lock(NodeId n, RequestId rid) {
    auto& st = node(n);
    if (st.fsm != Fsm::kBusy || st.lock_request != rid) {
      std::ostringstream os;
      os << "release of a lock not held: node=" << topology_.name(n) << " req=" << to_index(rid)
         << " fsm=" << to_string(st.fsm);
      throw InvariantViolation(os.str());
    }
    const Fsm before = st.fsm;
    st.lock_request.reset();
    st.fsm = unlocked_state(st);
    trace(n, before, "release", "req=" + std::to_string(to_index(rid)));
    check(n);
    process_next(n);
  }

  const NodeState& state(NodeId n) const { return nodes_.at(to_index(n)); }
  const Request& request(RequestId r) const { return requests_.at(to_index(r)); }
  const std::vector<RequestTimeline>& timelines() const override { return timelines_; }
  const Counters& counters() const { return counters_; }
  SimTime link_delay() const { return link_delay_; }

  /// Called for every message handed to the control plane.
  void set_send_observer(std::function<void(SimTime, const Message&)> f) { send_observer_ = std::move(f); }

  /// Include message summaries in the engine's event trace.
  void set_event_summaries(bool on) { engine_tracing_summary_ = on; }

  /// Per-node structural invariants; throws on violation.
  void validate(NodeId n) const {
    const auto& st = nodes_.at(to_index(n));
    if (st.locked() != lock_state(st.fsm)) fail(n, "lock/state coupling broken");
    if (st.lock_wake.has_value() != (st.fsm == Fsm::kWakeSent)) fail(n, "wake reservation outside WAKE_SENT");
    if (st.s_sent.size() > 1) fail(n, "more than one SYN outstanding");
    if (st.fsm == Fsm::kSynSent && st.s_sent.empty()) fail(n, "SYN_SENT without outstanding SYN");
    std::set<std::uint64_t> seen;
    auto add = [&](RequestId r) {
      if (!seen.insert(to_index(r)).second) fail(n, "request held in two queues/sets");
    };
    for (const auto& e : st.q_main)
      if (!e.wake) add(e.request);
    for (RequestId r : st.q_ready) add(r);
    for (RequestId r : st.s_sent) add(r);
    for (RequestId r : st.s_sleep) add(r);
  }

 private:
  NodeState& node(NodeId n) { return nodes_.at(to_index(n)); }

  static Fsm unlocked_state(const NodeState& st) { return st.s_sent.empty() ? Fsm::kIdle : Fsm::kSynSent; }

  bool outranks_outstanding(const NodeState& st, const Message& m) const {
    if (st.s_sent.empty()) return true;
    const Request& own = requests_[to_index(st.s_sent.front())];
    return std::make_tuple(m.created_at, to_index(m.initiator), to_index(m.request)) <
           std::make_tuple(own.created_at, to_index(own.initiator), to_index(own.id));
  }

  static Message make_message(MessageKind k, NodeId from, NodeId to, const Request& r) {
    Message m;
    m.kind = k;
    m.from = from;
    m.to = to;
    m.request = r.id;
    m.initiator = r.initiator;
    m.remote = r.remote;
    m.fidelity = r.fidelity;
    m.pairs = r.pairs;
    m.created_at = r.created_at;
    return m;
  }

  static Message reply_to(const Message& in, MessageKind k) {
    Message m = in;
    m.kind = k;
    m.from = in.to;
    m.to = in.from;
    m.t_min.reset();
    return m;
  }

  void send(const Message& m) {
    ++counters_.sent[static_cast<int>(m.kind)];
    if (send_observer_) send_observer_(engine_.now(), m);
    std::string summary;
    if (engine_tracing_summary_) {
      summary = std::string(to_string(m.kind)) + " " + topology_.name(m.from) + "->" + topology_.name(m.to);
      if (m.kind != MessageKind::kWake) summary += " req=" + std::to_string(to_index(m.request));
    }
    engine_.schedule_in(EventKind::kMessageDelivery, link_delay_, [this, m] { deliver(m); }, std::move(summary));
  }

  void on_wake_timeout(NodeId n, std::uint64_t epoch) {
    auto& st = node(n);
    if (st.fsm != Fsm::kWakeSent || st.reservation_epoch != epoch) return;
    const Fsm before = st.fsm;
    const NodeId target = st.lock_wake->target;
    st.lock_wake.reset();
    st.s_wake.clear();
    st.fsm = unlocked_state(st);
    ++counters_.wake_timeouts;
    trace(n, before, "wake_timeout", "target=" + topology_.name(target));
    check(n);
    process_next(n);
  }

  void on_generation_complete(RequestId rid, const BusySpan& span) {
    const Request& r = requests_[to_index(rid)];
    RequestTimeline& tl = timelines_[to_index(rid)];
    tl.pl_start = span.pl_start;
    tl.pl_finish = span.pl_finish;
    tl.nl_finish = engine_.now();
    agreed_t_min_.erase(to_index(rid));
    release_lock(r.initiator, rid);
    release_lock(r.remote, rid);
    notify_complete(tl);
  }

  void drop(NodeId n, const Message& m, const std::string& why) {
    ++counters_.dropped;
    const auto& st = nodes_.at(to_index(n));
    trace(n, st.fsm, "drop_" + std::string(to_string(m.kind)),
          "from=" + topology_.name(m.from) + " req=" + std::to_string(to_index(m.request)) + " warning=" + why);
  }

  void check(NodeId n) const { validate(n); }

  [[noreturn]] void fail(NodeId n, const std::string& what) const {
    const auto& st = nodes_.at(to_index(n));
    throw InvariantViolation("ESP invariant at node " + topology_.name(n) + " (" + std::string(to_string(st.fsm)) +
                             "): " + what);
  }

  std::string detail_req(const Request& r) const {
    return "req=" + std::to_string(to_index(r.id)) + " edge=" + topology_.name(r.initiator) + ">" +
           topology_.name(r.remote) + " pairs=" + std::to_string(r.pairs);
  }

  void trace(NodeId n, Fsm before, std::string_view event, const std::string& detail) const {
    if (!tracing()) return;
    emit(ProtocolTraceRecord{engine_.now(), topology_.name(n), std::string(to_string(before)), std::string(event),
                             std::string(to_string(nodes_[to_index(n)].fsm)), detail});
  }

  Engine& engine_;
  const Topology& topology_;
  PhysicalLayer& phys_;
  Options options_;
  SimTime link_delay_;
  std::vector<NodeState> nodes_;
  std::vector<Request> requests_;
  std::vector<RequestTimeline> timelines_;
  std::map<std::uint64_t, SimTime> agreed_t_min_;
  Counters counters_;
  bool engine_tracing_summary_ = true;
  std::function<void(SimTime, const Message&)> send_observer_;
};

}  // namespace qlink::esp
