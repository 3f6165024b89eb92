#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qlink/rng.hpp"
#include "qlink/types.hpp"

namespace qlink {

enum class EventKind { kMessageDelivery, kAttemptCycle, kWorkloadTimer, kRequestArrival, kCustom };

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::kMessageDelivery: return "MessageDelivery";
    case EventKind::kAttemptCycle: return "AttemptCycle";
    case EventKind::kWorkloadTimer: return "WorkloadTimer";
    case EventKind::kRequestArrival: return "RequestArrival";
    case EventKind::kCustom: return "Custom";
  }
  return "?";
}

using EventHandle = std::uint64_t;

struct Event {
  SimTime fire_at;
  std::uint64_t sequence = 0;
  EventKind kind = EventKind::kCustom;
  std::string summary;
  std::function<void()> action;
};

/// `<fire_at_ns>,<sequence>,<payload-kind>,<payload-summary>`
inline std::string format_event_line(const Event& e) {
  std::ostringstream os;
  os << e.fire_at.ns << ',' << e.sequence << ',' << to_string(e.kind) << ',' << e.summary;
  return os.str();
}

/// Single-threaded discrete-event core. Events fire in (fire_at, sequence)
/// order; equal times dispatch in insertion order.
class Engine {
 public:
  explicit Engine(std::uint64_t seed = 0) : seed_(seed) {}
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t pending() const { return queue_.size(); }
  std::uint64_t dispatched() const { return dispatched_; }

  EventHandle schedule(EventKind kind, SimTime at, std::function<void()> action,
                       std::string summary = {}) {
    if (at < now_) {
      std::ostringstream os;
      os << "event scheduled in the past: at=" << at.ns << " now=" << now_.ns << " kind="
         << to_string(kind) << " summary=" << summary;
      throw InvariantViolation(os.str());
    }
    const std::uint64_t seq = next_sequence_++;
    queue_.push(Event{at, seq, kind, std::move(summary), std::move(action)});
    return seq;
  }

  EventHandle schedule_in(EventKind kind, SimTime delay, std::function<void()> action,
                          std::string summary = {}) {
    return schedule(kind, now_ + delay, std::move(action), std::move(summary));
  }

  /// Dispatches every event with fire_at <= t_end, then advances the clock to t_end.
  SimTime run_until(SimTime t_end) {
    while (!queue_.empty() && queue_.top().fire_at <= t_end) step();
    if (t_end > now_) now_ = t_end;
    return now_;
  }

  /// Dispatches the next event. Returns false if the queue was empty.
  bool step() {
    if (queue_.empty()) return false;
    // Moving out of top() is fine: the element is popped before any use of the queue.
    Event e = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    now_ = e.fire_at;
    ++dispatched_;
    if (trace_ || keep_recent_ > 0) {
      std::string line = format_event_line(e);
      if (trace_) *trace_ << line << '\n';
      if (keep_recent_ > 0) {
        recent_.push_back(std::move(line));
        if (recent_.size() > keep_recent_) recent_.pop_front();
      }
    }
    if (e.action) e.action();
    return true;
  }

  RngStream rng_stream(std::string label) const { return RngStream(seed_, std::move(label)); }

  /// Writes one line per dispatched event to `os` (nullptr disables).
  void set_trace(std::ostream* os) { trace_ = os; }

  /// Keeps the last `n` dispatched event lines for diagnostics.
  void keep_recent(std::size_t n) { keep_recent_ = n; }
  const std::deque<std::string>& recent() const { return recent_; }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.sequence > b.sequence;
    }
  };

  std::uint64_t seed_;
  SimTime now_{};
  std::uint64_t next_sequence_ = 0;
  std::uint64_t dispatched_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::ostream* trace_ = nullptr;
  std::size_t keep_recent_ = 0;
  std::deque<std::string> recent_;
};

}  // namespace qlink
