#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "qlink/topology.hpp"
#include "qlink/types.hpp"

namespace qlink {

/// An entanglement request (initiator, remote, fidelity, pairs, created_at).
struct Request {
  RequestId id{};
  NodeId initiator{};
  NodeId remote{};
  double fidelity = 0.75;
  int pairs = 1;
  SimTime created_at;
  std::uint64_t arrival_number = 0;  // local to the initiator
  std::optional<SimTime> t_min;
};

/// The four timestamps every metric derives from.
struct RequestTimeline {
  RequestId id{};
  Edge edge{};
  NodeId initiator{};
  int pairs = 1;
  double fidelity = 0.75;
  SimTime nl_start;
  std::optional<SimTime> pl_start;
  std::optional<SimTime> pl_finish;
  std::optional<SimTime> nl_finish;

  bool complete() const { return nl_finish.has_value(); }
};

inline Edge make_edge(NodeId x, NodeId y) {
  return to_index(x) < to_index(y) ? Edge{x, y} : Edge{y, x};
}

}  // namespace qlink
