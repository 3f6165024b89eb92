#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qlink/rng.hpp"
#include "qlink/types.hpp"

namespace qlink {

/// Per-link physical constants. Defaults follow the evaluation setup
/// (2 km links, midpoint heralding station, 20 ns detection window).
struct LinkPhysics {
  double link_length_m = 2000.0;
  double heralding_position = 0.5;  // fraction of the link, from endpoint a
  std::int64_t detection_window_ns = 20;  // carried for finer models; does not gate success
  double fiber_speed_mps = 2.0e8;
  double detection_efficiency = 4.0e-4;  // p_det
  std::int64_t clock_period_min_ns = 450;
  std::int64_t clock_period_max_ns = 550;
  int qubits_per_node = 6;

  void validate() const {
    if (!(heralding_position > 0.0 && heralding_position < 1.0))
      throw ConfigError("heralding_position must be in (0, 1)");
    if (!(fiber_speed_mps > 0.0)) throw ConfigError("fiber_speed must be > 0");
    if (!(detection_efficiency > 0.0 && detection_efficiency <= 1.0))
      throw ConfigError("detection_efficiency must be in (0, 1]");
    if (!(link_length_m >= 0.0)) throw ConfigError("link_length must be >= 0");
    if (clock_period_min_ns <= 0 || clock_period_max_ns < clock_period_min_ns)
      throw ConfigError("clock period range must satisfy 0 < min <= max");
    if (qubits_per_node < 1) throw ConfigError("qubits_per_node must be >= 1");
  }
};

struct NodeClock {
  SimTime cycle_period;

  static NodeClock sample(const LinkPhysics& physics, RngStream& rng) {
    return NodeClock{SimTime(rng.uniform_int(physics.clock_period_min_ns, physics.clock_period_max_ns))};
  }
};

/// Bright-state population needed for a minimum fidelity, under F_min = 1 - alpha.
/// Accepts f in [0.5, 1); the evaluation sweep starts at exactly 0.5.
inline double alpha_for_fidelity(double f_min) {
  if (!(f_min >= 0.5 && f_min < 1.0)) throw std::invalid_argument("fidelity must be in [0.5, 1)");
  return 1.0 - f_min;
}

inline double fidelity_for_alpha(double alpha) { return 1.0 - alpha; }

/// Per-attempt success probability, p = alpha * p_det.
inline double success_probability(double alpha, const LinkPhysics& physics) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  return alpha * physics.detection_efficiency;
}

/// Distance over fibre, rounded up to whole nanoseconds.
inline SimTime propagation_delay(double distance_m, const LinkPhysics& physics) {
  if (distance_m < 0.0) throw std::invalid_argument("distance must be >= 0");
  return SimTime(static_cast<std::int64_t>(std::ceil(distance_m / physics.fiber_speed_mps * 1e9 - 1e-9)));
}

/// One-way delay from the farther endpoint to the heralding station.
inline SimTime herald_delay(const LinkPhysics& physics) {
  const double frac = std::max(physics.heralding_position, 1.0 - physics.heralding_position);
  return propagation_delay(physics.link_length_m * frac, physics);
}

struct AttemptOutcome {
  bool success = false;
  std::uint64_t cycle_index = 0;  // 1-based within the current pair
};

/// Attempt-by-attempt Bernoulli process for one link.
class AttemptSequence {
 public:
  explicit AttemptSequence(double p) : p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability must be in [0, 1]");
  }

  AttemptOutcome attempt(RngStream& rng) {
    AttemptOutcome out{rng.bernoulli(p_), ++cycle_};
    if (out.success) cycle_ = 0;
    return out;
  }

 private:
  double p_;
  std::uint64_t cycle_ = 0;
};

struct BusySpan {
  SimTime pl_start;
  SimTime pl_finish;
  std::uint64_t attempts_total = 0;
};

/// Sequential generation of `pairs` entangled pairs starting at `start`.
/// Each attempt costs one shared period (the slower endpoint's clock); each
/// success adds a herald round trip for the outcome announcement.
inline BusySpan generate_pairs(int pairs, double p_success, NodeClock a, NodeClock b, const LinkPhysics& physics,
                               RngStream& rng, SimTime start) {
  if (pairs < 1) throw std::invalid_argument("pairs must be >= 1");
  if (!(p_success > 0.0 && p_success <= 1.0)) throw std::invalid_argument("p_success must be in (0, 1]");
  const SimTime period = std::max(a.cycle_period, b.cycle_period);
  const SimTime round_trip = herald_delay(physics) * 2;
  std::uint64_t attempts = 0;
  for (int k = 0; k < pairs; ++k) attempts += rng.geometric(p_success);
  const SimTime busy = period * static_cast<std::int64_t>(attempts) + round_trip * pairs;
  return BusySpan{start, start + busy, attempts};
}

}  // namespace qlink
