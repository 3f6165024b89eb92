#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace qlink {

/// Simulated time in integer nanoseconds. Also used for durations.
struct SimTime {
  std::int64_t ns = 0;

  constexpr SimTime() = default;
  constexpr explicit SimTime(std::int64_t nanoseconds) : ns(nanoseconds) {}

  static constexpr SimTime from_us(double us) { return SimTime(static_cast<std::int64_t>(us * 1e3)); }
  static constexpr SimTime from_ms(double ms) { return SimTime(static_cast<std::int64_t>(ms * 1e6)); }
  static constexpr SimTime from_seconds(double s) { return SimTime(static_cast<std::int64_t>(s * 1e9)); }
  static constexpr SimTime max() { return SimTime(std::numeric_limits<std::int64_t>::max()); }

  constexpr double ms() const { return static_cast<double>(ns) / 1e6; }
  constexpr double seconds() const { return static_cast<double>(ns) / 1e9; }

  friend constexpr auto operator<=>(SimTime, SimTime) = default;
  friend constexpr SimTime operator+(SimTime a, SimTime b) { return SimTime(a.ns + b.ns); }
  friend constexpr SimTime operator-(SimTime a, SimTime b) { return SimTime(a.ns - b.ns); }
  friend constexpr SimTime operator*(SimTime a, std::int64_t k) { return SimTime(a.ns * k); }
  constexpr SimTime& operator+=(SimTime o) {
    ns += o.ns;
    return *this;
  }
  friend std::ostream& operator<<(std::ostream& os, SimTime t) { return os << t.ns << "ns"; }
};

enum class NodeId : std::uint32_t {};
enum class RequestId : std::uint64_t {};

constexpr std::uint32_t to_index(NodeId n) { return static_cast<std::uint32_t>(n); }
constexpr std::uint64_t to_index(RequestId r) { return static_cast<std::uint64_t>(r); }

/// A broken protocol or engine invariant. Always fatal for the run.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad user configuration or CLI input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qlink
