#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>

namespace qlink {

namespace detail {

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Named, reproducible random stream.
///
/// The engine state is derived only from (global seed, label), so a stream's
/// draws never depend on how many other streams exist. Distributions are
/// implemented here rather than through <random> distribution classes, whose
/// output is implementation-defined; std::mt19937_64 itself is fully specified.
class RngStream {
 public:
  RngStream(std::uint64_t global_seed, std::string label)
      : label_(std::move(label)),
        engine_(detail::splitmix64(detail::splitmix64(global_seed) ^ detail::fnv1a(label_))) {}

  const std::string& label() const { return label_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [lo, hi], unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % span);
  }

  /// Exponential with the given mean; always strictly positive.
  double exponential(double mean) { return -mean * std::log(uniform_open()); }

  /// Number of Bernoulli(p) trials up to and including the first success.
  std::uint64_t geometric(double p) {
    if (p >= 1.0) return 1;
    const double k = std::floor(std::log(uniform_open()) / std::log1p(-p));
    return static_cast<std::uint64_t>(k) + 1;
  }

 private:
  std::string label_;
  std::mt19937_64 engine_;
};

}  // namespace qlink
