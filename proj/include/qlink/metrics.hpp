#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlink/request.hpp"

namespace qlink::metrics {

/// NL_finish - NL_start, or nothing if the request never finished.
inline std::optional<SimTime> latency(const RequestTimeline& tl) {
  if (!tl.nl_finish) return std::nullopt;
  return *tl.nl_finish - tl.nl_start;
}

/// PL_finish - PL_start.
inline std::optional<SimTime> busy_time(const RequestTimeline& tl) {
  if (!tl.pl_start || !tl.pl_finish) return std::nullopt;
  return *tl.pl_finish - *tl.pl_start;
}

/// PL_start - NL_start.
inline std::optional<SimTime> queueing_time(const RequestTimeline& tl) {
  if (!tl.pl_start) return std::nullopt;
  return *tl.pl_start - tl.nl_start;
}

/// Latency per requested pair, in nanoseconds.
inline std::optional<double> scaled_latency(const RequestTimeline& tl) {
  if (tl.pairs < 1) throw std::invalid_argument("pairs must be >= 1");
  auto l = latency(tl);
  if (!l) return std::nullopt;
  return static_cast<double>(l->ns) / tl.pairs;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty list");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Population standard deviation (divisor n).
inline double jitter(std::span<const double> latencies) {
  const double m = mean(latencies);
  double ss = 0.0;
  for (double x : latencies) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(latencies.size()));
}

/// Pairs completed by `duration`, per edge per second.
inline double throughput(std::span<const RequestTimeline> timelines, std::size_t edge_count, SimTime duration) {
  if (duration.ns <= 0) throw std::invalid_argument("throughput window must be > 0");
  if (edge_count == 0) throw std::invalid_argument("edge count must be > 0");
  std::uint64_t pairs = 0;
  for (const auto& tl : timelines)
    if (tl.nl_finish && *tl.nl_finish <= duration) pairs += static_cast<std::uint64_t>(tl.pairs);
  return static_cast<double>(pairs) / (static_cast<double>(edge_count) * duration.seconds());
}

struct Point {
  double x;
  double y;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept, with R^2 (equal to the
/// squared Pearson correlation for a fit with intercept).
inline LinearFit linear_fit(std::span<const Point> points) {
  if (points.size() < 2) throw std::invalid_argument("linear fit needs >= 2 points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("linear fit needs >= 2 distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& p : points) {
    const double r = p.y - (fit.slope * p.x + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

/// One simulation cell, durations in milliseconds.
struct RunSummary {
  std::string topology;
  std::string protocol;
  double fidelity = 0.0;
  std::uint64_t seed = 0;
  std::size_t edges = 0;
  int matching = 0;
  std::size_t requests = 0;    // completed
  std::size_t incomplete = 0;  // submitted but unfinished at sim end
  double mean_latency_ms = 0.0;
  double jitter_ms = 0.0;
  double mean_scaled_latency_ms = 0.0;
  double throughput = 0.0;
  double mean_busy_ms = 0.0;
  double mean_queue_ms = 0.0;
};

inline RunSummary summarize(std::span<const RequestTimeline> timelines, std::size_t edges, SimTime duration) {
  RunSummary s;
  s.edges = edges;
  std::vector<double> lat, scaled, busy, queue;
  for (const auto& tl : timelines) {
    auto l = latency(tl);
    if (!l) {
      ++s.incomplete;
      continue;
    }
    lat.push_back(l->ms());
    scaled.push_back(*scaled_latency(tl) / 1e6);
    busy.push_back(busy_time(tl)->ms());
    queue.push_back(queueing_time(tl)->ms());
  }
  s.requests = lat.size();
  if (!lat.empty()) {
    s.mean_latency_ms = mean(lat);
    s.jitter_ms = jitter(lat);
    s.mean_scaled_latency_ms = mean(scaled);
    s.mean_busy_ms = mean(busy);
    s.mean_queue_ms = mean(queue);
  }
  s.throughput = throughput(timelines, edges, duration);
  return s;
}

}  // namespace qlink::metrics
