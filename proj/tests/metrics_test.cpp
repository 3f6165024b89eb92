#include <gtest/gtest.h>

#include <vector>

#include "qlink/metrics.hpp"
#include "qlink/rng.hpp"

using namespace qlink;
using namespace qlink::metrics;

namespace {

RequestTimeline timeline(std::int64_t nl_start, std::int64_t pl_start, std::int64_t pl_finish, std::int64_t nl_finish,
                         int pairs = 1) {
  RequestTimeline tl;
  tl.pairs = pairs;
  tl.nl_start = SimTime(nl_start);
  tl.pl_start = SimTime(pl_start);
  tl.pl_finish = SimTime(pl_finish);
  tl.nl_finish = SimTime(nl_finish);
  return tl;
}

RequestTimeline random_timeline(RngStream& rng) {
  const std::int64_t a = rng.uniform_int(0, 1'000'000'000);
  const std::int64_t b = a + rng.uniform_int(0, 50'000'000);
  const std::int64_t c = b + rng.uniform_int(0, 50'000'000);
  const std::int64_t d = c + rng.uniform_int(0, 1'000'000);
  return timeline(a, b, c, d, static_cast<int>(rng.uniform_int(1, 6)));
}

}  // namespace

TEST(Metrics, Latency) {
  EXPECT_EQ(latency(timeline(0, 0, 0, 10'000'000)), SimTime::from_ms(10));
  EXPECT_EQ(latency(timeline(5, 5, 5, 5)), SimTime(0));
  RequestTimeline open;
  open.nl_start = SimTime(3);
  EXPECT_FALSE(latency(open));
}

TEST(Metrics, Jitter) {
  const std::vector<double> flat{10, 10, 10}, two{0, 20}, one{7};
  EXPECT_DOUBLE_EQ(jitter(flat), 0.0);
  EXPECT_DOUBLE_EQ(jitter(two), 10.0);
  EXPECT_DOUBLE_EQ(jitter(one), 0.0);
  EXPECT_THROW(jitter(std::vector<double>{}), std::invalid_argument);
}

TEST(Metrics, ScaledLatency) {
  EXPECT_DOUBLE_EQ(*scaled_latency(timeline(0, 0, 0, 12'000'000, 6)), 2'000'000.0);
  EXPECT_DOUBLE_EQ(*scaled_latency(timeline(0, 0, 0, 12'000'000, 1)), 12'000'000.0);
}

TEST(Metrics, Throughput) {
  std::vector<RequestTimeline> none;
  EXPECT_DOUBLE_EQ(throughput(none, 1, SimTime::from_seconds(120)), 0.0);
  std::vector<RequestTimeline> tls;
  for (int i = 0; i < 20; ++i) tls.push_back(timeline(0, 0, 0, SimTime::from_seconds(i + 1).ns, 6));
  EXPECT_DOUBLE_EQ(throughput(tls, 1, SimTime::from_seconds(120)), 1.0);
  EXPECT_DOUBLE_EQ(throughput(tls, 2, SimTime::from_seconds(120)), 0.5);
  EXPECT_THROW(throughput(tls, 1, SimTime(0)), std::invalid_argument);
}

TEST(Metrics, BusyAndQueueing) {
  EXPECT_EQ(busy_time(timeline(0, 2, 5, 5)), SimTime(3));
  EXPECT_EQ(queueing_time(timeline(0, 2, 5, 5)), SimTime(2));
}

TEST(Metrics, LinearFitExamples) {
  std::vector<Point> line;
  for (int x = 0; x < 6; ++x) line.push_back({double(x), 2.0 * x + 1});
  auto f = linear_fit(line);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);

  EXPECT_NEAR(linear_fit(std::vector<Point>{{1, 3}, {4, -2}}).r_squared, 1.0, 1e-12);

  auto v = linear_fit(std::vector<Point>{{0, 0}, {1, 1}, {2, 0}});
  EXPECT_NEAR(v.slope, 0.0, 1e-12);
  EXPECT_NEAR(v.intercept, 1.0 / 3.0, 1e-12);

  EXPECT_THROW(linear_fit(std::vector<Point>{{1, 1}, {1, 2}}), std::invalid_argument);
  EXPECT_THROW(linear_fit(std::vector<Point>{{1, 1}}), std::invalid_argument);
}

TEST(Metrics, RSquaredIsSquaredCorrelation) {
  RngStream rng(8, "fit");
  std::vector<Point> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform() * 10, rng.uniform() * 10 + i * 0.3});
  double mx = 0, my = 0;
  for (auto p : pts) mx += p.x, my += p.y;
  mx /= pts.size();
  my /= pts.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (auto p : pts) sxy += (p.x - mx) * (p.y - my), sxx += (p.x - mx) * (p.x - mx), syy += (p.y - my) * (p.y - my);
  EXPECT_NEAR(linear_fit(pts).r_squared, sxy * sxy / (sxx * syy), 1e-9);
}

// Invariant checks over 10^4 randomized timelines each.

TEST(MetricProperties, DecompositionAndBound) {
  RngStream rng(1, "decomposition");
  for (int i = 0; i < 10'000; ++i) {
    const auto tl = random_timeline(rng);
    const SimTime l = *latency(tl), b = *busy_time(tl), w = *queueing_time(tl);
    ASSERT_LE(w + b, l);
    ASSERT_EQ(l, b + w + (*tl.nl_finish - *tl.pl_finish));
  }
}

TEST(MetricProperties, JitterIsTranslationInvariant) {
  RngStream rng(2, "translation");
  for (int i = 0; i < 10'000; ++i) {
    const int n = static_cast<int>(rng.uniform_int(1, 20));
    const double shift = rng.uniform() * 1e4 - 5e3;
    std::vector<double> xs, ys;
    for (int k = 0; k < n; ++k) {
      xs.push_back(rng.uniform() * 200);
      ys.push_back(xs.back() + shift);
    }
    ASSERT_NEAR(jitter(xs), jitter(ys), 1e-6);
  }
}

TEST(MetricProperties, ThroughputCountsPairsFinishedInWindow) {
  RngStream rng(3, "throughput");
  for (int i = 0; i < 10'000; ++i) {
    std::vector<RequestTimeline> tls;
    const int n = static_cast<int>(rng.uniform_int(0, 15));
    std::uint64_t expect = 0;
    const SimTime window(rng.uniform_int(1, 1'100'000'000));
    for (int k = 0; k < n; ++k) {
      auto tl = random_timeline(rng);
      if (rng.bernoulli(0.2)) tl.nl_finish.reset();
      if (tl.nl_finish && *tl.nl_finish <= window) expect += static_cast<std::uint64_t>(tl.pairs);
      tls.push_back(tl);
    }
    const std::size_t edges = static_cast<std::size_t>(rng.uniform_int(1, 12));
    ASSERT_NEAR(throughput(tls, edges, window) * static_cast<double>(edges) * window.seconds(), static_cast<double>(expect),
                1e-6 * (1 + expect));
  }
}

TEST(MetricProperties, ScaledLatencyNeverExceedsLatency) {
  RngStream rng(4, "scaled");
  std::vector<RequestTimeline> tls;
  for (int i = 0; i < 10'000; ++i) tls.push_back(random_timeline(rng));
  const auto s = summarize(tls, 3, SimTime::from_seconds(2));
  EXPECT_LE(s.mean_scaled_latency_ms, s.mean_latency_ms);
  EXPECT_EQ(s.requests, 10'000u);
}

TEST(Metrics, SummaryExcludesUnfinished) {
  std::vector<RequestTimeline> tls{timeline(0, 1'000'000, 3'000'000, 3'000'000, 2), timeline(0, 1'000'000, 5'000'000, 5'000'000, 1)};
  RequestTimeline open;
  open.nl_start = SimTime(10);
  tls.push_back(open);
  const auto s = summarize(tls, 1, SimTime::from_seconds(1));
  EXPECT_EQ(s.requests, 2u);
  EXPECT_EQ(s.incomplete, 1u);
  EXPECT_DOUBLE_EQ(s.mean_latency_ms, 4.0);
  EXPECT_DOUBLE_EQ(s.jitter_ms, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_busy_ms, 3.0);
  EXPECT_DOUBLE_EQ(s.mean_queue_ms, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_scaled_latency_ms, (1.5 + 5.0) / 2);
  EXPECT_DOUBLE_EQ(s.throughput, 3.0);
}
