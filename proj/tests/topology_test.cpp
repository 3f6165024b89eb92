#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "qlink/topology.hpp"

using namespace qlink;

namespace {

// Reference: largest vertex-disjoint subset over all 2^|E| subsets.
int matching_oracle(const Topology& t) {
  const auto& edges = t.edges();
  const std::size_t m = edges.size();
  int best = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    std::vector<int> deg(t.node_count(), 0);
    bool ok = true;
    int size = 0;
    for (std::size_t k = 0; k < m && ok; ++k) {
      if (!(mask >> k & 1)) continue;
      ++size;
      ok = ++deg[to_index(edges[k].a)] == 1 && ++deg[to_index(edges[k].b)] == 1;
    }
    if (ok) best = std::max(best, size);
  }
  return best;
}

}  // namespace

TEST(Topology, GridTwoByTwo) {
  auto t = build_topology(spec::Grid{2, 2});
  EXPECT_EQ(t.node_count(), 4u);
  EXPECT_EQ(t.edge_count(), 4u);
}

TEST(Topology, CompleteFour) {
  auto t = build_topology(spec::Complete{4});
  EXPECT_EQ(t.node_count(), 4u);
  EXPECT_EQ(t.edge_count(), 6u);
}

TEST(Topology, FriendshipThree) {
  auto t = build_topology(spec::Friendship{3});
  EXPECT_EQ(t.node_count(), 7u);
  EXPECT_EQ(t.edge_count(), 9u);
}

TEST(Topology, WheelSixIsHubPlusFiveCycle) {
  auto t = build_topology(spec::Wheel{6});
  EXPECT_EQ(t.node_count(), 6u);
  EXPECT_EQ(t.edge_count(), 10u);
  EXPECT_EQ(t.neighbors(*t.find("h")).size(), 5u);
}

TEST(Topology, EvaluationSuiteShapes) {
  struct Expect {
    const char* label;
    std::size_t nodes, edges;
  };
  const Expect expected[] = {{"grid:2x2", 4, 4},      {"grid:2x3", 6, 7},       {"grid:3x3", 9, 12},
                             {"complete:2", 2, 1},    {"complete:3", 3, 3},     {"complete:4", 4, 6},
                             {"bipartite:2x3", 5, 6}, {"star:3", 4, 3},         {"star:4", 5, 4},
                             {"friendship:2", 5, 6},  {"friendship:3", 7, 9},   {"wheel:6", 6, 10},
                             {"cycle:5", 5, 5},       {"cycle:6", 6, 6}};
  const auto suite = evaluation_suite();
  ASSERT_EQ(suite.size(), 14u);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    auto t = build_topology(suite[i]);
    EXPECT_EQ(t.label(), expected[i].label);
    EXPECT_EQ(t.node_count(), expected[i].nodes) << t.label();
    EXPECT_EQ(t.edge_count(), expected[i].edges) << t.label();
  }
}

TEST(Topology, MatchingNumberExamples) {
  EXPECT_EQ(matching_number(build_topology(spec::Grid{3, 3})), 4);
  EXPECT_EQ(matching_number(build_topology(spec::Star{3})), 1);
  EXPECT_EQ(matching_number(build_topology(spec::Cycle{6})), 3);
}

TEST(Topology, MatchingAgreesWithExhaustiveOracleOnSuite) {
  for (const auto& s : evaluation_suite()) {
    auto t = build_topology(s);
    const int nu = matching_number(t);
    EXPECT_EQ(nu, matching_oracle(t)) << t.label();
    EXPECT_LE(nu, static_cast<int>(t.node_count() / 2)) << t.label();
  }
}

TEST(Topology, MatchingAgreesWithOracleOnExtraGraphs) {
  for (const char* s : {"grid:1x2", "grid:2x4", "complete:5", "bipartite:3x3", "bipartite:1x5", "star:6",
                        "friendship:4", "wheel:4", "wheel:8", "cycle:3", "cycle:7"}) {
    auto t = build_topology(parse_topology_spec(s));
    EXPECT_EQ(matching_number(t), matching_oracle(t)) << s;
  }
}

TEST(Topology, BuildIsDeterministic) {
  for (const auto& s : evaluation_suite()) {
    auto a = build_topology(s);
    auto b = build_topology(s);
    EXPECT_EQ(a.names(), b.names());
    EXPECT_EQ(a.edges(), b.edges());
  }
}

TEST(Topology, NoSelfLoopsOrDuplicates) {
  for (const auto& s : evaluation_suite()) {
    auto t = build_topology(s);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto& e : t.edges()) {
      EXPECT_LT(to_index(e.a), to_index(e.b));
      EXPECT_TRUE(seen.insert({to_index(e.a), to_index(e.b)}).second);
    }
  }
}

TEST(Topology, RejectsInvalidGraphs) {
  EXPECT_THROW(Topology("x", "x", {"a", "b"}, {Edge{NodeId(0), NodeId(0)}}), ConfigError);
  EXPECT_THROW(Topology("x", "x", {"a", "b"}, {Edge{NodeId(0), NodeId(1)}, Edge{NodeId(1), NodeId(0)}}), ConfigError);
  EXPECT_THROW(Topology("x", "x", {"a", "b", "c"}, {Edge{NodeId(0), NodeId(1)}}), ConfigError);
  EXPECT_THROW(Topology("x", "x", {"a", "b"}, {Edge{NodeId(0), NodeId(2)}}), ConfigError);
}

TEST(Topology, RejectsDegenerateParameters) {
  EXPECT_THROW(build_topology(spec::Cycle{2}), ConfigError);
  EXPECT_THROW(build_topology(spec::Wheel{3}), ConfigError);
  EXPECT_THROW(build_topology(spec::Complete{1}), ConfigError);
  EXPECT_THROW(build_topology(spec::Grid{1, 1}), ConfigError);
  EXPECT_THROW(build_topology(spec::Star{0}), ConfigError);
  EXPECT_THROW(build_topology(spec::Friendship{0}), ConfigError);
  EXPECT_THROW(build_topology(spec::CompleteBipartite{0, 3}), ConfigError);
}

TEST(Topology, ParsesCliSpecs) {
  for (const char* s : {"grid:2x3", "complete:4", "bipartite:2x3", "star:4", "friendship:3", "wheel:6", "cycle:5"})
    EXPECT_EQ(to_string(parse_topology_spec(s)), s);
  for (const char* bad : {"grid", "grid:2", "grid:axb", "ring:4", "cycle:-1", "cycle:5x", ""})
    EXPECT_THROW(parse_topology_spec(bad), ConfigError) << bad;
}

TEST(ControlPlane, EspMirrorsQuantumGraph) {
  auto t = build_topology(spec::Complete{2});
  auto cp = control_plane(t, ProtocolKind::kEsp);
  EXPECT_EQ(cp.edges, t.edges());
  EXPECT_FALSE(cp.scheduler.has_value());
}

TEST(ControlPlane, DqpIsStarAroundScheduler) {
  auto t = build_topology(spec::Complete{2});
  auto cp = control_plane(t, ProtocolKind::kDqp);
  ASSERT_TRUE(cp.scheduler.has_value());
  EXPECT_EQ(to_index(*cp.scheduler), 2u);
  ASSERT_EQ(cp.edges.size(), 2u);
  EXPECT_EQ(cp.edges[0], (Edge{NodeId(0), *cp.scheduler}));
  EXPECT_EQ(cp.edges[1], (Edge{NodeId(1), *cp.scheduler}));

  auto grid = control_plane(build_topology(spec::Grid{3, 3}), ProtocolKind::kDqp);
  EXPECT_EQ(grid.edges.size(), 9u);
  for (const auto& e : grid.edges) EXPECT_EQ(e.b, *grid.scheduler);
}
