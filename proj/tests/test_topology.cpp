#include "sonec/topology.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>

#include "oracles.hpp"

using namespace sonec;

TEST_CASE("single node is the smallest connected graph") {
  const NetworkTopology t = build_random_topology(1, 3, 7);
  REQUIRE(t.n_nodes == 1);
  REQUIRE(t.adjacency(0, 0));
  REQUIRE(t.neighborhoods[0] == std::vector<int>{0});
}

TEST_CASE("two nodes are mutually adjacent") {
  const NetworkTopology t = build_random_topology(2, 1, 0);
  REQUIRE(t.neighborhoods[0] == std::vector<int>({0, 1}));
  REQUIRE(t.neighborhoods[1] == std::vector<int>({0, 1}));
}

TEST_CASE("16-node topology is connected with self-inclusive neighborhoods") {
  const NetworkTopology t = build_random_topology(16, 4, 42);
  REQUIRE(oracles::bfs_connected(t.adjacency));
  for (int k = 0; k < 16; ++k) {
    REQUIRE(t.neighborhood_size(k) >= 2);
    REQUIRE(t.adjacency(k, k));
  }
  REQUIRE(oracles::exact_equal(t.adjacency, t.adjacency.transpose().eval()));
}

TEST_CASE("topology generation is deterministic") {
  const NetworkTopology a = build_random_topology(16, 4, 42);
  const NetworkTopology b = build_random_topology(16, 4, 42);
  REQUIRE(oracles::exact_equal(a.adjacency, b.adjacency));
  const NetworkTopology c = build_random_topology(16, 4, 43);
  REQUIRE_FALSE(oracles::exact_equal(a.adjacency, c.adjacency));
}

TEST_CASE("zero nodes rejected") {
  REQUIRE_THROWS_AS(build_random_topology(0, 1, 0), std::invalid_argument);
}

TEST_CASE("uniform weights") {
  SECTION("isolated node gets weight one on itself") {
    const NetworkTopology t = build_random_topology(1, 1, 0);
    const CombinationMatrices w = uniform_weights(t);
    REQUIRE(w.a(0, 0) == 1.0);
  }
  SECTION("a four-neighbor column is 0.25 everywhere on its support") {
    NetworkTopology t;
    t.n_nodes = 4;
    t.adjacency.setConstant(4, 4, true);
    for (int k = 0; k < 4; ++k)
      t.neighborhoods.push_back({0, 1, 2, 3});
    const CombinationMatrices w = uniform_weights(t);
    REQUIRE(w.a.col(2).isApproxToConstant(0.25));
  }
  SECTION("16-node columns sum to one") {
    const NetworkTopology t = build_random_topology(16, 4, 42);
    const CombinationMatrices w = uniform_weights(t);
    for (int k = 0; k < 16; ++k) {
      REQUIRE(w.a.col(k).sum() == Catch::Approx(1.0).margin(1e-12));
      REQUIRE(w.c.col(k).sum() == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("validate flags broken weights with indices") {
  const NetworkTopology t = build_random_topology(6, 2, 5);
  CombinationMatrices w = uniform_weights(t);
  REQUIRE(validate(w, t).ok());

  SECTION("negative entry") {
    w.a(0, 0) = -w.a(0, 0);
    const ValidationReport rep = validate(w, t);
    REQUIRE_FALSE(rep.ok());
    bool named = false;
    for (const auto& v : rep.violations)
      if (v.find("a(1,1)") != std::string::npos && v.find("negative") != std::string::npos)
        named = true;
    REQUIRE(named);
  }
  SECTION("column sum off") {
    w.c.col(3) *= 0.9;
    const ValidationReport rep = validate(w, t);
    REQUIRE_FALSE(rep.ok());
    bool named = false;
    for (const auto& v : rep.violations)
      if (v.find("column 4") != std::string::npos) named = true;
    REQUIRE(named);
  }
  SECTION("support violation") {
    int l = -1, k = -1;
    for (int i = 0; i < t.n_nodes && l < 0; ++i)
      for (int j = 0; j < t.n_nodes; ++j)
        if (!t.adjacency(i, j)) {
          l = i;
          k = j;
          break;
        }
    REQUIRE(l >= 0);
    w.a(l, k) = 0.1;
    const ValidationReport rep = validate(w, t);
    REQUIRE_FALSE(rep.ok());
  }
}

TEST_CASE("uniform weights pass validation on random topologies") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 24);
    const int deg = 1 + static_cast<int>(rng() % 6);
    const NetworkTopology t = build_random_topology(n, deg, rng());
    REQUIRE(oracles::bfs_connected(t.adjacency));
    REQUIRE(validate(uniform_weights(t), t).ok());
  }
}

TEST_CASE("edge list round trip") {
  const NetworkTopology t = build_random_topology(12, 3, 11);
  const std::string path = std::filesystem::temp_directory_path() / "sonec_topology_test.txt";
  save_edge_list(t, path);
  const NetworkTopology back = load_edge_list(path);
  REQUIRE(back.n_nodes == t.n_nodes);
  REQUIRE(oracles::exact_equal(back.adjacency, t.adjacency));
  std::filesystem::remove(path);
}
