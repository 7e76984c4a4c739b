#include <cmath>
#include <random>

#include "cpima/report.hpp"
#include "doctest.h"

using namespace cpima;

TEST_CASE("contingency accounting") {
  std::vector<int> a = {0, 0, 1, 1, 1, 0};
  std::vector<int> f = {0, 1, 1, 1, 0, 0};
  Tensor c = contingency(a, 2, f, 2);
  CHECK(c.at({0, 0}) == 2.0);
  CHECK(c.at({0, 1}) == 1.0);
  CHECK(c.at({1, 0}) == 1.0);
  CHECK(c.at({1, 1}) == 2.0);
  // row sums equal cluster occupancies
  CHECK(c.at({0, 0}) + c.at({0, 1}) == 3.0);
  CHECK(t_sum_all(c) == 6.0);
  CHECK_THROWS_AS(contingency({0, 2}, 2, {0, 0}, 2), std::invalid_argument);
}

TEST_CASE("purity and nmi on constructed cases") {
  // perfectly separable assignment
  std::vector<int> a = {0, 0, 0, 1, 1, 1};
  std::vector<int> f = {1, 1, 1, 0, 0, 0};
  Tensor c = contingency(a, 2, f, 2);
  CHECK(purity(c) == doctest::Approx(1.0));
  CHECK(nmi(c) == doctest::Approx(1.0).epsilon(1e-12));

  // independent assignment: purity 0.5, nmi 0
  Tensor indep({2, 2}, {25.0, 25.0, 25.0, 25.0});
  CHECK(purity(indep) == doctest::Approx(0.5));
  CHECK(nmi(indep) == doctest::Approx(0.0).epsilon(1e-12));

  // degenerate marginal
  Tensor degen({1, 2}, {3.0, 3.0});
  CHECK(nmi(degen) == 0.0);
}

TEST_CASE("random assignment gives near-zero nmi") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<int> a, f;
  for (int i = 0; i < 5000; ++i) {
    a.push_back(coin(rng));
    f.push_back(coin(rng));
  }
  CHECK(nmi(contingency(a, 2, f, 2)) < 0.05);
}

TEST_CASE("cluster and node labels from responsibilities") {
  std::vector<Responsibilities> gs;
  Tensor g1({2, 2}, {0.5, 0.3, 0.1, 0.1});  // cluster (0,0); node0=0, node1=0
  Tensor g2({2, 2}, {0.05, 0.15, 0.2, 0.6});
  gs.push_back(Responsibilities{g1});
  gs.push_back(Responsibilities{g2});
  std::vector<int> cl = cluster_labels(gs);
  CHECK(cl == std::vector<int>{0, 3});
  // node 0 marginal of g2: [0.2, 0.8] -> 1; node 1: [0.25, 0.75] -> 1
  CHECK(node_labels(gs, 0) == std::vector<int>{0, 1});
  CHECK(node_labels(gs, 1) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(node_labels(gs, 2), std::invalid_argument);
}

TEST_CASE("node-to-factor matching maximizes total purity") {
  // node 0 explains factor 1, node 1 explains factor 0, node 2 explains factor 2
  std::vector<std::vector<double>> pm = {
      {0.5, 0.95, 0.6}, {0.9, 0.5, 0.5}, {0.55, 0.6, 0.85}};
  std::vector<int> match = match_nodes_to_factors(pm);
  CHECK(match == std::vector<int>{1, 0, 2});

  // more factors than nodes: unmatched factors get -1
  std::vector<std::vector<double>> pm2 = {{0.9, 0.2, 0.2}};
  std::vector<int> m2 = match_nodes_to_factors(pm2);
  CHECK(m2[0] == 0);
  CHECK(m2[1] == -1);
  CHECK(m2[2] == -1);
}

TEST_CASE("contingency csv layout") {
  Tensor c({2, 2}, {3.0, 1.0, 0.0, 4.0});
  std::string csv = contingency_csv(c, "cluster", "hue");
  CHECK(csv.find("cluster,hue0,hue1,row_total") == 0);
  CHECK(csv.find("0,3,1,4") != std::string::npos);
  CHECK(csv.find("1,0,4,4") != std::string::npos);
}
