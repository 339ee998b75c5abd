#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stm/kdtree.hpp"

using namespace stm;

namespace {
std::vector<Vec3> random_points(int n, uint64_t seed, double extent = 60.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-extent, extent);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {U(rng), U(rng), U(rng)};
  return pts;
}
}  // namespace

TEST_CASE("knn equals brute force on 1e4 points, 100 queries, K=50") {
  auto pts = random_points(10000, 21);
  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> U(-70.0, 70.0);
  std::vector<std::pair<double, int>> got, want;
  for (int q = 0; q < 100; ++q) {
    Vec3 query{U(rng), U(rng), U(rng)};
    tree.knn(query, 50, got);
    brute_knn(pts.data(), (int)pts.size(), query, 50, want);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].second == want[i].second);
      CHECK(got[i].first == want[i].first);  // exact: same arithmetic
    }
  }
}

TEST_CASE("ties break by insertion order") {
  // duplicate coordinates: earlier index must win
  std::vector<Vec3> pts = {{1, 0, 0}, {0, 0, 0}, {1, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::vector<std::pair<double, int>> out;
  tree.knn({1, 0, 0}, 3, out);
  REQUIRE(out.size() == 3);
  CHECK(out[0].second == 0);
  CHECK(out[1].second == 2);
  CHECK(out[2].second == 3);
  CHECK(out[0].first == 0.0);
}

TEST_CASE("query point in the set is its own nearest neighbor") {
  auto pts = random_points(500, 5);
  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::vector<std::pair<double, int>> out;
  for (int i = 0; i < 500; i += 37) {
    tree.knn(pts[i], 1, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].second == i);
    CHECK(out[0].first == 0.0);
  }
}

TEST_CASE("K >= n returns the whole set sorted by distance") {
  auto pts = random_points(40, 9);
  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::vector<std::pair<double, int>> got, want;
  tree.knn({0, 0, 0}, 100, got);
  brute_knn(pts.data(), (int)pts.size(), {0, 0, 0}, 100, want);
  REQUIRE(got.size() == 40);
  CHECK(got == want);
}

TEST_CASE("empty tree yields empty results") {
  KdTree tree;
  tree.build(nullptr, 0);
  std::vector<std::pair<double, int>> out{{1, 1}};
  tree.knn({0, 0, 0}, 5, out);
  CHECK(out.empty());
  std::vector<int> r{3};
  tree.radius({0, 0, 0}, 1.0, r);
  CHECK(r.empty());
}

TEST_CASE("radius query equals brute filter") {
  auto pts = random_points(3000, 31, 10.0);
  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> U(-10.0, 10.0);
  std::vector<int> got;
  for (int q = 0; q < 50; ++q) {
    Vec3 query{U(rng), U(rng), U(rng)};
    double r2 = 4.0;
    tree.radius(query, r2, got);
    std::vector<int> want;
    for (int i = 0; i < (int)pts.size(); ++i)
      if ((pts[i] - query).norm2() <= r2) want.push_back(i);
    std::sort(got.begin(), got.end());
    CHECK(got == want);
  }
}

TEST_CASE("clustered data still matches brute force") {
  // tight clusters stress tie/prune logic
  std::mt19937_64 rng(77);
  std::normal_distribution<double> N(0.0, 0.05);
  std::uniform_real_distribution<double> U(-30.0, 30.0);
  std::vector<Vec3> pts;
  for (int c = 0; c < 40; ++c) {
    Vec3 center{U(rng), U(rng), U(rng)};
    for (int i = 0; i < 100; ++i) pts.push_back(center + Vec3{N(rng), N(rng), N(rng)});
  }
  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::vector<std::pair<double, int>> got, want;
  for (int q = 0; q < 30; ++q) {
    Vec3 query = pts[(size_t)(q * 131) % pts.size()];
    tree.knn(query, 50, got);
    brute_knn(pts.data(), (int)pts.size(), query, 50, want);
    CHECK(got == want);
  }
}

TEST_CASE("knn_graph rows equal independent knn queries") {
  auto run = [](const std::vector<Vec3>& pts, int k) {
    KdTree tree;
    tree.build(pts.data(), (int)pts.size());
    std::vector<int> off, nbr;
    tree.knn_graph(k, off, nbr);
    int kk = std::min(k, (int)pts.size());
    REQUIRE((int)off.size() == (int)pts.size() + 1);
    std::vector<std::pair<double, int>> want;
    for (int i = 0; i < (int)pts.size(); ++i) {
      REQUIRE(off[i + 1] - off[i] == kk);
      tree.knn(pts[i], k, want);
      for (int j = 0; j < kk; ++j) CHECK(nbr[off[i] + j] == want[j].second);
    }
  };
  run(random_points(3000, 91), 50);
  run(random_points(40, 92), 50);  // k > n
  // duplicates: tie order must survive the batched path
  std::mt19937_64 rng(93);
  std::uniform_int_distribution<int> C(0, 5);
  std::vector<Vec3> dup(600);
  for (auto& p : dup) p = {(double)C(rng), (double)C(rng), (double)C(rng)};
  run(dup, 17);
}
