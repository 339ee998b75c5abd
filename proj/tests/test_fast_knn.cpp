#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "stm/fast_knn.hpp"
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

// clusters + a ground sheet, like a street scene
std::vector<Vec3> street_points(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  std::normal_distribution<double> G(0, 1);
  std::vector<Vec3> pts;
  pts.reserve(n);
  while ((int)pts.size() < n) {
    if (U(rng) < 0.6) {
      pts.push_back({U(rng) * 120 - 20, U(rng) * 30 - 15, 0.05 * G(rng)});
    } else {
      double cx = U(rng) * 100, cy = U(rng) * 24 - 12;
      for (int j = 0; j < 40 && (int)pts.size() < n; ++j)
        pts.push_back({cx + 0.4 * G(rng), cy + 0.4 * G(rng), 1.0 + 0.8 * G(rng)});
    }
  }
  return pts;
}

void check_graph_equal(const std::vector<Vec3>& pts, int k) {
  FastKnn fk;
  fk.build(pts.data(), (int)pts.size());
  std::vector<int> off, nbr, boff, bnbr;
  fk.knn_graph(k, off, nbr);
  brute_knn32(pts.data(), (int)pts.size(), k, boff, bnbr);
  REQUIRE(off == boff);
  REQUIRE(nbr == bnbr);
}
}  // namespace

TEST_CASE("sort64 matches std::sort") {
  std::mt19937_64 rng(7);
  uint64_t a[64], b[64];
  auto check = [&] {
    std::copy(a, a + 64, b);
    std::sort(b, b + 64);
    detail::sort64(a);
    REQUIRE(std::equal(a, a + 64, b));
  };
  for (int it = 0; it < 3000; ++it) {  // random
    for (auto& x : a) x = rng();
    check();
  }
  for (int it = 0; it < 3000; ++it) {  // 0/1 patterns (0-1 principle stress)
    for (auto& x : a) x = rng() & 1;
    check();
  }
  for (int it = 0; it < 3000; ++it) {  // duplicates from a small alphabet
    for (auto& x : a) x = rng() % 7;
    check();
  }
  for (int it = 0; it < 3000; ++it) {  // extremes incl. UINT64_MAX and high bit
    for (auto& x : a) {
      int r = (int)(rng() % 4);
      x = r == 0 ? UINT64_MAX
        : r == 1 ? 0
        : r == 2 ? (rng() | 0x8000000000000000ull)
                 : rng();
    }
    check();
  }
  for (int i = 0; i < 64; ++i) a[i] = (uint64_t)i;  // sorted
  check();
  for (int i = 0; i < 64; ++i) a[i] = (uint64_t)(63 - i);  // reversed
  check();
  for (int i = 0; i < 64; ++i) a[i] = 42;  // all equal
  check();
}

TEST_CASE("topk64 finds the 64 smallest of n blocks") {
  std::mt19937_64 rng(13);
  for (int nb = 1; nb <= 6; ++nb) {
    for (int it = 0; it < 2000; ++it) {
      std::vector<uint64_t> keys(64 * nb), want;
      for (auto& x : keys) x = it % 3 == 0 ? rng() % 50 : rng();  // heavy ties 1/3 of the time
      want = keys;
      std::partial_sort(want.begin(), want.begin() + 64, want.end());
      detail::topk64(keys.data(), nb);
      REQUIRE(std::equal(keys.begin(), keys.begin() + 64, want.begin()));
    }
  }
}

TEST_CASE("knn_graph equals f32 brute force") {
  check_graph_equal(random_points(3000, 31), 50);
  check_graph_equal(random_points(2000, 32, 5.0), 13);  // dense
  check_graph_equal(street_points(4000, 33), 50);
  check_graph_equal(random_points(500, 34), 1);
  check_graph_equal(random_points(500, 35), 64);
  check_graph_equal(random_points(500, 36), 65);  // beyond the 64-wide fast path
  check_graph_equal(random_points(300, 37), 300);  // k == n
}

TEST_CASE("knn_graph handles duplicate coordinates and ties") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> C(0, 6);
  std::vector<Vec3> pts(900);
  for (auto& p : pts) p = {(double)C(rng), (double)C(rng), (double)C(rng)};
  check_graph_equal(pts, 13);
  check_graph_equal(pts, 50);
}

TEST_CASE("knn_graph edge cases") {
  std::vector<int> off, nbr;
  FastKnn fk;
  fk.build(nullptr, 0);
  fk.knn_graph(50, off, nbr);
  CHECK(off == std::vector<int>{0});
  CHECK(nbr.empty());

  std::vector<Vec3> one = {{1, 2, 3}};
  fk.build(one.data(), 1);
  fk.knn_graph(50, off, nbr);  // k > n: row width clamps to n
  CHECK(off == std::vector<int>({0, 1}));
  CHECK(nbr == std::vector<int>({0}));

  check_graph_equal(random_points(5, 42), 50);
}

TEST_CASE("knn_graph matches the f64 tree on exactly representable inputs") {
  // integer coordinates: f32 and f64 arithmetic agree bit for bit, so the
  // two engines must produce identical neighbor lists
  std::mt19937_64 rng(47);
  std::uniform_int_distribution<int> C(-40, 40);
  std::vector<Vec3> pts(2500);
  for (auto& p : pts) p = {(double)C(rng), (double)C(rng), (double)C(rng)};

  FastKnn fk;
  fk.build(pts.data(), (int)pts.size());
  std::vector<int> off, nbr;
  fk.knn_graph(20, off, nbr);

  KdTree tree;
  tree.build(pts.data(), (int)pts.size());
  std::vector<std::pair<double, int>> out;
  for (int i = 0; i < (int)pts.size(); ++i) {
    tree.knn(pts[i], 20, out);
    for (int j = 0; j < 20; ++j) CHECK(nbr[off[i] + j] == out[j].second);
  }
}

TEST_CASE("knn_graph is deterministic") {
  auto pts = street_points(3000, 53);
  FastKnn fk;
  fk.build(pts.data(), (int)pts.size());
  std::vector<int> off1, nbr1, off2, nbr2;
  fk.knn_graph(50, off1, nbr1);
  fk.knn_graph(50, off2, nbr2);
  CHECK(nbr1 == nbr2);
  FastKnn fk2;
  fk2.build(pts.data(), (int)pts.size());
  fk2.knn_graph(50, off2, nbr2);
  CHECK(nbr1 == nbr2);
}
