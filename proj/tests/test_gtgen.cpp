#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "stm/gtgen.hpp"
#include "stm/sim.hpp"

using namespace stm;

namespace {

// Independent O(n^2) reference: same clustering semantics, no spatial index.
std::vector<int> brute_dbscan(const std::vector<Vec3>& pts, const DbscanParams& prm) {
  const int n = (int)pts.size();
  const double r2 = prm.eps * prm.eps;
  std::vector<std::vector<int>> nbrs(n);
  std::vector<char> core(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if ((pts[i] - pts[j]).norm2() <= r2) nbrs[i].push_back(j);
    core[i] = (int)nbrs[i].size() >= prm.min_pts;
  }
  std::vector<int> out(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || out[i] >= 0) continue;
    // flood fill this core's density-connected component
    std::vector<int> stack{i};
    out[i] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int q : nbrs[p])
        if (core[q] && out[q] < 0) {
          out[q] = next;
          stack.push_back(q);
        }
    }
    ++next;
  }
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (int j : nbrs[i])
      if (core[j] && (best < 0 || out[j] < best)) best = out[j];
    out[i] = best;
  }
  return out;
}

// Canonical partition: clusters as sorted member lists, sorted by first member.
std::vector<std::vector<int>> canon(const std::vector<int>& ids) {
  std::map<int, std::vector<int>> m;
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= 0) m[ids[i]].push_back((int)i);
  std::vector<std::vector<int>> out;
  for (auto& [k, v] : m) out.push_back(v);
  std::sort(out.begin(), out.end());
  return out;
}

std::set<int> noise_set(const std::vector<int>& ids) {
  std::set<int> s;
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0) s.insert((int)i);
  return s;
}

}  // namespace

TEST_CASE("dbscan: spec'd hand instances") {
  DbscanParams prm;
  prm.eps = 0.5;

  SUBCASE("five points around a common core form one cluster") {
    prm.min_pts = 3;
    std::vector<Vec3> pts = {{0, 0, 0}, {0.3, 0, 0}, {-0.3, 0, 0}, {0, 0.3, 0}, {0, -0.3, 0}};
    auto ids = dbscan(pts, prm);
    for (int c : ids) CHECK(c == 0);
  }
  SUBCASE("an isolated point is noise") {
    prm.min_pts = 2;
    std::vector<Vec3> pts = {{0, 0, 0}};
    auto ids = dbscan(pts, prm);
    CHECK(ids[0] == -1);
  }
  SUBCASE("two separated clusters numbered by smallest core index") {
    prm.min_pts = 2;
    std::vector<Vec3> pts = {{10, 0, 0}, {10.1, 0, 0}, {0, 0, 0}, {0.1, 0, 0}};
    auto ids = dbscan(pts, prm);
    CHECK(ids[0] == 0);
    CHECK(ids[1] == 0);
    CHECK(ids[2] == 1);
    CHECK(ids[3] == 1);
  }
  SUBCASE("border point joins the lowest reachable cluster") {
    prm.min_pts = 6;
    prm.eps = 1.0;
    // two 6-point chains, cores among themselves but 1.45 apart; the middle
    // point sees only 2 points of each chain (5 nbrs incl. self < 6: border)
    std::vector<Vec3> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({i * 0.19, 0, 0});        // chain A
    for (int i = 0; i < 6; ++i) pts.push_back({2.4 + i * 0.19, 0, 0});  // chain B
    pts.push_back({1.6, 0, 0});                                         // border of both
    auto ids = dbscan(pts, prm);
    CHECK(ids[0] == 0);
    CHECK(ids[6] == 1);
    CHECK(ids[12] == 0);
  }
}

TEST_CASE("dbscan agrees with the brute-force reference on 100 random instances") {
  std::mt19937_64 rng(424242);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 20 + (int)(rng() % 281);  // up to 300
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    // a few planted dense blobs so clusters actually form
    std::uniform_real_distribution<double> o(-0.3, 0.3);
    for (int b = 0; b < 3; ++b) {
      const Vec3 c{u(rng), u(rng), u(rng)};
      for (int k = 0; k < 12 && b * 12 + k < n; ++k)
        pts[b * 12 + k] = c + Vec3{o(rng), o(rng), o(rng)};
    }
    DbscanParams prm;
    prm.eps = 0.4 + 0.3 * (inst % 3);
    prm.min_pts = 2 + (inst % 5);
    const auto a = dbscan(pts, prm);
    const auto b = brute_dbscan(pts, prm);
    REQUIRE(canon(a) == canon(b));
    REQUIRE(noise_set(a) == noise_set(b));
  }
}

TEST_CASE("dbscan partition is permutation-stable") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<Vec3> pts(120);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  for (int k = 0; k < 15; ++k) pts[k] = Vec3{1, 1, 1} + pts[k] * 0.05;
  DbscanParams prm;
  prm.eps = 0.6;
  prm.min_pts = 4;
  const auto base = dbscan(pts, prm);

  std::vector<int> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> shuffled(pts.size());
  for (size_t i = 0; i < perm.size(); ++i) shuffled[i] = pts[perm[i]];
  const auto sh = dbscan(shuffled, prm);
  std::vector<int> unshuffled(pts.size());
  for (size_t i = 0; i < perm.size(); ++i) unshuffled[perm[i]] = sh[i];

  CHECK(canon(base) == canon(unshuffled));
  CHECK(noise_set(base) == noise_set(unshuffled));
}

namespace {

// Minimal sequence: one sweep at the origin, hand-placed points, and a label
// image that is uniform per class column so association is unambiguous.
Sequence hand_sequence(const std::vector<SweepPoint>& pts, int label_cls) {
  Sequence seq;
  seq.C = 3;
  seq.H = 20;
  seq.W = 20;
  Sweep sw;
  sw.points = pts;
  sw.pose.t = {0, 0, 0};
  sw.labels.resize(20, 20, 3);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c)
      for (int k = 0; k < 3; ++k) sw.labels.at(r, c)[k] = k == label_cls ? 0.9f : 0.05f;
  seq.sweeps.push_back(std::move(sw));
  return seq;
}

}  // namespace

TEST_CASE("harvest_near_labels") {
  const CameraModel cam = CameraModel::from_hfov(20, 20, 90.0 * M_PI / 180.0);

  SUBCASE("range bound is inclusive at exactly 25 m") {
    std::vector<SweepPoint> pts = {
        {25.0f, 0, 0, 0.5f},   // exactly at the limit
        {24.9f, 0, 0, 0.5f},   // inside
        {25.1f, 0, 0, 0.5f},   // outside
        {-5.0f, 0, 0, 0.5f},   // behind the camera: not in frame
    };
    Sequence seq = hand_sequence(pts, kTrafficSign);
    Harvest h = harvest_near_labels(seq, cam, 25.0);
    REQUIRE(h.size() == 2);
    CHECK(h.pos[0].x == doctest::Approx(25.0));
    CHECK(h.pos[1].x == doctest::Approx(24.9));
    CHECK(h.label[0] == kTrafficSign);
    CHECK(h.sweep[0] == 0);
    CHECK(h.index[0] == 0);
    CHECK(h.index[1] == 1);
  }
  SUBCASE("all points beyond the limit -> empty") {
    std::vector<SweepPoint> pts = {{30, 0, 0, 0.5f}, {40, 1, 0, 0.5f}};
    Sequence seq = hand_sequence(pts, kConstruction);
    CHECK(harvest_near_labels(seq, cam, 25.0).size() == 0);
  }
  SUBCASE("a static cone passed over ~20 frames accumulates ~20x its single-frame points") {
    Scenario sc;
    sc.seed = 5;
    sc.ego.wps = {{0, 0, 1.8}, {35, 0, 1.8}};
    sc.ego.speed = 5;  // 0.5 m steps
    sc.cam_w = 64;
    sc.cam_h = 40;
    sc.key_at_m = 35;
    sc.lidar.sigma = 0;
    sc.statics.push_back(ground_plane(0));
    sc.statics.push_back(make_cone({25, 4, 0}, 0.35, 0.8));  // passes ~10 m abeam
    SimResult r = generate_sequence(sc);
    Harvest h = harvest_near_labels(r.seq, sc.camera(), 25.0);
    // count harvested construction-surface points per sweep (by provenance)
    std::map<uint32_t, int> per_sweep;
    for (size_t i = 0; i < h.size(); ++i)
      if (r.gt.capture_class[h.sweep[i]][h.index[i]] == kConstruction) ++per_sweep[h.sweep[i]];
    REQUIRE(per_sweep.size() >= 15);  // visible and in near range across ~20 frames
    int total = 0, peak = 0;
    for (auto& [s, cnt] : per_sweep) {
      total += cnt;
      peak = std::max(peak, cnt);
    }
    CHECK(total >= 10 * peak);  // accumulation, not a single lucky frame
  }
}

TEST_CASE("denoise") {
  DbscanParams prm;
  prm.eps = 0.5;
  prm.min_pts = 4;

  SUBCASE("isolated foreground point 5 m from a tight cluster becomes background") {
    Harvest h;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> o(-0.15, 0.15);
    for (int i = 0; i < 50; ++i) {
      h.pos.push_back(Vec3{10 + o(rng), o(rng), o(rng)});
      h.label.push_back(kTrafficSign);
    }
    h.pos.push_back({15, 0, 0});
    h.label.push_back(kTrafficSign);
    h.sweep.assign(h.size(), 0);
    h.index.assign(h.size(), 0);
    denoise(h, prm);
    for (int i = 0; i < 50; ++i) CHECK(h.label[i] == kTrafficSign);
    CHECK(h.label[50] == kBackground);
  }
  SUBCASE("no foreground points -> unchanged") {
    Harvest h;
    h.pos = {{0, 0, 0}, {9, 9, 9}};
    h.label = {kBackground, kBackground};
    denoise(h, prm);
    CHECK(h.label[0] == kBackground);
    CHECK(h.label[1] == kBackground);
  }
  SUBCASE("one dense cluster -> labels unchanged") {
    Harvest h;
    for (int i = 0; i < 30; ++i) {
      h.pos.push_back({i * 0.1, 0, 0});
      h.label.push_back(kConstruction);
    }
    denoise(h, prm);
    for (auto l : h.label) CHECK(l == kConstruction);
  }
  SUBCASE("classes are clustered independently") {
    Harvest h;
    // 5 sign points and 5 construction points interleaved at the same spot:
    // jointly 10 >= min_pts 6 but per class only 5 < 6 -> both classes noise
    for (int i = 0; i < 5; ++i) {
      h.pos.push_back({i * 0.05, 0, 0});
      h.label.push_back(kTrafficSign);
      h.pos.push_back({i * 0.05, 0.01, 0});
      h.label.push_back(kConstruction);
    }
    DbscanParams strict;
    strict.eps = 0.5;
    strict.min_pts = 6;
    denoise(h, strict);
    for (auto l : h.label) CHECK(l == kBackground);
  }
}

TEST_CASE("propagate_labels") {
  Harvest den;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> o(-0.1, 0.1);
  for (int i = 0; i < 20; ++i) {
    den.pos.push_back(Vec3{5 + o(rng), o(rng), o(rng)});
    den.label.push_back(kConstruction);
  }
  den.pos.push_back({0, 0, 0});
  den.label.push_back(kBackground);

  SUBCASE("within delta -> cluster class; far -> background") {
    std::vector<Vec3> targets = {{5.0, 0.15, 0}, {7, 2, 0}};
    std::vector<int64_t> own(targets.size(), -1);
    auto out = propagate_labels(den, targets, own, 0.3);
    CHECK(out[0] == kConstruction);
    CHECK(out[1] == kBackground);
  }
  SUBCASE("a stray background point on the object does not shadow foreground evidence") {
    Harvest mix = den;
    mix.pos.push_back({5.0, 0.16, 0});  // bg-labeled point nearer than any cluster member
    mix.label.push_back(kBackground);
    std::vector<Vec3> targets = {{5.0, 0.18, 0}};
    std::vector<int64_t> own = {-1};
    auto out = propagate_labels(mix, targets, own, 0.3);
    CHECK(out[0] == kConstruction);
  }
  SUBCASE("own harvested label wins over the nearest neighbor") {
    std::vector<Vec3> targets = {{5.0, 0.0, 0}};
    std::vector<int64_t> own = {20};  // the background point's harvest row
    auto out = propagate_labels(den, targets, own, 0.3);
    CHECK(out[0] == kBackground);
  }
  SUBCASE("empty denoised set -> all background") {
    Harvest empty;
    std::vector<Vec3> targets = {{0, 0, 0}, {1, 1, 1}};
    std::vector<int64_t> own(2, -1);
    auto out = propagate_labels(empty, targets, own, 0.3);
    CHECK(out[0] == kBackground);
    CHECK(out[1] == kBackground);
  }
  SUBCASE("never assigns a class absent from the denoised set") {
    std::mt19937_64 r2(9);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    std::vector<Vec3> targets(500);
    for (auto& t : targets) t = {u(r2), u(r2), u(r2)};
    std::vector<int64_t> own(targets.size(), -1);
    auto out = propagate_labels(den, targets, own, 1.0);
    for (auto c : out) CHECK((c == kBackground || c == kConstruction));
  }
}

TEST_CASE("generate_gt end to end") {
  SUBCASE("noiseless static scenario: >= 99% agreement with simulator targets") {
    Scenario sc = load_scenario(STM_SCENARIO_DIR "/mixed.json");
    sc.noise = NoiseConfig{};
    sc.lidar.sigma = 0;
    sc.actors.clear();      // static world
    sc.extension_m = 30;    // harvesting tail
    SimResult r = generate_sequence(sc);
    GtgenConfig cfg;
    SequenceGt gen = generate_gt(r.seq, r.gt, sc.camera(), cfg);

    int64_t agree = 0, total = 0;
    for (size_t i = 0; i < r.seq.sweeps.size(); ++i) {
      if (!r.gt.in_window[i]) continue;
      for (size_t k = 0; k < r.gt.target_class[i].size(); ++k) {
        ++total;
        agree += gen.target_class[i][k] == r.gt.target_class[i][k];
      }
    }
    REQUIRE(total > 10000);
    CHECK((double)agree / total >= 0.99);
  }
  SUBCASE("reinforce: far sign points labeled sign with >= 95% agreement") {
    Scenario sc = load_scenario(STM_SCENARIO_DIR "/reinforce.json");
    SimResult r = generate_sequence(sc);
    GtgenConfig cfg;
    SequenceGt gen = generate_gt(r.seq, r.gt, sc.camera(), cfg);

    int64_t agree = 0, total = 0;
    for (size_t i = 0; i < r.seq.sweeps.size(); ++i) {
      if (!r.gt.in_window[i]) continue;
      for (size_t k = 0; k < r.gt.capture_class[i].size(); ++k) {
        if (r.gt.capture_class[i][k] != kTrafficSign) continue;
        if (r.seq.sweeps[i].points[k].pos().norm() <= 25.0) continue;
        ++total;
        agree += gen.target_class[i][k] == kTrafficSign;
      }
    }
    REQUIRE(total >= 50);  // the sign is genuinely observed beyond 25 m
    CAPTURE(agree);
    CAPTURE(total);
    CHECK((double)agree / total >= 0.95);
  }
  SUBCASE("non-window sweeps come back unlabeled") {
    Scenario sc = load_scenario(STM_SCENARIO_DIR "/forget.json");
    SimResult r = generate_sequence(sc);
    SequenceGt gen = generate_gt(r.seq, r.gt, sc.camera(), GtgenConfig{});
    bool saw_ext = false;
    for (size_t i = 0; i < r.seq.sweeps.size(); ++i) {
      if (r.gt.in_window[i]) continue;
      saw_ext = true;
      for (uint8_t c : gen.target_class[i]) CHECK(c == kUnlabeled);
    }
    CHECK(saw_ext);
  }
}
