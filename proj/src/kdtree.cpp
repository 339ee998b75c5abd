#include "stm/kdtree.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace stm {

namespace {
constexpr int kLeafSize = 32;

struct BuildPoint {
  Vec3 p;
  int idx;
  double coord(int axis) const { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }
};
thread_local std::vector<BuildPoint> g_build;
}  // namespace

int KdTree::build_rec(int begin, int end) {
  int node = (int)nodes_.size();
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[node] = {0.0, -1, begin, end};
    return node;
  }
  Vec3 lo = g_build[begin].p, hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    const Vec3& p = g_build[i].p;
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  Vec3 ext = hi - lo;
  int axis = 0;
  if (ext.y > ext.x) axis = 1;
  if (ext.z > (axis == 0 ? ext.x : ext.y)) axis = 2;
  int mid = (begin + end) / 2;
  std::nth_element(g_build.begin() + begin, g_build.begin() + mid, g_build.begin() + end,
                   [axis](const BuildPoint& a, const BuildPoint& b) {
                     return a.coord(axis) < b.coord(axis);
                   });
  double split = g_build[mid].coord(axis);
  int left = build_rec(begin, mid);
  int right = build_rec(mid, end);
  nodes_[node] = {split, axis, left, right};
  return node;
}

void KdTree::build(const Vec3* pts, int n) {
  n_ = n;
  nodes_.clear();
  px_.resize(n);
  py_.resize(n);
  pz_.resize(n);
  idx_.resize(n);
  if (n == 0) return;
  g_build.resize(n);
  for (int i = 0; i < n; ++i) g_build[i] = {pts[i], i};
  nodes_.reserve((size_t)(2 * n / kLeafSize + 8));
  build_rec(0, n);
  for (int i = 0; i < n; ++i) {
    px_[i] = g_build[i].p.x;
    py_[i] = g_build[i].p.y;
    pz_[i] = g_build[i].p.z;
    idx_[i] = g_build[i].idx;
  }
}

void KdTree::knn(const Vec3& q, int k, std::vector<std::pair<double, int>>& out) const {
  out.clear();
  if (k <= 0 || n_ == 0) return;
  // `out` is kept sorted ascending by (d2, idx) once it holds k entries, so
  // the worst element sits at the back and insertion is a short memmove.
  // Ties break toward the smaller original index, matching brute_knn.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double worst = kInf;
  auto insert_sorted = [&](std::pair<double, int> c) {
    auto pos = std::upper_bound(out.begin(), out.end(), c);
    size_t tail = out.end() - pos;
    if (tail > 1) std::memmove(&*pos + 1, &*pos, (tail - 1) * sizeof(c));
    if (tail > 0) *pos = c;
    worst = out.back().first;
  };
  auto consider = [&](double d2, int idx) {
    std::pair<double, int> c{d2, idx};
    if ((int)out.size() < k) {
      out.push_back(c);
      if ((int)out.size() == k) {
        std::sort(out.begin(), out.end());
        worst = out.back().first;
      }
    } else if (c < out.back()) {
      insert_sorted(c);
    }
  };
  // Depth-first, near side first; prune against the current kth distance.
  int stack[64];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    int ni = stack[--sp];
    if (ni < 0) continue;
    const Node& nd = nodes_[ni];
    if (nd.axis < 0) {
#ifdef __AVX512F__
      if ((int)out.size() == k) {
        const __m512d qx = _mm512_set1_pd(q.x);
        const __m512d qy = _mm512_set1_pd(q.y);
        const __m512d qz = _mm512_set1_pd(q.z);
        for (int i = nd.a; i < nd.b; i += 8) {
          int m = nd.b - i;
          __mmask8 lane = m >= 8 ? (__mmask8)0xFF : (__mmask8)((1u << m) - 1);
          __m512d dx = _mm512_sub_pd(_mm512_maskz_loadu_pd(lane, &px_[i]), qx);
          __m512d dy = _mm512_sub_pd(_mm512_maskz_loadu_pd(lane, &py_[i]), qy);
          __m512d dz = _mm512_sub_pd(_mm512_maskz_loadu_pd(lane, &pz_[i]), qz);
          // mul/add (no fma) so lanes match the scalar recompute bitwise;
          // this file is built with -ffp-contract=off for the same reason.
          __m512d d2 = _mm512_add_pd(_mm512_add_pd(_mm512_mul_pd(dx, dx), _mm512_mul_pd(dy, dy)),
                                     _mm512_mul_pd(dz, dz));
          // (<=) so equal-distance smaller-index candidates reach the exact check.
          __mmask8 hit = _mm512_mask_cmp_pd_mask(lane, d2, _mm512_set1_pd(worst), _CMP_LE_OQ);
          while (hit) {
            int l = __builtin_ctz(hit);
            hit = (__mmask8)(hit & (hit - 1));
            double dxx = px_[i + l] - q.x, dyy = py_[i + l] - q.y, dzz = pz_[i + l] - q.z;
            consider(dxx * dxx + dyy * dyy + dzz * dzz, idx_[i + l]);
          }
        }
        continue;
      }
#endif
      for (int i = nd.a; i < nd.b; ++i) {
        double dx = px_[i] - q.x, dy = py_[i] - q.y, dz = pz_[i] - q.z;
        consider(dx * dx + dy * dy + dz * dz, idx_[i]);
      }
      continue;
    }
    double qa = nd.axis == 0 ? q.x : nd.axis == 1 ? q.y : q.z;
    double diff = qa - nd.split;
    int near = diff < 0 ? nd.a : nd.b;
    int far = diff < 0 ? nd.b : nd.a;
    // Visit far side when the slab could still hold an equal-or-better entry
    // ((<=) so equal-distance smaller-index points are found).
    if ((int)out.size() < k || diff * diff <= worst) stack[sp++] = far;
    stack[sp++] = near;  // LIFO: near side explored first
  }
  if ((int)out.size() < k) std::sort(out.begin(), out.end());
}

void KdTree::knn_graph(int k, std::vector<int>& offsets, std::vector<int>& neighbors) const {
  const int n = n_;
  const int kk = std::min(k, n);
  offsets.resize((size_t)n + 1);
  for (int i = 0; i <= n; ++i) offsets[i] = i * kk;
  neighbors.resize((size_t)n * kk);
  if (n == 0 || kk == 0) return;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  struct Cand {
    double d2;
    int orig, pos;
  };
  std::vector<Cand> cand;
  cand.reserve(1024);
  std::vector<int> seed;  // tree positions of the previous query's row
  int stack[64];

  for (int pos = 0; pos < n; ++pos) {
    const double qx = px_[pos], qy = py_[pos], qz = pz_[pos];
    // The previous row's points are kk distinct candidates, so their largest
    // distance bounds this query's true kth distance from above.
    double bound = kInf;
    if ((int)seed.size() == kk) {
      bound = 0.0;
      for (int s : seed) {
        double dx = px_[s] - qx, dy = py_[s] - qy, dz = pz_[s] - qz;
        bound = std::max(bound, dx * dx + dy * dy + dz * dz);
      }
    }
    cand.clear();
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& nd = nodes_[stack[--sp]];
      if (nd.axis < 0) {
#ifdef __AVX512F__
        const __m512d vx = _mm512_set1_pd(qx);
        const __m512d vy = _mm512_set1_pd(qy);
        const __m512d vz = _mm512_set1_pd(qz);
        const __m512d vb = _mm512_set1_pd(bound);
        for (int i = nd.a; i < nd.b; i += 8) {
          int m = nd.b - i;
          __mmask8 lane = m >= 8 ? (__mmask8)0xFF : (__mmask8)((1u << m) - 1);
          __m512d dx = _mm512_sub_pd(_mm512_maskz_loadu_pd(lane, &px_[i]), vx);
          __m512d dy = _mm512_sub_pd(_mm512_maskz_loadu_pd(lane, &py_[i]), vy);
          __m512d dz = _mm512_sub_pd(_mm512_maskz_loadu_pd(lane, &pz_[i]), vz);
          __m512d d2 = _mm512_add_pd(_mm512_add_pd(_mm512_mul_pd(dx, dx), _mm512_mul_pd(dy, dy)),
                                     _mm512_mul_pd(dz, dz));
          __mmask8 hit = _mm512_mask_cmp_pd_mask(lane, d2, vb, _CMP_LE_OQ);
          while (hit) {
            int l = __builtin_ctz(hit);
            hit = (__mmask8)(hit & (hit - 1));
            double ddx = px_[i + l] - qx, ddy = py_[i + l] - qy, ddz = pz_[i + l] - qz;
            cand.push_back({ddx * ddx + ddy * ddy + ddz * ddz, idx_[i + l], i + l});
          }
        }
#else
        for (int i = nd.a; i < nd.b; ++i) {
          double dx = px_[i] - qx, dy = py_[i] - qy, dz = pz_[i] - qz;
          double d2 = dx * dx + dy * dy + dz * dz;
          if (d2 <= bound) cand.push_back({d2, idx_[i], i});
        }
#endif
        continue;
      }
      double qa = nd.axis == 0 ? qx : nd.axis == 1 ? qy : qz;
      double diff = qa - nd.split;
      int near = diff < 0 ? nd.a : nd.b;
      int far = diff < 0 ? nd.b : nd.a;
      if (diff * diff <= bound) stack[sp++] = far;
      stack[sp++] = near;
    }
    auto lt = [](const Cand& a, const Cand& b) {
      return a.d2 != b.d2 ? a.d2 < b.d2 : a.orig < b.orig;
    };
    if ((int)cand.size() > kk) {
      std::nth_element(cand.begin(), cand.begin() + kk, cand.end(), lt);
      cand.resize(kk);
    }
    std::sort(cand.begin(), cand.end(), lt);
    int* row = &neighbors[(size_t)idx_[pos] * kk];
    seed.resize(kk);
    for (int i = 0; i < kk; ++i) {
      row[i] = cand[i].orig;
      seed[i] = cand[i].pos;
    }
  }
}

void KdTree::radius(const Vec3& q, double r2, std::vector<int>& out) const {
  out.clear();
  if (n_ == 0) return;
  int stack[64];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& nd = nodes_[stack[--sp]];
    if (nd.axis < 0) {
      for (int i = nd.a; i < nd.b; ++i) {
        double dx = px_[i] - q.x, dy = py_[i] - q.y, dz = pz_[i] - q.z;
        if (dx * dx + dy * dy + dz * dz <= r2) out.push_back(idx_[i]);
      }
      continue;
    }
    double qa = nd.axis == 0 ? q.x : nd.axis == 1 ? q.y : q.z;
    double diff = qa - nd.split;
    int near = diff < 0 ? nd.a : nd.b;
    int far = diff < 0 ? nd.b : nd.a;
    if (diff * diff <= r2) stack[sp++] = far;
    stack[sp++] = near;
  }
}

void brute_knn(const Vec3* pts, int n, const Vec3& q, int k,
               std::vector<std::pair<double, int>>& out) {
  out.clear();
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back({(pts[i] - q).norm2(), i});
  if (k < n) {
    std::nth_element(out.begin(), out.begin() + k, out.end());
    out.resize(k);
  }
  std::sort(out.begin(), out.end());
}

}  // namespace stm
