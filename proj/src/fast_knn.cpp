#include "stm/fast_knn.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

namespace stm {

namespace {
constexpr int kLeafSize = 64;

struct BuildPoint {
  float x, y, z;
  int idx;
  float coord(int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
};
thread_local std::vector<BuildPoint> g_build32;

inline uint64_t pack(float d2, int idx) {
  uint32_t bits;
  std::memcpy(&bits, &d2, 4);  // d2 >= 0, so IEEE bits order monotonically
  return ((uint64_t)bits << 32) | (uint32_t)idx;
}
}  // namespace

int FastKnn::build_rec(int begin, int end) {
  int node = (int)nodes_.size();
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[node] = {0.0f, -1, begin, end};
    return node;
  }
  float lo[3], hi[3];
  lo[0] = hi[0] = g_build32[begin].x;
  lo[1] = hi[1] = g_build32[begin].y;
  lo[2] = hi[2] = g_build32[begin].z;
  for (int i = begin + 1; i < end; ++i) {
    const BuildPoint& p = g_build32[i];
    lo[0] = std::min(lo[0], p.x);
    hi[0] = std::max(hi[0], p.x);
    lo[1] = std::min(lo[1], p.y);
    hi[1] = std::max(hi[1], p.y);
    lo[2] = std::min(lo[2], p.z);
    hi[2] = std::max(hi[2], p.z);
  }
  int axis = 0;
  if (hi[1] - lo[1] > hi[axis] - lo[axis]) axis = 1;
  if (hi[2] - lo[2] > hi[axis] - lo[axis]) axis = 2;
  int mid = (begin + end) / 2;
  std::nth_element(g_build32.begin() + begin, g_build32.begin() + mid, g_build32.begin() + end,
                   [axis](const BuildPoint& a, const BuildPoint& b) {
                     return a.coord(axis) < b.coord(axis);
                   });
  float split = g_build32[mid].coord(axis);
  int left = build_rec(begin, mid);
  int right = build_rec(mid, end);
  nodes_[node] = {split, axis, left, right};
  return node;
}

void FastKnn::build(const Vec3* pts, int n) {
  n_ = n;
  nodes_.clear();
  px_.resize(n);
  py_.resize(n);
  pz_.resize(n);
  idx_.resize(n);
  if (n == 0) return;
  g_build32.resize(n);
  for (int i = 0; i < n; ++i)
    g_build32[i] = {(float)pts[i].x, (float)pts[i].y, (float)pts[i].z, i};
  nodes_.reserve((size_t)(2 * n / kLeafSize + 8));
  build_rec(0, n);
  for (int i = 0; i < n; ++i) {
    px_[i] = g_build32[i].x;
    py_[i] = g_build32[i].y;
    pz_[i] = g_build32[i].z;
    idx_[i] = g_build32[i].idx;
  }
}

void FastKnn::knn_graph(int k, std::vector<int>& offsets, std::vector<int>& neighbors) const {
  const int n = n_;
  const int kk = std::min(k, n);
  offsets.resize((size_t)n + 1);
  for (int i = 0; i <= n; ++i) offsets[i] = i * kk;
  neighbors.resize((size_t)n * kk);
  if (n == 0 || kk == 0) return;

  // Per-query candidate buffers filled branch-free by compress-stores, then
  // one top-kk selection on packed keys at the end.
  std::vector<float> dbuf((size_t)n + 16);
  std::vector<int> obuf((size_t)n + 16);
  std::vector<uint64_t> keys;
  keys.reserve(4096);
  int stack[96];
  float prev_qx = 0, prev_qy = 0, prev_qz = 0;
  float prev_r = -1;  // sqrt of the previous query's kth distance

  for (int pos = 0; pos < n; ++pos) {
    const float qx = px_[pos], qy = py_[pos], qz = pz_[pos];
    // Warm-start the prune radius: by the triangle inequality the kth
    // distance here is at most the previous query's kth distance plus the
    // distance between the two query points (tree order keeps that small).
    float bound = std::numeric_limits<float>::infinity();
    if (prev_r >= 0) {
      float dx = qx - prev_qx, dy = qy - prev_qy, dz = qz - prev_qz;
      float step = std::sqrt(dx * dx + dy * dy + dz * dz);
      float rb = prev_r + step;
      // inflate past the rounding of sqrt/mul chains so all kk witnesses
      // guaranteed by the triangle inequality survive the f32 compare
      bound = rb * rb * 1.000002f + 1e-30f;
    }
  retry:
    int nc = 0;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& nd = nodes_[stack[--sp]];
      if (nd.axis < 0) {
#ifdef __AVX512F__
        const __m512 vx = _mm512_set1_ps(qx);
        const __m512 vy = _mm512_set1_ps(qy);
        const __m512 vz = _mm512_set1_ps(qz);
        const __m512 vb = _mm512_set1_ps(bound);
        for (int i = nd.a; i < nd.b; i += 16) {
          int m = nd.b - i;
          __mmask16 lane = m >= 16 ? (__mmask16)0xFFFF : (__mmask16)((1u << m) - 1);
          __m512 dx = _mm512_sub_ps(_mm512_maskz_loadu_ps(lane, &px_[i]), vx);
          __m512 dy = _mm512_sub_ps(_mm512_maskz_loadu_ps(lane, &py_[i]), vy);
          __m512 dz = _mm512_sub_ps(_mm512_maskz_loadu_ps(lane, &pz_[i]), vz);
          __m512 d2 = _mm512_add_ps(_mm512_add_ps(_mm512_mul_ps(dx, dx), _mm512_mul_ps(dy, dy)),
                                    _mm512_mul_ps(dz, dz));
          __mmask16 hit = _mm512_mask_cmp_ps_mask(lane, d2, vb, _CMP_LE_OQ);
          _mm512_mask_compressstoreu_ps(&dbuf[nc], hit, d2);
          _mm512_mask_compressstoreu_epi32(&obuf[nc], hit,
                                           _mm512_maskz_loadu_epi32(lane, &idx_[i]));
          nc += __builtin_popcount(hit);
        }
#else
        for (int i = nd.a; i < nd.b; ++i) {
          float dx = px_[i] - qx, dy = py_[i] - qy, dz = pz_[i] - qz;
          float d2 = dx * dx + dy * dy + dz * dz;
          if (d2 <= bound) {
            dbuf[nc] = d2;
            obuf[nc] = idx_[i];
            ++nc;
          }
        }
#endif
        continue;
      }
      float qa = nd.axis == 0 ? qx : nd.axis == 1 ? qy : qz;
      float diff = qa - nd.split;
      int near = diff < 0 ? nd.a : nd.b;
      int far = diff < 0 ? nd.b : nd.a;
      if (diff * diff <= bound) stack[sp++] = far;
      stack[sp++] = near;
    }

    if (nc < kk) {  // unreachable unless the bound guard above is ever wrong
      bound = std::numeric_limits<float>::infinity();
      goto retry;
    }

    // Top-kk selection. std::nth_element/sort dominate this routine at these
    // candidate counts, so pack into 64-key blocks (padded with UINT64_MAX)
    // and reduce block by block in registers: sort each block, merge it into
    // the running smallest-64, drop the top half.
    int* row = &neighbors[(size_t)idx_[pos] * kk];
    const uint64_t* sorted;
    int nb = (nc + 63) >> 6;
    keys.resize((size_t)nb * 64);
    for (int t = 0; t < nc; ++t) keys[t] = pack(dbuf[t], obuf[t]);
    for (int t = nc; t < nb * 64; ++t) keys[t] = UINT64_MAX;
    if (kk <= 64) {
      detail::topk64(keys.data(), nb);
      sorted = keys.data();
    } else {
      std::nth_element(keys.begin(), keys.begin() + kk, keys.end());
      std::sort(keys.begin(), keys.begin() + kk);
      sorted = keys.data();
    }

    for (int i = 0; i < kk; ++i) row[i] = (int)(uint32_t)sorted[i];
    uint32_t wb = (uint32_t)(sorted[kk - 1] >> 32);
    float wd2;
    std::memcpy(&wd2, &wb, 4);
    prev_r = std::sqrt(wd2);
    prev_qx = qx;
    prev_qy = qy;
    prev_qz = qz;
  }
}

void brute_knn32(const Vec3* pts, int n, int k,
                 std::vector<int>& offsets, std::vector<int>& neighbors) {
  int kk = std::min(k, n);
  offsets.resize((size_t)n + 1);
  for (int i = 0; i <= n; ++i) offsets[i] = i * kk;
  neighbors.resize((size_t)n * kk);
  std::vector<float> x(n), y(n), z(n);
  for (int i = 0; i < n; ++i) {
    x[i] = (float)pts[i].x;
    y[i] = (float)pts[i].y;
    z[i] = (float)pts[i].z;
  }
  std::vector<uint64_t> keys(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      float dx = x[j] - x[i], dy = y[j] - y[i], dz = z[j] - z[i];
      keys[j] = pack(dx * dx + dy * dy + dz * dz, j);
    }
    std::nth_element(keys.begin(), keys.begin() + kk, keys.end());
    std::sort(keys.begin(), keys.begin() + kk);
    for (int j = 0; j < kk; ++j) neighbors[(size_t)i * kk + j] = (int)(uint32_t)keys[j];
  }
}

}  // namespace stm
