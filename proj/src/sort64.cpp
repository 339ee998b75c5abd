#include <algorithm>
#include <cstdint>

#ifdef __AVX512F__
#include <immintrin.h>
#endif

#include "stm/fast_knn.hpp"

namespace stm::detail {

#ifdef __AVX512F__

namespace {

// compare-exchange between registers: a <- min, b <- max
inline void ce(__m512i& a, __m512i& b) {
  __m512i mn = _mm512_min_epu64(a, b);
  b = _mm512_max_epu64(a, b);
  a = mn;
}

const __m512i kRev = _mm512_set_epi64(0, 1, 2, 3, 4, 5, 6, 7);
const __m512i kSwap4 = _mm512_set_epi64(3, 2, 1, 0, 7, 6, 5, 4);
const __m512i kSwap2 = _mm512_set_epi64(5, 4, 7, 6, 1, 0, 3, 2);
const __m512i kSwap1 = _mm512_set_epi64(6, 7, 4, 5, 2, 3, 0, 1);

inline __m512i rev(__m512i v) { return _mm512_permutexvar_epi64(kRev, v); }

// ascending bitonic merge of one register holding a bitonic sequence
inline __m512i bm8(__m512i v) {
  __m512i w = _mm512_permutexvar_epi64(kSwap4, v);
  v = _mm512_mask_blend_epi64(0xF0, _mm512_min_epu64(v, w), _mm512_max_epu64(v, w));
  w = _mm512_permutexvar_epi64(kSwap2, v);
  v = _mm512_mask_blend_epi64(0xCC, _mm512_min_epu64(v, w), _mm512_max_epu64(v, w));
  w = _mm512_permutexvar_epi64(kSwap1, v);
  v = _mm512_mask_blend_epi64(0xAA, _mm512_min_epu64(v, w), _mm512_max_epu64(v, w));
  return v;
}

// merge two sorted 8-runs into a sorted 16-run across (a, b)
inline void merge16(__m512i& a, __m512i& b) {
  __m512i br = rev(b);
  __m512i lo = _mm512_min_epu64(a, br);
  __m512i hi = _mm512_max_epu64(a, br);
  a = bm8(lo);
  b = bm8(hi);
}

// merge two sorted 16-runs (a0|a1, b0|b1) into a sorted 32-run
inline void merge32(__m512i& a0, __m512i& a1, __m512i& b0, __m512i& b1) {
  __m512i r0 = rev(b1), r1 = rev(b0);
  __m512i l0 = _mm512_min_epu64(a0, r0), h0 = _mm512_max_epu64(a0, r0);
  __m512i l1 = _mm512_min_epu64(a1, r1), h1 = _mm512_max_epu64(a1, r1);
  ce(l0, l1);
  a0 = bm8(l0);
  a1 = bm8(l1);
  ce(h0, h1);
  b0 = bm8(h0);
  b1 = bm8(h1);
}

// sort the 64 keys held in r[0..7] ascending (r0[0] smallest .. r7[7] largest)
inline void sort_regs(__m512i r[8]) {
  // sort the 8 columns with Batcher's 8-input network (19 comparators)
  ce(r[0], r[1]); ce(r[2], r[3]); ce(r[4], r[5]); ce(r[6], r[7]);
  ce(r[0], r[2]); ce(r[1], r[3]); ce(r[4], r[6]); ce(r[5], r[7]);
  ce(r[1], r[2]); ce(r[5], r[6]);
  ce(r[0], r[4]); ce(r[1], r[5]); ce(r[2], r[6]); ce(r[3], r[7]);
  ce(r[2], r[4]); ce(r[3], r[5]);
  ce(r[1], r[2]); ce(r[3], r[4]); ce(r[5], r[6]);

  // 8x8 transpose: each register becomes a sorted 8-run
  __m512i t0 = _mm512_unpacklo_epi64(r[0], r[1]), t1 = _mm512_unpackhi_epi64(r[0], r[1]);
  __m512i t2 = _mm512_unpacklo_epi64(r[2], r[3]), t3 = _mm512_unpackhi_epi64(r[2], r[3]);
  __m512i t4 = _mm512_unpacklo_epi64(r[4], r[5]), t5 = _mm512_unpackhi_epi64(r[4], r[5]);
  __m512i t6 = _mm512_unpacklo_epi64(r[6], r[7]), t7 = _mm512_unpackhi_epi64(r[6], r[7]);
  __m512i v0 = _mm512_shuffle_i64x2(t0, t2, 0x88), v1 = _mm512_shuffle_i64x2(t1, t3, 0x88);
  __m512i v2 = _mm512_shuffle_i64x2(t0, t2, 0xDD), v3 = _mm512_shuffle_i64x2(t1, t3, 0xDD);
  __m512i v4 = _mm512_shuffle_i64x2(t4, t6, 0x88), v5 = _mm512_shuffle_i64x2(t5, t7, 0x88);
  __m512i v6 = _mm512_shuffle_i64x2(t4, t6, 0xDD), v7 = _mm512_shuffle_i64x2(t5, t7, 0xDD);
  r[0] = _mm512_shuffle_i64x2(v0, v4, 0x88);  // column 0
  r[4] = _mm512_shuffle_i64x2(v0, v4, 0xDD);  // column 4
  r[1] = _mm512_shuffle_i64x2(v1, v5, 0x88);
  r[5] = _mm512_shuffle_i64x2(v1, v5, 0xDD);
  r[2] = _mm512_shuffle_i64x2(v2, v6, 0x88);
  r[6] = _mm512_shuffle_i64x2(v2, v6, 0xDD);
  r[3] = _mm512_shuffle_i64x2(v3, v7, 0x88);
  r[7] = _mm512_shuffle_i64x2(v3, v7, 0xDD);

  // merge 8-runs -> 16 -> 32 -> 64
  merge16(r[0], r[1]);
  merge16(r[2], r[3]);
  merge16(r[4], r[5]);
  merge16(r[6], r[7]);
  merge32(r[0], r[1], r[2], r[3]);
  merge32(r[4], r[5], r[6], r[7]);
  // merge64: A = r0..r3 ascending, B = r4..r7 ascending
  __m512i s0 = rev(r[7]), s1 = rev(r[6]), s2 = rev(r[5]), s3 = rev(r[4]);
  __m512i l0 = _mm512_min_epu64(r[0], s0), h0 = _mm512_max_epu64(r[0], s0);
  __m512i l1 = _mm512_min_epu64(r[1], s1), h1 = _mm512_max_epu64(r[1], s1);
  __m512i l2 = _mm512_min_epu64(r[2], s2), h2 = _mm512_max_epu64(r[2], s2);
  __m512i l3 = _mm512_min_epu64(r[3], s3), h3 = _mm512_max_epu64(r[3], s3);
  // bitonic merge of the low 32
  ce(l0, l2); ce(l1, l3);
  ce(l0, l1); ce(l2, l3);
  r[0] = bm8(l0); r[1] = bm8(l1); r[2] = bm8(l2); r[3] = bm8(l3);
  // and the high 32
  ce(h0, h2); ce(h1, h3);
  ce(h0, h1); ce(h2, h3);
  r[4] = bm8(h0); r[5] = bm8(h1); r[6] = bm8(h2); r[7] = bm8(h3);
}

// a and b both sorted ascending; a <- the 64 smallest of the 128, sorted.
// (the discarded high half is why there is no merge_high counterpart)
inline void merge_low64(__m512i a[8], const __m512i b[8]) {
  __m512i l0 = _mm512_min_epu64(a[0], rev(b[7]));
  __m512i l1 = _mm512_min_epu64(a[1], rev(b[6]));
  __m512i l2 = _mm512_min_epu64(a[2], rev(b[5]));
  __m512i l3 = _mm512_min_epu64(a[3], rev(b[4]));
  __m512i l4 = _mm512_min_epu64(a[4], rev(b[3]));
  __m512i l5 = _mm512_min_epu64(a[5], rev(b[2]));
  __m512i l6 = _mm512_min_epu64(a[6], rev(b[1]));
  __m512i l7 = _mm512_min_epu64(a[7], rev(b[0]));
  // bitonic merge of the (bitonic) low 64
  ce(l0, l4); ce(l1, l5); ce(l2, l6); ce(l3, l7);
  ce(l0, l2); ce(l1, l3); ce(l4, l6); ce(l5, l7);
  ce(l0, l1); ce(l2, l3); ce(l4, l5); ce(l6, l7);
  a[0] = bm8(l0); a[1] = bm8(l1); a[2] = bm8(l2); a[3] = bm8(l3);
  a[4] = bm8(l4); a[5] = bm8(l5); a[6] = bm8(l6); a[7] = bm8(l7);
}

inline void load8(__m512i r[8], const uint64_t* p) {
  for (int i = 0; i < 8; ++i) r[i] = _mm512_loadu_si512(p + 8 * i);
}

}  // namespace

void sort64(uint64_t* keys) {
  __m512i r[8];
  load8(r, keys);
  sort_regs(r);
  for (int i = 0; i < 8; ++i) _mm512_storeu_si512(keys + 8 * i, r[i]);
}

void topk64(uint64_t* keys, int nblocks) {
  __m512i a[8];
  load8(a, keys);
  sort_regs(a);
  for (int b = 1; b < nblocks; ++b) {
    __m512i r[8];
    load8(r, keys + 64 * b);
    sort_regs(r);
    merge_low64(a, r);
  }
  for (int i = 0; i < 8; ++i) _mm512_storeu_si512(keys + 8 * i, a[i]);
}

#else

void sort64(uint64_t* keys) { std::sort(keys, keys + 64); }

void topk64(uint64_t* keys, int nblocks) {
  std::partial_sort(keys, keys + 64, keys + 64 * nblocks);
}

#endif

}  // namespace stm::detail
