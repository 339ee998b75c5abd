#pragma once

#include <cstdint>
#include <vector>

#include "stm/geometry.hpp"

namespace stm {

// Single-precision all-points kNN used by the real-time inference path, where
// the graph is rebuilt every frame and millimetre-scale neighbor ties don't
// matter. Distances are f32; each candidate is packed as
// (d2 bits << 32) | index, which orders by (distance, index) with plain
// integer compares. Deterministic for identical inputs; the offline/eval path
// keeps the exact double-precision KdTree.
class FastKnn {
 public:
  void build(const Vec3* pts, int n);
  int size() const { return n_; }

  // CSR graph: row i = kNN of point i (self included), uniform row width
  // min(k, n), each row ordered by (f32 squared distance, index).
  void knn_graph(int k, std::vector<int>& offsets, std::vector<int>& neighbors) const;

 private:
  struct Node {
    float split;
    int axis;  // 0..2, or -1 for leaf
    int a, b;
  };
  int build_rec(int begin, int end);

  int n_ = 0;
  std::vector<Node> nodes_;
  std::vector<float> px_, py_, pz_;
  std::vector<int> idx_;
};

// f32 oracle with identical distance expression and tie order; test-only.
void brute_knn32(const Vec3* pts, int n, int k,
                 std::vector<int>& offsets, std::vector<int>& neighbors);

namespace detail {
// In-place ascending sort of exactly 64 keys (bitonic network when AVX-512 is
// available). Exposed so tests can hammer it directly.
void sort64(uint64_t* keys);
// keys holds nblocks contiguous 64-key blocks; afterwards keys[0..64) are the
// 64 smallest of all of them, ascending. The rest of the buffer is clobbered.
void topk64(uint64_t* keys, int nblocks);
}  // namespace detail

}  // namespace stm
