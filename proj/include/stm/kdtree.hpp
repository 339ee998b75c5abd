#pragma once

#include <utility>
#include <vector>

#include "stm/geometry.hpp"

namespace stm {

// Exact k-nearest-neighbor index over 3D points. Rebuilt from scratch on
// demand (the memory store mutates between query batches). Results are
// ordered by (squared distance, original index) ascending, so ties break
// toward earlier insertion — matched exactly by the brute-force oracle.
class KdTree {
 public:
  void build(const Vec3* pts, int n);
  bool built() const { return !nodes_.empty() || n_ == 0; }
  int size() const { return n_; }

  // Up to k nearest neighbors of q. `out` is cleared first.
  void knn(const Vec3& q, int k, std::vector<std::pair<double, int>>& out) const;

  // kNN of every indexed point against the whole index (row i = neighbors of
  // point i, ordered like knn()), as a CSR graph with uniform row width
  // min(k, size()). Exact — row i equals knn(point i, k) — but much faster
  // than n independent queries: points are visited in tree order and each
  // query's prune radius is warm-started from its predecessor's result.
  void knn_graph(int k, std::vector<int>& offsets, std::vector<int>& neighbors) const;

  // All points with squared distance <= r2, unordered. `out` is cleared first.
  void radius(const Vec3& q, double r2, std::vector<int>& out) const;

 private:
  struct Node {
    double split;       // split coordinate value
    int axis;           // 0..2, or -1 for leaf
    int a, b;           // children for inner nodes; [a, b) leaf range otherwise
  };
  int build_rec(int begin, int end);

  int n_ = 0;
  std::vector<Node> nodes_;
  // Leaf point storage, SoA for fast scans; idx_ maps back to original order.
  std::vector<double> px_, py_, pz_;
  std::vector<int> idx_;
};

// Reference scan used by tests and as the small-n fallback.
void brute_knn(const Vec3* pts, int n, const Vec3& q, int k,
               std::vector<std::pair<double, int>>& out);

}  // namespace stm
