#pragma once

#include <vector>

namespace stm {

// kNN graph in CSR form; neighbor lists are ordered by (distance, index)
// ascending and include the query point itself when it is in the point set.
struct KnnGraph {
  int N = 0;
  std::vector<int> off;  // N+1 offsets into idx
  std::vector<int> idx;

  int degree(int i) const { return off[i + 1] - off[i]; }
  const int* neighbors(int i) const { return &idx[off[i]]; }
  size_t pairs() const { return idx.size(); }
};

}  // namespace stm
