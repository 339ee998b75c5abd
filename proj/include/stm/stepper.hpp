#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stm/ccnet.hpp"
#include "stm/fast_knn.hpp"
#include "stm/memory_store.hpp"
#include "stm/replay.hpp"

namespace stm {

// Online per-frame path: one call ingests a sweep into the memory, drops
// points beyond the travel horizon, scores occlusion against the sweep's
// depth raster, and runs the network over the updated memory — the
// frame-rate loop, in single precision. Weights are converted once at
// construction with batch norm folded into a per-channel affine; the graph
// comes from the f32 FastKnn index. Deterministic for identical inputs, but
// predictions may differ from the double-precision offline path where
// distances or logits tie at f32 resolution.
class FrameStepper {
 public:
  FrameStepper(const CcNetwork& net, const ReplayConfig& cfg);

  // Processes one frame; returns the number of memory points evaluated.
  // Predictions, logits, and occlusion scores refer to the store's current
  // point order until the next call.
  int step(const Sweep& sweep, int sweep_index, double odometer);

  const MemoryStore& store() const { return store_; }
  const std::vector<uint8_t>& pred() const { return pred_; }
  const std::vector<float>& logits() const { return logits_; }
  const std::vector<double>& occlusion() const { return occ_; }

 private:
  struct LayerW {
    int F = 0, O = 0, Ok = 0;
    bool relu = false;
    std::vector<float> w1, b1;      // kernel MLP: hidden x 3, hidden
    std::vector<float> w2t, b2;     // kernel MLP out, transposed: hidden x Ok
    std::vector<float> W, R;        // projections, F x O
    std::vector<float> scale, shift;  // folded eval-mode batch norm affine
  };

  void forward(int N);

  ReplayConfig cfg_;
  MemoryStore store_;
  int C_;
  bool norm_by_k_ = true, scalar_kernel_ = false;
  std::array<LayerW, 4> lw_;
  std::vector<float> fmean_, finvstd_;  // feature standardization

  FastKnn knn_;
  std::vector<int> off_, nbr_;
  std::vector<double> occ_, raw_;
  std::vector<float> feats_, cur_, nxt_, P_, logits_;
  std::vector<uint8_t> pred_;
};

}  // namespace stm
