#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stm/graph.hpp"
#include "stm/memory_store.hpp"
#include "stm/types.hpp"

namespace stm {

// Continuous-convolution network over the memory kNN graph. Each layer
// weights every neighbor's projected features with a kernel emitted by a
// small MLP of the relative offset u_i - v_j, averages over the
// neighborhood, adds a residual projection of the point's own features, and
// applies per-channel batch norm and ReLU; the last layer emits raw logits.

constexpr int kKernelHidden = 16;  // kernel MLP hidden width
constexpr int kGraphK = 50;        // neighbors per point, self included
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// One layer's shape and where its tensors live inside CcNetwork::theta.
struct CcLayer {
  int F = 0, O = 0;  // input / output channels
  int Ok = 0;        // kernel width: O, or 1 broadcast over channels
  bool bn = false, relu = false;
  size_t w1 = 0, b1 = 0;  // kernel MLP: hidden x 3, hidden
  size_t w2 = 0, b2 = 0;  // kernel MLP: Ok x hidden, Ok
  size_t W = 0, R = 0;    // feature / residual projections, F x O
  size_t gamma = 0, beta = 0;  // BN scale/shift, O (bn layers only)
  size_t stats = 0;       // offset into run_stats: mean[O] then var[O]
};

struct CcNetwork {
  int C = 3;                   // classes; input feature dim is C + 3
  bool norm_by_k = true;       // average the neighbor sum (flag off: plain sum)
  bool scalar_kernel = false;  // kernel MLP emits one weight for all channels
  std::array<CcLayer, 4> layers;
  std::vector<double> theta;      // every trainable parameter, flat
  std::vector<double> run_stats;  // BN running mean|var, used when frozen
  FeatureStats feat_stats;        // input standardization (identity until fit)

  int feat_dim() const { return C + 3; }
};

// Named view of one parameter tensor inside theta.
struct TensorRef {
  std::string name;
  size_t off = 0, size = 0;
};

// Architecture: 4 layers (C+3 -> 16 -> 16 -> 16 -> C), BN+ReLU on the first
// three. Kernel MLPs and projections get uniform fan-in init, residual
// projections start as identity where square, BN at identity, running stats
// at mean 0 / var 1.
void ccnet_init(CcNetwork& net, int C, uint64_t seed, bool norm_by_k = true,
                bool scalar_kernel = false);

std::vector<TensorRef> ccnet_tensors(const CcNetwork& net);

// A network holding just one layer (as layers[0]) with arbitrary dimensions
// and uniformly drawn parameters; for oracle comparisons and benchmarks.
CcNetwork make_single_layer(int F, int O, bool bn, bool relu, bool norm_by_k,
                            bool scalar_kernel, uint64_t seed);

enum class BnMode {
  kBatch,   // batch statistics (training phase 1)
  kFrozen,  // running statistics, gradients still flow (fine-tune phase)
  kEval,    // running statistics, inference
};

// Activations retained by the forward pass for the backward pass.
struct LayerCache {
  std::vector<double> P;             // N x O neighbor projection W^T f
  std::vector<double> x;             // N x O pre-BN
  std::vector<double> mean, invstd;  // per channel, as used by this pass
  std::vector<double> out;           // N x O layer output
};

struct ForwardCache {
  std::array<LayerCache, 4> layer;
};

// Double-sum reference for one layer: for every point i and channel k,
// sum_d sum_j g_dk(u_i - v_j) f_dj with the factored kernel
// g_dk(z) = w_k(z) W_dk, scaled by 1/K_i when configured, plus the residual
// projection. No BN/ReLU, no gradients; oracle for the efficient variant.
void cc_layer_naive(const CcNetwork& net, int layer, const KnnGraph& g, const Vec3* pos,
                    const std::vector<double>& in, std::vector<double>& out);

// Efficient layer: h_i = (1/K_i) sum_j w(u_i - v_j) ⊙ (W^T f_j) + R^T f_i,
// then BN per the mode, then ReLU where flagged. A point with no neighbors
// keeps only its residual term. When run_stats is non-null and mode is
// kBatch, running statistics are updated in place (momentum 0.1).
void cc_layer_forward(const CcNetwork& net, int layer, const KnnGraph& g, const Vec3* pos,
                      const std::vector<double>& in, BnMode mode, std::vector<double>& out,
                      double* run_stats = nullptr, LayerCache* cache = nullptr);

// All 4 layers over a prebuilt graph; feats is N x feat_dim and already
// standardized. logits is N x C. cache is required for a later backward.
void ccnet_forward(const CcNetwork& net, const KnnGraph& g, const Vec3* pos,
                   const std::vector<double>& feats, BnMode mode, std::vector<double>& logits,
                   double* run_stats = nullptr, ForwardCache* cache = nullptr);

// Row-wise softmax, numerically stable; rows sum to 1.
void softmax_rows(const std::vector<double>& logits, int C, std::vector<double>& probs);

// Mean cross entropy of softmax(logits) against gt, skipping kUnlabeled
// entries, plus exact gradients for every parameter (positions are
// constants). grad is resized to theta's size. Runs its own forward in the
// given mode; running stats update only when run_stats is non-null.
double loss_and_gradients(const CcNetwork& net, const KnnGraph& g, const Vec3* pos,
                          const std::vector<double>& feats, const std::vector<uint8_t>& gt,
                          BnMode mode, std::vector<double>& grad, double* run_stats = nullptr,
                          std::vector<double>* logits_out = nullptr);

// Inference entry point: assembles standardized features from the store and
// occlusion scores, builds the K=50 graph once, runs eval-mode forward.
// Empty store yields empty outputs.
void network_forward(const CcNetwork& net, MemoryStore& store,
                     const std::vector<double>& occlusion, std::vector<double>& logits,
                     std::vector<double>& probs);

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;
  std::vector<double> m, v;

  void init(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

// Bias-corrected adaptive-moment update of params in place.
void adam_step(AdamState& opt, double lr, const std::vector<double>& grad,
               std::vector<double>& params);

// Checkpoint: magic "STMC", architecture, all parameters and BN running
// stats as f64, feature statistics, optimizer state optional.
void save_checkpoint(const std::string& path, const CcNetwork& net,
                     const AdamState* opt = nullptr);
// Throws on malformed files; returns false (only) when opt is requested but
// the file carries no optimizer state.
bool load_checkpoint(const std::string& path, CcNetwork& net, AdamState* opt = nullptr);

}  // namespace stm
