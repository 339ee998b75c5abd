#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stm/ccnet.hpp"
#include "stm/replay.hpp"

namespace stm {

struct TrainConfig {
  ReplayConfig replay;      // replay.single_sweep trains the ablation model
  double lr_phase1 = 1e-3;  // batch-norm in batch mode
  double lr_phase2 = 1e-4;  // batch-norm frozen
  int val_every = 25;       // iterations between validation evaluations
  int patience = 10;        // stale val evals that end a phase
  int max_iters = 20000;    // total optimizer steps across both phases
  uint64_t seed = 1;
  bool norm_by_k = true;
  bool scalar_kernel = false;
  std::string out_dir;      // empty: no checkpoints / metrics files
};

struct TrainResult {
  CcNetwork net;  // best-validation parameters (final parameters without val)
  int iterations = 0;
  double first_loss = 0, last_loss = 0;
  double best_val = -1;  // best validation mean foreground IoU, -1 without val
  std::vector<double> loss_history;  // one entry per iteration
  std::string metrics_path, checkpoint_path;
};

// Batch-size-1 training: each iteration replays one training sequence to its
// key frame and takes one optimizer step on the key-frame memory loss.
// Replays are computed once and cached (the stored per-point probabilities
// never depend on the network). Two phases: lr_phase1 with live batch-norm
// statistics until validation stalls, then lr_phase2 with frozen statistics.
// Throws std::runtime_error when the loss turns non-finite.
TrainResult train(const TrainConfig& cfg, const std::vector<Sequence>& train_seqs,
                  const std::vector<SequenceGt>& train_gts,
                  const std::vector<Sequence>& val_seqs,
                  const std::vector<SequenceGt>& val_gts);

// Mean foreground IoU of eval-mode predictions over cached replays,
// restricted to each replay's key-frame camera mask.
double replay_val_miou(const CcNetwork& net, const std::vector<ReplayResult>& replays);

}  // namespace stm
