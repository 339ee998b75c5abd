#pragma once

#include <vector>

#include "stm/camera.hpp"
#include "stm/ccnet.hpp"
#include "stm/depth_raster.hpp"
#include "stm/memory_store.hpp"
#include "stm/types.hpp"

namespace stm {

struct ReplayConfig {
  double fg_threshold = 0.1;  // min foreground probability to store a point
  double horizon_m = 30.0;    // memory deprecation horizon (ego travel)
  int fill_radius = 2;        // raster gap-fill Chebyshev radius, cells
  int graph_k = kGraphK;      // neighbors per point in the network graph
  LidarConfig lidar;
  CameraModel camera = CameraModel::from_hfov(960, 600, 70.0 * M_PI / 180.0);
  bool single_sweep = false;  // key frame only, occlusion channel forced to 0
};

// Memory contents at the key frame after replaying a sequence: everything the
// network consumes plus per-point ground truth. `raw` rows hold unnormalized
// [class probs (C), occlusion, intensity, capture range].
struct ReplayResult {
  int C = 0;
  int key_frame = 0;
  int frames_replayed = 0;
  Pose key_pose;
  std::vector<Vec3> positions;  // world frame
  std::vector<double> raw;      // N x (C+3)
  KnnGraph graph;               // K = kGraphK capped by N
  std::vector<int> sweep_index, point_index;  // provenance into the sequence
  std::vector<uint8_t> capture;  // class at capture time (kUnlabeled w/o gt)
  std::vector<uint8_t> target;   // class at the key frame — the learning target
  std::vector<uint8_t> in_mask;  // inside the key-frame camera frustum

  int size() const { return (int)positions.size(); }
};

// Replays the sequence's training window through the memory (insert each
// sweep's camera-labeled foreground points, deprecate beyond the travel
// horizon), builds the key-frame depth raster, scores occlusion for every
// stored point, and assembles raw features. With gt == nullptr the key frame
// is the last sweep and the whole sequence is replayed; class targets are
// then kUnlabeled.
ReplayResult replay_to_key(const Sequence& seq, const SequenceGt* gt, const ReplayConfig& cfg);

// Per-channel mean/variance over the raw feature rows of the given replays
// (population variance, fixed accumulation order).
FeatureStats fit_feature_stats(const std::vector<const ReplayResult*>& replays, int C);

// Standardize a replay's raw features with dataset statistics.
void standardize_replay(const ReplayResult& r, const FeatureStats& stats,
                        std::vector<double>& feats);

}  // namespace stm
