#pragma once

#include <string>
#include <vector>

#include "stm/graph.hpp"
#include "stm/kdtree.hpp"
#include "stm/types.hpp"

namespace stm {

// Per-point association result for one sweep (see camera.hpp).
struct PointLabels {
  int C = 0;
  std::vector<float> probs;      // N x C, meaningful only where labeled
  std::vector<uint8_t> labeled;  // N

  int count_labeled() const {
    int n = 0;
    for (uint8_t l : labeled) n += l;
    return n;
  }
};

// API view of one stored point.
struct MemoryPoint {
  Vec3 position;  // world frame
  std::vector<double> probs;
  double intensity = 0;
  double capture_range = 0;
  int sweep_index = 0;
  int point_index = 0;  // index within its source sweep
  double odometer_at_capture = 0;
};

// The non-parametric memory: dynamically sized store of likely-foreground
// points with their raw segmenter probabilities (never overwritten), plus an
// exact kNN index rebuilt lazily after mutations.
class MemoryStore {
 public:
  explicit MemoryStore(int C) : C_(C) {}

  // Inserts in-camera points whose foreground probability (1 - P(background))
  // is >= fg_threshold. Positions are transformed to world frame using the
  // sweep pose; capture_range is the sensor-frame distance. Returns the
  // number inserted.
  int insert_sweep(const Sweep& sweep, const PointLabels& labels, double fg_threshold,
                   int sweep_index, double odometer);

  // Removes points older than horizon_m meters of ego travel (strictly).
  int deprecate(double current_odometer, double horizon_m);

  void clear();
  int size() const { return (int)pos_.size(); }
  int classes() const { return C_; }

  // Exact kNN among stored points, ordered by (distance, insertion order).
  void knn(const Vec3& query, int k, std::vector<std::pair<double, int>>& out);

  // Neighbor lists for every stored point (self included), K capped by size.
  void build_graph(int K, KnnGraph& g);

  MemoryPoint point(int i) const;
  const std::vector<Vec3>& positions() const { return pos_; }
  const std::vector<double>& probs() const { return probs_; }  // N x C
  const std::vector<double>& intensities() const { return intensity_; }
  const std::vector<double>& capture_ranges() const { return capture_range_; }
  const std::vector<int>& sweep_indices() const { return sweep_idx_; }
  const std::vector<int>& point_indices() const { return point_idx_; }

  // Raw feature rows [probs(C), occlusion, intensity, capture_range], N x D.
  void raw_features(const std::vector<double>& occlusion, std::vector<double>& out) const;

  // Standardized features: (f - mean) / sqrt(var + 1e-8). Requires dataset
  // statistics (see FeatureStats); throws if they are missing.
  void assemble_features(const std::vector<double>& occlusion, const FeatureStats& stats,
                         std::vector<double>& out) const;

  void export_ply(const std::string& path) const;

  static int feature_dim(int C) { return C + 3; }

 private:
  int C_;
  std::vector<Vec3> pos_;
  std::vector<double> probs_;  // N x C
  std::vector<double> intensity_, capture_range_, odo_;
  std::vector<int> sweep_idx_, point_idx_;
  KdTree tree_;
  bool dirty_ = true;

  void ensure_index();
};

// Standardize rows in place given per-channel statistics.
void standardize_features(std::vector<double>& rows, int dim, const FeatureStats& stats);

}  // namespace stm
