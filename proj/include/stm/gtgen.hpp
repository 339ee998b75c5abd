#pragma once

#include <cstdint>
#include <vector>

#include "stm/camera.hpp"
#include "stm/geometry.hpp"
#include "stm/types.hpp"

namespace stm {

struct DbscanParams {
  double eps = 0.5;  // meters
  int min_pts = 5;   // neighborhood size that makes a core point (self included)
};

// Density-based clustering under Euclidean distance: cluster id per point,
// noise = -1. Core points have >= min_pts neighbors within eps (counting
// themselves); clusters are maximal density-connected core sets numbered by
// their smallest core index; border points join the lowest reachable cluster.
std::vector<int> dbscan(const std::vector<Vec3>& pts, const DbscanParams& prm);

// Near-range image-labeled points accumulated across the whole (extended)
// sequence: every in-frame point with sensor range <= range_limit, labeled
// argmax of its associated pixel probabilities, with provenance.
struct Harvest {
  std::vector<Vec3> pos;  // world frame
  std::vector<uint8_t> label;
  std::vector<uint32_t> sweep, index;

  size_t size() const { return pos.size(); }
};
Harvest harvest_near_labels(const Sequence& seq, const CameraModel& cam,
                            double range_limit = 25.0);

// Per foreground class, cluster that class's points; density noise is
// relabeled background, clustered points keep their class.
void denoise(Harvest& h, const DbscanParams& prm);

// Class for each target point: its own denoised label when it was harvested,
// else the label of the nearest denoised point within delta, else background.
// `own` holds the target's harvest index or -1.
std::vector<uint8_t> propagate_labels(const Harvest& denoised, const std::vector<Vec3>& targets,
                                      const std::vector<int64_t>& own, double delta);

struct GtgenConfig {
  double range_limit = 25.0;
  DbscanParams dbscan;
  double delta = 0.3;  // propagation distance cutoff
};

// The full automatic-GT pipeline over one extended sequence: harvest ->
// denoise -> propagate onto every training-window point. Window flags and the
// key frame come from `flags` (the simulator sidecar); non-window sweeps get
// kUnlabeled. Both class arrays of the result carry the computed labeling.
SequenceGt generate_gt(const Sequence& seq, const SequenceGt& flags, const CameraModel& cam,
                       const GtgenConfig& cfg);

}  // namespace stm
