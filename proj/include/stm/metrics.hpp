#pragma once

#include <cstdint>
#include <vector>

#include "stm/camera.hpp"
#include "stm/types.hpp"

namespace stm {

// Per-class point IoU: |pred=c ∧ gt=c| / |pred=c ∨ gt=c| over masked points,
// defined as 1 when the union is empty. An empty mask evaluates every point.
double point_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                 uint8_t cls, const std::vector<uint8_t>& mask = {});

// Pooled intersection/union counters, one pair per class id 0..C-1.
// Points whose gt is kUnlabeled are never counted.
struct IouAccum {
  std::vector<int64_t> inter, uni;
  int64_t n = 0;  // labeled masked points seen

  explicit IouAccum(int C) : inter(C, 0), uni(C, 0) {}
  int classes() const { return (int)inter.size(); }
  void add(uint8_t pred, uint8_t gt);
  void add(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
           const std::vector<uint8_t>& mask = {});
  double iou(int c) const;  // 1.0 on empty union
  double mean_foreground() const;  // mean over classes 1..C-1
};

// True iff the world point falls inside the camera frustum at the given ego
// pose (positive depth, projects into the image).
bool in_view(const Vec3& world, const Pose& pose, const CameraModel& cam);

// Per sweep, per point: does the point fall inside the camera frustum at the
// FINAL sweep's pose? This is the evaluation viewpoint: only points visible
// from the last frame count toward reported metrics.
std::vector<std::vector<uint8_t>> eval_mask(const Sequence& seq, const CameraModel& cam);

// IoU sliced by distance from the final ego position. iou[b][c] is NaN where
// the bin has an empty union for that class; mean[b] averages the defined
// foreground entries and is NaN when none is defined.
struct BinnedIou {
  std::vector<double> edges;             // B+1 ascending bin edges, meters
  std::vector<std::vector<double>> iou;  // B x C
  std::vector<double> mean;              // B
  std::vector<int64_t> count;            // masked labeled points per bin
};

BinnedIou binned_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                     const std::vector<Vec3>& positions, const Pose& final_pose,
                     const std::vector<double>& edges, int C,
                     const std::vector<uint8_t>& mask = {});

}  // namespace stm
