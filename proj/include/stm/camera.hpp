#pragma once

#include <optional>
#include <vector>

#include "stm/memory_store.hpp"
#include "stm/types.hpp"

namespace stm {

struct Pixel {
  double u = 0, v = 0;
};

// Pinhole camera. The camera frame follows the usual image convention
// (X right, Y down, Z forward); `extrinsic` maps sensor frame -> camera
// frame. Pixel k is centered at integer coordinate k and spans
// [k - 0.5, k + 0.5), so "nearest pixel" is plain rounding.
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int W = 0, H = 0;
  Pose extrinsic;

  // Forward-facing camera at the sensor origin with a given horizontal FOV.
  static CameraModel from_hfov(int w, int h, double hfov_rad) {
    CameraModel c;
    c.W = w;
    c.H = h;
    c.fx = c.fy = (w / 2.0) / std::tan(hfov_rad / 2.0);
    c.cx = w / 2.0;
    c.cy = h / 2.0;
    c.extrinsic.R = Mat3{{0, -1, 0, 0, 0, -1, 1, 0, 0}};  // X=-y_s, Y=-z_s, Z=x_s
    c.extrinsic.t = {0, 0, 0};
    return c;
  }
};

// Continuous pixel coordinates of a sensor-frame point, or nullopt when the
// point is behind the camera or falls outside [0,W) x [0,H).
std::optional<Pixel> project_point(const CameraModel& cam, const Vec3& p_sensor);

// Attach the label-image probabilities of the nearest pixel to every
// projectable point of the sweep.
PointLabels associate_labels(const Sweep& sweep, const CameraModel& cam);

// The image-projection baseline: every in-frame point across the sequence is
// labeled argmax of its associated probabilities at its own frame, and the
// label is never revised. kUnlabeled marks out-of-frame points.
std::vector<std::vector<uint8_t>> image_baseline_labels(const Sequence& seq,
                                                        const CameraModel& cam);

}  // namespace stm
