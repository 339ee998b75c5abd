#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stm/geometry.hpp"

namespace stm {

// Class ids. Background is always 0; foreground classes follow.
constexpr uint8_t kBackground = 0;
constexpr uint8_t kTrafficSign = 1;
constexpr uint8_t kConstruction = 2;
constexpr uint8_t kUnlabeled = 255;

inline const char* class_name(int c) {
  switch (c) {
    case kBackground: return "background";
    case kTrafficSign: return "traffic_sign";
    case kConstruction: return "construction";
    default: return "class?";
  }
}

// A probability simplex over C classes.
struct ClassProbs {
  std::vector<double> p;

  bool valid(double tol = 1e-6) const {
    double s = 0;
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
      s += v;
    }
    return std::abs(s - 1.0) <= tol;
  }
  int argmax() const {
    int best = 0;
    for (size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = (int)i;
    return best;
  }
};

// Dense H x W x C probability image, row-major, channel innermost.
// Stored in 32-bit floats so in-memory content round-trips bit-identically
// through the sequence file format.
struct LabelImage {
  int H = 0, W = 0, C = 0;
  std::vector<float> data;

  bool empty() const { return data.empty(); }
  void resize(int h, int w, int c) {
    H = h; W = w; C = c;
    data.assign((size_t)h * w * c, 0.f);
  }
  float* at(int r, int c) { return &data[((size_t)r * W + c) * C]; }
  const float* at(int r, int c) const { return &data[((size_t)r * W + c) * C]; }
};

// One LiDAR return in the sensor frame. Coordinates are 32-bit floats: the
// sequence file stores them as f32, and keeping the same width in memory makes
// file round trips exact.
struct SweepPoint {
  float x = 0, y = 0, z = 0;
  float intensity = 0;

  Vec3 pos() const { return {x, y, z}; }
};

// One LiDAR revolution: points, ego pose (sensor -> world), timestamp, and the
// segmenter's probability image for the synchronized camera frame.
struct Sweep {
  std::vector<SweepPoint> points;
  Pose pose;
  double timestamp = 0;
  LabelImage labels;
};

struct Sequence {
  int C = 3;
  int H = 0, W = 0;  // label image size
  std::vector<Sweep> sweeps;

  // Cumulative ego travel (meters) at each sweep, from pose translations.
  std::vector<double> odometer() const {
    std::vector<double> o(sweeps.size(), 0.0);
    for (size_t i = 1; i < sweeps.size(); ++i)
      o[i] = o[i - 1] + (sweeps[i].pose.t - sweeps[i - 1].pose.t).norm();
    return o;
  }
};

// Per-sequence ground truth sidecar, aligned with sweep point order.
// capture_class: class of the surface each point was measured on.
// target_class: class of that world position at the key frame (a surface that
// has since departed becomes background) — the training/eval target.
struct SequenceGt {
  uint32_t key_frame_index = 0;
  std::vector<uint8_t> in_window;     // per sweep: belongs to the training window
  std::vector<uint8_t> in_extension;  // per sweep: after the key frame (gt harvesting)
  std::vector<std::vector<uint8_t>> capture_class;
  std::vector<std::vector<uint8_t>> target_class;
};

// Per-channel dataset statistics used to standardize network input features.
struct FeatureStats {
  std::vector<double> mean, var;

  bool empty() const { return mean.empty(); }
};

}  // namespace stm
