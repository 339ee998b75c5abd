#include "stm/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace stm {

std::optional<Pixel> project_point(const CameraModel& cam, const Vec3& p_sensor) {
  Vec3 pc = transform(cam.extrinsic, p_sensor);
  if (pc.z <= 0.0) return std::nullopt;
  double u = cam.cx + cam.fx * pc.x / pc.z;
  double v = cam.cy + cam.fy * pc.y / pc.z;
  if (u < 0.0 || u >= cam.W || v < 0.0 || v >= cam.H) return std::nullopt;
  return Pixel{u, v};
}

PointLabels associate_labels(const Sweep& sweep, const CameraModel& cam) {
  if (sweep.labels.empty()) throw std::runtime_error("associate_labels: sweep has no label image");
  const LabelImage& img = sweep.labels;
  PointLabels out;
  out.C = img.C;
  out.probs.assign(sweep.points.size() * (size_t)img.C, 0.f);
  out.labeled.assign(sweep.points.size(), 0);
  for (size_t i = 0; i < sweep.points.size(); ++i) {
    auto px = project_point(cam, sweep.points[i].pos());
    if (!px) continue;
    // round half away from zero, then clamp
    int c = std::clamp((int)std::lround(px->u), 0, img.W - 1);
    int r = std::clamp((int)std::lround(px->v), 0, img.H - 1);
    const float* p = img.at(r, c);
    for (int k = 0; k < img.C; ++k) out.probs[i * img.C + k] = p[k];
    out.labeled[i] = 1;
  }
  return out;
}

std::vector<std::vector<uint8_t>> image_baseline_labels(const Sequence& seq,
                                                        const CameraModel& cam) {
  std::vector<std::vector<uint8_t>> out(seq.sweeps.size());
  for (size_t s = 0; s < seq.sweeps.size(); ++s) {
    const Sweep& sw = seq.sweeps[s];
    PointLabels pl = associate_labels(sw, cam);
    out[s].assign(sw.points.size(), kUnlabeled);
    for (size_t i = 0; i < sw.points.size(); ++i) {
      if (!pl.labeled[i]) continue;
      const float* p = &pl.probs[i * pl.C];
      int best = 0;
      for (int c = 1; c < pl.C; ++c)
        if (p[c] > p[best]) best = c;
      out[s][i] = (uint8_t)best;
    }
  }
  return out;
}

}  // namespace stm
