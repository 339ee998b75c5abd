#include "stm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stm {

namespace {

inline bool masked_in(const std::vector<uint8_t>& mask, size_t i) {
  return mask.empty() || mask[i] != 0;
}

}  // namespace

double point_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                 uint8_t cls, const std::vector<uint8_t>& mask) {
  if (pred.size() != gt.size() || (!mask.empty() && mask.size() != gt.size()))
    throw std::invalid_argument("point_iou: length mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!masked_in(mask, i)) continue;
    const bool p = pred[i] == cls, g = gt[i] == cls;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : (double)inter / (double)uni;
}

void IouAccum::add(uint8_t pred, uint8_t gt) {
  if (gt == kUnlabeled) return;
  const int C = classes();
  for (int c = 0; c < C; ++c) {
    const bool p = pred == c, g = gt == c;
    inter[c] += p && g;
    uni[c] += p || g;
  }
  ++n;
}

void IouAccum::add(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                   const std::vector<uint8_t>& mask) {
  if (pred.size() != gt.size() || (!mask.empty() && mask.size() != gt.size()))
    throw std::invalid_argument("IouAccum::add: length mismatch");
  for (size_t i = 0; i < pred.size(); ++i)
    if (masked_in(mask, i)) add(pred[i], gt[i]);
}

double IouAccum::iou(int c) const {
  return uni[c] == 0 ? 1.0 : (double)inter[c] / (double)uni[c];
}

double IouAccum::mean_foreground() const {
  const int C = classes();
  if (C <= 1) return 1.0;
  double s = 0;
  for (int c = 1; c < C; ++c) s += iou(c);
  return s / (C - 1);
}

bool in_view(const Vec3& world, const Pose& pose, const CameraModel& cam) {
  return project_point(cam, inverse_transform(pose, world)).has_value();
}

std::vector<std::vector<uint8_t>> eval_mask(const Sequence& seq, const CameraModel& cam) {
  std::vector<std::vector<uint8_t>> out(seq.sweeps.size());
  if (seq.sweeps.empty()) return out;
  const Pose& final_pose = seq.sweeps.back().pose;
  for (size_t s = 0; s < seq.sweeps.size(); ++s) {
    const Sweep& sw = seq.sweeps[s];
    out[s].resize(sw.points.size());
    for (size_t i = 0; i < sw.points.size(); ++i) {
      const Vec3 world = transform(sw.pose, sw.points[i].pos());
      out[s][i] = in_view(world, final_pose, cam) ? 1 : 0;
    }
  }
  return out;
}

BinnedIou binned_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                     const std::vector<Vec3>& positions, const Pose& final_pose,
                     const std::vector<double>& edges, int C,
                     const std::vector<uint8_t>& mask) {
  if (pred.size() != gt.size() || pred.size() != positions.size())
    throw std::invalid_argument("binned_iou: length mismatch");
  if (edges.size() < 2) throw std::invalid_argument("binned_iou: need >= 2 bin edges");
  for (size_t b = 1; b < edges.size(); ++b)
    if (!(edges[b] > edges[b - 1])) throw std::invalid_argument("binned_iou: edges not ascending");

  const int B = (int)edges.size() - 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  BinnedIou out;
  out.edges = edges;
  out.iou.assign(B, std::vector<double>(C, nan));
  out.mean.assign(B, nan);
  out.count.assign(B, 0);

  std::vector<IouAccum> acc(B, IouAccum(C));
  for (size_t i = 0; i < pred.size(); ++i) {
    if (!masked_in(mask, i) || gt[i] == kUnlabeled) continue;
    const double d = (positions[i] - final_pose.t).norm();
    if (d < edges.front() || d >= edges.back()) continue;
    int b = (int)(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin()) - 1;
    if (b < 0 || b >= B) continue;
    acc[b].add(pred[i], gt[i]);
    ++out.count[b];
  }
  for (int b = 0; b < B; ++b) {
    double s = 0;
    int n = 0;
    for (int c = 0; c < C; ++c) {
      if (acc[b].uni[c] == 0) continue;
      out.iou[b][c] = acc[b].iou(c);
      if (c >= 1) {
        s += out.iou[b][c];
        ++n;
      }
    }
    if (n > 0) out.mean[b] = s / n;
  }
  return out;
}

}  // namespace stm
