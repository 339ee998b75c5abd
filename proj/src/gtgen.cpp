#include "stm/gtgen.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "stm/kdtree.hpp"

namespace stm {

namespace {

int uf_find(std::vector<int>& up, int i) {
  while (up[i] != i) {
    up[i] = up[up[i]];
    i = up[i];
  }
  return i;
}

}  // namespace

std::vector<int> dbscan(const std::vector<Vec3>& pts, const DbscanParams& prm) {
  if (prm.eps <= 0) throw std::invalid_argument("dbscan: eps must be positive");
  if (prm.min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
  const int n = (int)pts.size();
  std::vector<int> out(n, -1);
  if (n == 0) return out;

  KdTree tree;
  tree.build(pts.data(), n);
  const double r2 = prm.eps * prm.eps;

  std::vector<std::vector<int>> nbrs(n);
  std::vector<char> core(n, 0);
  {
    std::vector<int> hits;
    for (int i = 0; i < n; ++i) {
      tree.radius(pts[i], r2, hits);
      core[i] = (int)hits.size() >= prm.min_pts;
      nbrs[i] = hits;
    }
  }

  // union density-connected cores, then number clusters by smallest core index
  std::vector<int> up(n);
  std::iota(up.begin(), up.end(), 0);
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (int j : nbrs[i]) {
      if (!core[j]) continue;
      const int a = uf_find(up, i), b = uf_find(up, j);
      if (a != b) up[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> cluster_id(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const int r = uf_find(up, i);
    if (cluster_id[r] < 0) cluster_id[r] = next++;
    out[i] = cluster_id[r];
  }
  // border points join the lowest reachable cluster
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (int j : nbrs[i])
      if (core[j]) {
        const int c = out[j];
        if (best < 0 || c < best) best = c;
      }
    out[i] = best;
  }
  return out;
}

Harvest harvest_near_labels(const Sequence& seq, const CameraModel& cam, double range_limit) {
  Harvest h;
  const double r2lim = range_limit * range_limit;
  for (size_t i = 0; i < seq.sweeps.size(); ++i) {
    const Sweep& sw = seq.sweeps[i];
    const PointLabels labels = associate_labels(sw, cam);
    for (size_t k = 0; k < sw.points.size(); ++k) {
      if (!labels.labeled[k]) continue;
      const Vec3 p = sw.points[k].pos();
      if (p.norm2() > r2lim) continue;
      const float* pr = &labels.probs[k * labels.C];
      int am = 0;
      for (int c = 1; c < labels.C; ++c)
        if (pr[c] > pr[am]) am = c;
      h.pos.push_back(transform(sw.pose, p));
      h.label.push_back((uint8_t)am);
      h.sweep.push_back((uint32_t)i);
      h.index.push_back((uint32_t)k);
    }
  }
  return h;
}

void denoise(Harvest& h, const DbscanParams& prm) {
  int cmax = 0;
  for (uint8_t c : h.label) cmax = std::max(cmax, (int)c);
  for (int c = 1; c <= cmax; ++c) {
    std::vector<Vec3> pts;
    std::vector<size_t> where;
    for (size_t i = 0; i < h.size(); ++i)
      if (h.label[i] == c) {
        pts.push_back(h.pos[i]);
        where.push_back(i);
      }
    if (pts.empty()) continue;
    const std::vector<int> cl = dbscan(pts, prm);
    for (size_t k = 0; k < where.size(); ++k)
      if (cl[k] < 0) h.label[where[k]] = kBackground;
  }
}

std::vector<uint8_t> propagate_labels(const Harvest& denoised, const std::vector<Vec3>& targets,
                                      const std::vector<int64_t>& own, double delta) {
  if (delta <= 0) throw std::invalid_argument("propagate_labels: delta must be positive");
  if (own.size() != targets.size())
    throw std::invalid_argument("propagate_labels: own/targets length mismatch");
  std::vector<uint8_t> out(targets.size(), kBackground);
  // Background is the default, not evidence: the neighbor search runs over
  // foreground rows only, so a stray background point on an object surface
  // cannot shadow the surrounding foreground evidence.
  std::vector<Vec3> fg_pos;
  std::vector<uint8_t> fg_label;
  for (size_t i = 0; i < denoised.pos.size(); ++i) {
    if (denoised.label[i] == kBackground) continue;
    fg_pos.push_back(denoised.pos[i]);
    fg_label.push_back(denoised.label[i]);
  }
  KdTree tree;
  if (!fg_pos.empty()) tree.build(fg_pos.data(), (int)fg_pos.size());
  const double d2 = delta * delta;
  std::vector<std::pair<double, int>> nn;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (own[i] >= 0) {
      out[i] = denoised.label[own[i]];
      continue;
    }
    if (fg_pos.empty()) continue;
    tree.knn(targets[i], 1, nn);
    if (!nn.empty() && nn[0].first <= d2) out[i] = fg_label[nn[0].second];
  }
  return out;
}

SequenceGt generate_gt(const Sequence& seq, const SequenceGt& flags, const CameraModel& cam,
                       const GtgenConfig& cfg) {
  if (flags.in_window.size() != seq.sweeps.size())
    throw std::invalid_argument("generate_gt: window flags misaligned with the sequence");

  Harvest h = harvest_near_labels(seq, cam, cfg.range_limit);
  denoise(h, cfg.dbscan);

  // provenance: harvest row for each (sweep, point), -1 when not harvested
  std::vector<std::vector<int64_t>> own(seq.sweeps.size());
  for (size_t i = 0; i < seq.sweeps.size(); ++i)
    own[i].assign(seq.sweeps[i].points.size(), -1);
  for (size_t r = 0; r < h.size(); ++r) own[h.sweep[r]][h.index[r]] = (int64_t)r;

  SequenceGt gt;
  gt.key_frame_index = flags.key_frame_index;
  gt.in_window = flags.in_window;
  gt.in_extension = flags.in_extension;
  gt.capture_class.resize(seq.sweeps.size());
  gt.target_class.resize(seq.sweeps.size());

  for (size_t i = 0; i < seq.sweeps.size(); ++i) {
    const Sweep& sw = seq.sweeps[i];
    if (!flags.in_window[i]) {
      gt.capture_class[i].assign(sw.points.size(), kUnlabeled);
      gt.target_class[i] = gt.capture_class[i];
      continue;
    }
    std::vector<Vec3> world(sw.points.size());
    for (size_t k = 0; k < sw.points.size(); ++k) world[k] = transform(sw.pose, sw.points[k].pos());
    gt.capture_class[i] = propagate_labels(h, world, own[i], cfg.delta);
    gt.target_class[i] = gt.capture_class[i];
  }
  return gt;
}

}  // namespace stm
