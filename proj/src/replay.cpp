#include "stm/replay.hpp"

#include <cmath>
#include <stdexcept>

#include "stm/ccnet.hpp"
#include "stm/metrics.hpp"

namespace stm {

namespace {

void check_gt(const Sequence& seq, const SequenceGt& gt) {
  const size_t S = seq.sweeps.size();
  if (gt.key_frame_index >= S) throw std::invalid_argument("replay: key frame out of range");
  if (gt.in_window.size() != S || gt.capture_class.size() != S || gt.target_class.size() != S)
    throw std::invalid_argument("replay: gt not aligned with sweep count");
  for (size_t s = 0; s < S; ++s)
    if (gt.capture_class[s].size() != seq.sweeps[s].points.size() ||
        gt.target_class[s].size() != seq.sweeps[s].points.size())
      throw std::invalid_argument("replay: gt not aligned with point counts");
}

}  // namespace

ReplayResult replay_to_key(const Sequence& seq, const SequenceGt* gt, const ReplayConfig& cfg) {
  if (seq.sweeps.empty()) throw std::invalid_argument("replay: empty sequence");
  if (gt) check_gt(seq, *gt);

  const int key = gt ? (int)gt->key_frame_index : (int)seq.sweeps.size() - 1;
  const std::vector<double> odo = seq.odometer();

  MemoryStore store(seq.C);
  int frames = 0;
  const int first = cfg.single_sweep ? key : 0;
  for (int i = first; i <= key; ++i) {
    if (!cfg.single_sweep && gt && i != key && !gt->in_window[i]) continue;
    const Sweep& sw = seq.sweeps[i];
    PointLabels labels = associate_labels(sw, cfg.camera);
    store.insert_sweep(sw, labels, cfg.fg_threshold, i, odo[i]);
    store.deprecate(odo[i], cfg.horizon_m);
    ++frames;
  }

  ReplayResult res;
  res.C = seq.C;
  res.key_frame = key;
  res.frames_replayed = frames;
  res.key_pose = seq.sweeps[key].pose;

  const int N = store.size();
  std::vector<double> occ(N, 0.0);
  if (!cfg.single_sweep && N > 0) {
    DepthRaster raster(cfg.lidar);
    raster.build(seq.sweeps[key].points);
    raster.fill_gaps(cfg.fill_radius);
    const std::vector<Vec3>& pos = store.positions();
    for (int i = 0; i < N; ++i) occ[i] = raster.score(pos[i], res.key_pose).value_or(0.0);
  }

  store.raw_features(occ, res.raw);
  res.positions = store.positions();
  store.build_graph(cfg.graph_k, res.graph);
  res.sweep_index = store.sweep_indices();
  res.point_index = store.point_indices();

  res.capture.assign(N, kUnlabeled);
  res.target.assign(N, kUnlabeled);
  if (gt) {
    for (int i = 0; i < N; ++i) {
      res.capture[i] = gt->capture_class[res.sweep_index[i]][res.point_index[i]];
      res.target[i] = gt->target_class[res.sweep_index[i]][res.point_index[i]];
    }
  }
  res.in_mask.resize(N);
  for (int i = 0; i < N; ++i)
    res.in_mask[i] = in_view(res.positions[i], res.key_pose, cfg.camera) ? 1 : 0;
  return res;
}

FeatureStats fit_feature_stats(const std::vector<const ReplayResult*>& replays, int C) {
  const int D = MemoryStore::feature_dim(C);
  int64_t n = 0;
  std::vector<double> sum(D, 0.0);
  for (const ReplayResult* r : replays) {
    const int N = r->size();
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < D; ++d) sum[d] += r->raw[(size_t)i * D + d];
    n += N;
  }
  if (n == 0) throw std::invalid_argument("fit_feature_stats: no points");

  FeatureStats st;
  st.mean.resize(D);
  st.var.assign(D, 0.0);
  for (int d = 0; d < D; ++d) st.mean[d] = sum[d] / (double)n;
  for (const ReplayResult* r : replays) {
    const int N = r->size();
    for (int i = 0; i < N; ++i)
      for (int d = 0; d < D; ++d) {
        const double dx = r->raw[(size_t)i * D + d] - st.mean[d];
        st.var[d] += dx * dx;
      }
  }
  for (int d = 0; d < D; ++d) st.var[d] /= (double)n;
  return st;
}

void standardize_replay(const ReplayResult& r, const FeatureStats& stats,
                        std::vector<double>& feats) {
  feats = r.raw;
  standardize_features(feats, MemoryStore::feature_dim(r.C), stats);
}

}  // namespace stm
