#include "stm/memory_store.hpp"

#include <cmath>
#include <stdexcept>

#include "stm/sequence_io.hpp"

namespace stm {

int MemoryStore::insert_sweep(const Sweep& sweep, const PointLabels& labels, double fg_threshold,
                              int sweep_index, double odometer) {
  if (labels.labeled.size() != sweep.points.size() || labels.C != C_)
    throw std::runtime_error("insert_sweep: labels misaligned with sweep points");
  int inserted = 0;
  for (size_t i = 0; i < sweep.points.size(); ++i) {
    if (!labels.labeled[i]) continue;
    const float* pr = &labels.probs[i * C_];
    if (1.0 - (double)pr[0] < fg_threshold) continue;
    const SweepPoint& sp = sweep.points[i];
    Vec3 sensor = sp.pos();
    pos_.push_back(transform(sweep.pose, sensor));
    for (int c = 0; c < C_; ++c) probs_.push_back((double)pr[c]);
    intensity_.push_back((double)sp.intensity);
    capture_range_.push_back(sensor.norm());
    odo_.push_back(odometer);
    sweep_idx_.push_back(sweep_index);
    point_idx_.push_back((int)i);
    ++inserted;
  }
  if (inserted) dirty_ = true;
  return inserted;
}

int MemoryStore::deprecate(double current_odometer, double horizon_m) {
  int n = size();
  int w = 0;
  for (int i = 0; i < n; ++i) {
    if (current_odometer - odo_[i] > horizon_m) continue;  // drop
    if (w != i) {
      pos_[w] = pos_[i];
      for (int c = 0; c < C_; ++c) probs_[(size_t)w * C_ + c] = probs_[(size_t)i * C_ + c];
      intensity_[w] = intensity_[i];
      capture_range_[w] = capture_range_[i];
      odo_[w] = odo_[i];
      sweep_idx_[w] = sweep_idx_[i];
      point_idx_[w] = point_idx_[i];
    }
    ++w;
  }
  int removed = n - w;
  if (removed) {
    pos_.resize(w);
    probs_.resize((size_t)w * C_);
    intensity_.resize(w);
    capture_range_.resize(w);
    odo_.resize(w);
    sweep_idx_.resize(w);
    point_idx_.resize(w);
    dirty_ = true;
  }
  return removed;
}

void MemoryStore::clear() {
  pos_.clear();
  probs_.clear();
  intensity_.clear();
  capture_range_.clear();
  odo_.clear();
  sweep_idx_.clear();
  point_idx_.clear();
  dirty_ = true;
}

void MemoryStore::ensure_index() {
  if (!dirty_) return;
  tree_.build(pos_.data(), (int)pos_.size());
  dirty_ = false;
}

void MemoryStore::knn(const Vec3& query, int k, std::vector<std::pair<double, int>>& out) {
  ensure_index();
  tree_.knn(query, k, out);
}

void MemoryStore::build_graph(int K, KnnGraph& g) {
  ensure_index();
  int n = size();
  g.N = n;
  g.off.assign(n + 1, 0);
  g.idx.clear();
  g.idx.reserve((size_t)n * std::min(K, std::max(n, 1)));
  std::vector<std::pair<double, int>> nb;
  for (int i = 0; i < n; ++i) {
    tree_.knn(pos_[i], K, nb);
    for (auto& [d2, j] : nb) g.idx.push_back(j);
    g.off[i + 1] = (int)g.idx.size();
  }
}

MemoryPoint MemoryStore::point(int i) const {
  MemoryPoint p;
  p.position = pos_[i];
  p.probs.assign(probs_.begin() + (size_t)i * C_, probs_.begin() + (size_t)(i + 1) * C_);
  p.intensity = intensity_[i];
  p.capture_range = capture_range_[i];
  p.sweep_index = sweep_idx_[i];
  p.point_index = point_idx_[i];
  p.odometer_at_capture = odo_[i];
  return p;
}

void MemoryStore::raw_features(const std::vector<double>& occlusion,
                               std::vector<double>& out) const {
  int n = size();
  if ((int)occlusion.size() != n)
    throw std::runtime_error("raw_features: occlusion scores misaligned with store");
  int D = feature_dim(C_);
  out.resize((size_t)n * D);
  for (int i = 0; i < n; ++i) {
    double* f = &out[(size_t)i * D];
    for (int c = 0; c < C_; ++c) f[c] = probs_[(size_t)i * C_ + c];
    f[C_] = occlusion[i];
    f[C_ + 1] = intensity_[i];
    f[C_ + 2] = capture_range_[i];
  }
}

void standardize_features(std::vector<double>& rows, int dim, const FeatureStats& stats) {
  if ((int)stats.mean.size() != dim || (int)stats.var.size() != dim)
    throw std::runtime_error("standardize_features: statistics dimension mismatch");
  size_t n = rows.size() / dim;
  for (size_t i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) {
      double& v = rows[i * dim + d];
      v = (v - stats.mean[d]) / std::sqrt(stats.var[d] + 1e-8);
    }
}

void MemoryStore::assemble_features(const std::vector<double>& occlusion,
                                    const FeatureStats& stats, std::vector<double>& out) const {
  if (stats.empty())
    throw std::runtime_error(
        "assemble_features: dataset feature statistics missing — run the statistics pass "
        "(training computes and stores them in the checkpoint)");
  raw_features(occlusion, out);
  standardize_features(out, feature_dim(C_), stats);
}

void MemoryStore::export_ply(const std::string& path) const {
  std::vector<uint8_t> cls(size());
  for (int i = 0; i < size(); ++i) {
    const double* pr = &probs_[(size_t)i * C_];
    int best = 0;
    for (int c = 1; c < C_; ++c)
      if (pr[c] > pr[best]) best = c;
    cls[i] = (uint8_t)best;
  }
  write_ply(path, pos_, cls);
}

}  // namespace stm
