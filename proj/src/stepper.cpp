#include "stm/stepper.hpp"

#include <cmath>
#include <stdexcept>

#include "stm/camera.hpp"
#include "stm/depth_raster.hpp"

namespace stm {

FrameStepper::FrameStepper(const CcNetwork& net, const ReplayConfig& cfg)
    : cfg_(cfg), store_(net.C), C_(net.C) {
  norm_by_k_ = net.norm_by_k;
  scalar_kernel_ = net.scalar_kernel;
  const double* th = net.theta.data();
  for (int l = 0; l < 4; ++l) {
    const CcLayer& L = net.layers[l];
    LayerW& w = lw_[l];
    w.F = L.F;
    w.O = L.O;
    w.Ok = L.Ok;
    w.relu = L.relu;
    w.w1.assign(th + L.w1, th + L.w1 + kKernelHidden * 3);
    w.b1.assign(th + L.b1, th + L.b1 + kKernelHidden);
    w.b2.assign(th + L.b2, th + L.b2 + L.Ok);
    w.w2t.resize((size_t)kKernelHidden * L.Ok);
    for (int k = 0; k < L.Ok; ++k)
      for (int h = 0; h < kKernelHidden; ++h)
        w.w2t[(size_t)h * L.Ok + k] = (float)th[L.w2 + (size_t)k * kKernelHidden + h];
    w.W.assign(th + L.W, th + L.W + (size_t)L.F * L.O);
    w.R.assign(th + L.R, th + L.R + (size_t)L.F * L.O);
    w.scale.assign(L.O, 1.f);
    w.shift.assign(L.O, 0.f);
    if (L.bn) {
      const double* rm = net.run_stats.data() + L.stats;
      const double* rv = rm + L.O;
      for (int k = 0; k < L.O; ++k) {
        const double inv = 1.0 / std::sqrt(rv[k] + kBnEps);
        w.scale[k] = (float)(th[L.gamma + k] * inv);
        w.shift[k] = (float)(th[L.beta + k] - rm[k] * th[L.gamma + k] * inv);
      }
    }
  }
  const int D = net.feat_dim();
  if ((int)net.feat_stats.mean.size() != D)
    throw std::invalid_argument("FrameStepper: network has no feature statistics");
  fmean_.resize(D);
  finvstd_.resize(D);
  for (int d = 0; d < D; ++d) {
    fmean_[d] = (float)net.feat_stats.mean[d];
    finvstd_[d] = (float)(1.0 / std::sqrt(net.feat_stats.var[d] + 1e-8));
  }
}

int FrameStepper::step(const Sweep& sweep, int sweep_index, double odometer) {
  PointLabels labels = associate_labels(sweep, cfg_.camera);
  store_.insert_sweep(sweep, labels, cfg_.fg_threshold, sweep_index, odometer);
  store_.deprecate(odometer, cfg_.horizon_m);
  const int N = store_.size();

  occ_.assign(N, 0.0);
  if (N > 0) {
    DepthRaster raster(cfg_.lidar);
    raster.build(sweep.points);
    raster.fill_gaps(cfg_.fill_radius);
    const std::vector<Vec3>& pos = store_.positions();
    for (int i = 0; i < N; ++i) occ_[i] = raster.score(pos[i], sweep.pose).value_or(0.0);
  }

  pred_.clear();
  logits_.clear();
  if (N == 0) return 0;

  store_.raw_features(occ_, raw_);
  const int D = C_ + 3;
  feats_.resize((size_t)N * D);
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d)
      feats_[(size_t)i * D + d] = ((float)raw_[(size_t)i * D + d] - fmean_[d]) * finvstd_[d];

  knn_.build(store_.positions().data(), N);
  knn_.knn_graph(cfg_.graph_k, off_, nbr_);
  forward(N);

  pred_.resize(N);
  for (int i = 0; i < N; ++i) {
    const float* row = &logits_[(size_t)i * C_];
    int best = 0;
    for (int c = 1; c < C_; ++c)
      if (row[c] > row[best]) best = c;
    pred_[i] = (uint8_t)best;
  }
  return N;
}

void FrameStepper::forward(int N) {
  const std::vector<Vec3>& posd = store_.positions();
  std::vector<float> px(N), py(N), pz(N);
  for (int i = 0; i < N; ++i) {
    px[i] = (float)posd[i].x;
    py[i] = (float)posd[i].y;
    pz[i] = (float)posd[i].z;
  }

  cur_ = feats_;
  float z[kKernelHidden];
  for (int l = 0; l < 4; ++l) {
    const LayerW& L = lw_[l];
    const int F = L.F, O = L.O;
    P_.assign((size_t)N * O, 0.f);
    nxt_.assign((size_t)N * O, 0.f);
    for (int i = 0; i < N; ++i) {
      const float* f = &cur_[(size_t)i * F];
      float* p = &P_[(size_t)i * O];
      float* x = &nxt_[(size_t)i * O];
      for (int d = 0; d < F; ++d) {
        const float fd = f[d];
        const float* Wd = &L.W[(size_t)d * O];
        const float* Rd = &L.R[(size_t)d * O];
        for (int k = 0; k < O; ++k) {
          p[k] += fd * Wd[k];
          x[k] += fd * Rd[k];
        }
      }
    }

    std::vector<float> wk(L.Ok), acc(O);
    for (int i = 0; i < N; ++i) {
      const int deg = off_[i + 1] - off_[i];
      if (deg == 0) continue;
      const int* nb = &nbr_[off_[i]];
      std::fill(acc.begin(), acc.end(), 0.f);
      for (int j = 0; j < deg; ++j) {
        const int nj = nb[j];
        const float dx = px[i] - px[nj], dy = py[i] - py[nj], dz = pz[i] - pz[nj];
        for (int h = 0; h < kKernelHidden; ++h) {
          const float s = L.w1[h * 3] * dx + L.w1[h * 3 + 1] * dy + L.w1[h * 3 + 2] * dz +
                          L.b1[h];
          z[h] = s > 0 ? s : 0;
        }
        const float* Pj = &P_[(size_t)nj * O];
        if (scalar_kernel_) {
          float s = L.b2[0];
          for (int h = 0; h < kKernelHidden; ++h) s += z[h] * L.w2t[h];
          for (int k = 0; k < O; ++k) acc[k] += s * Pj[k];
        } else {
          for (int k = 0; k < O; ++k) wk[k] = L.b2[k];
          for (int h = 0; h < kKernelHidden; ++h) {
            const float zh = z[h];
            const float* row = &L.w2t[(size_t)h * O];
            for (int k = 0; k < O; ++k) wk[k] += zh * row[k];
          }
          for (int k = 0; k < O; ++k) acc[k] += wk[k] * Pj[k];
        }
      }
      const float s = norm_by_k_ ? 1.f / (float)deg : 1.f;
      float* x = &nxt_[(size_t)i * O];
      for (int k = 0; k < O; ++k) x[k] += s * acc[k];
    }

    for (int i = 0; i < N; ++i) {
      float* x = &nxt_[(size_t)i * O];
      for (int k = 0; k < O; ++k) {
        float y = x[k] * L.scale[k] + L.shift[k];
        x[k] = L.relu && y < 0 ? 0 : y;
      }
    }
    cur_.swap(nxt_);
  }
  logits_ = cur_;
}

}  // namespace stm
