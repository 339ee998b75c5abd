#include "stm/ccnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "stm/serial.hpp"

namespace stm {

namespace {

size_t layout_layer(CcLayer& L, int F, int O, bool scalar, bool bn, bool relu, size_t off,
                    size_t& stats) {
  L.F = F;
  L.O = O;
  L.Ok = scalar ? 1 : O;
  L.bn = bn;
  L.relu = relu;
  L.w1 = off;
  off += (size_t)kKernelHidden * 3;
  L.b1 = off;
  off += kKernelHidden;
  L.w2 = off;
  off += (size_t)L.Ok * kKernelHidden;
  L.b2 = off;
  off += L.Ok;
  L.W = off;
  off += (size_t)F * O;
  L.R = off;
  off += (size_t)F * O;
  if (bn) {
    L.gamma = off;
    off += O;
    L.beta = off;
    off += O;
    L.stats = stats;
    stats += 2 * (size_t)O;
  }
  return off;
}

void layout(CcNetwork& net) {
  const int d[5] = {net.feat_dim(), 16, 16, 16, net.C};
  size_t off = 0, stats = 0;
  for (int l = 0; l < 4; ++l)
    off = layout_layer(net.layers[l], d[l], d[l + 1], net.scalar_kernel, l < 3, l < 3, off,
                       stats);
  net.theta.assign(off, 0.0);
  net.run_stats.assign(stats, 0.0);
}

// kernel MLP for one offset: z = relu(w1 d + b1), w = w2 z + b2
inline void kernel_eval(const double* th, const CcLayer& L, double dx, double dy, double dz,
                        double* z, double* w) {
  const double* w1 = th + L.w1;
  const double* b1 = th + L.b1;
  for (int h = 0; h < kKernelHidden; ++h) {
    double s = w1[h * 3] * dx + w1[h * 3 + 1] * dy + w1[h * 3 + 2] * dz + b1[h];
    z[h] = s > 0 ? s : 0;
  }
  const double* w2 = th + L.w2;
  const double* b2 = th + L.b2;
  for (int k = 0; k < L.Ok; ++k) {
    double s = b2[k];
    const double* row = w2 + (size_t)k * kKernelHidden;
    for (int h = 0; h < kKernelHidden; ++h) s += row[h] * z[h];
    w[k] = s;
  }
}

}  // namespace

void ccnet_init(CcNetwork& net, int C, uint64_t seed, bool norm_by_k, bool scalar_kernel) {
  if (C < 2) throw std::invalid_argument("ccnet_init: need at least 2 classes");
  net.C = C;
  net.norm_by_k = norm_by_k;
  net.scalar_kernel = scalar_kernel;
  layout(net);
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double* p, size_t n, double bound) {
    std::uniform_real_distribution<double> U(-bound, bound);
    for (size_t i = 0; i < n; ++i) p[i] = U(rng);
  };
  double* th = net.theta.data();
  for (const CcLayer& L : net.layers) {
    uniform(th + L.w1, (size_t)kKernelHidden * 3, 1.0 / std::sqrt(3.0));
    uniform(th + L.b1, kKernelHidden, 1.0 / std::sqrt(3.0));
    uniform(th + L.w2, (size_t)L.Ok * kKernelHidden, 1.0 / std::sqrt((double)kKernelHidden));
    uniform(th + L.b2, (size_t)L.Ok, 1.0 / std::sqrt((double)kKernelHidden));
    uniform(th + L.W, (size_t)L.F * L.O, 1.0 / std::sqrt((double)L.F));
    if (L.F == L.O) {
      for (int d = 0; d < L.F; ++d)
        for (int k = 0; k < L.O; ++k) th[L.R + (size_t)d * L.O + k] = d == k ? 1.0 : 0.0;
    } else {
      uniform(th + L.R, (size_t)L.F * L.O, 1.0 / std::sqrt((double)L.F));
    }
    if (L.bn) {
      for (int k = 0; k < L.O; ++k) th[L.gamma + k] = 1.0;
      for (int k = 0; k < L.O; ++k) th[L.beta + k] = 0.0;
      for (int k = 0; k < L.O; ++k) net.run_stats[L.stats + k] = 0.0;
      for (int k = 0; k < L.O; ++k) net.run_stats[L.stats + L.O + k] = 1.0;
    }
  }
  net.feat_stats.mean.assign(net.feat_dim(), 0.0);
  net.feat_stats.var.assign(net.feat_dim(), 1.0);
}

CcNetwork make_single_layer(int F, int O, bool bn, bool relu, bool norm_by_k,
                            bool scalar_kernel, uint64_t seed) {
  CcNetwork net;
  net.norm_by_k = norm_by_k;
  net.scalar_kernel = scalar_kernel;
  size_t stats = 0;
  const size_t total = layout_layer(net.layers[0], F, O, scalar_kernel, bn, relu, 0, stats);
  net.layers[1] = net.layers[2] = net.layers[3] = CcLayer{};
  net.theta.assign(total, 0.0);
  net.run_stats.assign(stats, 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-0.7, 0.7);
  for (double& v : net.theta) v = U(rng);
  const CcLayer& L = net.layers[0];
  if (bn) {
    for (int k = 0; k < O; ++k) net.theta[L.gamma + k] = 1.0;
    for (int k = 0; k < O; ++k) net.theta[L.beta + k] = 0.0;
    for (int k = 0; k < O; ++k) net.run_stats[L.stats + k] = 0.0;
    for (int k = 0; k < O; ++k) net.run_stats[L.stats + O + k] = 1.0;
  }
  return net;
}

std::vector<TensorRef> ccnet_tensors(const CcNetwork& net) {
  std::vector<TensorRef> out;
  for (int l = 0; l < 4; ++l) {
    const CcLayer& L = net.layers[l];
    if (L.F == 0) continue;  // unused slot of a single-layer container
    std::string p = "layer" + std::to_string(l + 1) + ".";
    out.push_back({p + "w1", L.w1, (size_t)kKernelHidden * 3});
    out.push_back({p + "b1", L.b1, (size_t)kKernelHidden});
    out.push_back({p + "w2", L.w2, (size_t)L.Ok * kKernelHidden});
    out.push_back({p + "b2", L.b2, (size_t)L.Ok});
    out.push_back({p + "W", L.W, (size_t)L.F * L.O});
    out.push_back({p + "R", L.R, (size_t)L.F * L.O});
    if (L.bn) {
      out.push_back({p + "gamma", L.gamma, (size_t)L.O});
      out.push_back({p + "beta", L.beta, (size_t)L.O});
    }
  }
  return out;
}

void cc_layer_naive(const CcNetwork& net, int layer, const KnnGraph& g, const Vec3* pos,
                    const std::vector<double>& in, std::vector<double>& out) {
  const CcLayer& L = net.layers.at((size_t)layer);
  const int N = g.N, F = L.F, O = L.O;
  if ((int)in.size() != N * F) throw std::invalid_argument("cc_layer_naive: feature shape");
  out.assign((size_t)N * O, 0.0);
  const double* th = net.theta.data();
  const double* W = th + L.W;
  const double* R = th + L.R;
  std::vector<double> z(kKernelHidden), w(L.Ok), wk;
  for (int i = 0; i < N; ++i) {
    const int K = g.degree(i);
    const int* nb = g.neighbors(i);
    wk.assign((size_t)K * O, 0.0);
    for (int j = 0; j < K; ++j) {
      Vec3 d = pos[i] - pos[nb[j]];
      kernel_eval(th, L, d.x, d.y, d.z, z.data(), w.data());
      for (int k = 0; k < O; ++k) wk[(size_t)j * O + k] = net.scalar_kernel ? w[0] : w[k];
    }
    const double s = (net.norm_by_k && K > 0) ? 1.0 / K : 1.0;
    for (int k = 0; k < O; ++k) {
      double acc = 0;  // the literal double sum over feature dim then neighbors
      for (int d = 0; d < F; ++d)
        for (int j = 0; j < K; ++j)
          acc += wk[(size_t)j * O + k] * W[(size_t)d * O + k] * in[(size_t)nb[j] * F + d];
      double r = 0;
      for (int d = 0; d < F; ++d) r += R[(size_t)d * O + k] * in[(size_t)i * F + d];
      out[(size_t)i * O + k] = s * acc + r;
    }
  }
}

void cc_layer_forward(const CcNetwork& net, int layer, const KnnGraph& g, const Vec3* pos,
                      const std::vector<double>& in, BnMode mode, std::vector<double>& out,
                      double* run_stats, LayerCache* cache) {
  const CcLayer& L = net.layers.at((size_t)layer);
  const int N = g.N, F = L.F, O = L.O;
  if ((int)in.size() != N * F) throw std::invalid_argument("cc_layer_forward: feature shape");
  out.clear();
  if (N == 0) return;
  const double* th = net.theta.data();
  const double* W = th + L.W;
  const double* R = th + L.R;

  // P = in W (projected features), x starts as the residual in R
  std::vector<double> P((size_t)N * O, 0.0), x((size_t)N * O, 0.0);
  for (int i = 0; i < N; ++i) {
    const double* f = &in[(size_t)i * F];
    double* p = &P[(size_t)i * O];
    double* xi = &x[(size_t)i * O];
    for (int d = 0; d < F; ++d) {
      const double fd = f[d];
      const double* Wd = W + (size_t)d * O;
      const double* Rd = R + (size_t)d * O;
      for (int k = 0; k < O; ++k) {
        p[k] += fd * Wd[k];
        xi[k] += fd * Rd[k];
      }
    }
  }

  // x += (1/K) sum_j w(u_i - v_j) ⊙ P_j, neighbors in graph order
  std::vector<double> z(kKernelHidden), w(L.Ok), acc(O);
  for (int i = 0; i < N; ++i) {
    const int K = g.degree(i);
    if (K == 0) continue;
    const int* nb = g.neighbors(i);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int j = 0; j < K; ++j) {
      Vec3 d = pos[i] - pos[nb[j]];
      kernel_eval(th, L, d.x, d.y, d.z, z.data(), w.data());
      const double* Pj = &P[(size_t)nb[j] * O];
      if (net.scalar_kernel) {
        for (int k = 0; k < O; ++k) acc[k] += w[0] * Pj[k];
      } else {
        for (int k = 0; k < O; ++k) acc[k] += w[k] * Pj[k];
      }
    }
    const double s = net.norm_by_k ? 1.0 / K : 1.0;
    double* xi = &x[(size_t)i * O];
    for (int k = 0; k < O; ++k) xi[k] = s * acc[k] + xi[k];
  }

  // batch norm
  std::vector<double> mean(O, 0.0), invstd(O, 1.0);
  if (L.bn) {
    if (mode == BnMode::kBatch) {
      for (int k = 0; k < O; ++k) {
        double m = 0;
        for (int i = 0; i < N; ++i) m += x[(size_t)i * O + k];
        m /= N;
        double v = 0;
        for (int i = 0; i < N; ++i) {
          const double d = x[(size_t)i * O + k] - m;
          v += d * d;
        }
        v /= N;  // biased, as normalization uses it
        mean[k] = m;
        invstd[k] = 1.0 / std::sqrt(v + kBnEps);
        if (run_stats) {
          double* rm = run_stats + L.stats;
          double* rv = rm + O;
          rm[k] = (1.0 - kBnMomentum) * rm[k] + kBnMomentum * m;
          rv[k] = (1.0 - kBnMomentum) * rv[k] + kBnMomentum * v;
        }
      }
    } else {
      const double* rm = net.run_stats.data() + L.stats;
      const double* rv = rm + O;
      for (int k = 0; k < O; ++k) {
        mean[k] = rm[k];
        invstd[k] = 1.0 / std::sqrt(rv[k] + kBnEps);
      }
    }
  }

  out.resize((size_t)N * O);
  const double* gam = th + L.gamma;
  const double* bet = th + L.beta;
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < O; ++k) {
      double y = x[(size_t)i * O + k];
      if (L.bn) y = (y - mean[k]) * invstd[k] * gam[k] + bet[k];
      out[(size_t)i * O + k] = (L.relu && y < 0) ? 0.0 : y;
    }
  }

  if (cache) {
    cache->P = std::move(P);
    cache->x = std::move(x);
    cache->mean = std::move(mean);
    cache->invstd = std::move(invstd);
    cache->out = out;
  }
}

void ccnet_forward(const CcNetwork& net, const KnnGraph& g, const Vec3* pos,
                   const std::vector<double>& feats, BnMode mode, std::vector<double>& logits,
                   double* run_stats, ForwardCache* cache) {
  logits.clear();
  if (g.N == 0) return;
  if ((int)feats.size() != g.N * net.feat_dim())
    throw std::invalid_argument("ccnet_forward: feature shape");
  std::vector<double> cur = feats, next;
  for (int l = 0; l < 4; ++l) {
    cc_layer_forward(net, l, g, pos, cur, mode, next, run_stats,
                     cache ? &cache->layer[l] : nullptr);
    cur = std::move(next);
  }
  logits = std::move(cur);
}

void softmax_rows(const std::vector<double>& logits, int C, std::vector<double>& probs) {
  probs.resize(logits.size());
  const size_t n = logits.size() / (size_t)C;
  for (size_t i = 0; i < n; ++i) {
    const double* l = &logits[i * C];
    double* p = &probs[i * C];
    double mx = l[0];
    for (int k = 1; k < C; ++k) mx = std::max(mx, l[k]);
    double s = 0;
    for (int k = 0; k < C; ++k) {
      p[k] = std::exp(l[k] - mx);
      s += p[k];
    }
    for (int k = 0; k < C; ++k) p[k] /= s;
  }
}

namespace {

// One layer of reverse mode. dout (N x O) is consumed; din (N x F) comes out.
void layer_backward(const CcNetwork& net, int layer, const KnnGraph& g, const Vec3* pos,
                    const std::vector<double>& in, const LayerCache& cc,
                    std::vector<double>& dout, std::vector<double>& grad,
                    std::vector<double>& din, BnMode mode) {
  const CcLayer& L = net.layers[(size_t)layer];
  const int N = g.N, F = L.F, O = L.O;
  const double* th = net.theta.data();
  double* gr = grad.data();

  if (L.relu)
    for (size_t t = 0; t < dout.size(); ++t)
      if (cc.out[t] <= 0) dout[t] = 0;

  // through batch norm, to the pre-BN activations x
  std::vector<double> dX;
  if (L.bn) {
    dX.assign((size_t)N * O, 0.0);
    const double* gam = th + L.gamma;
    double* dgam = gr + L.gamma;
    double* dbet = gr + L.beta;
    for (int k = 0; k < O; ++k) {
      double sum_dy = 0, sum_dyx = 0;
      for (int i = 0; i < N; ++i) {
        const double dy = dout[(size_t)i * O + k];
        const double xh = (cc.x[(size_t)i * O + k] - cc.mean[k]) * cc.invstd[k];
        sum_dy += dy;
        sum_dyx += dy * xh;
      }
      dgam[k] += sum_dyx;
      dbet[k] += sum_dy;
      if (mode == BnMode::kBatch) {
        // batch statistics depend on x, so their gradients flow too
        const double mdy = sum_dy / N, mdyx = sum_dyx / N;
        for (int i = 0; i < N; ++i) {
          const double dy = dout[(size_t)i * O + k];
          const double xh = (cc.x[(size_t)i * O + k] - cc.mean[k]) * cc.invstd[k];
          dX[(size_t)i * O + k] = gam[k] * cc.invstd[k] * (dy - mdy - xh * mdyx);
        }
      } else {  // frozen statistics are constants
        for (int i = 0; i < N; ++i)
          dX[(size_t)i * O + k] = dout[(size_t)i * O + k] * gam[k] * cc.invstd[k];
      }
    }
  } else {
    dX = std::move(dout);
  }

  // through the neighbor aggregation; kernel activations are recomputed
  std::vector<double> dP((size_t)N * O, 0.0);
  std::vector<double> z(kKernelHidden), w(L.Ok), dw(L.Ok), dz(kKernelHidden);
  double* dw1 = gr + L.w1;
  double* db1 = gr + L.b1;
  double* dw2 = gr + L.w2;
  double* db2 = gr + L.b2;
  const double* w2 = th + L.w2;
  for (int i = 0; i < N; ++i) {
    const int K = g.degree(i);
    if (K == 0) continue;
    const int* nb = g.neighbors(i);
    const double s = net.norm_by_k ? 1.0 / K : 1.0;
    const double* dXi = &dX[(size_t)i * O];
    for (int j = 0; j < K; ++j) {
      Vec3 d = pos[i] - pos[nb[j]];
      kernel_eval(th, L, d.x, d.y, d.z, z.data(), w.data());
      const double* Pj = &cc.P[(size_t)nb[j] * O];
      double* dPj = &dP[(size_t)nb[j] * O];
      if (net.scalar_kernel) {
        double dws = 0;
        for (int k = 0; k < O; ++k) {
          const double c = s * dXi[k];
          dws += c * Pj[k];
          dPj[k] += c * w[0];
        }
        dw[0] = dws;
      } else {
        for (int k = 0; k < O; ++k) {
          const double c = s * dXi[k];
          dw[k] = c * Pj[k];
          dPj[k] += c * w[k];
        }
      }
      std::fill(dz.begin(), dz.end(), 0.0);
      for (int k = 0; k < L.Ok; ++k) {
        const double dwk = dw[k];
        db2[k] += dwk;
        const double* row = w2 + (size_t)k * kKernelHidden;
        double* drow = dw2 + (size_t)k * kKernelHidden;
        for (int h = 0; h < kKernelHidden; ++h) {
          drow[h] += dwk * z[h];
          dz[h] += dwk * row[h];
        }
      }
      for (int h = 0; h < kKernelHidden; ++h) {
        if (z[h] <= 0) continue;
        db1[h] += dz[h];
        dw1[h * 3 + 0] += dz[h] * d.x;
        dw1[h * 3 + 1] += dz[h] * d.y;
        dw1[h * 3 + 2] += dz[h] * d.z;
      }
    }
  }

  // projections and the input gradient
  const double* W = th + L.W;
  const double* R = th + L.R;
  double* dW = gr + L.W;
  double* dR = gr + L.R;
  din.assign((size_t)N * F, 0.0);
  for (int i = 0; i < N; ++i) {
    const double* f = &in[(size_t)i * F];
    const double* dPi = &dP[(size_t)i * O];
    const double* dXi = &dX[(size_t)i * O];
    double* di = &din[(size_t)i * F];
    for (int d = 0; d < F; ++d) {
      const double* Wd = W + (size_t)d * O;
      const double* Rd = R + (size_t)d * O;
      double* dWd = dW + (size_t)d * O;
      double* dRd = dR + (size_t)d * O;
      const double fd = f[d];
      double acc = 0;
      for (int k = 0; k < O; ++k) {
        dWd[k] += fd * dPi[k];
        dRd[k] += fd * dXi[k];
        acc += dPi[k] * Wd[k] + dXi[k] * Rd[k];
      }
      di[d] = acc;
    }
  }
}

}  // namespace

double loss_and_gradients(const CcNetwork& net, const KnnGraph& g, const Vec3* pos,
                          const std::vector<double>& feats, const std::vector<uint8_t>& gt,
                          BnMode mode, std::vector<double>& grad, double* run_stats,
                          std::vector<double>* logits_out) {
  const int N = g.N, C = net.C;
  grad.assign(net.theta.size(), 0.0);
  if (logits_out) logits_out->clear();
  if (N == 0) return 0.0;
  if ((int)gt.size() != N) throw std::invalid_argument("loss_and_gradients: gt size");

  ForwardCache fc;
  std::vector<double> logits;
  ccnet_forward(net, g, pos, feats, mode, logits, run_stats, &fc);
  std::vector<double> probs;
  softmax_rows(logits, C, probs);
  if (logits_out) *logits_out = logits;

  int nvalid = 0;
  for (int i = 0; i < N; ++i) {
    if (gt[i] == kUnlabeled) continue;
    if (gt[i] >= C) throw std::out_of_range("loss_and_gradients: class id");
    ++nvalid;
  }
  if (nvalid == 0) return 0.0;

  double loss = 0;
  std::vector<double> dx((size_t)N * C, 0.0);
  for (int i = 0; i < N; ++i) {
    if (gt[i] == kUnlabeled) continue;
    const double* p = &probs[(size_t)i * C];
    loss -= std::log(std::max(p[gt[i]], 1e-300));
    for (int k = 0; k < C; ++k)
      dx[(size_t)i * C + k] = (p[k] - (k == gt[i] ? 1.0 : 0.0)) / nvalid;
  }
  loss /= nvalid;

  std::vector<double> din;
  for (int l = 3; l >= 0; --l) {
    const std::vector<double>& in = l == 0 ? feats : fc.layer[l - 1].out;
    layer_backward(net, l, g, pos, in, fc.layer[l], dx, grad, din, mode);
    dx = std::move(din);
  }
  return loss;
}

void network_forward(const CcNetwork& net, MemoryStore& store,
                     const std::vector<double>& occlusion, std::vector<double>& logits,
                     std::vector<double>& probs) {
  logits.clear();
  probs.clear();
  const int N = store.size();
  if (N == 0) return;
  if (store.classes() != net.C)
    throw std::invalid_argument("network_forward: class count mismatch");
  if ((int)occlusion.size() != N)
    throw std::invalid_argument("network_forward: occlusion size");
  std::vector<double> feats;
  store.assemble_features(occlusion, net.feat_stats, feats);
  KnnGraph g;
  store.build_graph(kGraphK, g);
  ccnet_forward(net, g, store.positions().data(), feats, BnMode::kEval, logits);
  softmax_rows(logits, net.C, probs);
}

void adam_step(AdamState& opt, double lr, const std::vector<double>& grad,
               std::vector<double>& params) {
  if (opt.m.size() != params.size() || grad.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, (double)opt.step);
  const double bc2 = 1.0 - std::pow(opt.beta2, (double)opt.step);
  for (size_t t = 0; t < params.size(); ++t) {
    opt.m[t] = opt.beta1 * opt.m[t] + (1.0 - opt.beta1) * grad[t];
    opt.v[t] = opt.beta2 * opt.v[t] + (1.0 - opt.beta2) * grad[t] * grad[t];
    const double mh = opt.m[t] / bc1;
    const double vh = opt.v[t] / bc2;
    params[t] -= lr * mh / (std::sqrt(vh) + opt.eps);
  }
}

void save_checkpoint(const std::string& path, const CcNetwork& net, const AdamState* opt) {
  BinWriter w(path);
  w.magic("STMC");
  w.pod<uint32_t>(1);  // version
  w.pod<int32_t>(net.C);
  w.pod<uint8_t>(net.norm_by_k ? 1 : 0);
  w.pod<uint8_t>(net.scalar_kernel ? 1 : 0);
  const int32_t dims[5] = {net.feat_dim(), 16, 16, 16, net.C};
  w.array(dims, 5);
  w.pod<uint64_t>(net.theta.size());
  w.array(net.theta.data(), net.theta.size());
  w.pod<uint64_t>(net.run_stats.size());
  w.array(net.run_stats.data(), net.run_stats.size());
  w.pod<uint64_t>(net.feat_stats.mean.size());
  w.array(net.feat_stats.mean.data(), net.feat_stats.mean.size());
  w.array(net.feat_stats.var.data(), net.feat_stats.var.size());
  w.pod<uint8_t>(opt ? 1 : 0);
  if (opt) {
    w.pod(opt->beta1);
    w.pod(opt->beta2);
    w.pod(opt->eps);
    w.pod<int64_t>(opt->step);
    w.pod<uint64_t>(opt->m.size());
    w.array(opt->m.data(), opt->m.size());
    w.array(opt->v.data(), opt->v.size());
  }
  w.close();
}

bool load_checkpoint(const std::string& path, CcNetwork& net, AdamState* opt) {
  BinReader r(path);
  r.expect_magic("STMC");
  const uint32_t version = r.pod<uint32_t>();
  if (version != 1) throw std::runtime_error("unsupported checkpoint version in " + path);
  const int32_t C = r.pod<int32_t>();
  const bool norm = r.pod<uint8_t>() != 0;
  const bool scalar = r.pod<uint8_t>() != 0;
  ccnet_init(net, C, 0, norm, scalar);
  int32_t dims[5];
  r.array(dims, 5);
  const int32_t want[5] = {net.feat_dim(), 16, 16, 16, net.C};
  for (int i = 0; i < 5; ++i)
    if (dims[i] != want[i]) throw std::runtime_error("architecture mismatch in " + path);
  const uint64_t nt = r.pod<uint64_t>();
  if (nt != net.theta.size()) throw std::runtime_error("parameter count mismatch in " + path);
  r.array(net.theta.data(), nt);
  const uint64_t ns = r.pod<uint64_t>();
  if (ns != net.run_stats.size()) throw std::runtime_error("BN stats mismatch in " + path);
  r.array(net.run_stats.data(), ns);
  const uint64_t nf = r.pod<uint64_t>();
  if (nf != (uint64_t)net.feat_dim())
    throw std::runtime_error("feature stats mismatch in " + path);
  net.feat_stats.mean.resize(nf);
  net.feat_stats.var.resize(nf);
  r.array(net.feat_stats.mean.data(), nf);
  r.array(net.feat_stats.var.data(), nf);
  const bool has_opt = r.pod<uint8_t>() != 0;
  if (!opt) return true;
  if (!has_opt) return false;
  opt->beta1 = r.pod<double>();
  opt->beta2 = r.pod<double>();
  opt->eps = r.pod<double>();
  opt->step = r.pod<int64_t>();
  const uint64_t nm = r.pod<uint64_t>();
  if (nm != net.theta.size()) throw std::runtime_error("optimizer state mismatch in " + path);
  opt->m.resize(nm);
  opt->v.resize(nm);
  r.array(opt->m.data(), nm);
  r.array(opt->v.data(), nm);
  return true;
}

}  // namespace stm
