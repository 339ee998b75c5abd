#include "stm/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "stm/metrics.hpp"

namespace stm {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void argmax_rows(const std::vector<double>& logits, int C, std::vector<uint8_t>& out) {
  const int N = C > 0 ? (int)(logits.size() / C) : 0;
  out.resize(N);
  for (int i = 0; i < N; ++i) {
    const double* row = &logits[(size_t)i * C];
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (row[c] > row[best]) best = c;
    out[i] = (uint8_t)best;
  }
}

}  // namespace

double replay_val_miou(const CcNetwork& net, const std::vector<ReplayResult>& replays) {
  IouAccum acc(net.C);
  std::vector<double> feats, logits;
  std::vector<uint8_t> pred;
  for (const ReplayResult& r : replays) {
    if (r.size() == 0) continue;
    standardize_replay(r, net.feat_stats, feats);
    ccnet_forward(net, r.graph, r.positions.data(), feats, BnMode::kEval, logits);
    argmax_rows(logits, net.C, pred);
    acc.add(pred, r.target, r.in_mask);
  }
  return acc.mean_foreground();
}

TrainResult train(const TrainConfig& cfg, const std::vector<Sequence>& train_seqs,
                  const std::vector<SequenceGt>& train_gts,
                  const std::vector<Sequence>& val_seqs,
                  const std::vector<SequenceGt>& val_gts) {
  if (train_seqs.empty()) throw std::invalid_argument("train: no training sequences");
  if (train_seqs.size() != train_gts.size() || val_seqs.size() != val_gts.size())
    throw std::invalid_argument("train: sequence/gt count mismatch");
  const int C = train_seqs[0].C;
  for (const Sequence& s : train_seqs)
    if (s.C != C) throw std::invalid_argument("train: class count differs across sequences");

  // Replay once; nothing downstream mutates what the memory stored.
  std::vector<ReplayResult> train_rep(train_seqs.size()), val_rep(val_seqs.size());
  for (size_t s = 0; s < train_seqs.size(); ++s)
    train_rep[s] = replay_to_key(train_seqs[s], &train_gts[s], cfg.replay);
  for (size_t s = 0; s < val_seqs.size(); ++s)
    val_rep[s] = replay_to_key(val_seqs[s], &val_gts[s], cfg.replay);

  TrainResult res;
  ccnet_init(res.net, C, cfg.seed, cfg.norm_by_k, cfg.scalar_kernel);
  CcNetwork& net = res.net;

  std::vector<const ReplayResult*> rp;
  for (const ReplayResult& r : train_rep) rp.push_back(&r);
  net.feat_stats = fit_feature_stats(rp, C);

  std::vector<std::vector<double>> feats(train_rep.size());
  for (size_t s = 0; s < train_rep.size(); ++s)
    standardize_replay(train_rep[s], net.feat_stats, feats[s]);

  AdamState opt;
  opt.init(net.theta.size());

  FILE* metrics = nullptr;
  std::string best_path, final_path;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    res.metrics_path = cfg.out_dir + "/metrics.csv";
    best_path = cfg.out_dir + "/best.stmc";
    final_path = cfg.out_dir + "/final.stmc";
    metrics = std::fopen(res.metrics_path.c_str(), "wb");
    if (!metrics) throw std::runtime_error("train: cannot write " + res.metrics_path);
    std::fputs("iteration,loss,val_mean_iou\n", metrics);
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<size_t> order(train_rep.size());
  for (size_t s = 0; s < order.size(); ++s) order[s] = s;
  size_t cursor = order.size();  // forces a shuffle before the first draw

  const bool has_val = !val_rep.empty();
  CcNetwork best_net;
  bool have_best = false;

  std::vector<double> grad;
  int iter = 0;
  for (int phase = 1; phase <= 2 && iter < cfg.max_iters; ++phase) {
    const double lr = phase == 1 ? cfg.lr_phase1 : cfg.lr_phase2;
    const BnMode mode = phase == 1 ? BnMode::kBatch : BnMode::kFrozen;
    double phase_best = -1;
    int stale = 0;

    while (iter < cfg.max_iters) {
      if (cursor >= order.size()) {
        for (size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[rng() % i]);
        cursor = 0;
      }
      const size_t s = order[cursor++];
      const ReplayResult& r = train_rep[s];

      const double loss =
          loss_and_gradients(net, r.graph, r.positions.data(), feats[s], r.target, mode, grad,
                             mode == BnMode::kBatch ? net.run_stats.data() : nullptr);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter + 1) +
                                 " (sequence " + std::to_string(s) + ", phase " +
                                 std::to_string(phase) + ")");
      adam_step(opt, lr, grad, net.theta);
      ++iter;
      res.loss_history.push_back(loss);

      std::string val_cell;
      bool stop_phase = false;
      if (has_val && iter % cfg.val_every == 0) {
        const double miou = replay_val_miou(net, val_rep);
        val_cell = fmt17(miou);
        if (miou > res.best_val) {
          res.best_val = miou;
          best_net = net;
          have_best = true;
          if (!best_path.empty()) save_checkpoint(best_path, net);
        }
        if (miou > phase_best) {
          phase_best = miou;
          stale = 0;
        } else if (++stale >= cfg.patience) {
          stop_phase = true;
        }
      }
      if (metrics) std::fprintf(metrics, "%d,%s,%s\n", iter, fmt17(loss).c_str(), val_cell.c_str());
      if (stop_phase) break;
    }
  }

  res.iterations = iter;
  res.first_loss = res.loss_history.empty() ? 0 : res.loss_history.front();
  res.last_loss = res.loss_history.empty() ? 0 : res.loss_history.back();
  if (metrics) std::fclose(metrics);

  if (!final_path.empty()) {
    save_checkpoint(final_path, net, &opt);
    res.checkpoint_path = have_best ? best_path : final_path;
  }
  if (have_best) res.net = best_net;
  return res;
}

}  // namespace stm
