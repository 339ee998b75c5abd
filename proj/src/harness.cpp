#include "stm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stm/metrics.hpp"

namespace stm {

using json = nlohmann::json;

const char* mode_name(RunMode m) {
  switch (m) {
    case RunMode::kMemory: return "memory";
    case RunMode::kSingleSweep: return "single_sweep";
    case RunMode::kImageBaseline: return "image_baseline";
  }
  return "?";
}

namespace {

constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const uint8_t* p = (const uint8_t*)data;
  for (size_t i = 0; i < n; ++i) h = (h ^ p[i]) * kFnvPrime;
  return h;
}

// The frames a memory replay reads: window frames up to and including the
// key. The image baseline is fed exactly the same frames so the comparison
// sees identical segmenter output.
std::vector<int> consumed_frames(const SequenceGt& gt, RunMode mode) {
  const int key = (int)gt.key_frame_index;
  std::vector<int> out;
  if (mode == RunMode::kSingleSweep) {
    out.push_back(key);
    return out;
  }
  for (int i = 0; i <= key; ++i)
    if (i == key || gt.in_window[i]) out.push_back(i);
  return out;
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

std::string cls_name(int c) {
  return c <= 2 ? class_name(c) : "class" + std::to_string(c);
}

}  // namespace

uint64_t hash_consumed_labels(const Sequence& seq, const SequenceGt& gt, RunMode mode) {
  uint64_t h = kFnvOffset;
  for (int i : consumed_frames(gt, mode)) {
    const LabelImage& im = seq.sweeps[i].labels;
    h = fnv1a(h, im.data.data(), im.data.size() * sizeof(float));
  }
  return h;
}

PipelineRun run_pipeline(const CcNetwork& net, const Sequence& seq, const SequenceGt& gt,
                         RunMode mode, const ReplayConfig& cfg) {
  if (seq.sweeps.empty()) throw std::invalid_argument("run_pipeline: empty sequence");
  if (gt.key_frame_index >= seq.sweeps.size())
    throw std::invalid_argument("run_pipeline: key frame out of range");

  PipelineRun run;
  run.mode = mode;
  run.C = seq.C;
  run.key_frame = (int)gt.key_frame_index;
  run.key_pose = seq.sweeps[gt.key_frame_index].pose;
  run.labels_hash = hash_consumed_labels(seq, gt, mode);

  if (mode == RunMode::kImageBaseline) {
    const auto labels = image_baseline_labels(seq, cfg.camera);
    for (int i : consumed_frames(gt, mode)) {
      const Sweep& sw = seq.sweeps[i];
      for (size_t k = 0; k < sw.points.size(); ++k) {
        if (labels[i][k] == kUnlabeled) continue;  // out of frame at its own time
        const Vec3 w = transform(sw.pose, sw.points[k].pos());
        run.positions.push_back(w);
        run.pred.push_back(labels[i][k]);
        run.capture.push_back(gt.capture_class[i][k]);
        run.target.push_back(gt.target_class[i][k]);
        run.in_mask.push_back(in_view(w, run.key_pose, cfg.camera) ? 1 : 0);
        run.sweep_index.push_back(i);
        run.point_index.push_back((int)k);
      }
    }
    return run;
  }

  if (net.C != seq.C)
    throw std::runtime_error("run_pipeline: network/sequence class count mismatch");

  ReplayConfig rc = cfg;
  rc.single_sweep = mode == RunMode::kSingleSweep;
  ReplayResult rep = replay_to_key(seq, &gt, rc);

  std::vector<double> feats, logits;
  standardize_replay(rep, net.feat_stats, feats);
  ccnet_forward(net, rep.graph, rep.positions.data(), feats, BnMode::kEval, logits);
  argmax_rows(logits, seq.C, run.pred);

  run.positions = std::move(rep.positions);
  run.capture = std::move(rep.capture);
  run.target = std::move(rep.target);
  run.in_mask = std::move(rep.in_mask);
  run.sweep_index = std::move(rep.sweep_index);
  run.point_index = std::move(rep.point_index);
  return run;
}

namespace {

double safe_iou(int64_t inter, int64_t uni) {
  return uni == 0 ? std::numeric_limits<double>::quiet_NaN() : (double)inter / (double)uni;
}

double fg_mean(const std::vector<double>& iou) {
  double s = 0;
  int n = 0;
  for (size_t c = 1; c < iou.size(); ++c)
    if (!std::isnan(iou[c])) {
      s += iou[c];
      ++n;
    }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / n;
}

}  // namespace

EvalReport evaluate_runs(const std::string& model, int C, const std::vector<PipelineRun>& runs,
                         const std::vector<double>& bin_edges) {
  if (C < 2) throw std::invalid_argument("evaluate_runs: need at least 2 classes");
  for (size_t b = 1; b < bin_edges.size(); ++b)
    if (!(bin_edges[b] > bin_edges[b - 1]))
      throw std::invalid_argument("evaluate_runs: bin edges must ascend");

  const int B = bin_edges.empty() ? 0 : (int)bin_edges.size() - 1;
  IouAccum total(C);
  std::vector<IouAccum> bins(B, IouAccum(C));

  for (const PipelineRun& run : runs) {
    if (run.C != C) throw std::invalid_argument("evaluate_runs: class count mismatch");
    for (int i = 0; i < run.size(); ++i) {
      if (!run.in_mask[i] || run.target[i] == kUnlabeled) continue;
      total.add(run.pred[i], run.target[i]);
      if (B == 0) continue;
      const double d = (run.positions[i] - run.key_pose.t).norm();
      const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), d);
      const int b = (int)(it - bin_edges.begin()) - 1;
      if (b >= 0 && b < B) bins[b].add(run.pred[i], run.target[i]);
    }
  }

  EvalReport rep;
  rep.model = model;
  rep.C = C;
  rep.sequences = (int)runs.size();
  rep.points = total.n;
  rep.class_iou.resize(C);
  for (int c = 0; c < C; ++c) rep.class_iou[c] = safe_iou(total.inter[c], total.uni[c]);
  rep.mean_iou = fg_mean(rep.class_iou);
  rep.edges = bin_edges;
  rep.bin_iou.assign(B, std::vector<double>(C));
  rep.bin_mean.resize(B);
  rep.bin_count.resize(B);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) rep.bin_iou[b][c] = safe_iou(bins[b].inter[c], bins[b].uni[c]);
    rep.bin_mean[b] = fg_mean(rep.bin_iou[b]);
    rep.bin_count[b] = bins[b].n;
  }
  return rep;
}

namespace {

std::string fmt17(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_edge(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void write_eval_csv(const std::string& path, const std::vector<EvalReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_eval_csv: cannot write " + path);
  out << "# stm-eval-v1\n";
  out << "model,scope,class,lo,hi,points,iou\n";
  for (const EvalReport& r : reports) {
    for (int c = 0; c < r.C; ++c)
      out << r.model << ",overall," << cls_name(c) << ",,," << r.points << ","
          << fmt17(r.class_iou[c]) << "\n";
    out << r.model << ",overall,mean_foreground,,," << r.points << "," << fmt17(r.mean_iou)
        << "\n";
    const int B = r.bin_mean.empty() ? 0 : (int)r.bin_mean.size();
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < r.C; ++c)
        out << r.model << ",bin," << cls_name(c) << "," << fmt_edge(r.edges[b]) << ","
            << fmt_edge(r.edges[b + 1]) << "," << r.bin_count[b] << ","
            << fmt17(r.bin_iou[b][c]) << "\n";
      out << r.model << ",bin,mean_foreground," << fmt_edge(r.edges[b]) << ","
          << fmt_edge(r.edges[b + 1]) << "," << r.bin_count[b] << "," << fmt17(r.bin_mean[b])
          << "\n";
    }
  }
}

std::string render_eval_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  if (reports.empty()) return "";
  const int C = reports.front().C;
  auto cell = [](double v) {
    char buf[32];
    if (std::isnan(v))
      std::snprintf(buf, sizeof buf, "%12s", "-");
    else
      std::snprintf(buf, sizeof buf, "%12.3f", v);
    return std::string(buf);
  };
  out << "Model           ";
  for (int c = 1; c < C; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " | %12s", cls_name(c).c_str());
    out << buf;
  }
  out << " | " << "        Mean" << "\n";
  out << std::string(16 + (size_t)C * 15, '-') << "\n";
  for (const EvalReport& r : reports) {
    char name[32];
    std::snprintf(name, sizeof name, "%-16s", r.model.c_str());
    out << name;
    for (int c = 1; c < C; ++c) out << " | " << cell(r.class_iou[c]);
    out << " | " << cell(r.mean_iou) << "\n";
  }
  return out.str();
}

namespace {

void require_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + it.key() + "' in " +
                                  where);
  }
}

}  // namespace

HarnessConfig default_config() { return HarnessConfig{}; }

HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: bad JSON: ") + e.what());
  }

  HarnessConfig cfg;
  require_keys(j, "config", {"version", "seed", "scenario", "corpus", "train_labels", "replay",
                             "gtgen", "train", "network", "eval"});
  if (j.contains("version") && j["version"].get<int>() != 1)
    throw std::invalid_argument("config: unsupported version");
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("scenario")) cfg.scenario = j["scenario"].get<std::string>();
  if (j.contains("corpus")) {
    const json& c = j["corpus"];
    require_keys(c, "corpus", {"train", "val", "eval", "triad_in_train"});
    if (c.contains("train")) cfg.train_count = c["train"].get<int>();
    if (c.contains("val")) cfg.val_count = c["val"].get<int>();
    if (c.contains("eval")) cfg.eval_count = c["eval"].get<int>();
    if (c.contains("triad_in_train")) cfg.triad_in_train = c["triad_in_train"].get<bool>();
  }
  if (j.contains("train_labels")) {
    cfg.train_labels = j["train_labels"].get<std::string>();
    if (cfg.train_labels != "sim" && cfg.train_labels != "gtgen")
      throw std::invalid_argument("config: train_labels must be 'sim' or 'gtgen'");
  }
  if (j.contains("replay")) {
    const json& r = j["replay"];
    require_keys(r, "replay", {"fg_threshold", "horizon_m", "fill_radius"});
    if (r.contains("fg_threshold")) cfg.train.replay.fg_threshold = r["fg_threshold"].get<double>();
    if (r.contains("horizon_m")) cfg.train.replay.horizon_m = r["horizon_m"].get<double>();
    if (r.contains("fill_radius")) cfg.train.replay.fill_radius = r["fill_radius"].get<int>();
  }
  if (j.contains("gtgen")) {
    const json& g = j["gtgen"];
    require_keys(g, "gtgen", {"range_limit", "dbscan_eps", "dbscan_min_pts", "delta"});
    if (g.contains("range_limit")) cfg.gtgen.range_limit = g["range_limit"].get<double>();
    if (g.contains("dbscan_eps")) cfg.gtgen.dbscan.eps = g["dbscan_eps"].get<double>();
    if (g.contains("dbscan_min_pts")) cfg.gtgen.dbscan.min_pts = g["dbscan_min_pts"].get<int>();
    if (g.contains("delta")) cfg.gtgen.delta = g["delta"].get<double>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    require_keys(t, "train", {"lr_phase1", "lr_phase2", "val_every", "patience", "max_iters",
                              "norm_by_k", "scalar_kernel"});
    if (t.contains("lr_phase1")) cfg.train.lr_phase1 = t["lr_phase1"].get<double>();
    if (t.contains("lr_phase2")) cfg.train.lr_phase2 = t["lr_phase2"].get<double>();
    if (t.contains("val_every")) cfg.train.val_every = t["val_every"].get<int>();
    if (t.contains("patience")) cfg.train.patience = t["patience"].get<int>();
    if (t.contains("max_iters")) cfg.train.max_iters = t["max_iters"].get<int>();
    if (t.contains("norm_by_k")) cfg.train.norm_by_k = t["norm_by_k"].get<bool>();
    if (t.contains("scalar_kernel")) cfg.train.scalar_kernel = t["scalar_kernel"].get<bool>();
  }
  if (j.contains("network")) {
    const json& n = j["network"];
    require_keys(n, "network", {"layers", "width", "kernel_hidden", "graph_k"});
    // The layer stack is a compile-time architecture; the keys are here so a
    // config names every constant, and anything else is rejected as invalid.
    if (n.contains("layers") && n["layers"].get<int>() != 4)
      throw std::invalid_argument("config: network.layers must be 4");
    if (n.contains("width") && n["width"].get<int>() != 16)
      throw std::invalid_argument("config: network.width must be 16");
    if (n.contains("kernel_hidden") && n["kernel_hidden"].get<int>() != kKernelHidden)
      throw std::invalid_argument("config: network.kernel_hidden must be 16");
    if (n.contains("graph_k")) cfg.train.replay.graph_k = n["graph_k"].get<int>();
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    require_keys(e, "eval", {"bin_edges"});
    if (e.contains("bin_edges")) {
      cfg.bin_edges = e["bin_edges"].get<std::vector<double>>();
      for (size_t b = 1; b < cfg.bin_edges.size(); ++b)
        if (!(cfg.bin_edges[b] > cfg.bin_edges[b - 1]))
          throw std::invalid_argument("config: eval.bin_edges must ascend");
    }
  }
  if (cfg.train_count < 1 || cfg.val_count < 0 || cfg.eval_count < 0)
    throw std::invalid_argument("config: corpus counts out of range");
  cfg.train.seed = cfg.seed;
  return cfg;
}

void save_config(const std::string& path, const HarnessConfig& cfg) {
  json j;
  j["version"] = 1;
  j["seed"] = cfg.seed;
  j["scenario"] = cfg.scenario;
  j["corpus"] = {{"train", cfg.train_count},
                 {"val", cfg.val_count},
                 {"eval", cfg.eval_count},
                 {"triad_in_train", cfg.triad_in_train}};
  j["train_labels"] = cfg.train_labels;
  j["replay"] = {{"fg_threshold", cfg.train.replay.fg_threshold},
                 {"horizon_m", cfg.train.replay.horizon_m},
                 {"fill_radius", cfg.train.replay.fill_radius}};
  j["gtgen"] = {{"range_limit", cfg.gtgen.range_limit},
                {"dbscan_eps", cfg.gtgen.dbscan.eps},
                {"dbscan_min_pts", cfg.gtgen.dbscan.min_pts},
                {"delta", cfg.gtgen.delta}};
  j["train"] = {{"lr_phase1", cfg.train.lr_phase1},   {"lr_phase2", cfg.train.lr_phase2},
                {"val_every", cfg.train.val_every},   {"patience", cfg.train.patience},
                {"max_iters", cfg.train.max_iters},   {"norm_by_k", cfg.train.norm_by_k},
                {"scalar_kernel", cfg.train.scalar_kernel}};
  j["network"] = {{"layers", 4},
                  {"width", 16},
                  {"kernel_hidden", kKernelHidden},
                  {"graph_k", cfg.train.replay.graph_k}};
  j["eval"] = {{"bin_edges", cfg.bin_edges}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_config: cannot write " + path);
  out << j.dump(2) << "\n";
}

uint64_t sequence_seed(uint64_t master, const std::string& role, int index) {
  uint64_t h = kFnvOffset ^ (master * 0x9e3779b97f4a7c15ULL);
  h = fnv1a(h, role.data(), role.size());
  const int64_t idx = index;
  h = fnv1a(h, &idx, sizeof idx);
  return h;
}

std::string scenario_dir(const std::string& scenario_path) {
  const size_t cut = scenario_path.find_last_of('/');
  return cut == std::string::npos ? std::string(".") : scenario_path.substr(0, cut);
}

}  // namespace stm
