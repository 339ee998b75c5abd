#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stm/ccnet.hpp"
#include "stm/gtgen.hpp"
#include "stm/replay.hpp"
#include "stm/sim.hpp"
#include "stm/train.hpp"

namespace stm {

// The three compared labelers. The learned modes predict over the points
// their memory holds at the key frame; the image baseline labels every
// in-frame point at its own frame and never revises.
enum class RunMode { kMemory, kSingleSweep, kImageBaseline };

const char* mode_name(RunMode m);

// Key-frame predictions of one mode over its own evaluation point set, with
// aligned ground truth and the key-frame camera mask.
struct PipelineRun {
  RunMode mode = RunMode::kMemory;
  int C = 0;
  int key_frame = 0;
  Pose key_pose;
  std::vector<Vec3> positions;   // world frame
  std::vector<uint8_t> pred;     // predicted class per point
  std::vector<uint8_t> capture;  // class of the surface at capture time
  std::vector<uint8_t> target;   // key-frame truth (kUnlabeled = not scored)
  std::vector<uint8_t> in_mask;  // inside the key-frame camera frustum
  std::vector<int> sweep_index, point_index;
  uint64_t labels_hash = 0;  // FNV-1a over every label image this run consumed

  int size() const { return (int)positions.size(); }
};

// Replays the sequence in the requested mode and predicts at the key frame.
// memory: insert -> deprecate -> raster -> occlusion -> network, predictions
// over the memory contents; single_sweep: network over the key sweep only
// with the occlusion channel at 0; image_baseline: per-frame projection
// labels over the same frames the memory mode consumed. The two learned
// modes require a trained network matching the sequence's class count.
PipelineRun run_pipeline(const CcNetwork& net, const Sequence& seq, const SequenceGt& gt,
                         RunMode mode, const ReplayConfig& cfg);

// FNV-1a over the label images of the frames a memory replay of this
// sequence consumes (window frames up to and including the key).
uint64_t hash_consumed_labels(const Sequence& seq, const SequenceGt& gt, RunMode mode);

// Pooled IoU over many runs of one model: per class, mean over foreground
// classes, and distance-binned from each run's key-frame ego position.
// Entries are NaN where a class never appears in a bin's union.
struct EvalReport {
  std::string model;
  int C = 0;
  int sequences = 0;
  int64_t points = 0;            // masked, labeled points pooled
  std::vector<double> class_iou;  // C
  double mean_iou = 0;            // mean over foreground classes
  std::vector<double> edges;      // B+1 ascending bin edges, meters
  std::vector<std::vector<double>> bin_iou;  // B x C
  std::vector<double> bin_mean;              // B, foreground mean per bin
  std::vector<int64_t> bin_count;            // B
};

EvalReport evaluate_runs(const std::string& model, int C, const std::vector<PipelineRun>& runs,
                         const std::vector<double>& bin_edges);

// Versioned CSV ("stm-eval-v1"): one row per (model, scope, class); %.17g
// values so identical runs serialize bit-identically.
void write_eval_csv(const std::string& path, const std::vector<EvalReport>& reports);

// Fixed-width text table, one model per row, foreground classes + mean.
std::string render_eval_table(const std::vector<EvalReport>& reports);

// Everything an experiment needs beyond the scenario file. Loaded from JSON;
// unknown keys are rejected so typos cannot silently fall back to defaults.
struct HarnessConfig {
  uint64_t seed = 1;
  std::string scenario = "scenarios/mixed.json";
  int train_count = 9;  // mixed-scenario training sequences
  int val_count = 2;
  int eval_count = 50;
  bool triad_in_train = true;     // include the three behavioral scenarios
  std::string train_labels = "sim";  // "sim" | "gtgen"
  TrainConfig train;              // optimizer + the replay defaults
  GtgenConfig gtgen;
  std::vector<double> bin_edges = {0, 10, 20, 30, 40, 50, 60, 70};
};

HarnessConfig default_config();
HarnessConfig load_config(const std::string& path);
void save_config(const std::string& path, const HarnessConfig& cfg);

// Per-sequence seed for a corpus role ("train" | "val" | "eval"), derived
// from the master seed; disjoint across roles by construction.
uint64_t sequence_seed(uint64_t master, const std::string& role, int index);

// Sensor geometry a stored sequence was captured with. Sequence files keep
// only the data; consumers rebuild the camera model and raster grid from a
// JSON sidecar written at simulation time.
struct SensorMeta {
  int cam_w = 960, cam_h = 600;
  double cam_hfov = 70.0 * M_PI / 180.0;
  LidarConfig lidar;
};

SensorMeta meta_of(const Scenario& sc);
CameraModel meta_camera(const SensorMeta& m);
bool meta_equal(const SensorMeta& a, const SensorMeta& b);
void write_meta(const std::string& path, const SensorMeta& m);
SensorMeta read_meta(const std::string& path);

// Scenario directory of a scenario path (for resolving the triad files that
// sit next to the configured scenario).
std::string scenario_dir(const std::string& scenario_path);

}  // namespace stm
