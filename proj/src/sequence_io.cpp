#include "stm/sequence_io.hpp"

#include <algorithm>
#include <cstdio>

#include "stm/serial.hpp"

namespace stm {

static constexpr uint16_t kSeqVersion = 1;
static constexpr uint16_t kGtVersion = 1;

void write_sequence(const std::string& path, const Sequence& seq) {
  BinWriter w(path);
  w.magic("STMS");
  w.pod<uint16_t>(kSeqVersion);
  w.pod<uint32_t>((uint32_t)seq.C);
  w.pod<uint32_t>((uint32_t)seq.H);
  w.pod<uint32_t>((uint32_t)seq.W);
  w.pod<uint32_t>((uint32_t)seq.sweeps.size());
  for (const Sweep& s : seq.sweeps) {
    w.array(s.pose.R.m, 9);
    w.pod(s.pose.t.x);
    w.pod(s.pose.t.y);
    w.pod(s.pose.t.z);
    w.pod(s.timestamp);
    w.pod<uint32_t>((uint32_t)s.points.size());
    w.array(s.points.data(), s.points.size());  // SweepPoint is 4 packed f32
    static_assert(sizeof(SweepPoint) == 16);
    if ((int)s.labels.data.size() != seq.H * seq.W * seq.C)
      throw std::runtime_error("write_sequence: label image size mismatch");
    w.array(s.labels.data.data(), s.labels.data.size());
  }
  w.close();
}

Sequence read_sequence(const std::string& path) {
  BinReader r(path);
  r.expect_magic("STMS");
  uint16_t ver = r.pod<uint16_t>();
  if (ver != kSeqVersion) throw std::runtime_error("unsupported sequence version");
  Sequence seq;
  seq.C = (int)r.pod<uint32_t>();
  seq.H = (int)r.pod<uint32_t>();
  seq.W = (int)r.pod<uint32_t>();
  uint32_t n = r.pod<uint32_t>();
  seq.sweeps.resize(n);
  for (Sweep& s : seq.sweeps) {
    r.array(s.pose.R.m, 9);
    s.pose.t.x = r.pod<double>();
    s.pose.t.y = r.pod<double>();
    s.pose.t.z = r.pod<double>();
    s.timestamp = r.pod<double>();
    uint32_t np = r.pod<uint32_t>();
    s.points.resize(np);
    r.array(s.points.data(), np);
    s.labels.resize(seq.H, seq.W, seq.C);
    r.array(s.labels.data.data(), s.labels.data.size());
  }
  return seq;
}

void write_gt(const std::string& path, const SequenceGt& gt) {
  BinWriter w(path);
  w.magic("STMG");
  w.pod<uint16_t>(kGtVersion);
  w.pod<uint32_t>((uint32_t)gt.capture_class.size());
  w.pod<uint32_t>(gt.key_frame_index);
  for (size_t i = 0; i < gt.capture_class.size(); ++i) {
    w.pod<uint8_t>(gt.in_window[i]);
    w.pod<uint8_t>(gt.in_extension[i]);
    w.pod<uint32_t>((uint32_t)gt.capture_class[i].size());
    w.array(gt.capture_class[i].data(), gt.capture_class[i].size());
    if (gt.target_class[i].size() != gt.capture_class[i].size())
      throw std::runtime_error("write_gt: class array size mismatch");
    w.array(gt.target_class[i].data(), gt.target_class[i].size());
  }
  w.close();
}

SequenceGt read_gt(const std::string& path) {
  BinReader r(path);
  r.expect_magic("STMG");
  uint16_t ver = r.pod<uint16_t>();
  if (ver != kGtVersion) throw std::runtime_error("unsupported gt version");
  uint32_t n = r.pod<uint32_t>();
  SequenceGt gt;
  gt.key_frame_index = r.pod<uint32_t>();
  gt.in_window.resize(n);
  gt.in_extension.resize(n);
  gt.capture_class.resize(n);
  gt.target_class.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    gt.in_window[i] = r.pod<uint8_t>();
    gt.in_extension[i] = r.pod<uint8_t>();
    uint32_t np = r.pod<uint32_t>();
    gt.capture_class[i].resize(np);
    r.array(gt.capture_class[i].data(), np);
    gt.target_class[i].resize(np);
    r.array(gt.target_class[i].data(), np);
  }
  return gt;
}

void write_ply(const std::string& path, const std::vector<Vec3>& points,
               const std::vector<uint8_t>& class_ids) {
  if (points.size() != class_ids.size())
    throw std::runtime_error("write_ply: size mismatch");
  // background gray, traffic sign red, construction orange, unlabeled blue
  static const int rgb[4][3] = {{128, 128, 128}, {220, 30, 30}, {240, 150, 20}, {40, 40, 220}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "ply\nformat ascii 1.0\nelement vertex " << points.size()
    << "\nproperty double x\nproperty double y\nproperty double z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char line[160];
  for (size_t i = 0; i < points.size(); ++i) {
    int c = class_ids[i] < 3 ? class_ids[i] : 3;
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g %d %d %d\n", points[i].x, points[i].y,
                  points[i].z, rgb[c][0], rgb[c][1], rgb[c][2]);
    f << line;
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

void write_pgm(const std::string& path, int rows, int cols, const std::vector<double>& values,
               double max_value) {
  if ((int)values.size() != rows * cols) throw std::runtime_error("write_pgm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P5\n" << cols << " " << rows << "\n255\n";
  std::vector<uint8_t> row((size_t)rows * cols);
  for (size_t i = 0; i < values.size(); ++i) {
    double v = max_value > 0 ? values[i] / max_value : 0.0;
    row[i] = (uint8_t)std::clamp((int)std::lround(v * 255.0), 0, 255);
  }
  f.write((const char*)row.data(), (std::streamsize)row.size());
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace stm
