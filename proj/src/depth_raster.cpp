#include "stm/depth_raster.hpp"

#include <algorithm>
#include <cmath>

#include "stm/sequence_io.hpp"

namespace stm {

DepthRaster::DepthRaster(const LidarConfig& cfg) {
  rows_ = cfg.beams;
  cols_ = (int)std::ceil(2.0 * M_PI / cfg.az_step);
  az_step_ = cfg.az_step;
  max_range_ = cfg.max_range;
  std::vector<double> pitches = cfg.beam_pitches();
  edges_.resize(rows_ + 1);
  edges_[0] = pitches.front();
  edges_[rows_] = pitches.back();
  for (int i = 1; i < rows_; ++i) edges_[i] = 0.5 * (pitches[i - 1] + pitches[i]);
  range_.assign((size_t)rows_ * cols_, 0.0);
  prov_.assign((size_t)rows_ * cols_, (uint8_t)CellProv::Empty);
}

bool DepthRaster::cell_of(double phi, double theta, int& row, int& col) const {
  if (theta < edges_.front() || theta > edges_.back()) return false;
  // upper_bound - 1, clamped so theta == last edge lands in the last row
  int r = (int)(std::upper_bound(edges_.begin(), edges_.end(), theta) - edges_.begin()) - 1;
  row = std::clamp(r, 0, rows_ - 1);
  int c = (int)std::floor((phi + M_PI) / az_step_);
  col = ((c % cols_) + cols_) % cols_;
  return true;
}

void DepthRaster::build(const std::vector<SweepPoint>& sensor_points) {
  std::fill(range_.begin(), range_.end(), 0.0);
  std::fill(prov_.begin(), prov_.end(), (uint8_t)CellProv::Empty);
  for (const SweepPoint& sp : sensor_points) {
    Vec3 p = sp.pos();
    double r = p.norm();
    if (r <= 0.0) continue;
    Polar q = cart_to_polar(p);
    int row, col;
    if (!cell_of(q.phi, q.theta, row, col)) continue;
    size_t cell = (size_t)row * cols_ + col;
    if (prov_[cell] == (uint8_t)CellProv::Empty || q.r < range_[cell]) range_[cell] = q.r;
    prov_[cell] = (uint8_t)CellProv::Measured;
  }
}

void DepthRaster::fill_gaps(int max_radius_cells) {
  if (max_radius_cells <= 0) return;
  // Rings only make Chebyshev sense while they don't self-overlap around the
  // azimuth wrap.
  max_radius_cells = std::min(max_radius_cells, (cols_ - 1) / 2);
  std::vector<double> new_range = range_;
  std::vector<uint8_t> new_prov = prov_;
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < cols_; ++c) {
      if (prov_[(size_t)r * cols_ + c] != (uint8_t)CellProv::Empty) continue;
      for (int d = 1; d <= max_radius_cells; ++d) {
        // best measured cell on the ring at Chebyshev distance d:
        // (range, row, col) lexicographic
        double best = -1;
        int best_r = 0, best_c = 0;
        for (int dr = -d; dr <= d; ++dr) {
          int rr = r + dr;
          if (rr < 0 || rr >= rows_) continue;
          bool edge_row = std::abs(dr) == d;
          for (int dc = -d; dc <= d; ++dc) {
            if (!edge_row && std::abs(dc) != d) continue;
            int cc = ((c + dc) % cols_ + cols_) % cols_;
            size_t cell = (size_t)rr * cols_ + cc;
            if (prov_[cell] != (uint8_t)CellProv::Measured) continue;
            double v = range_[cell];
            if (best < 0 || v < best || (v == best && (rr < best_r || (rr == best_r && cc < best_c)))) {
              best = v;
              best_r = rr;
              best_c = cc;
            }
          }
        }
        if (best >= 0) {
          size_t cell = (size_t)r * cols_ + c;
          new_range[cell] = best;
          new_prov[cell] = (uint8_t)CellProv::Interpolated;
          break;
        }
      }
    }
  range_.swap(new_range);
  prov_.swap(new_prov);
}

std::optional<double> DepthRaster::score(const Vec3& world_point, const Pose& pose) const {
  Vec3 p = inverse_transform(pose, world_point);
  double r = p.norm();
  if (r <= 0.0) return std::nullopt;
  Polar q = cart_to_polar(p);
  int row, col;
  if (!cell_of(q.phi, q.theta, row, col)) return std::nullopt;
  size_t cell = (size_t)row * cols_ + col;
  if (prov_[cell] == (uint8_t)CellProv::Empty) return std::nullopt;
  return range_[cell] - q.r;
}

void DepthRaster::export_pgm(const std::string& path) const {
  write_pgm(path, rows_, cols_, range_, max_range_);
}

}  // namespace stm
