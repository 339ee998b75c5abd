#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stm/types.hpp"

namespace stm {

struct LidarConfig {
  int beams = 32;
  double pitch_min = -25.0 * M_PI / 180.0;
  double pitch_max = 5.0 * M_PI / 180.0;
  double az_step = 0.4 * M_PI / 180.0;
  double max_range = 120.0;
  double sigma = 0.02;  // range noise std dev, meters

  std::vector<double> beam_pitches() const {
    std::vector<double> p(beams);
    for (int i = 0; i < beams; ++i)
      p[i] = beams == 1 ? pitch_min
                        : pitch_min + (pitch_max - pitch_min) * i / (double)(beams - 1);
    return p;
  }
};

enum class CellProv : uint8_t { Empty = 0, Measured = 1, Interpolated = 2 };

// Polar depth raster for one sweep: pitch rows x azimuth columns, each cell
// holding the minimum measured range. Pitch bin edges are midpoints between
// consecutive beam pitches; pitches outside [first, last] beam fall outside
// the raster. Azimuth wraps.
class DepthRaster {
 public:
  explicit DepthRaster(const LidarConfig& cfg);

  // Bin current-sweep points (sensor frame); cell = min range.
  void build(const std::vector<SweepPoint>& sensor_points);

  // Nearest-measured-cell interpolation within a Chebyshev radius. Ties break
  // by (distance, range, row, col). Measured cells are never altered.
  void fill_gaps(int max_radius_cells);

  // Occlusion score for a world-frame point given the current ego pose:
  // cell_range - point_range, or nullopt (NEUTRAL) when the point leaves the
  // raster or the cell is empty.
  std::optional<double> score(const Vec3& world_point, const Pose& pose) const;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double range(int r, int c) const { return range_[(size_t)r * cols_ + c]; }
  CellProv prov(int r, int c) const { return (CellProv)prov_[(size_t)r * cols_ + c]; }

  // Cell of a polar direction, or false if the pitch is outside coverage.
  bool cell_of(double phi, double theta, int& row, int& col) const;

  void export_pgm(const std::string& path) const;

 private:
  int rows_, cols_;
  double az_step_, max_range_;
  std::vector<double> edges_;  // rows_+1 pitch bin edges, ascending
  std::vector<double> range_;
  std::vector<uint8_t> prov_;
};

}  // namespace stm
