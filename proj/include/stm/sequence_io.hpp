#pragma once

#include <string>
#include <vector>

#include "stm/types.hpp"

namespace stm {

// Sequence file (.stms), little-endian:
//   magic "STMS", version u16
//   u32 C, u32 H, u32 W, u32 n_sweeps
//   per sweep:
//     pose as 12 x f64 (rotation row-major, then translation)
//     timestamp f64
//     n_points u32
//     points as n_points x (x, y, z, intensity) f32
//     label image as H*W*C f32, row-major, channel innermost
void write_sequence(const std::string& path, const Sequence& seq);
Sequence read_sequence(const std::string& path);

// Ground-truth sidecar (.stmg):
//   magic "STMG", version u16
//   u32 n_sweeps, u32 key_frame_index
//   per sweep: u8 in_window, u8 in_extension, u32 n_points,
//              capture_class u8[n], target_class u8[n]
void write_gt(const std::string& path, const SequenceGt& gt);
SequenceGt read_gt(const std::string& path);

// ASCII PLY point cloud with per-point RGB by class id.
void write_ply(const std::string& path, const std::vector<Vec3>& points,
               const std::vector<uint8_t>& class_ids);

// Binary PGM (P5), values normalized to [0,255]; negative values map to 0.
void write_pgm(const std::string& path, int rows, int cols, const std::vector<double>& values,
               double max_value);

}  // namespace stm
