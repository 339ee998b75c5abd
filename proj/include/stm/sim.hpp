#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stm/camera.hpp"
#include "stm/depth_raster.hpp"
#include "stm/types.hpp"

namespace stm {

// Analytically intersectable primitives. Boxes are axis-aligned, cylinders
// and cones stand vertical; a rect is an axis-aligned rectangle (its normal
// along a coordinate axis).
struct Primitive {
  enum Kind : uint8_t { kGround, kBox, kCylinder, kCone, kRect };
  Kind kind = kBox;
  uint8_t cls = kBackground;
  double intensity = 0.1;  // material reflectance in [0, 1]
  Vec3 p{0, 0, 0};    // box/rect center; cylinder/cone base center; ground z = p.z
  Vec3 half{0, 0, 0};  // box half extents; rect in-plane half extents
  double radius = 0;   // cylinder / cone base radius
  double height = 0;   // cylinder / cone height
  int axis = 0;        // rect normal axis: 0 = x, 1 = y, 2 = z
};

Primitive ground_plane(double z, double intensity = 0.08);
Primitive make_box(const Vec3& center, const Vec3& half, uint8_t cls = kBackground,
                   double intensity = 0.25);
Primitive make_cylinder(const Vec3& base, double radius, double height,
                        uint8_t cls = kConstruction, double intensity = 0.5);
Primitive make_cone(const Vec3& base, double radius, double height,
                    uint8_t cls = kConstruction, double intensity = 0.55);
Primitive make_rect(const Vec3& center, int axis, double half_u, double half_v,
                    uint8_t cls = kTrafficSign, double intensity = 0.9);
// Sign face centered above `base` on a thin pole; the face normal is `axis`.
std::vector<Primitive> make_sign(const Vec3& base, double width, double height, double pole_h,
                                 int axis = 0, double intensity = 0.9);

// A rigid group of primitives on a piecewise-linear trajectory. Geometry is
// authored at waypoint 0; at time t every part is displaced by pos(t)-wp[0].
struct Actor {
  std::vector<Primitive> parts;
  std::vector<double> times;  // ascending, same length as wps (>= 1)
  std::vector<Vec3> wps;

  Vec3 offset_at(double t) const;
};

struct EgoPath {
  std::vector<Vec3> wps;  // sensor-height waypoints (>= 2)
  double speed = 10.0;    // m/s, constant

  double length() const;
  Pose pose_at_arc(double s) const;  // position along the polyline, yaw from segment
};

struct NoiseConfig {
  int jitter_px = 0;                  // boundary misalignment radius, pixels
  double flip_p0 = 0, flip_p1 = 0;    // flip prob p(d) = p0 + p1 * min(d/dmax, 1)
  double flip_dmax = 60;
  double soften = 0;                  // blend toward uniform: (1-a)*onehot + a/C
};

struct Scenario {
  int C = 3;
  uint64_t seed = 1;
  LidarConfig lidar;
  int cam_w = 960, cam_h = 600;
  double cam_hfov = 70.0 * M_PI / 180.0;
  NoiseConfig noise;
  EgoPath ego;
  double key_at_m = 30.0;     // key-frame odometer
  double window_m = 30.0;     // training window before the key frame
  double extension_m = 100.0; // observation tail after the key frame
  double target_tol = 0.3;    // surface-match tolerance for key-frame targets
  std::vector<Primitive> statics;  // should include a ground plane
  std::vector<Actor> actors;

  CameraModel camera() const { return CameraModel::from_hfov(cam_w, cam_h, cam_hfov); }
};

// All primitives at one instant: statics plus actors displaced to time t.
struct SceneState {
  std::vector<Primitive> prims;
};
SceneState scene_at(const Scenario& sc, double t);

struct Hit {
  double t = 0;  // ray parameter = euclidean distance for unit directions
  int prim = -1;
};

// Nearest intersection of a single primitive, or nothing. `dir` must be unit.
std::optional<double> intersect(const Primitive& pr, const Vec3& o, const Vec3& dir, double tmax);
// Nearest hit across the whole state.
std::optional<Hit> raycast(const SceneState& s, const Vec3& o, const Vec3& dir, double tmax);

// Exact distance from a point to the primitive's surface.
double surface_distance(const Primitive& pr, const Vec3& p);
// Distance to the nearest surface of the given class (inf when absent).
double class_surface_distance(const SceneState& s, const Vec3& p, uint8_t cls);

// One LiDAR revolution from the ego pose: one ray per (beam pitch, azimuth),
// nearest hit within max range, range perturbed by Gaussian noise sigma.
// Emits sensor-frame points, their material intensity, and true class ids.
void raycast_sweep(const SceneState& s, const Pose& ego, const LidarConfig& lidar,
                   std::mt19937_64& rng, std::vector<SweepPoint>& pts,
                   std::vector<uint8_t>& cls);

// Per-pixel nearest-hit class id and depth through pixel centers (depth =
// dmax where nothing is hit). Exact nearest-hit, accelerated by projected
// primitive bounds.
void render_class_depth(const SceneState& s, const CameraModel& cam, const Pose& ego, double dmax,
                        std::vector<uint8_t>& cls, std::vector<float>& depth);

// Class-id image -> per-pixel probability image with the configured defects:
// boundary jitter, depth-dependent label flips, softening toward uniform.
LabelImage corrupt_segmentation(const std::vector<uint8_t>& ids, const std::vector<float>& depth,
                                int H, int W, int C, const NoiseConfig& nc, std::mt19937_64& rng);

struct SimResult {
  Sequence seq;
  SequenceGt gt;
};

// Drive the scenario: sweeps every max(0.5 m, 0.1 s * speed) of travel up to
// key + extension, corrupted label images, per-point capture classes, and
// key-frame target classes (a departed surface's points become background).
SimResult generate_sequence(const Scenario& sc);

// Scenario files: JSON with an optional "include" base and a "randomize"
// block for procedural clutter. The returned scenario already contains the
// randomized objects. The seed_override overloads replace the file's seed
// before clutter is drawn, so one scenario file spawns a whole corpus.
Scenario load_scenario(const std::string& path);
Scenario load_scenario(const std::string& path, uint64_t seed_override);
Scenario scenario_from_json(const std::string& text, const std::string& base_dir);
Scenario scenario_from_json(const std::string& text, const std::string& base_dir,
                            uint64_t seed_override);

}  // namespace stm
