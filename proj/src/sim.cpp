#include "stm/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stm {

namespace {

constexpr double kRayEps = 1e-9;

double seg_dist_2d(double ax, double ay, double bx, double by, double px, double py) {
  const double ex = bx - ax, ey = by - ay;
  const double L2 = ex * ex + ey * ey;
  double s = L2 > 0 ? ((px - ax) * ex + (py - ay) * ey) / L2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  const double qx = ax + s * ex - px, qy = ay + s * ey - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace

Primitive ground_plane(double z, double intensity) {
  Primitive pr;
  pr.kind = Primitive::kGround;
  pr.cls = kBackground;
  pr.intensity = intensity;
  pr.p = {0, 0, z};
  return pr;
}

Primitive make_box(const Vec3& center, const Vec3& half, uint8_t cls, double intensity) {
  Primitive pr;
  pr.kind = Primitive::kBox;
  pr.cls = cls;
  pr.intensity = intensity;
  pr.p = center;
  pr.half = half;
  return pr;
}

Primitive make_cylinder(const Vec3& base, double radius, double height, uint8_t cls,
                        double intensity) {
  Primitive pr;
  pr.kind = Primitive::kCylinder;
  pr.cls = cls;
  pr.intensity = intensity;
  pr.p = base;
  pr.radius = radius;
  pr.height = height;
  return pr;
}

Primitive make_cone(const Vec3& base, double radius, double height, uint8_t cls,
                    double intensity) {
  Primitive pr;
  pr.kind = Primitive::kCone;
  pr.cls = cls;
  pr.intensity = intensity;
  pr.p = base;
  pr.radius = radius;
  pr.height = height;
  return pr;
}

Primitive make_rect(const Vec3& center, int axis, double half_u, double half_v, uint8_t cls,
                    double intensity) {
  Primitive pr;
  pr.kind = Primitive::kRect;
  pr.cls = cls;
  pr.intensity = intensity;
  pr.p = center;
  pr.axis = axis;
  // in-plane axes in ascending order
  const int u = axis == 0 ? 1 : 0;
  const int v = axis == 2 ? 1 : 2;
  double h[3] = {0, 0, 0};
  h[u] = half_u;
  h[v] = half_v;
  pr.half = {h[0], h[1], h[2]};
  return pr;
}

std::vector<Primitive> make_sign(const Vec3& base, double width, double height, double pole_h,
                                 int axis, double intensity) {
  std::vector<Primitive> out;
  out.push_back(make_rect({base.x, base.y, base.z + pole_h + height / 2}, axis, width / 2,
                          height / 2, kTrafficSign, intensity));
  out.push_back(make_cylinder(base, 0.04, pole_h, kTrafficSign, intensity * 0.6));
  return out;
}

Vec3 Actor::offset_at(double t) const {
  if (wps.empty()) return {0, 0, 0};
  if (wps.size() == 1 || t <= times.front()) return wps.front() - wps.front();
  if (t >= times.back()) return wps.back() - wps.front();
  size_t k = 1;
  while (times[k] < t) ++k;
  const double u = (t - times[k - 1]) / (times[k] - times[k - 1]);
  const Vec3 p = wps[k - 1] + (wps[k] - wps[k - 1]) * u;
  return p - wps.front();
}

double EgoPath::length() const {
  double L = 0;
  for (size_t i = 1; i < wps.size(); ++i) L += (wps[i] - wps[i - 1]).norm();
  return L;
}

Pose EgoPath::pose_at_arc(double s) const {
  if (wps.size() < 2) throw std::invalid_argument("ego path needs >= 2 waypoints");
  s = std::max(0.0, s);
  Pose pose;
  for (size_t i = 1; i < wps.size(); ++i) {
    const Vec3 d = wps[i] - wps[i - 1];
    const double len = d.norm();
    if (s <= len || i + 1 == wps.size()) {
      const double u = len > 0 ? std::min(s, len) / len : 0.0;
      pose.t = wps[i - 1] + d * u;
      const double yaw = std::atan2(d.y, d.x);
      const double cy = std::cos(yaw), sy = std::sin(yaw);
      pose.R = Mat3{{cy, -sy, 0, sy, cy, 0, 0, 0, 1}};
      return pose;
    }
    s -= len;
  }
  return pose;  // unreachable
}

SceneState scene_at(const Scenario& sc, double t) {
  SceneState st;
  st.prims = sc.statics;
  for (const Actor& a : sc.actors) {
    const Vec3 off = a.offset_at(t);
    for (Primitive pr : a.parts) {
      pr.p = pr.p + off;
      st.prims.push_back(pr);
    }
  }
  return st;
}

std::optional<double> intersect(const Primitive& pr, const Vec3& o, const Vec3& dir,
                                double tmax) {
  switch (pr.kind) {
    case Primitive::kGround: {
      if (std::abs(dir.z) < 1e-15) return std::nullopt;
      const double t = (pr.p.z - o.z) / dir.z;
      if (t > kRayEps && t <= tmax) return t;
      return std::nullopt;
    }
    case Primitive::kBox: {
      double lo = kRayEps, hi = tmax;
      const double oo[3] = {o.x, o.y, o.z}, dd[3] = {dir.x, dir.y, dir.z};
      const double cc[3] = {pr.p.x, pr.p.y, pr.p.z}, hh[3] = {pr.half.x, pr.half.y, pr.half.z};
      for (int a = 0; a < 3; ++a) {
        if (std::abs(dd[a]) < 1e-15) {
          if (std::abs(oo[a] - cc[a]) > hh[a]) return std::nullopt;
          continue;
        }
        double t1 = (cc[a] - hh[a] - oo[a]) / dd[a];
        double t2 = (cc[a] + hh[a] - oo[a]) / dd[a];
        if (t1 > t2) std::swap(t1, t2);
        lo = std::max(lo, t1);
        hi = std::min(hi, t2);
        if (lo > hi) return std::nullopt;
      }
      // kRayEps < lo <= hi: entry point is the visible surface
      if (lo > kRayEps && lo <= tmax) return lo;
      return std::nullopt;
    }
    case Primitive::kCylinder: {
      double best = std::numeric_limits<double>::infinity();
      const double ox = o.x - pr.p.x, oy = o.y - pr.p.y;
      const double a = dir.x * dir.x + dir.y * dir.y;
      const double z0 = pr.p.z, z1 = pr.p.z + pr.height;
      if (a > 1e-15) {
        const double b = 2 * (ox * dir.x + oy * dir.y);
        const double c = ox * ox + oy * oy - pr.radius * pr.radius;
        const double disc = b * b - 4 * a * c;
        if (disc >= 0) {
          const double sq = std::sqrt(disc);
          for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
            if (t <= kRayEps || t > tmax) continue;
            const double z = o.z + t * dir.z;
            if (z >= z0 && z <= z1) best = std::min(best, t);
          }
        }
      }
      if (std::abs(dir.z) > 1e-15) {
        for (double zc : {z0, z1}) {
          const double t = (zc - o.z) / dir.z;
          if (t <= kRayEps || t > tmax) continue;
          const double x = ox + t * dir.x, y = oy + t * dir.y;
          if (x * x + y * y <= pr.radius * pr.radius) best = std::min(best, t);
        }
      }
      if (std::isfinite(best)) return best;
      return std::nullopt;
    }
    case Primitive::kCone: {
      double best = std::numeric_limits<double>::infinity();
      const Vec3 apex{pr.p.x, pr.p.y, pr.p.z + pr.height};
      const double cos2 = pr.height * pr.height /
                          (pr.height * pr.height + pr.radius * pr.radius);
      const Vec3 co = o - apex;
      const double dv = -dir.z, cov = -co.z;
      const double A = dv * dv - cos2;
      const double B = 2 * (dv * cov - cos2 * dir.dot(co));
      const double C = cov * cov - cos2 * co.norm2();
      const double disc = B * B - 4 * A * C;
      if (std::abs(A) > 1e-15 && disc >= 0) {
        const double sq = std::sqrt(disc);
        for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
          if (t <= kRayEps || t > tmax) continue;
          const double z = o.z + t * dir.z;
          if (z >= pr.p.z && z <= apex.z) best = std::min(best, t);
        }
      }
      if (std::abs(dir.z) > 1e-15) {  // base disk
        const double t = (pr.p.z - o.z) / dir.z;
        if (t > kRayEps && t <= tmax) {
          const double x = o.x + t * dir.x - pr.p.x, y = o.y + t * dir.y - pr.p.y;
          if (x * x + y * y <= pr.radius * pr.radius) best = std::min(best, t);
        }
      }
      if (std::isfinite(best)) return best;
      return std::nullopt;
    }
    case Primitive::kRect: {
      const double oo[3] = {o.x, o.y, o.z}, dd[3] = {dir.x, dir.y, dir.z};
      const double pp[3] = {pr.p.x, pr.p.y, pr.p.z}, hh[3] = {pr.half.x, pr.half.y, pr.half.z};
      const int n = pr.axis;
      if (std::abs(dd[n]) < 1e-15) return std::nullopt;
      const double t = (pp[n] - oo[n]) / dd[n];
      if (t <= kRayEps || t > tmax) return std::nullopt;
      const int u = n == 0 ? 1 : 0, v = n == 2 ? 1 : 2;
      if (std::abs(oo[u] + t * dd[u] - pp[u]) > hh[u]) return std::nullopt;
      if (std::abs(oo[v] + t * dd[v] - pp[v]) > hh[v]) return std::nullopt;
      return t;
    }
  }
  return std::nullopt;
}

std::optional<Hit> raycast(const SceneState& s, const Vec3& o, const Vec3& dir, double tmax) {
  Hit best;
  best.t = tmax;
  for (size_t i = 0; i < s.prims.size(); ++i) {
    auto t = intersect(s.prims[i], o, dir, best.t);
    if (t && *t < best.t) {
      best.t = *t;
      best.prim = (int)i;
    }
  }
  if (best.prim < 0) return std::nullopt;
  return best;
}

double surface_distance(const Primitive& pr, const Vec3& p) {
  switch (pr.kind) {
    case Primitive::kGround:
      return std::abs(p.z - pr.p.z);
    case Primitive::kBox: {
      const double qx = std::abs(p.x - pr.p.x) - pr.half.x;
      const double qy = std::abs(p.y - pr.p.y) - pr.half.y;
      const double qz = std::abs(p.z - pr.p.z) - pr.half.z;
      const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
      const double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
      const double inside = std::min(std::max(qx, std::max(qy, qz)), 0.0);
      return std::abs(outside + inside);
    }
    case Primitive::kCylinder: {
      const double rr = std::hypot(p.x - pr.p.x, p.y - pr.p.y);
      const double zz = p.z - pr.p.z;
      const double r = pr.radius, h = pr.height;
      double d = seg_dist_2d(r, 0, r, h, rr, zz);          // lateral
      d = std::min(d, seg_dist_2d(0, 0, r, 0, rr, zz));    // base disk
      d = std::min(d, seg_dist_2d(0, h, r, h, rr, zz));    // top disk
      return d;
    }
    case Primitive::kCone: {
      const double rr = std::hypot(p.x - pr.p.x, p.y - pr.p.y);
      const double zz = p.z - pr.p.z;
      const double r = pr.radius, h = pr.height;
      double d = seg_dist_2d(r, 0, 0, h, rr, zz);          // lateral
      d = std::min(d, seg_dist_2d(0, 0, r, 0, rr, zz));    // base disk
      return d;
    }
    case Primitive::kRect: {
      const double pp[3] = {p.x - pr.p.x, p.y - pr.p.y, p.z - pr.p.z};
      const double hh[3] = {pr.half.x, pr.half.y, pr.half.z};
      const int n = pr.axis, u = n == 0 ? 1 : 0, v = n == 2 ? 1 : 2;
      const double du = std::max(std::abs(pp[u]) - hh[u], 0.0);
      const double dv = std::max(std::abs(pp[v]) - hh[v], 0.0);
      return std::sqrt(pp[n] * pp[n] + du * du + dv * dv);
    }
  }
  return std::numeric_limits<double>::infinity();
}

double class_surface_distance(const SceneState& s, const Vec3& p, uint8_t cls) {
  double best = std::numeric_limits<double>::infinity();
  for (const Primitive& pr : s.prims)
    if (pr.cls == cls) best = std::min(best, surface_distance(pr, p));
  return best;
}

void raycast_sweep(const SceneState& s, const Pose& ego, const LidarConfig& lidar,
                   std::mt19937_64& rng, std::vector<SweepPoint>& pts,
                   std::vector<uint8_t>& cls) {
  pts.clear();
  cls.clear();
  const std::vector<double> pitches = lidar.beam_pitches();
  const int cols = (int)std::ceil(2 * M_PI / lidar.az_step - 1e-9);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double phi : pitches) {
    const double cp = std::cos(phi), sp = std::sin(phi);
    for (int j = 0; j < cols; ++j) {
      const double th = j * lidar.az_step;
      const Vec3 ds{cp * std::cos(th), cp * std::sin(th), sp};
      const Vec3 dw = ego.R * ds;
      auto hit = raycast(s, ego.t, dw, lidar.max_range);
      if (!hit) continue;
      double r = hit->t;
      if (lidar.sigma > 0) r += lidar.sigma * noise(rng);
      r = std::clamp(r, 0.01, lidar.max_range);
      const Primitive& pr = s.prims[hit->prim];
      pts.push_back({(float)(ds.x * r), (float)(ds.y * r), (float)(ds.z * r),
                     (float)pr.intensity});
      cls.push_back(pr.cls);
    }
  }
}

namespace {

// Conservative pixel bounds of a primitive's AABB corners; false when the
// primitive pokes behind the camera plane (caller falls back to full image).
bool project_bounds(const Primitive& pr, const CameraModel& cam, const Pose& ego, int& c0,
                    int& c1, int& r0, int& r1) {
  Vec3 lo, hi;
  switch (pr.kind) {
    case Primitive::kBox:
      lo = pr.p - pr.half;
      hi = pr.p + pr.half;
      break;
    case Primitive::kCylinder:
    case Primitive::kCone:
      lo = {pr.p.x - pr.radius, pr.p.y - pr.radius, pr.p.z};
      hi = {pr.p.x + pr.radius, pr.p.y + pr.radius, pr.p.z + pr.height};
      break;
    case Primitive::kRect: {
      const Vec3 pad{pr.half.x + 1e-6, pr.half.y + 1e-6, pr.half.z + 1e-6};
      lo = pr.p - pad;
      hi = pr.p + pad;
      break;
    }
    default:
      return false;
  }
  double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
  for (int k = 0; k < 8; ++k) {
    const Vec3 w{k & 1 ? hi.x : lo.x, k & 2 ? hi.y : lo.y, k & 4 ? hi.z : lo.z};
    const Vec3 pc = transform(cam.extrinsic, inverse_transform(ego, w));
    if (pc.z <= 1e-9) return false;
    const double u = cam.cx + cam.fx * pc.x / pc.z;
    const double v = cam.cy + cam.fy * pc.y / pc.z;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  c0 = std::max(0, (int)std::floor(umin) - 1);
  c1 = std::min(cam.W - 1, (int)std::ceil(umax) + 1);
  r0 = std::max(0, (int)std::floor(vmin) - 1);
  r1 = std::min(cam.H - 1, (int)std::ceil(vmax) + 1);
  return true;
}

}  // namespace

void render_class_depth(const SceneState& s, const CameraModel& cam, const Pose& ego,
                        double dmax, std::vector<uint8_t>& cls, std::vector<float>& depth) {
  const int H = cam.H, W = cam.W;
  cls.assign((size_t)H * W, kBackground);
  depth.assign((size_t)H * W, (float)dmax);

  // Pixel-center world rays. The camera sits at the sensor origin, so the
  // sensor->camera extrinsic transposes back out.
  auto world_dir = [&](int r, int c) {
    const Vec3 dc{(c - cam.cx) / cam.fx, (r - cam.cy) / cam.fy, 1.0};
    const Vec3 dsn = cam.extrinsic.R.transposed() * dc;
    Vec3 dw = ego.R * dsn;
    const double n = dw.norm();
    return dw * (1.0 / n);
  };

  std::vector<double> zbuf((size_t)H * W, dmax);
  for (const Primitive& pr : s.prims) {
    if (pr.kind == Primitive::kGround) {
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          const Vec3 dw = world_dir(r, c);
          if (std::abs(dw.z) < 1e-15) continue;
          const double t = (pr.p.z - ego.t.z) / dw.z;
          const size_t px = (size_t)r * W + c;
          if (t > kRayEps && t < zbuf[px]) {
            zbuf[px] = t;
            cls[px] = pr.cls;
          }
        }
      continue;
    }
    int c0 = 0, c1 = W - 1, r0 = 0, r1 = H - 1;
    if (!project_bounds(pr, cam, ego, c0, c1, r0, r1)) {
      c0 = 0; c1 = W - 1; r0 = 0; r1 = H - 1;
    }
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const size_t px = (size_t)r * W + c;
        auto t = intersect(pr, ego.t, world_dir(r, c), zbuf[px]);
        if (t && *t < zbuf[px]) {
          zbuf[px] = *t;
          cls[px] = pr.cls;
        }
      }
  }
  for (size_t i = 0; i < zbuf.size(); ++i) depth[i] = (float)zbuf[i];
}

LabelImage corrupt_segmentation(const std::vector<uint8_t>& ids, const std::vector<float>& depth,
                                int H, int W, int C, const NoiseConfig& nc,
                                std::mt19937_64& rng) {
  if ((int)ids.size() != H * W || (int)depth.size() != H * W)
    throw std::invalid_argument("corrupt_segmentation: image size mismatch");

  std::vector<uint8_t> work = ids;
  if (nc.jitter_px > 0) {
    std::uniform_int_distribution<int> off(-nc.jitter_px, nc.jitter_px);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const size_t px = (size_t)r * W + c;
        const uint8_t id = ids[px];
        const bool boundary = (r > 0 && ids[px - W] != id) || (r + 1 < H && ids[px + W] != id) ||
                              (c > 0 && ids[px - 1] != id) || (c + 1 < W && ids[px + 1] != id);
        if (!boundary) continue;
        const int dc = off(rng), dr = off(rng);
        const int sr = std::clamp(r + dr, 0, H - 1), sc = std::clamp(c + dc, 0, W - 1);
        work[px] = ids[(size_t)sr * W + sc];
      }
  }

  if (nc.flip_p0 > 0 || nc.flip_p1 > 0) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, C - 2);
    for (size_t px = 0; px < work.size(); ++px) {
      const double ratio = nc.flip_dmax > 0 ? std::min((double)depth[px] / nc.flip_dmax, 1.0) : 1.0;
      const double p = std::clamp(nc.flip_p0 + nc.flip_p1 * ratio, 0.0, 1.0);
      if (u01(rng) >= p) continue;
      const int k = pick(rng);
      work[px] = (uint8_t)(k >= work[px] ? k + 1 : k);
    }
  }

  LabelImage img;
  img.resize(H, W, C);
  const float base = (float)(nc.soften / C);
  const float hit = (float)(1.0 - nc.soften) + base;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      float* p = img.at(r, c);
      const uint8_t id = work[(size_t)r * W + c];
      for (int k = 0; k < C; ++k) p[k] = k == id ? hit : base;
    }
  return img;
}

SimResult generate_sequence(const Scenario& sc) {
  if (sc.C < 2) throw std::invalid_argument("scenario: need >= 2 classes");
  if (sc.ego.wps.size() < 2) throw std::invalid_argument("scenario: ego path needs >= 2 waypoints");
  if (sc.ego.speed <= 0) throw std::invalid_argument("scenario: ego speed must be positive");
  const double L = sc.ego.length();
  if (sc.key_at_m > L + 1e-9)
    throw std::invalid_argument("scenario: trajectory shorter than the key-frame odometer");

  const double step = std::max(0.5, 0.1 * sc.ego.speed);
  const double end_m = std::min(L, sc.key_at_m + sc.extension_m);
  const CameraModel cam = sc.camera();
  std::mt19937_64 rng(sc.seed);

  SimResult out;
  out.seq.C = sc.C;
  out.seq.H = cam.H;
  out.seq.W = cam.W;

  std::vector<double> arcs;
  for (double s = 0;; s += step) {
    if (s > end_m + 1e-9) break;
    arcs.push_back(s);
  }
  int key = 0;
  for (size_t i = 0; i < arcs.size(); ++i)
    if (arcs[i] <= sc.key_at_m + 1e-9) key = (int)i;

  std::vector<uint8_t> ids;
  std::vector<float> depth;
  for (double s : arcs) {
    const double t = s / sc.ego.speed;
    const Pose pose = sc.ego.pose_at_arc(s);
    const SceneState state = scene_at(sc, t);

    Sweep sw;
    sw.pose = pose;
    sw.timestamp = t;
    std::vector<uint8_t> capture;
    raycast_sweep(state, pose, sc.lidar, rng, sw.points, capture);
    render_class_depth(state, cam, pose, sc.lidar.max_range, ids, depth);
    sw.labels = corrupt_segmentation(ids, depth, cam.H, cam.W, sc.C, sc.noise, rng);

    out.seq.sweeps.push_back(std::move(sw));
    out.gt.capture_class.push_back(std::move(capture));
  }

  const size_t S = out.seq.sweeps.size();
  out.gt.key_frame_index = (uint32_t)key;
  out.gt.in_window.resize(S);
  out.gt.in_extension.resize(S);
  for (size_t i = 0; i < S; ++i) {
    out.gt.in_window[i] = (int)i <= key && arcs[key] - arcs[i] <= sc.window_m + 1e-9;
    out.gt.in_extension[i] = (int)i > key;
  }

  // Targets: does a surface of the captured class still occupy the point's
  // world position at the key frame?
  const SceneState key_state = scene_at(sc, arcs[key] / sc.ego.speed);
  out.gt.target_class.resize(S);
  for (size_t i = 0; i < S; ++i) {
    const Sweep& sw = out.seq.sweeps[i];
    out.gt.target_class[i].resize(sw.points.size());
    for (size_t k = 0; k < sw.points.size(); ++k) {
      const uint8_t cap = out.gt.capture_class[i][k];
      if (cap == kBackground) {
        out.gt.target_class[i][k] = kBackground;
        continue;
      }
      const Vec3 world = transform(sw.pose, sw.points[k].pos());
      const double d = class_surface_distance(key_state, world, cap);
      out.gt.target_class[i][k] = d <= sc.target_tol ? cap : kBackground;
    }
  }
  return out;
}

}  // namespace stm
