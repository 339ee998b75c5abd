#pragma once

#include <cmath>
#include <stdexcept>

namespace stm {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(norm2()); }
};

// Range, azimuth (radians, (-pi, pi]), pitch (radians, [-pi/2, pi/2]).
struct Polar {
  double r = 0, phi = 0, theta = 0;
};

// Row-major 3x3 matrix.
struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 yaw(double a) {
    double c = std::cos(a), s = std::sin(a);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
  }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
        r.m[3 * i + j] = s;
      }
    return r;
  }
  Mat3 transposed() const {
    return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  // Multiply by the transpose without materializing it.
  Vec3 tmul(const Vec3& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
            m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

// Rigid transform mapping sensor frame -> world frame: p_world = R * p + t.
struct Pose {
  Mat3 R;
  Vec3 t;

  // Orthonormality and determinant within tol.
  bool valid(double tol = 1e-9) const {
    Mat3 g = R * R.transposed();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (std::abs(g.m[3 * i + j] - (i == j ? 1.0 : 0.0)) > tol) return false;
    return std::abs(R.det() - 1.0) <= tol;
  }
  Pose inverse() const {
    Mat3 rt = R.transposed();
    Vec3 ti = rt * t;
    return {rt, {-ti.x, -ti.y, -ti.z}};
  }
  // Compose: this is a<-b, o is b<-c, result is a<-c.
  Pose operator*(const Pose& o) const { return {R * o.R, R * o.t + t}; }
};

inline Vec3 transform(const Pose& pose, const Vec3& p) { return pose.R * p + pose.t; }

inline Vec3 inverse_transform(const Pose& pose, const Vec3& p) {
  return pose.R.tmul(p - pose.t);
}

inline Polar cart_to_polar(const Vec3& p) {
  double r = p.norm();
  if (r == 0.0) throw std::domain_error("cart_to_polar: zero vector");
  return {r, std::atan2(p.y, p.x), std::asin(std::clamp(p.z / r, -1.0, 1.0))};
}

inline Vec3 polar_to_cart(const Polar& q) {
  double cp = std::cos(q.theta);
  return {q.r * cp * std::cos(q.phi), q.r * cp * std::sin(q.phi), q.r * std::sin(q.theta)};
}

}  // namespace stm
