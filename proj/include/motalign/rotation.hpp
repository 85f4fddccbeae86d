#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <array>
#include <span>

#include "motalign/autodiff.hpp"

namespace motalign::rot {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kDegenerateEps = 1e-8;

// Continuous 6D rotation parameters: the first two columns (a1, a2) of a
// rotation matrix before orthonormalisation, stored as (a1x a1y a1z a2x a2y a2z).
struct Rot6D {
  std::array<double, 6> v{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  static Rot6D identity() { return {}; }
  Vec3 a1() const { return {v[0], v[1], v[2]}; }
  Vec3 a2() const { return {v[3], v[4], v[5]}; }
  bool operator==(const Rot6D&) const = default;
};

// Gram-Schmidt decode. Throws DegenerateError when |a1| <= eps or a2 is
// parallel to a1.
Mat3 to_matrix(const Rot6D& r);

// First two columns of R. Throws InputError unless R is orthonormal with
// det +1 within 1e-6.
Rot6D from_matrix(const Mat3& R);

// Angle of R1^T R2 in [0, pi].
double geodesic_distance(const Mat3& R1, const Mat3& R2);

bool is_rotation(const Mat3& R, double tol);

// Rodrigues formula; axis need not be unit length (zero axis -> identity).
Mat3 axis_angle(const Vec3& axis, double angle);

// Unchecked decode used inside the loss path: norms are clamped below by eps
// so arbitrary network outputs never produce NaN. For valid inputs the result
// is bitwise identical to to_matrix.
void gram_schmidt(std::span<const double, 6> six, std::span<double, 9> mat);

// Differentiable batch decode: x[N, 6] -> [N, 9] (row-major 3x3 per row).
ad::Var rot6d_to_matrix(ad::Var x);

}  // namespace motalign::rot
