#include "motalign/rotation.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

#include "motalign/error.hpp"

namespace motalign::rot {

namespace {

struct V3 {
  double x, y, z;
};

inline double dot3(V3 a, V3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline V3 cross3(V3 a, V3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
inline V3 axpy(double s, V3 a, V3 b) { return {s * a.x + b.x, s * a.y + b.y, s * a.z + b.z}; }
inline V3 scaled(V3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }

// Intermediate quantities of one decode, kept for the backward rule.
struct Decode {
  V3 a1, a2, u, b1, b2, b3;
  double n1, nu;  // clamped norms
};

Decode decode(std::span<const double, 6> s) {
  Decode d;
  d.a1 = {s[0], s[1], s[2]};
  d.a2 = {s[3], s[4], s[5]};
  d.n1 = std::max(std::sqrt(dot3(d.a1, d.a1)), kDegenerateEps);
  d.b1 = scaled(d.a1, 1.0 / d.n1);
  d.u = axpy(-dot3(d.b1, d.a2), d.b1, d.a2);
  d.nu = std::max(std::sqrt(dot3(d.u, d.u)), kDegenerateEps);
  d.b2 = scaled(d.u, 1.0 / d.nu);
  d.b3 = cross3(d.b1, d.b2);
  return d;
}

void store(const Decode& d, std::span<double, 9> m) {
  const V3 cols[3] = {d.b1, d.b2, d.b3};
  for (int c = 0; c < 3; ++c) {
    m[0 * 3 + c] = cols[c].x;
    m[1 * 3 + c] = cols[c].y;
    m[2 * 3 + c] = cols[c].z;
  }
}

// Gradient of b = a / max(|a|, eps) given upstream g.
V3 normalize_backward(V3 a, double n, V3 g) {
  if (std::sqrt(dot3(a, a)) <= kDegenerateEps) return scaled(g, 1.0 / n);
  const V3 b = scaled(a, 1.0 / n);
  return scaled(axpy(-dot3(b, g), b, g), 1.0 / n);
}

}  // namespace

void gram_schmidt(std::span<const double, 6> six, std::span<double, 9> mat) { store(decode(six), mat); }

Mat3 to_matrix(const Rot6D& r) {
  const std::span<const double, 6> s(r.v);
  const V3 a1{s[0], s[1], s[2]};
  const double n1 = std::sqrt(dot3(a1, a1));
  if (!(n1 > kDegenerateEps)) throw DegenerateError("rot6d: first column norm at or below 1e-8");
  const Decode d = decode(s);
  if (!(std::sqrt(dot3(d.u, d.u)) > kDegenerateEps)) {
    throw DegenerateError("rot6d: second column parallel to the first");
  }
  std::array<double, 9> m{};
  store(d, m);
  Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = m[i * 3 + j];
  return R;
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  const Mat3 e = R.transpose() * R - Mat3::Identity();
  return e.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Rot6D from_matrix(const Mat3& R) {
  if (!is_rotation(R, 1e-6)) throw InputError("from_matrix: input is not a rotation matrix within 1e-6");
  Rot6D r;
  r.v = {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)};
  return r;
}

double geodesic_distance(const Mat3& R1, const Mat3& R2) {
  if (!is_rotation(R1, 1e-6) || !is_rotation(R2, 1e-6)) {
    throw InputError("geodesic_distance: inputs must be rotation matrices");
  }
  // acos of the trace term loses about half the digits near 0 and pi; the
  // skew part supplies sin(theta) so atan2 stays accurate at both ends.
  const Mat3 R = R1.transpose() * R2;
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * w.norm(), c);
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
}

ad::Var rot6d_to_matrix(ad::Var x) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != 6) {
    throw DimensionError("rot6d_to_matrix: expected [N,6], got " + ad::shape_string(xv.shape()));
  }
  const auto n = xv.dim(0);
  const auto in = xv.data();
  std::vector<double> out(n * 9);
  for (std::size_t i = 0; i < n; ++i) {
    gram_schmidt(std::span<const double, 6>(in.data() + i * 6, 6), std::span<double, 9>(out.data() + i * 9, 9));
  }
  return x.graph().record(ad::Tensor({n, 9}, std::move(out)), {x}, [n](const ad::BackwardContext& ctx) {
    const auto in2 = ctx.input(0).data();
    const auto go = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < n; ++i) {
      const Decode d = decode(std::span<const double, 6>(in2.data() + i * 6, 6));
      const double* g = go.data() + i * 9;
      V3 gb1{g[0], g[3], g[6]};
      V3 gb2{g[1], g[4], g[7]};
      const V3 gb3{g[2], g[5], g[8]};
      // b3 = b1 x b2
      const V3 t1 = cross3(d.b2, gb3);
      const V3 t2 = cross3(gb3, d.b1);
      gb1 = {gb1.x + t1.x, gb1.y + t1.y, gb1.z + t1.z};
      gb2 = {gb2.x + t2.x, gb2.y + t2.y, gb2.z + t2.z};
      // b2 = normalize(u), u = a2 - (b1.a2) b1
      const V3 gu = normalize_backward(d.u, d.nu, gb2);
      const double b1_gu = dot3(d.b1, gu);
      const double b1_a2 = dot3(d.b1, d.a2);
      const V3 ga2 = axpy(-b1_gu, d.b1, gu);
      gb1 = axpy(-b1_a2, gu, axpy(-b1_gu, d.a2, gb1));
      const V3 ga1 = normalize_backward(d.a1, d.n1, gb1);
      double* dst = gx.data() + i * 6;
      dst[0] += ga1.x;
      dst[1] += ga1.y;
      dst[2] += ga1.z;
      dst[3] += ga2.x;
      dst[4] += ga2.y;
      dst[5] += ga2.z;
    }
  });
}

}  // namespace motalign::rot
