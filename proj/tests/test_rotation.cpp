#include <gtest/gtest.h>

#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "motalign/error.hpp"
#include "motalign/random.hpp"
#include "motalign/rotation.hpp"

using namespace motalign;
using namespace motalign::rot;

namespace {

constexpr double kPi = std::numbers::pi;

Mat3 random_rotation(Rng& rng) {
  const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  return axis_angle(axis, rng.uniform(0.0, kPi));
}

double orthonormality_error(const Mat3& R) {
  return std::max((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff(), std::abs(R.determinant() - 1.0));
}

}  // namespace

TEST(Rotation, IdentityAndScaleRemoved) {
  EXPECT_TRUE(to_matrix(Rot6D{{1, 0, 0, 0, 1, 0}}).isApprox(Mat3::Identity(), 0.0));
  EXPECT_EQ(to_matrix(Rot6D{{2, 0, 0, 0, 3, 0}}), Mat3::Identity());
}

TEST(Rotation, DegenerateInputsRejected) {
  EXPECT_THROW(to_matrix(Rot6D{{0, 0, 0, 0, 1, 0}}), DegenerateError);
  EXPECT_THROW(to_matrix(Rot6D{{1, 0, 0, 2, 0, 0}}), DegenerateError);
  EXPECT_THROW(to_matrix(Rot6D{{1e-9, 0, 0, 0, 1, 0}}), DegenerateError);
}

TEST(Rotation, OutputOrthonormalForRandomInputs) {
  Rng rng(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Rot6D r;
    for (auto& v : r.v) v = rng.normal() * std::exp(rng.uniform(-3.0, 3.0));
    worst = std::max(worst, orthonormality_error(to_matrix(r)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Rotation, RoundTripThroughSixD) {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3 R = random_rotation(rng);
    worst = std::max(worst, (to_matrix(from_matrix(R)) - R).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Rotation, FromMatrixExamples) {
  EXPECT_EQ(from_matrix(Mat3::Identity()), Rot6D::identity());
  const Rot6D z90 = from_matrix(axis_angle(Vec3::UnitZ(), kPi / 2));
  const std::array<double, 6> expected{0, 1, 0, -1, 0, 0};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(z90.v[i], expected[i], 1e-15);
}

TEST(Rotation, FromMatrixIdempotentOnOrthonormalInput) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Rot6D r = from_matrix(random_rotation(rng));
    const Rot6D again = from_matrix(to_matrix(r));
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(again.v[k], r.v[k], 1e-12);
  }
}

TEST(Rotation, FromMatrixRejectsNonOrthonormal) {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 1.01;
  EXPECT_THROW(from_matrix(m), InputError);
  EXPECT_THROW(from_matrix(-Mat3::Identity()), InputError);  // det -1
}

TEST(Rotation, GeodesicFixtures) {
  Rng rng(9);
  const Mat3 R = random_rotation(rng);
  EXPECT_NEAR(geodesic_distance(R, R), 0.0, 1e-9);
  EXPECT_EQ(geodesic_distance(Mat3::Identity(), Mat3::Identity()), 0.0);
  EXPECT_NEAR(geodesic_distance(axis_angle(Vec3::UnitX(), kPi / 2), Mat3::Identity()), kPi / 2, 1e-9);
  for (const Vec3& axis : {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 2, 3)}) {
    EXPECT_NEAR(geodesic_distance(axis_angle(axis, kPi), Mat3::Identity()), kPi, 1e-9);
  }
}

TEST(Rotation, GeodesicMatchesAngleForRandomAxes) {
  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    const double angle = rng.uniform(0.05, kPi - 0.05);
    const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    const Mat3 A = random_rotation(rng);
    EXPECT_NEAR(geodesic_distance(A, A * axis_angle(axis, angle)), angle, 1e-9);
  }
}

TEST(Rotation, ContinuityAlongGeodesic) {
  const Vec3 axis(0.3, -0.5, 0.8);
  double previous = 1e9;
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    double worst = 0.0;
    for (int k = 0; k <= 64; ++k) {
      const double theta = -kPi + 2.0 * kPi * k / 64.0;
      const auto a = from_matrix(axis_angle(axis, theta)).v;
      const auto b = from_matrix(axis_angle(axis, theta + delta)).v;
      double d2 = 0.0;
      for (int i = 0; i < 6; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
      worst = std::max(worst, std::sqrt(d2));
    }
    EXPECT_LT(worst, previous);
    EXPECT_LT(worst, 2.0 * delta);  // Lipschitz bound of the 6D embedding
    previous = worst;
  }
}

TEST(Rotation, ClampedDecodeStaysFinite) {
  std::array<double, 9> m{};
  gram_schmidt(std::array<double, 6>{0, 0, 0, 0, 0, 0}, m);
  for (double v : m) EXPECT_TRUE(std::isfinite(v));
  const Rot6D valid{{0.3, -1.2, 0.4, 0.9, 0.1, -0.7}};
  gram_schmidt(valid.v, m);
  const Mat3 R = to_matrix(valid);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(m[i * 3 + j], R(i, j));
}
