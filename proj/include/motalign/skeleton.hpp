#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "motalign/autodiff.hpp"
#include "motalign/rotation.hpp"

namespace motalign::skel {

inline constexpr std::size_t kJointCount = 24;
inline constexpr std::size_t kRotWidth = 6;
// |p|: per-frame pose feature width.
inline constexpr std::size_t kPoseWidth = kJointCount * kRotWidth;

// Entry 0 is the global body orientation, entries 1..23 the joint rotations.
struct Pose {
  std::array<rot::Rot6D, kJointCount> rotations{};
  rot::Vec3 root_translation = rot::Vec3::Zero();

  static Pose identity() { return {}; }
};

struct MotionSequence {
  std::vector<Pose> frames;
  double fps = 30.0;

  std::size_t length() const noexcept { return frames.size(); }
};

// [T, 144] tensor of 6D parameters, row per frame.
ad::Tensor to_tensor(const MotionSequence& seq);
// Inverse of to_tensor; root translations are zero.
MotionSequence from_tensor(const ad::Tensor& frames, double fps);
bool all_finite(const MotionSequence& seq);

struct FrameGeometry {
  std::vector<rot::Vec3> joints;
  std::vector<rot::Vec3> vertices;
};

// Fixed-shape humanoid: SMPL joint ordering with approximate adult rest
// offsets (metres, +y up, body facing +z) and a rigid box of proxy vertices
// around each bone, expressed in the owning joint's local frame.
class SkeletonModel {
 public:
  // The versioned skeleton shipped with the library.
  static const SkeletonModel& canonical();
  static SkeletonModel from_json(const std::string& text);
  static SkeletonModel load(const std::filesystem::path& path);

  SkeletonModel(std::vector<int> parents, std::vector<rot::Vec3> rest_offsets,
                std::vector<std::vector<rot::Vec3>> vertex_proxy, int version = 1);

  int version() const noexcept { return version_; }
  const std::vector<int>& parents() const noexcept { return parents_; }
  const std::vector<rot::Vec3>& rest_offsets() const noexcept { return rest_offsets_; }
  const std::vector<std::vector<rot::Vec3>>& vertex_proxy() const noexcept { return vertex_proxy_; }
  // V, the total number of proxy vertices.
  std::size_t vertex_count() const noexcept { return vertex_count_; }

  // World joint positions. Throws DegenerateError on an invalid 6D entry.
  std::vector<rot::Vec3> forward_kinematics(const Pose& pose) const;
  std::vector<rot::Vec3> vertices(const Pose& pose) const;
  FrameGeometry geometry(const Pose& pose) const;

 private:
  int version_;
  std::vector<int> parents_;
  std::vector<rot::Vec3> rest_offsets_;
  std::vector<std::vector<rot::Vec3>> vertex_proxy_;
  std::size_t vertex_count_ = 0;
};

std::vector<FrameGeometry> sequence_geometry(const SkeletonModel& model, const MotionSequence& seq);

// Differentiable batched geometry.
//   pose6d: [T, 144] raw 6D parameters (decoded with clamped Gram-Schmidt)
//   root:   [T, 3] root translations
// Returns [T, 24 + V, 3]: joint positions followed by proxy vertices.
ad::Var sequence_geometry(const SkeletonModel& model, ad::Var pose6d, ad::Var root);
// Same with zero root translation.
ad::Var sequence_geometry(const SkeletonModel& model, ad::Var pose6d);

// Proxy vertices only: [T, V, 3].
ad::Var vertex_positions(const SkeletonModel& model, ad::Var pose6d);

}  // namespace motalign::skel
