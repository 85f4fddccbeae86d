#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "motalign/skeleton.hpp"

namespace motalign::render {

using rot::Vec3;

struct Camera {
  Vec3 eye{0.0, 0.0, 2.5};
  Vec3 target{0.0, 0.0, 0.0};
  Vec3 up{0.0, 1.0, 0.0};
  double fov_deg = 45.0;  // vertical

  // Frontal view of a body standing at the origin, 2.5 m away.
  static Camera canonical() { return {}; }
};

struct PixelCoord {
  double x = 0.0;  // pixels, origin at the top-left image corner
  double y = 0.0;
  double depth = 0.0;  // distance along the view axis
  bool in_front = false;
};

// Perspective projection into a width x height image. Throws InputError for
// an invalid camera (eye == target, up parallel to the view direction).
PixelCoord project(const Camera& camera, const Vec3& point, int width = 224, int height = 224);

// RGB, row-major, interleaved, values in [0,1].
struct FrameImage {
  int width = 224;
  int height = 224;
  std::vector<double> pixels;

  static constexpr int kChannels = 3;

  double at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  std::vector<std::uint8_t> to_rgb8() const;
  // ITU-R BT.601 luma per pixel.
  std::vector<double> grayscale() const;
  bool operator==(const FrameImage&) const = default;
};

struct RenderStyle {
  int width = 224;
  int height = 224;
  std::array<double, 3> background{1.0, 1.0, 1.0};
  std::array<double, 3> bone{0.1, 0.1, 0.1};
  double line_width = 3.0;  // pixels
};

FrameImage rasterize(const skel::SkeletonModel& model, const skel::Pose& pose, const Camera& camera,
                     const RenderStyle& style = {});

std::vector<std::uint8_t> encode_png(const FrameImage& image);
void write_png(const std::filesystem::path& path, const FrameImage& image);

// SHA-256 (hex) of the 8-bit RGB bytes.
std::string image_checksum(const FrameImage& image);

}  // namespace motalign::render
