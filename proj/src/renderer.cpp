#include "motalign/renderer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "motalign/error.hpp"
#include "motalign/hashing.hpp"

namespace motalign::render {

namespace {

constexpr double kNear = 1e-6;

struct ViewBasis {
  Vec3 right, up, forward;
};

ViewBasis view_basis(const Camera& c) {
  const Vec3 dir = c.target - c.eye;
  if (dir.norm() < 1e-12) throw InputError("camera: eye coincides with look-at point");
  const Vec3 f = dir.normalized();
  const Vec3 r = f.cross(c.up);
  if (r.norm() < 1e-9 * std::max(1.0, c.up.norm())) throw InputError("camera: up vector parallel to view direction");
  const Vec3 rn = r.normalized();
  return {rn, rn.cross(f), f};
}

double segment_distance(double px, double py, const PixelCoord& a, const PixelCoord& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void png_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& body) {
  const auto len = static_cast<std::uint32_t>(body.size());
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + body.size()));
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

PixelCoord project(const Camera& camera, const Vec3& point, int width, int height) {
  const ViewBasis b = view_basis(camera);
  const Vec3 rel = point - camera.eye;
  PixelCoord p;
  p.depth = rel.dot(b.forward);
  if (p.depth <= kNear) return p;
  const double focal = 0.5 * height / std::tan(0.5 * camera.fov_deg * std::numbers::pi / 180.0);
  p.x = 0.5 * width + focal * rel.dot(b.right) / p.depth;
  p.y = 0.5 * height - focal * rel.dot(b.up) / p.depth;
  p.in_front = true;
  return p;
}

std::vector<std::uint8_t> FrameImage::to_rgb8() const {
  std::vector<std::uint8_t> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

std::vector<double> FrameImage::grayscale() const {
  std::vector<double> g(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 0.299 * pixels[i * 3] + 0.587 * pixels[i * 3 + 1] + 0.114 * pixels[i * 3 + 2];
  }
  return g;
}

FrameImage rasterize(const skel::SkeletonModel& model, const skel::Pose& pose, const Camera& camera,
                     const RenderStyle& style) {
  if (style.width <= 0 || style.height <= 0) throw InputError("render: image size must be positive");
  const auto joints = model.forward_kinematics(pose);
  std::vector<PixelCoord> proj(joints.size());
  for (std::size_t j = 0; j < joints.size(); ++j) proj[j] = project(camera, joints[j], style.width, style.height);

  // Per-pixel coverage is the maximum over bones, so the result does not
  // depend on drawing order.
  std::vector<double> coverage(static_cast<std::size_t>(style.width) * style.height, 0.0);
  const double half = 0.5 * style.line_width;
  for (std::size_t j = 1; j < joints.size(); ++j) {
    const auto& a = proj[static_cast<std::size_t>(model.parents()[j])];
    const auto& b = proj[j];
    if (!a.in_front || !b.in_front) continue;
    const double reach = half + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
    const int x1 = std::min(style.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
    const int y1 = std::min(style.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = segment_distance(x + 0.5, y + 0.5, a, b);
        const double c = std::clamp(half + 0.5 - d, 0.0, 1.0);
        auto& cell = coverage[static_cast<std::size_t>(y) * style.width + x];
        cell = std::max(cell, c);
      }
    }
  }

  FrameImage img;
  img.width = style.width;
  img.height = style.height;
  img.pixels.resize(coverage.size() * FrameImage::kChannels);
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      img.pixels[i * 3 + c] = style.background[c] + (style.bone[c] - style.background[c]) * coverage[i];
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const FrameImage& image) {
  const auto rgb = image.to_rgb8();
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * image.height);
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), rgb.begin() + static_cast<std::ptrdiff_t>(y * stride),
               rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * stride));
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw IoError("png: deflate failed");
  }
  packed.resize(packed_len);

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(image.width));
  put_be32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", packed);
  png_chunk(out, "IEND", {});
  return out;
}

void write_png(const std::filesystem::path& path, const FrameImage& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string image_checksum(const FrameImage& image) {
  const auto rgb = image.to_rgb8();
  return to_hex(sha256(rgb));
}

}  // namespace motalign::render
