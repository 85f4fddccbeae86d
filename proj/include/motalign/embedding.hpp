#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "motalign/renderer.hpp"

namespace motalign::embed {

// A point of the frozen semantic space.
struct SemanticVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> span() const noexcept { return values; }
  bool operator==(const SemanticVector&) const = default;
};

double cosine(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

struct Capabilities {
  bool embeds_text = false;
  bool embeds_image = false;
  std::size_t dimension = 0;
  std::string provider_id;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual const Capabilities& capabilities() const = 0;
  virtual SemanticVector embed_text(std::string_view text) = 0;
  virtual SemanticVector embed_image(const render::FrameImage& image) = 0;

  std::size_t dimension() const { return capabilities().dimension; }
  const std::string& provider_id() const { return capabilities().provider_id; }
};

// Trim and collapse interior whitespace runs to one space. Empty result means
// the text is unusable.
std::string canonical_text(std::string_view text);

// Lower-cased alphanumeric runs.
std::vector<std::string> tokenize(std::string_view text);

// Deterministic stand-in for a text/image encoder.
//  text:  L2-normalised sum of per-token pseudorandom unit vectors; the token
//         direction is seeded from a hash of the token, so texts sharing
//         tokens land close together.
//  image: 16x16 grid of grayscale patch means, shifted by -0.5, multiplied by
//         a fixed seeded Gaussian matrix and normalised.
class StubProvider final : public EmbeddingProvider {
 public:
  static constexpr int kGrid = 16;

  explicit StubProvider(std::size_t dimension = 512, std::uint64_t seed = 0, int image_size = 224);

  const Capabilities& capabilities() const override { return caps_; }
  SemanticVector embed_text(std::string_view text) override;
  SemanticVector embed_image(const render::FrameImage& image) override;

  SemanticVector token_vector(std::string_view token) const;
  // Zero-centred patch means, kGrid*kGrid values, row-major.
  std::vector<double> patch_grid(const render::FrameImage& image) const;

 private:
  Capabilities caps_;
  std::uint64_t seed_;
  int image_size_;
  std::vector<double> projection_;  // [dimension, kGrid*kGrid]
};

struct RemoteConfig {
  std::string url = "http://127.0.0.1:8765";  // scheme://host:port
  std::string model = "clip-vit-b32";
  std::size_t dimension = 512;
  int timeout_ms = 10000;
  int retries = 2;  // additional attempts after the first
  int backoff_ms = 200;
};

// Client for an HTTP embedding service:
//   POST /embed_text  {"texts": [...]}          -> {"vectors": [[...]], "dim": d, "model": m}
//   POST /embed_image {"images": [base64 png]}  -> same shape
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(RemoteConfig config);

  const Capabilities& capabilities() const override { return caps_; }
  SemanticVector embed_text(std::string_view text) override;
  SemanticVector embed_image(const render::FrameImage& image) override;

  std::vector<SemanticVector> embed_texts(const std::vector<std::string>& texts);
  std::vector<SemanticVector> embed_images(const std::vector<render::FrameImage>& images);

 private:
  std::vector<SemanticVector> post(const std::string& path, const std::string& body, std::size_t expected);

  RemoteConfig config_;
  Capabilities caps_;
};

// Content-addressed cache in front of another provider. Keys are SHA-256 of
// the canonicalised input; entries optionally persist as one file per key
// under <dir>/<provider_id>/.
class CachedProvider final : public EmbeddingProvider {
 public:
  CachedProvider(std::shared_ptr<EmbeddingProvider> inner, std::optional<std::filesystem::path> dir = std::nullopt);

  const Capabilities& capabilities() const override { return inner_->capabilities(); }
  SemanticVector embed_text(std::string_view text) override;
  SemanticVector embed_image(const render::FrameImage& image) override;

  static std::string text_key(std::string_view text);
  static std::string image_key(const render::FrameImage& image);

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  template <typename Compute>
  SemanticVector lookup(const std::string& key, Compute compute);

  std::shared_ptr<EmbeddingProvider> inner_;
  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::unordered_map<std::string, SemanticVector> memory_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

// On-disk vector record: 16-byte header (magic "MAEV", version, dim,
// bytes per value = 8) followed by little-endian float64 values.
std::vector<std::uint8_t> encode_vector_record(const SemanticVector& v);
SemanticVector decode_vector_record(std::span<const std::uint8_t> bytes);

struct ProviderConfig {
  std::string kind = "stub";  // "stub" | "remote"
  std::size_t dimension = 512;
  std::uint64_t seed = 0;
  RemoteConfig remote;
  std::optional<std::filesystem::path> cache_dir;
};

// Provider wrapped in a CachedProvider.
std::shared_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config);

}  // namespace motalign::embed
