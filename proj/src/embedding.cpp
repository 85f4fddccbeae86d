#include "motalign/embedding.hpp"

#include <httplib.h>

#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "motalign/error.hpp"
#include "motalign/hashing.hpp"
#include "motalign/random.hpp"

namespace motalign::embed {

namespace {

constexpr std::uint32_t kRecordMagic = 0x5645414d;  // "MAEV"
constexpr std::uint32_t kRecordVersion = 1;

std::uint64_t digest_seed(std::string_view tag, std::string_view text, std::uint64_t seed) {
  std::string buf(tag);
  buf.push_back('\0');
  buf.append(text);
  const auto d = sha256(buf);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(d[i]) << (8 * i);
  return mix_seed(v, seed);
}

void normalize_in_place(std::vector<double>& v, const char* what) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateError(std::string(what) + ": zero or non-finite vector");
  for (auto& x : v) x /= n;
}

void check_vector(const SemanticVector& v, std::size_t dim, const char* what) {
  if (v.size() != dim) {
    throw InputError(std::string(what) + ": expected dimension " + std::to_string(dim) + ", got " +
                     std::to_string(v.size()));
  }
  for (double x : v.values) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite embedding");
  }
}

}  // namespace

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: dimension mismatch");
  double ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  const double na = norm(a), nb = norm(b);
  if (na <= 1e-12 || nb <= 1e-12) throw DegenerateError("cosine: vector norm at or below 1e-12");
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

std::string canonical_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || uc >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// ---- stub -------------------------------------------------------------------

StubProvider::StubProvider(std::size_t dimension, std::uint64_t seed, int image_size)
    : seed_(seed), image_size_(image_size) {
  if (dimension == 0) throw InputError("stub provider: dimension must be positive");
  if (image_size % kGrid != 0) throw InputError("stub provider: image size must be a multiple of 16");
  caps_ = {true, true, dimension, "stub-v1-d" + std::to_string(dimension) + "-s" + std::to_string(seed)};
  Rng rng(digest_seed("stub-image-projection", "", seed));
  projection_.resize(dimension * kGrid * kGrid);
  for (auto& w : projection_) w = rng.normal();
}

SemanticVector StubProvider::token_vector(std::string_view token) const {
  Rng rng(digest_seed("stub-token", token, seed_));
  std::vector<double> v(caps_.dimension);
  for (auto& x : v) x = rng.normal();
  normalize_in_place(v, "stub token");
  return {std::move(v)};
}

SemanticVector StubProvider::embed_text(std::string_view text) {
  if (canonical_text(text).empty()) throw InputError("embed_text: empty text");
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw InputError("embed_text: text has no tokens");
  std::vector<double> acc(caps_.dimension, 0.0);
  for (const auto& t : tokens) {
    const auto tv = token_vector(t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += tv.values[i];
  }
  normalize_in_place(acc, "embed_text");
  return {std::move(acc)};
}

std::vector<double> StubProvider::patch_grid(const render::FrameImage& image) const {
  if (image.width != image_size_ || image.height != image_size_) {
    throw InputError("embed_image: stub expects " + std::to_string(image_size_) + "x" + std::to_string(image_size_) +
                     " images, got " + std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  const auto gray = image.grayscale();
  const int cell = image_size_ / kGrid;
  std::vector<double> grid(kGrid * kGrid, 0.0);
  for (int gy = 0; gy < kGrid; ++gy) {
    for (int gx = 0; gx < kGrid; ++gx) {
      double s = 0.0;
      for (int y = gy * cell; y < (gy + 1) * cell; ++y)
        for (int x = gx * cell; x < (gx + 1) * cell; ++x) s += gray[static_cast<std::size_t>(y) * image.width + x];
      grid[gy * kGrid + gx] = s / (cell * cell) - 0.5;
    }
  }
  return grid;
}

SemanticVector StubProvider::embed_image(const render::FrameImage& image) {
  const auto grid = patch_grid(image);
  std::vector<double> out(caps_.dimension, 0.0);
  const std::size_t cols = grid.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += projection_[r * cols + c] * grid[c];
    out[r] = s;
  }
  normalize_in_place(out, "embed_image");
  return {std::move(out)};
}

// ---- remote -----------------------------------------------------------------

RemoteProvider::RemoteProvider(RemoteConfig config) : config_(std::move(config)) {
  if (config_.dimension == 0) throw InputError("remote provider: dimension must be positive");
  caps_ = {true, true, config_.dimension, "remote-" + config_.model + "-d" + std::to_string(config_.dimension)};
}

std::vector<SemanticVector> RemoteProvider::post(const std::string& path, const std::string& body,
                                                 std::size_t expected) {
  httplib::Client client(config_.url);
  const auto seconds = config_.timeout_ms / 1000;
  const auto micros = (config_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  int last_status = -1;
  std::string last_error;
  const int attempts = 1 + std::max(0, config_.retries);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_status = -1;
      last_error = httplib::to_string(res.error());
    } else if (res->status == 200) {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(path + ": malformed response: " + e.what(), attempt, res->status);
      }
      if (!doc.contains("vectors") || !doc.contains("dim")) {
        throw TransportError(path + ": response lacks 'vectors' or 'dim'", attempt, res->status);
      }
      if (doc["dim"].get<std::size_t>() != config_.dimension) {
        throw TransportError(path + ": provider dimension " + doc["dim"].dump() + " does not match configured " +
                                 std::to_string(config_.dimension),
                             attempt, res->status);
      }
      if (doc.contains("model") && doc["model"].get<std::string>() != config_.model) {
        throw TransportError(path + ": provider model '" + doc["model"].get<std::string>() + "' != '" +
                                 config_.model + "'",
                             attempt, res->status);
      }
      std::vector<SemanticVector> out;
      for (const auto& v : doc["vectors"]) out.push_back({v.get<std::vector<double>>()});
      if (out.size() != expected) throw TransportError(path + ": wrong number of vectors", attempt, res->status);
      for (const auto& v : out) check_vector(v, config_.dimension, path.c_str());
      return out;
    } else {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status >= 400 && res->status < 500) {
        throw TransportError(path + ": request rejected (" + last_error + ")", attempt, last_status);
      }
    }
    if (attempt < attempts && config_.backoff_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms * attempt));
    }
  }
  throw TransportError(path + ": giving up after " + std::to_string(attempts) + " attempts (" + last_error + ")",
                       attempts, last_status);
}

std::vector<SemanticVector> RemoteProvider::embed_texts(const std::vector<std::string>& texts) {
  for (const auto& t : texts) {
    if (canonical_text(t).empty()) throw InputError("embed_text: empty text");
  }
  const nlohmann::json body = {{"texts", texts}};
  return post("/embed_text", body.dump(), texts.size());
}

std::vector<SemanticVector> RemoteProvider::embed_images(const std::vector<render::FrameImage>& images) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& img : images) list.push_back(base64_encode(render::encode_png(img)));
  const nlohmann::json body = {{"images", list}};
  return post("/embed_image", body.dump(), images.size());
}

SemanticVector RemoteProvider::embed_text(std::string_view text) {
  return embed_texts({std::string(text)}).front();
}

SemanticVector RemoteProvider::embed_image(const render::FrameImage& image) { return embed_images({image}).front(); }

// ---- cache ------------------------------------------------------------------

std::vector<std::uint8_t> encode_vector_record(const SemanticVector& v) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + v.size() * 8);
  put_u32(out, kRecordMagic);
  put_u32(out, kRecordVersion);
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  put_u32(out, 8);
  for (double x : v.values) put_f64(out, x);
  return out;
}

SemanticVector decode_vector_record(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || get_u32(bytes, 0) != kRecordMagic) throw IntegrityError("vector record: bad magic");
  if (get_u32(bytes, 4) != kRecordVersion) throw IntegrityError("vector record: unsupported version");
  const auto dim = get_u32(bytes, 8);
  if (get_u32(bytes, 12) != 8 || bytes.size() != 16 + std::size_t{dim} * 8) {
    throw IntegrityError("vector record: size does not match header");
  }
  SemanticVector v;
  v.values.resize(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v.values[i] = get_f64(bytes, 16 + std::size_t{i} * 8);
  return v;
}

CachedProvider::CachedProvider(std::shared_ptr<EmbeddingProvider> inner, std::optional<std::filesystem::path> dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
  if (!inner_) throw ContractError("CachedProvider: null provider");
  if (dir_) {
    dir_ = *dir_ / inner_->provider_id();
    std::filesystem::create_directories(*dir_);
  }
}

std::string CachedProvider::text_key(std::string_view text) {
  return to_hex(sha256("text\n" + canonical_text(text)));
}

std::string CachedProvider::image_key(const render::FrameImage& image) {
  std::vector<std::uint8_t> buf = {'i', 'm', 'a', 'g', 'e', '\n'};
  put_u32(buf, static_cast<std::uint32_t>(image.width));
  put_u32(buf, static_cast<std::uint32_t>(image.height));
  for (double p : image.pixels) put_f64(buf, p);
  return to_hex(sha256(buf));
}

template <typename Compute>
SemanticVector CachedProvider::lookup(const std::string& key, Compute compute) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
  }
  std::optional<SemanticVector> found;
  std::filesystem::path file;
  if (dir_) {
    file = *dir_ / (key + ".vec");
    std::ifstream in(file, std::ios::binary);
    if (in) {
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      found = decode_vector_record(bytes);
      if (found->size() != inner_->dimension()) throw IntegrityError("cache entry " + file.string() + ": wrong dimension");
    }
  }
  std::lock_guard lock(mutex_);
  if (found) {
    ++hits_;
  } else {
    ++misses_;
    found = compute();
    if (dir_) {
      const auto bytes = encode_vector_record(*found);
      const auto tmp = file.string() + ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write cache entry " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
      std::filesystem::rename(tmp, file);
    }
  }
  memory_.emplace(key, *found);
  return *found;
}

SemanticVector CachedProvider::embed_text(std::string_view text) {
  if (canonical_text(text).empty()) throw InputError("embed_text: empty text");
  return lookup(text_key(text), [&] { return inner_->embed_text(canonical_text(text)); });
}

SemanticVector CachedProvider::embed_image(const render::FrameImage& image) {
  return lookup(image_key(image), [&] { return inner_->embed_image(image); });
}

std::shared_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config) {
  std::shared_ptr<EmbeddingProvider> inner;
  if (config.kind == "stub") {
    inner = std::make_shared<StubProvider>(config.dimension, config.seed);
  } else if (config.kind == "remote") {
    RemoteConfig rc = config.remote;
    rc.dimension = config.dimension;
    inner = std::make_shared<RemoteProvider>(rc);
  } else {
    throw InputError("unknown provider kind '" + config.kind + "'");
  }
  return std::make_shared<CachedProvider>(std::move(inner), config.cache_dir);
}

}  // namespace motalign::embed
