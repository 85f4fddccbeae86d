#include "motalign/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numbers>
#include <set>

#include "motalign/error.hpp"
#include "motalign/hashing.hpp"
#include "motalign/random.hpp"

namespace motalign::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kWidth = skel::kPoseWidth;

ad::Tensor slice_rows(const ad::Tensor& t, std::size_t first, std::size_t count) {
  const auto src = t.data();
  const std::size_t w = t.dim(1);
  std::vector<double> out(src.begin() + first * w, src.begin() + (first + count) * w);
  return ad::Tensor({count, w}, std::move(out));
}

skel::Pose pose_at(const ad::Tensor& frames, std::size_t row) {
  skel::Pose p;
  const auto d = frames.data();
  for (std::size_t j = 0; j < skel::kJointCount; ++j)
    for (std::size_t k = 0; k < skel::kRotWidth; ++k) p.rotations[j].v[k] = d[row * kWidth + j * skel::kRotWidth + k];
  return p;
}

void check_frames(const ad::Tensor& frames, const std::string& what) {
  if (frames.rank() != 2 || frames.dim(1) != kWidth || frames.dim(0) == 0)
    throw InputError(what + ": frames must be [T, 144] with T >= 1, got " + ad::shape_string(frames.shape()));
  if (!frames.is_finite()) throw InputError(what + ": frames contain non-finite values");
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

bool safe_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'; });
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace

void validate(const MotionRecord& r) {
  const std::string what = "record '" + r.id + "'";
  if (!(r.fps > 0.0) || !std::isfinite(r.fps)) throw InputError(what + ": fps must be positive");
  check_frames(r.frames, what);
  const std::size_t T = r.length();
  for (const auto& l : r.labels) {
    if (l.start > l.end || l.end >= T)
      throw InputError(what + ": label '" + l.text + "' span [" + std::to_string(l.start) + ", " +
                       std::to_string(l.end) + "] outside [0, " + std::to_string(T) + ")");
  }
}

MotionRecord downsample(const MotionRecord& r, double target_fps) {
  validate(r);
  if (!(target_fps > 0.0)) throw InputError("target fps must be positive");
  if (r.fps < target_fps * (1.0 - 1e-9))
    throw UnsupportedError("cannot upsample '" + r.id + "' from " + std::to_string(r.fps) + " to " +
                           std::to_string(target_fps) + " fps");
  const auto stride = static_cast<std::size_t>(std::max(1.0, std::round(r.fps / target_fps)));
  MotionRecord out = r;
  if (stride == 1) return out;

  const std::size_t T = r.length();
  const std::size_t kept = (T + stride - 1) / stride;
  std::vector<double> frames;
  frames.reserve(kept * kWidth);
  const auto src = r.frames.data();
  for (std::size_t i = 0; i < kept; ++i)
    frames.insert(frames.end(), src.begin() + i * stride * kWidth, src.begin() + (i * stride + 1) * kWidth);
  out.frames = ad::Tensor({kept, kWidth}, std::move(frames));
  out.fps = r.fps / static_cast<double>(stride);
  out.fps_warning = r.fps_warning || std::abs(out.fps - target_fps) > 1e-6 * target_fps;

  for (auto& l : out.labels) {
    std::size_t a = (l.start + stride - 1) / stride;
    std::size_t b = l.end / stride;
    if (a > b) {
      // The span falls between two kept frames; keep the nearer one.
      a = b = std::min<std::size_t>(static_cast<std::size_t>(std::llround((l.start + l.end) / 2.0 / stride)), kept - 1);
    }
    l.start = a;
    l.end = std::min(b, kept - 1);
  }
  return out;
}

std::size_t aligned_window_count(std::size_t frames, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0 || frames < length) return 0;
  return (frames - length) / stride + 1;
}

WindowResult window(const MotionRecord& r, std::size_t length, std::size_t stride, bool cover_tail) {
  validate(r);
  if (length == 0 || stride == 0) throw InputError("window length and stride must be positive");
  WindowResult result;
  const std::size_t T = r.length();
  if (T < length) {
    result.diagnostic = "record '" + r.id + "' has " + std::to_string(T) + " frames, fewer than the window length " +
                        std::to_string(length);
    return result;
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + length <= T; s += stride) starts.push_back(s);
  if (cover_tail && starts.back() + length < T) starts.push_back(T - length);

  for (std::size_t i = 0; i < starts.size(); ++i) {
    Window w;
    w.record_id = r.id;
    w.index = i;
    w.start = starts[i];
    w.end_aligned = cover_tail && i + 1 == starts.size() && starts[i] % stride != 0;
    w.frames = slice_rows(r.frames, w.start, length);
    const std::size_t last = w.start + length - 1;
    for (const auto& l : r.labels)
      if (l.start <= last && l.end >= w.start) w.labels.push_back(l.text);
    result.windows.push_back(std::move(w));
  }
  return result;
}

std::string assemble_text(const std::vector<std::string>& labels) {
  std::vector<std::string> seen;
  for (const auto& raw : labels) {
    std::string l = trim(raw);
    if (l.empty() || std::find(seen.begin(), seen.end(), l) != seen.end()) continue;
    seen.push_back(std::move(l));
  }
  if (seen.empty()) return kEmptyLabel;
  std::string out = seen.front();
  for (std::size_t i = 1; i < seen.size(); ++i) out += ", " + seen[i];
  return out;
}

Triplet build_triplet(const std::string& id, const ad::Tensor& motion, const std::string& text,
                      const skel::SkeletonModel& skeleton, embed::EmbeddingProvider& provider, std::uint64_t seed,
                      const TripletOptions& options) {
  check_frames(motion, "triplet '" + id + "'");
  Triplet t;
  t.id = id;
  t.motion = motion;
  t.text = text;
  t.unlabeled = text == kEmptyLabel;
  Rng rng(seed);
  t.frame_index = static_cast<std::size_t>(rng.below(motion.dim(0)));
  const auto dim = provider.dimension();
  auto check_dim = [&](const embed::SemanticVector& v, const char* what) {
    if (v.size() != dim)
      throw DimensionError("triplet '" + id + "': " + what + " embedding has dimension " + std::to_string(v.size()) +
                           ", provider declares " + std::to_string(dim));
  };
  try {
    auto image = render::rasterize(skeleton, pose_at(motion, t.frame_index), options.camera);
    t.text_emb = provider.embed_text(text);
    check_dim(*t.text_emb, "text");
    if (options.embed_image) {
      t.image_emb = provider.embed_image(image);
      check_dim(*t.image_emb, "image");
    }
    if (options.keep_image) t.image = std::move(image);
  } catch (const TransportError& e) {
    throw TransportError("triplet '" + id + "': " + e.what(), e.attempts(), e.last_status());
  } catch (const DimensionError&) {
    throw;
  } catch (const DegenerateError& e) {
    throw DegenerateError("triplet '" + id + "': " + e.what());
  } catch (const InputError& e) {
    throw InputError("triplet '" + id + "': " + e.what());
  }
  return t;
}

std::vector<Triplet> build_triplets(std::vector<MotionRecord> records, const skel::SkeletonModel& skeleton,
                                    embed::EmbeddingProvider& provider, std::uint64_t seed,
                                    const PipelineOptions& options) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<Triplet> out;
  for (const auto& rec : records) {
    const MotionRecord r = downsample(rec, options.target_fps);
    const auto windows = window(r, options.window_length, options.window_stride, options.cover_tail);
    for (const auto& w : windows.windows) {
      Triplet t = build_triplet(w.record_id + "#" + std::to_string(w.index), w.frames, assemble_text(w.labels),
                                skeleton, provider, mix_seed(seed, out.size()), options.triplet);
      t.class_id = r.class_id.value_or(-1);
      out.push_back(std::move(t));
    }
  }
  return out;
}

// ---- synthetic motion ---------------------------------------------------------

namespace {

enum Joint : int {
  kPelvis = 0,
  kLHip = 1,
  kRHip = 2,
  kSpine1 = 3,
  kLKnee = 4,
  kRKnee = 5,
  kSpine2 = 6,
  kSpine3 = 9,
  kNeck = 12,
  kHead = 15,
  kLShoulder = 16,
  kRShoulder = 17,
  kLElbow = 18,
  kRElbow = 19,
};

// angle(t) = A * (mean + osc * sin(2 pi f t + phase + offset)) about `axis`
// of the joint's local frame. Components of one joint multiply left to right.
struct Component {
  int joint;
  char axis;
  double mean;
  double osc;
  double offset = 0.0;
};

struct Family {
  std::string name;
  double frequency;  // Hz
  std::vector<Component> parts;
};

constexpr double kPi = std::numbers::pi;

const std::vector<Family>& families() {
  // Body faces +z, y is up, the subject's left is +x.
  static const std::vector<Family> f = {
      {"wave", 1.2, {{kLShoulder, 'z', -1.3, 0.0}, {kRShoulder, 'z', -1.2, 0.1}, {kRElbow, 'z', -0.6, 0.5}}},
      {"squat",
       0.5,
       {{kLHip, 'x', -0.8, 0.8},
        {kRHip, 'x', -0.8, 0.8},
        {kLKnee, 'x', 0.9, 0.9},
        {kRKnee, 'x', 0.9, 0.9},
        {kSpine1, 'x', 0.2, 0.2},
        {kLShoulder, 'y', -1.3, 0.0},
        {kRShoulder, 'y', 1.3, 0.0}}},
      {"walk",
       1.0,
       {{kLHip, 'x', -0.1, 0.5},
        {kRHip, 'x', -0.1, 0.5, kPi},
        {kLKnee, 'x', 0.35, 0.35, -kPi / 2},
        {kRKnee, 'x', 0.35, 0.35, kPi / 2},
        {kLShoulder, 'x', 0.0, 0.4, kPi},
        {kLShoulder, 'z', -1.3, 0.0},
        {kRShoulder, 'x', 0.0, 0.4},
        {kRShoulder, 'z', 1.3, 0.0}}},
      {"jump",
       1.2,
       {{kLHip, 'x', -0.5, 0.5},
        {kRHip, 'x', -0.5, 0.5},
        {kLKnee, 'x', 0.9, 0.9},
        {kRKnee, 'x', 0.9, 0.9},
        {kLShoulder, 'z', 1.0, -0.4},
        {kRShoulder, 'z', -1.0, 0.4}}},
      {"turn",
       0.4,
       {{kPelvis, 'y', 0.3, 1.0},
        {kLShoulder, 'z', -0.9, 0.0},
        {kRShoulder, 'z', 0.9, 0.0},
        {kLElbow, 'y', -1.2, 0.0},
        {kRElbow, 'y', 1.2, 0.0},
        {kHead, 'y', 0.0, 0.3}}},
      {"bow",
       0.5,
       {{kSpine1, 'x', 0.4, 0.4},
        {kSpine2, 'x', 0.25, 0.25},
        {kSpine3, 'x', 0.1, 0.1},
        {kNeck, 'x', 0.2, 0.2},
        {kLShoulder, 'z', -1.3, 0.0},
        {kRShoulder, 'z', 1.3, 0.0}}},
      {"kick",
       1.0,
       {{kRHip, 'x', -0.5, 0.8},
        {kRKnee, 'x', 0.5, 0.5, kPi / 2},
        {kLShoulder, 'z', -0.4, 0.0},
        {kRShoulder, 'z', 0.4, 0.0}}},
      {"clap",
       1.5,
       {{kLShoulder, 'y', -1.35, 0.25},
        {kRShoulder, 'y', 1.35, -0.25},
        {kLElbow, 'y', -0.3, 0.0},
        {kRElbow, 'y', 0.3, 0.0}}},
  };
  return f;
}

rot::Vec3 axis_vector(char axis) {
  switch (axis) {
    case 'x':
      return rot::Vec3::UnitX();
    case 'y':
      return rot::Vec3::UnitY();
    default:
      return rot::Vec3::UnitZ();
  }
}

}  // namespace

const std::vector<std::string>& family_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& f : families()) n.push_back(f.name);
    return n;
  }();
  return names;
}

ad::Tensor synthesize_motion(std::size_t family, const SynthParams& params, std::size_t frames, double fps) {
  if (family >= families().size())
    throw InputError("family " + std::to_string(family) + " out of range; " + std::to_string(families().size()) +
                     " available");
  if (frames == 0 || !(fps > 0.0)) throw InputError("synthesize_motion needs frames >= 1 and fps > 0");
  const Family& fam = families()[family];
  const double omega = 2.0 * kPi * fam.frequency * params.freq_scale;
  std::vector<double> out(frames * kWidth);
  for (std::size_t t = 0; t < frames; ++t) {
    std::array<rot::Mat3, skel::kJointCount> R;
    R.fill(rot::Mat3::Identity());
    const double time = static_cast<double>(t) / fps;
    for (const auto& c : fam.parts) {
      const double angle = params.amplitude * (c.mean + c.osc * std::sin(omega * time + params.phase + c.offset));
      R[c.joint] = R[c.joint] * rot::axis_angle(axis_vector(c.axis), angle);
    }
    for (std::size_t j = 0; j < skel::kJointCount; ++j) {
      const auto r6 = rot::from_matrix(R[j]);
      std::copy(r6.v.begin(), r6.v.end(), out.begin() + t * kWidth + j * skel::kRotWidth);
    }
  }
  return ad::Tensor({frames, kWidth}, std::move(out));
}

std::vector<MotionRecord> synthesize_dataset(std::size_t family_count, std::size_t per_family, std::uint64_t seed) {
  if (family_count > families().size())
    throw InputError("requested " + std::to_string(family_count) + " families; " +
                     std::to_string(families().size()) + " available");
  std::vector<MotionRecord> out;
  out.reserve(family_count * per_family);
  for (std::size_t f = 0; f < family_count; ++f) {
    const std::string& name = families()[f].name;
    for (std::size_t n = 0; n < per_family; ++n) {
      Rng rng(mix_seed(mix_seed(seed, f), n));
      SynthParams p;
      p.amplitude = rng.uniform(0.8, 1.2);
      p.freq_scale = rng.uniform(0.85, 1.15);
      p.phase = rng.uniform(0.0, 1.0);
      MotionRecord r;
      char suffix[24];
      std::snprintf(suffix, sizeof suffix, "%03zu", n);
      r.id = "synth-" + name + "-" + suffix;
      r.fps = 30.0;
      r.frames = synthesize_motion(f, p, 60, 30.0);
      r.labels = {{0, 59, name}};
      r.class_id = static_cast<int>(f);
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---- files --------------------------------------------------------------------

namespace {
constexpr std::uint32_t kMotionVersion = 1;
constexpr std::size_t kMotionHeader = 4 + 4 + 4 + 8 + 4 + 4;
}  // namespace

std::vector<std::uint8_t> encode_motion(const MotionFile& m) {
  check_frames(m.frames, "motion file");
  if (!(m.fps > 0.0)) throw InputError("motion file: fps must be positive");
  std::vector<std::uint8_t> out{'M', 'C', 'L', 'P'};
  put_u32(out, kMotionVersion);
  put_u32(out, static_cast<std::uint32_t>(m.frames.dim(0)));
  put_f64(out, m.fps);
  put_u32(out, static_cast<std::uint32_t>(skel::kJointCount));
  put_u32(out, static_cast<std::uint32_t>(skel::kRotWidth));
  for (double v : m.frames.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

MotionFile decode_motion(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMotionHeader) throw IntegrityError("motion blob truncated: " + std::to_string(bytes.size()) + " bytes");
  if (!std::equal(bytes.begin(), bytes.begin() + 4, "MCLP")) throw IntegrityError("motion blob: bad magic");
  if (const auto v = get_u32(bytes, 4); v != kMotionVersion)
    throw UnsupportedError("motion blob version " + std::to_string(v));
  const std::size_t T = get_u32(bytes, 8);
  MotionFile m;
  m.fps = get_f64(bytes, 12);
  const auto joints = get_u32(bytes, 20);
  const auto width = get_u32(bytes, 24);
  if (joints != skel::kJointCount || width != skel::kRotWidth)
    throw InputError("motion blob: expected 24 joints x 6, got " + std::to_string(joints) + " x " + std::to_string(width));
  if (bytes.size() != kMotionHeader + T * kWidth * 4)
    throw IntegrityError("motion blob: expected " + std::to_string(kMotionHeader + T * kWidth * 4) + " bytes, got " +
                         std::to_string(bytes.size()));
  std::vector<double> frames(T * kWidth);
  for (std::size_t i = 0; i < frames.size(); ++i)
    frames[i] = std::bit_cast<float>(get_u32(bytes, kMotionHeader + 4 * i));
  m.frames = ad::Tensor({T, kWidth}, std::move(frames));
  check_frames(m.frames, "motion blob");
  if (!(m.fps > 0.0) || !std::isfinite(m.fps)) throw InputError("motion blob: fps must be positive");
  return m;
}

void write_motion(const fs::path& path, const MotionFile& m) {
  const auto bytes = encode_motion(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

MotionFile read_motion(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_motion(bytes);
}

void save_dataset(const fs::path& dir, const std::vector<MotionRecord>& records) {
  std::set<std::string> ids;
  for (const auto& r : records) {
    validate(r);
    if (!safe_id(r.id)) throw InputError("record id '" + r.id + "' is not usable as a file name");
    if (!ids.insert(r.id).second) throw InputError("duplicate record id '" + r.id + "'");
  }
  fs::create_directories(dir / "motions");
  json list = json::array();
  for (const auto& r : records) {
    const std::string blob = "motions/" + r.id + ".mclip";
    write_motion(dir / blob, {r.fps, r.frames});
    json labels = json::array();
    for (const auto& l : r.labels) labels.push_back({{"start", l.start}, {"end", l.end}, {"text", l.text}});
    json entry = {{"id", r.id}, {"fps", r.fps}, {"frames", r.length()}, {"blob", blob}, {"labels", labels}};
    if (r.class_id) entry["class_id"] = *r.class_id;
    if (r.fps_warning) entry["fps_warning"] = true;
    list.push_back(std::move(entry));
  }
  const json manifest = {{"format", "motalign-dataset"}, {"version", 1}, {"records", list}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(1) << '\n';
}

std::vector<MotionRecord> load_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  std::vector<MotionRecord> out;
  try {
    if (manifest.at("format") != "motalign-dataset") throw InputError("not a dataset manifest");
    if (manifest.at("version") != 1) throw UnsupportedError("dataset manifest version " + manifest.at("version").dump());
    for (const auto& e : manifest.at("records")) {
      MotionRecord r;
      r.id = e.at("id").get<std::string>();
      const std::string blob = e.at("blob").get<std::string>();
      if (blob.find("..") != std::string::npos || fs::path(blob).is_absolute())
        throw InputError("record '" + r.id + "': blob path escapes the dataset directory");
      auto m = read_motion(dir / blob);
      if (m.frames.dim(0) != e.at("frames").get<std::size_t>())
        throw IntegrityError("record '" + r.id + "': manifest frame count disagrees with blob");
      r.fps = e.at("fps").get<double>();
      r.frames = std::move(m.frames);
      for (const auto& l : e.at("labels"))
        r.labels.push_back({l.at("start").get<std::size_t>(), l.at("end").get<std::size_t>(), l.at("text").get<std::string>()});
      if (e.contains("class_id")) r.class_id = e.at("class_id").get<int>();
      r.fps_warning = e.value("fps_warning", false);
      validate(r);
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InputError((dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

ImportResult import_babel(const fs::path& annotations, const fs::path& motion_dir) {
  const json doc = read_json(annotations);
  if (!doc.is_object()) throw InputError(annotations.string() + ": expected an object keyed by sequence id");
  ImportResult result;
  auto label_text = [](const json& l) {
    for (const char* key : {"proc_label", "raw_label"})
      if (l.contains(key) && l[key].is_string() && !trim(l[key].get<std::string>()).empty())
        return trim(l[key].get<std::string>());
    return std::string();
  };
  for (const auto& [key, entry] : doc.items()) {
    std::string sid = key;
    if (entry.contains("babel_sid")) {
      const auto& s = entry["babel_sid"];
      sid = s.is_string() ? s.get<std::string>() : s.dump();
    }
    if (!safe_id(sid)) {
      result.skipped.push_back(key + ": sequence id is not usable as a file name");
      continue;
    }
    const fs::path blob = motion_dir / (sid + ".mclip");
    if (!fs::exists(blob)) {
      result.skipped.push_back(sid + ": no motion file " + blob.string());
      continue;
    }
    MotionRecord r;
    r.id = "babel-" + sid;
    try {
      auto m = read_motion(blob);
      r.fps = m.fps;
      r.frames = std::move(m.frames);
      const std::size_t T = r.length();
      const json* frame_ann = entry.contains("frame_ann") && entry["frame_ann"].is_object() ? &entry["frame_ann"] : nullptr;
      if (frame_ann && frame_ann->contains("labels")) {
        for (const auto& l : frame_ann->at("labels")) {
          const std::string text = label_text(l);
          if (text.empty()) continue;
          const double t0 = l.at("start_t").get<double>();
          const double t1 = l.at("end_t").get<double>();
          const auto start = static_cast<std::size_t>(std::max(0.0, std::floor(t0 * r.fps + 1e-9)));
          if (start >= T || t1 < t0) continue;
          const auto stop = static_cast<std::size_t>(std::max(0.0, std::ceil(t1 * r.fps - 1e-9)));
          const std::size_t end = std::clamp<std::size_t>(stop == 0 ? 0 : stop - 1, start, T - 1);
          r.labels.push_back({start, end, text});
        }
      } else if (entry.contains("seq_ann") && entry["seq_ann"].is_object() && entry["seq_ann"].contains("labels")) {
        for (const auto& l : entry["seq_ann"]["labels"]) {
          const std::string text = label_text(l);
          if (!text.empty()) r.labels.push_back({0, T - 1, text});
        }
      }
      validate(r);
    } catch (const json::exception& e) {
      result.skipped.push_back(sid + ": " + e.what());
      continue;
    } catch (const Error& e) {
      result.skipped.push_back(sid + ": " + e.what());
      continue;
    }
    result.records.push_back(std::move(r));
  }
  std::sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return result;
}

DatasetStats dataset_stats(const std::vector<MotionRecord>& records) {
  DatasetStats s;
  std::map<std::string, std::size_t> labels;
  for (const auto& r : records) {
    ++s.records;
    s.frames += r.length();
    s.seconds += static_cast<double>(r.length()) / r.fps;
    for (const auto& l : r.labels) ++labels[l.text];
  }
  s.labels.assign(labels.begin(), labels.end());
  return s;
}

std::vector<std::string> class_names(const std::vector<MotionRecord>& records) {
  std::map<int, std::string> names;
  for (const auto& r : records) {
    if (!r.class_id) continue;
    if (*r.class_id < 0) throw InputError("record " + r.id + ": negative class id");
    std::vector<std::string> labels;
    for (const auto& l : r.labels) labels.push_back(l.text);
    const auto text = assemble_text(labels);
    const auto [it, fresh] = names.emplace(*r.class_id, text);
    if (!fresh && it->second != text)
      throw InputError("class " + std::to_string(*r.class_id) + " is labelled both '" + it->second + "' and '" + text + "'");
  }
  std::vector<std::string> out;
  for (const auto& [id, name] : names) {
    if (id != static_cast<int>(out.size())) throw InputError("class ids are not contiguous from 0");
    out.push_back(name);
  }
  return out;
}

}  // namespace motalign::data
