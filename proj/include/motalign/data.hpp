#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "motalign/embedding.hpp"
#include "motalign/renderer.hpp"
#include "motalign/skeleton.hpp"

namespace motalign::data {

// Frame span [start, end], both inclusive, with its text.
struct LabelSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;
  bool operator==(const LabelSpan&) const = default;
};

struct MotionRecord {
  std::string id;
  double fps = 30.0;
  ad::Tensor frames;  // [T, 144]
  std::vector<LabelSpan> labels;
  std::optional<int> class_id;
  // Set by downsample when fps / stride misses the requested rate.
  bool fps_warning = false;

  std::size_t length() const { return frames.dim(0); }
};

// Throws InputError for a malformed record (shape, fps, label spans).
void validate(const MotionRecord& r);

// Keeps every round(fps / target)-th frame; labels map onto the kept frames
// and never shrink below one frame.
MotionRecord downsample(const MotionRecord& r, double target_fps = 30.0);

struct Window {
  std::string record_id;
  std::size_t index = 0;  // position within the record
  std::size_t start = 0;  // first frame in the source record
  ad::Tensor frames;      // [length, 144]
  std::vector<std::string> labels;
  bool end_aligned = false;
};

struct WindowResult {
  std::vector<Window> windows;
  std::string diagnostic;  // non-empty when the record was too short
};

// Windows at start = 0, stride, 2*stride, ...; with cover_tail, when the last
// of these stops short of the final frame one more window aligned to the end
// of the record is appended so that every frame is covered.
WindowResult window(const MotionRecord& r, std::size_t length = 60, std::size_t stride = 30, bool cover_tail = true);

// Number of stride-aligned windows, floor((T - length) / stride) + 1, or 0.
std::size_t aligned_window_count(std::size_t frames, std::size_t length, std::size_t stride);

inline constexpr const char* kEmptyLabel = "motion";

// Labels de-duplicated in order of first appearance and joined with ", ";
// "motion" when there is nothing to list.
std::string assemble_text(const std::vector<std::string>& labels);

struct Triplet {
  std::string id;
  ad::Tensor motion;  // [T, 144]
  std::string text;
  bool unlabeled = false;  // text is the "motion" sentinel
  std::size_t frame_index = 0;
  std::optional<render::FrameImage> image;
  std::optional<embed::SemanticVector> text_emb;
  std::optional<embed::SemanticVector> image_emb;
  int class_id = -1;
};

struct TripletOptions {
  render::Camera camera = render::Camera::canonical();
  bool keep_image = true;
  bool embed_image = true;
};

// Renders a frame drawn from Rng(seed) and embeds text and image through the
// provider. Provider errors are rethrown with the triplet id prepended.
Triplet build_triplet(const std::string& id, const ad::Tensor& motion, const std::string& text,
                      const skel::SkeletonModel& skeleton, embed::EmbeddingProvider& provider, std::uint64_t seed,
                      const TripletOptions& options = {});

struct PipelineOptions {
  double target_fps = 30.0;
  std::size_t window_length = 60;
  std::size_t window_stride = 30;
  bool cover_tail = true;
  TripletOptions triplet;
};

// Records sorted by id, each downsampled and windowed; triplet seeds are
// derived from (seed, position in the output list).
std::vector<Triplet> build_triplets(std::vector<MotionRecord> records, const skel::SkeletonModel& skeleton,
                                    embed::EmbeddingProvider& provider, std::uint64_t seed,
                                    const PipelineOptions& options = {});

// ---- synthetic motion ---------------------------------------------------------

// Names of the parametric families, in class-id order.
const std::vector<std::string>& family_names();

struct SynthParams {
  double amplitude = 1.0;   // scales every angle; 0 gives the rest pose
  double freq_scale = 1.0;  // multiplies the family's base frequency
  double phase = 0.0;       // radians
};

ad::Tensor synthesize_motion(std::size_t family, const SynthParams& params, std::size_t frames = 60,
                             double fps = 30.0);

// K families x N samples with seeded jitter; record ids "synth-<family>-<n>".
std::vector<MotionRecord> synthesize_dataset(std::size_t families, std::size_t per_family, std::uint64_t seed);

// ---- files --------------------------------------------------------------------

struct MotionFile {
  double fps = 30.0;
  ad::Tensor frames;  // [T, 144]
};

// Binary motion blob: magic "MCLP", version, T, fps (f64), joints = 24,
// width = 6, then T*144 little-endian f32.
std::vector<std::uint8_t> encode_motion(const MotionFile& m);
MotionFile decode_motion(std::span<const std::uint8_t> bytes);
void write_motion(const std::filesystem::path& path, const MotionFile& m);
MotionFile read_motion(const std::filesystem::path& path);

// <dir>/manifest.json plus <dir>/motions/<id>.mclip per record.
void save_dataset(const std::filesystem::path& dir, const std::vector<MotionRecord>& records);
std::vector<MotionRecord> load_dataset(const std::filesystem::path& dir);

struct ImportResult {
  std::vector<MotionRecord> records;
  std::vector<std::string> skipped;  // one diagnostic per dropped entry
};

// BABEL-format annotations (object keyed by sequence id, with seq_ann and
// optional frame_ann label lists; times in seconds). Frames come from
// <motion_dir>/<babel_sid>.mclip.
ImportResult import_babel(const std::filesystem::path& annotations, const std::filesystem::path& motion_dir);

struct DatasetStats {
  std::size_t records = 0;
  std::size_t frames = 0;
  double seconds = 0.0;
  std::vector<std::pair<std::string, std::size_t>> labels;  // sorted by label
};
DatasetStats dataset_stats(const std::vector<MotionRecord>& records);

// Class name per class id, taken from the assembled label text of the
// records carrying that id. InputError when ids are not 0..K-1 or one id
// maps to two names.
std::vector<std::string> class_names(const std::vector<MotionRecord>& records);

}  // namespace motalign::data
