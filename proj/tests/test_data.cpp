#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "motalign/data.hpp"
#include "motalign/error.hpp"
#include "motalign/model.hpp"
#include "motalign/random.hpp"

using namespace motalign;
using namespace motalign::data;
namespace fs = std::filesystem;

namespace {

// Row r of the tensor holds r in every feature; makes slicing easy to check.
ad::Tensor indexed_frames(std::size_t T) {
  std::vector<double> d(T * 144);
  for (std::size_t r = 0; r < T; ++r)
    for (std::size_t k = 0; k < 144; ++k) d[r * 144 + k] = static_cast<double>(r);
  return ad::Tensor({T, 144}, std::move(d));
}

ad::Tensor rest_frames(std::size_t T) {
  std::vector<double> d;
  for (std::size_t r = 0; r < T; ++r)
    for (std::size_t j = 0; j < 24; ++j) d.insert(d.end(), {1, 0, 0, 0, 1, 0});
  return ad::Tensor({T, 144}, std::move(d));
}

MotionRecord record(std::size_t T, double fps, std::vector<LabelSpan> labels = {}) {
  MotionRecord r;
  r.id = "r";
  r.fps = fps;
  r.frames = indexed_frames(T);
  r.labels = std::move(labels);
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("motalign-data-" + std::to_string(Rng(std::random_device{}()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

class FailingProvider final : public embed::EmbeddingProvider {
 public:
  const embed::Capabilities& capabilities() const override { return caps_; }
  embed::SemanticVector embed_text(std::string_view) override { throw TransportError("upstream 503", 3, 503); }
  embed::SemanticVector embed_image(const render::FrameImage&) override { throw TransportError("x", 3, 503); }

 private:
  embed::Capabilities caps_{true, true, 512, "failing"};
};

}  // namespace

TEST(Record, ValidationCatchesBadInput) {
  EXPECT_NO_THROW(validate(record(10, 30)));
  EXPECT_THROW(validate(record(10, 0)), InputError);
  EXPECT_THROW(validate(record(10, 30, {{3, 10, "x"}})), InputError);
  EXPECT_THROW(validate(record(10, 30, {{5, 4, "x"}})), InputError);
  MotionRecord bad = record(4, 30);
  bad.frames = ad::Tensor::zeros({4, 143});
  EXPECT_THROW(validate(bad), InputError);
}

TEST(Downsample, SixtyToThirty) {
  const auto out = downsample(record(120, 60));
  ASSERT_EQ(out.length(), 60u);
  EXPECT_DOUBLE_EQ(out.fps, 30.0);
  EXPECT_FALSE(out.fps_warning);
  for (std::size_t r = 0; r < 60; ++r) EXPECT_EQ(out.frames.at(r, 7), 2.0 * r);
}

TEST(Downsample, ThirtyIsIdentity) {
  const auto in = record(45, 30, {{2, 9, "walk"}});
  const auto out = downsample(in);
  EXPECT_TRUE(out.frames.bitwise_equal(in.frames));
  EXPECT_EQ(out.labels, in.labels);
  EXPECT_EQ(out.fps, 30.0);
}

TEST(Downsample, HundredFpsUsesStrideThree) {
  const auto out = downsample(record(100, 100));
  // round(100 / 30) = 3; frames 0, 3, ..., 99.
  EXPECT_EQ(out.length(), 34u);
  EXPECT_DOUBLE_EQ(out.fps, 100.0 / 3.0);
  EXPECT_TRUE(out.fps_warning);
  EXPECT_EQ(out.frames.at(33, 0), 99.0);
}

TEST(Downsample, UpsamplingUnsupported) { EXPECT_THROW(downsample(record(10, 24)), UnsupportedError); }

TEST(Downsample, LabelsFollowKeptFrames) {
  // stride 2: kept frames are the even ones. [3, 9] covers 4, 6, 8 -> [2, 4].
  // [3, 3] holds no kept frame and snaps to the nearest, 4 -> 2. [0, 119]
  // becomes the full [0, 59].
  const auto out = downsample(record(120, 60, {{3, 9, "a"}, {3, 3, "b"}, {0, 119, "c"}}));
  ASSERT_EQ(out.labels.size(), 3u);
  EXPECT_EQ(out.labels[0], (LabelSpan{2, 4, "a"}));
  EXPECT_EQ(out.labels[1], (LabelSpan{2, 2, "b"}));
  EXPECT_EQ(out.labels[2], (LabelSpan{0, 59, "c"}));
}

TEST(Window, CountExamples) {
  EXPECT_EQ(window(record(60, 30), 60, 60).windows.size(), 1u);
  const auto w = window(record(150, 30), 60, 30);
  ASSERT_EQ(w.windows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(w.windows[i].start, 30 * i);
    EXPECT_EQ(w.windows[i].frames.at(0, 0), 30.0 * i);
    EXPECT_EQ(w.windows[i].frames.at(59, 0), 30.0 * i + 59);
  }
}

TEST(Window, AlignedCountMatchesEnumeration) {
  for (std::size_t T = 1; T < 200; T += 7)
    for (std::size_t L : {1u, 10u, 60u})
      for (std::size_t s : {1u, 7u, 30u, 60u, 90u}) {
        std::size_t n = 0;
        for (std::size_t start = 0; start + L <= T; start += s) ++n;
        EXPECT_EQ(aligned_window_count(T, L, s), n);
        if (T >= L) {
          EXPECT_EQ(window(record(T, 30), L, s, false).windows.size(), n);
        }
      }
}

TEST(Window, TailWindowCoversEveryFrame) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 1 + rng.below(70);
    const std::size_t s = 1 + rng.below(L);
    const std::size_t T = L + rng.below(200);
    const auto w = window(record(T, 30), L, s);
    std::vector<bool> seen(T, false);
    for (const auto& win : w.windows) {
      EXPECT_EQ(win.frames.dim(0), L);
      for (std::size_t k = 0; k < L; ++k) seen[win.start + k] = true;
    }
    EXPECT_EQ(std::count(seen.begin(), seen.end(), false), 0) << T << " " << L << " " << s;
    const std::size_t aligned = aligned_window_count(T, L, s);
    EXPECT_TRUE(w.windows.size() == aligned || w.windows.size() == aligned + 1);
  }
  const auto tail = window(record(100, 30), 60, 30);
  ASSERT_EQ(tail.windows.size(), 3u);
  EXPECT_EQ(tail.windows[2].start, 40u);
  EXPECT_TRUE(tail.windows[2].end_aligned);
  EXPECT_FALSE(tail.windows[1].end_aligned);
}

TEST(Window, ShortRecordGivesDiagnostic) {
  const auto w = window(record(59, 30), 60, 30);
  EXPECT_TRUE(w.windows.empty());
  EXPECT_NE(w.diagnostic.find("59"), std::string::npos);
}

TEST(Window, LabelsOverlappingSpanAttached) {
  const auto w = window(record(120, 30, {{0, 10, "walk"}, {50, 70, "wave"}, {89, 89, "jump"}, {90, 119, "sit"}}), 60, 30);
  ASSERT_EQ(w.windows.size(), 3u);
  EXPECT_EQ(w.windows[0].labels, (std::vector<std::string>{"walk", "wave"}));
  EXPECT_EQ(w.windows[1].labels, (std::vector<std::string>{"wave", "jump"}));
  EXPECT_EQ(w.windows[2].labels, (std::vector<std::string>{"wave", "jump", "sit"}));
}

TEST(AssembleText, Examples) {
  EXPECT_EQ(assemble_text({"walk"}), "walk");
  EXPECT_EQ(assemble_text({"walk", "wave", "walk"}), "walk, wave");
  EXPECT_EQ(assemble_text({}), "motion");
  EXPECT_EQ(assemble_text({" ", ""}), "motion");
  EXPECT_EQ(assemble_text({" walk ", "walk"}), "walk");
}

TEST(AssembleText, IdempotentOnOwnOutput) {
  for (const auto& labels : std::vector<std::vector<std::string>>{
           {}, {"walk"}, {"walk", "wave", "walk"}, {"a", "b", "c", "a", "b"}}) {
    const auto once = assemble_text(labels);
    EXPECT_EQ(assemble_text({once}), once);
  }
}

TEST(Triplet, DeterministicForSeed) {
  embed::StubProvider stub;
  const auto motion = synthesize_motion(0, {}, 60, 30.0);
  const auto& sk = skel::SkeletonModel::canonical();
  const auto a = build_triplet("t", motion, "wave", sk, stub, 17);
  const auto b = build_triplet("t", motion, "wave", sk, stub, 17);
  EXPECT_EQ(a.frame_index, b.frame_index);
  ASSERT_TRUE(a.image && b.image);
  EXPECT_EQ(a.image->to_rgb8(), b.image->to_rgb8());
  EXPECT_EQ(a.frame_index, Rng(17).below(60));
  EXPECT_EQ(*a.text_emb, *b.text_emb);
  EXPECT_EQ(*a.image_emb, *b.image_emb);
}

TEST(Triplet, EmbeddingsHaveProviderDimension) {
  embed::StubProvider stub(64, 3);
  const auto t = build_triplet("t", synthesize_motion(2, {}, 60, 30.0), "walk", skel::SkeletonModel::canonical(), stub, 1);
  ASSERT_TRUE(t.text_emb && t.image_emb);
  EXPECT_EQ(t.text_emb->size(), 64u);
  EXPECT_EQ(t.image_emb->size(), 64u);
  EXPECT_FALSE(t.unlabeled);
  const auto u = build_triplet("u", rest_frames(4), assemble_text({}), skel::SkeletonModel::canonical(), stub, 1);
  EXPECT_TRUE(u.unlabeled);
}

TEST(Triplet, ConstantPoseGivesSameImageForAnyFrame) {
  embed::StubProvider stub;
  const auto motion = rest_frames(60);
  std::set<std::size_t> indices;
  std::optional<std::vector<std::uint8_t>> first;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto t = build_triplet("c", motion, "stand", skel::SkeletonModel::canonical(), stub, seed);
    indices.insert(t.frame_index);
    const auto rgb = t.image->to_rgb8();
    if (!first) first = rgb;
    EXPECT_EQ(rgb, *first);
  }
  EXPECT_GT(indices.size(), 1u);
}

TEST(Triplet, ProviderFailureCarriesTripletId) {
  FailingProvider p;
  try {
    build_triplet("rec-7#2", rest_frames(3), "walk", skel::SkeletonModel::canonical(), p, 0);
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("rec-7#2"), std::string::npos);
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_EQ(e.last_status(), 503);
  }
}

TEST(Synth, CardinalityAndLabels) {
  const auto recs = synthesize_dataset(2, 5, 0);
  ASSERT_EQ(recs.size(), 10u);
  std::set<std::string> ids;
  for (const auto& r : recs) {
    EXPECT_EQ(r.length(), 60u);
    EXPECT_EQ(r.fps, 30.0);
    ASSERT_EQ(r.labels.size(), 1u);
    EXPECT_EQ(r.labels[0].text, family_names()[*r.class_id]);
    EXPECT_LT(*r.class_id, 2);
    ids.insert(r.id);
  }
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_THROW(synthesize_dataset(family_names().size() + 1, 1, 0), InputError);
}

TEST(Synth, ZeroAmplitudeIsRestPose) {
  for (std::size_t f = 0; f < family_names().size(); ++f) {
    SynthParams p;
    p.amplitude = 0.0;
    const auto m = synthesize_motion(f, p, 30, 30.0);
    EXPECT_TRUE(m.bitwise_equal(rest_frames(30))) << family_names()[f];
  }
}

TEST(Synth, DeterministicForSeed) {
  const auto a = synthesize_dataset(3, 4, 11);
  const auto b = synthesize_dataset(3, 4, 11);
  const auto c = synthesize_dataset(3, 4, 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_TRUE(a[i].frames.bitwise_equal(b[i].frames));
    EXPECT_FALSE(a[i].frames.bitwise_equal(c[i].frames));
  }
}

TEST(Synth, IntraFamilyCloserThanInterFamily) {
  // Brute-force distance matrix under the reconstruction metric.
  const auto& sk = skel::SkeletonModel::canonical();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const std::size_t K = 6, N = 4;
    const auto recs = synthesize_dataset(K, N, seed);
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < recs.size(); ++i)
      for (std::size_t j = i + 1; j < recs.size(); ++j) {
        const double d = model::recon_distance(sk, recs[i].frames, recs[j].frames).total;
        if (recs[i].class_id == recs[j].class_id) {
          intra += d;
          ++n_intra;
        } else {
          inter += d;
          ++n_inter;
        }
      }
    EXPECT_LT(intra / n_intra, inter / n_inter) << seed;
  }
}

TEST(MotionFile, RoundTripAtFloatPrecision) {
  MotionFile m{29.97, synthesize_motion(4, {}, 20, 30.0)};
  const auto bytes = encode_motion(m);
  EXPECT_EQ(bytes.size(), 28u + 20u * 144u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MCLP");
  const auto back = decode_motion(bytes);
  EXPECT_EQ(back.fps, 29.97);
  ASSERT_EQ(back.frames.shape(), m.frames.shape());
  for (std::size_t i = 0; i < m.frames.size(); ++i)
    EXPECT_EQ(back.frames[i], static_cast<double>(static_cast<float>(m.frames[i])));
}

TEST(MotionFile, CorruptBlobsRejected) {
  auto bytes = encode_motion({30.0, rest_frames(3)});
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_motion(truncated), IntegrityError);
  EXPECT_THROW(decode_motion(std::span<const std::uint8_t>(bytes.data(), 10)), IntegrityError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_motion(magic), IntegrityError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_motion(version), UnsupportedError);
  auto joints = bytes;
  joints[20] = 22;
  EXPECT_THROW(decode_motion(joints), InputError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  auto recs = synthesize_dataset(2, 2, 3);
  recs[1].labels.push_back({10, 20, "extra"});
  save_dataset(dir.path, recs);
  EXPECT_TRUE(fs::exists(dir.path / "manifest.json"));
  const auto back = load_dataset(dir.path);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(back[i].labels, recs[i].labels);
    EXPECT_EQ(back[i].class_id, recs[i].class_id);
    for (std::size_t k = 0; k < recs[i].frames.size(); ++k)
      EXPECT_NEAR(back[i].frames[k], recs[i].frames[k], 1e-7);
  }
  // A second save of the loaded data reproduces the files byte for byte.
  TempDir again;
  save_dataset(again.path, back);
  std::ifstream a(dir.path / "manifest.json"), b(again.path / "manifest.json");
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
}

TEST(Dataset, UnsafeOrDuplicateIdsRejected) {
  TempDir dir;
  auto recs = synthesize_dataset(1, 2, 3);
  recs[0].id = "../escape";
  EXPECT_THROW(save_dataset(dir.path, recs), InputError);
  recs[0].id = recs[1].id;
  EXPECT_THROW(save_dataset(dir.path, recs), InputError);
}

TEST(Babel, ImportsFrameAndSequenceLabels) {
  TempDir dir;
  fs::create_directories(dir.path / "motions");
  write_motion(dir.path / "motions" / "12.mclip", {30.0, rest_frames(90)});
  write_motion(dir.path / "motions" / "seqB.mclip", {60.0, rest_frames(40)});
  std::ofstream(dir.path / "babel.json") << R"({
    "12": {"babel_sid": 12, "dur": 3.0,
           "seq_ann": {"labels": [{"raw_label": "walk around", "proc_label": "walk"}]},
           "frame_ann": {"labels": [
             {"raw_label": "Walk", "proc_label": "walk", "start_t": 0.0, "end_t": 1.5},
             {"raw_label": "wave hand", "proc_label": null, "start_t": 1.0, "end_t": 9.0},
             {"raw_label": "late", "proc_label": "late", "start_t": 5.0, "end_t": 6.0}]}},
    "seqB": {"seq_ann": {"labels": [{"raw_label": "t pose"}]}, "frame_ann": null},
    "missing": {"seq_ann": {"labels": [{"raw_label": "x"}]}}
  })";
  const auto res = import_babel(dir.path / "babel.json", dir.path / "motions");
  ASSERT_EQ(res.records.size(), 2u);
  ASSERT_EQ(res.skipped.size(), 1u);
  EXPECT_NE(res.skipped[0].find("missing"), std::string::npos);

  const auto& a = res.records[0];
  EXPECT_EQ(a.id, "babel-12");
  // 0.0-1.5 s at 30 fps covers frames 0..44; 1.0-9.0 s is clipped to 30..89;
  // a span starting after the last frame is dropped.
  ASSERT_EQ(a.labels.size(), 2u);
  EXPECT_EQ(a.labels[0], (LabelSpan{0, 44, "walk"}));
  EXPECT_EQ(a.labels[1], (LabelSpan{30, 89, "wave hand"}));

  const auto& b = res.records[1];
  EXPECT_EQ(b.id, "babel-seqB");
  EXPECT_EQ(b.fps, 60.0);
  ASSERT_EQ(b.labels.size(), 1u);
  EXPECT_EQ(b.labels[0], (LabelSpan{0, 39, "t pose"}));
}

TEST(Babel, MalformedJsonIsInputError) {
  TempDir dir;
  std::ofstream(dir.path / "bad.json") << "{ not json";
  EXPECT_THROW(import_babel(dir.path / "bad.json", dir.path), InputError);
}

TEST(Pipeline, DeterministicAndOrderedById) {
  embed::StubProvider stub;
  auto recs = synthesize_dataset(2, 2, 5);
  MotionRecord longer;
  longer.id = "a-long";
  longer.fps = 60.0;
  longer.frames = synthesize_motion(3, {}, 240, 60.0);
  longer.labels = {{0, 100, "jump"}, {150, 239, "land"}};
  recs.push_back(longer);

  const auto& sk = skel::SkeletonModel::canonical();
  const auto a = build_triplets(recs, sk, stub, 9);
  std::reverse(recs.begin(), recs.end());
  const auto b = build_triplets(recs, sk, stub, 9);
  // a-long at 30 fps: 120 frames, windows at 0, 30, 60.
  ASSERT_EQ(a.size(), 3u + 4u);
  EXPECT_EQ(a[0].id, "a-long#0");
  EXPECT_EQ(a[2].id, "a-long#2");
  EXPECT_EQ(a[0].text, "jump");
  EXPECT_EQ(a[1].text, "jump, land");
  EXPECT_EQ(a[2].text, "land");
  EXPECT_EQ(a[3].id, "synth-squat-000#0");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].frame_index, b[i].frame_index);
    EXPECT_EQ(render::image_checksum(*a[i].image), render::image_checksum(*b[i].image));
    EXPECT_EQ(*a[i].text_emb, *b[i].text_emb);
    EXPECT_EQ(*a[i].image_emb, *b[i].image_emb);
    EXPECT_TRUE(a[i].motion.bitwise_equal(b[i].motion));
  }
}

TEST(Stats, CountsFramesAndLabels) {
  auto recs = synthesize_dataset(2, 3, 1);
  const auto s = dataset_stats(recs);
  EXPECT_EQ(s.records, 6u);
  EXPECT_EQ(s.frames, 360u);
  EXPECT_DOUBLE_EQ(s.seconds, 12.0);
  ASSERT_EQ(s.labels.size(), 2u);
  EXPECT_EQ(s.labels[0], (std::pair<std::string, std::size_t>{"squat", 3}));
  EXPECT_EQ(s.labels[1], (std::pair<std::string, std::size_t>{"wave", 3}));
}
