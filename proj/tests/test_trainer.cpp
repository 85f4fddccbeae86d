#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "motalign/error.hpp"
#include "motalign/hashing.hpp"
#include "motalign/trainer.hpp"

using namespace motalign;
using namespace motalign::train;
namespace fs = std::filesystem;

namespace {

const skel::SkeletonModel& canon() { return skel::SkeletonModel::canonical(); }

TrainConfig tiny_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 3;
  c.epochs = 2;
  c.seed = 4;
  c.model.layers = 2;
  c.model.d_model = 32;
  c.model.heads = 4;
  c.model.ff_width = 64;
  c.model.max_frames = 60;
  return c;
}

std::vector<TrainItem> tiny_items(std::size_t d = 32) {
  embed::StubProvider stub(d, 0);
  data::PipelineOptions po;
  po.triplet.keep_image = false;
  return prepare_items(data::build_triplets(data::synthesize_dataset(2, 4, 3), canon(), stub, 5, po), canon());
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("motalign-train-" + std::to_string(Rng(std::random_device{}()).next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(TrainConfig, ParsesFlatKeyValueText) {
  const auto c = TrainConfig::parse(R"(# toy run
learning_rate = 0.0005
batch_size = 4   # per step
epochs=12
seed = 99
lambda_text = 0.01
lambda_image = 0
layers = 2
d_model = 64
heads = 4
ff_width = 128
)");
  EXPECT_EQ(c.learning_rate, 0.0005);
  EXPECT_EQ(c.batch_size, 4u);
  EXPECT_EQ(c.epochs, 12u);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.lambda_image, 0.0);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.model.d_model, 64u);
  EXPECT_EQ(c.model.max_frames, 60u);
  EXPECT_EQ(TrainConfig::parse(c.to_text()), c);
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
}

TEST(TrainConfig, RejectsBadInput) {
  EXPECT_THROW(TrainConfig::parse("learning_rat = 1"), InputError);
  EXPECT_THROW(TrainConfig::parse("learning_rate = fast"), InputError);
  EXPECT_THROW(TrainConfig::parse("learning_rate = 0"), InputError);
  EXPECT_THROW(TrainConfig::parse("beta1 = 1"), InputError);
  EXPECT_THROW(TrainConfig::parse("lambda_text = -0.1"), InputError);
  EXPECT_THROW(TrainConfig::parse("batch_size = 0"), InputError);
  EXPECT_THROW(TrainConfig::parse("heads = 7"), InputError);
  EXPECT_THROW(TrainConfig::parse("just words"), InputError);
  const TrainConfig d;
  EXPECT_EQ(d.learning_rate, 1e-4);
  EXPECT_EQ(d.lambda_text, 0.01);
  EXPECT_EQ(d.lambda_image, 0.01);
}

TEST(TrainConfig, LinearScheduleDecaysToLastStep) {
  auto c = TrainConfig::parse("learning_rate = 0.4\nlr_schedule = linear\n");
  EXPECT_EQ(c.lr_schedule, "linear");
  EXPECT_DOUBLE_EQ(c.learning_rate_at(1, 4), 0.4);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(2, 4), 0.3);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(4, 4), 0.1);
  EXPECT_DOUBLE_EQ(c.learning_rate_at(9, 4), 0.1);
  EXPECT_EQ(TrainConfig::parse(c.to_text()), c);
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  auto j = c.to_json();
  j.erase("lr_schedule");
  EXPECT_EQ(TrainConfig::from_json(j).lr_schedule, "constant");
  EXPECT_DOUBLE_EQ(TrainConfig{}.learning_rate_at(50, 100), 1e-4);
  EXPECT_THROW(TrainConfig::parse("lr_schedule = cosine"), InputError);
}

TEST(Adam, MatchesScalarRecurrence) {
  std::vector<ad::Parameter> params(1);
  params[0].name = "w";
  params[0].value = ad::Tensor::vector({1.0, -2.0});
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  OptimizerState s;
  const std::vector<std::array<double, 2>> grads{{0.5, -1.0}, {0.25, 3.0}, {-1.0, 0.0}};
  std::array<double, 2> w{1.0, -2.0}, m{0, 0}, v{0, 0};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    params[0].grad = {grads[t - 1][0], grads[t - 1][1]};
    adam_step(params, s, cfg);
    for (int k = 0; k < 2; ++k) {
      const double g = grads[t - 1][k];
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mh = m[k] / (1 - std::pow(0.9, t));
      const double vh = v[k] / (1 - std::pow(0.999, t));
      w[k] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(params[0].value[k], w[k], 1e-15);
    }
  }
  EXPECT_EQ(s.step, 3u);
  // First step moves each weight by lr against the gradient sign.
  std::vector<ad::Parameter> fresh(1);
  fresh[0].value = ad::Tensor::vector({0.0});
  fresh[0].grad = {0.5};
  OptimizerState s2;
  adam_step(fresh, s2, cfg);
  EXPECT_NEAR(fresh[0].value[0], -0.1, 1e-8);
}

TEST(Clip, GlobalNormBounded) {
  std::vector<ad::Parameter> params(2);
  params[0].value = ad::Tensor::vector({0, 0});
  params[1].value = ad::Tensor::vector({0});
  params[0].grad = {3.0, 0.0};
  params[1].grad = {4.0};
  EXPECT_DOUBLE_EQ(clip_gradients(params, 1.0), 5.0);
  EXPECT_NEAR(std::hypot(params[0].grad[0], params[0].grad[1], params[1].grad[0]), 1.0, 1e-15);
  EXPECT_NEAR(params[0].grad[0], 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(clip_gradients(params, 10.0), 1.0);
  EXPECT_NEAR(params[1].grad[0], 0.8, 1e-15);
}

TEST(Train, SameSeedSameMetricsLog) {
  const auto items = tiny_items();
  std::string logs[2];
  for (auto& log : logs) {
    model::MotionClipModel m(tiny_config().model, 1);
    Trainer t(m, canon(), tiny_config());
    std::ostringstream sink;
    TrainOptions o;
    o.metrics = &sink;
    t.train(items, o);
    log = sink.str();
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(std::count(logs[0].begin(), logs[0].end(), '\n'), 3);
  const auto first = nlohmann::json::parse(logs[0].substr(0, logs[0].find('\n')));
  EXPECT_EQ(first["epoch"], 0);
  EXPECT_EQ(first["step"], 0);
}

TEST(Train, LossDecreasesAndStaysFinite) {
  const auto items = tiny_items();
  auto cfg = tiny_config();
  cfg.epochs = 6;
  model::MotionClipModel m(cfg.model, 2);
  Trainer t(m, canon(), cfg);
  const auto log = t.train(items);
  ASSERT_EQ(log.size(), 7u);
  for (const auto& r : log) EXPECT_TRUE(std::isfinite(r["total"].get<double>()));
  EXPECT_LT(log.back()["total"].get<double>(), 0.5 * log.front()["total"].get<double>());
  EXPECT_EQ(t.step(), 6u * 3u);  // 8 items in batches of 3
}

TEST(Train, ZeroLambdaIsPlainAutoEncoder) {
  const auto items = tiny_items();
  auto cfg = tiny_config();
  cfg.lambda_text = cfg.lambda_image = 0.0;
  model::MotionClipModel m(cfg.model, 2);
  Trainer t(m, canon(), cfg);
  for (const auto& r : t.train(items)) {
    EXPECT_EQ(r["total"].get<double>(), r["recon"].get<double>());
    EXPECT_GT(r["text"].get<double>(), 0.0);
    EXPECT_GT(r["image"].get<double>(), 0.0);
  }
}

TEST(Train, MissingTargetsContributeNothing) {
  auto items = tiny_items();
  for (auto& i : items) i.image_emb.reset();
  auto cfg = tiny_config();
  model::MotionClipModel m(cfg.model, 2);
  Trainer t(m, canon(), cfg);
  const auto l = t.evaluate_loss(items);
  EXPECT_EQ(l.image, 0.0);
  EXPECT_DOUBLE_EQ(l.total, l.recon + 0.01 * l.text);
}

TEST(Train, NonFiniteLossAborts) {
  const auto items = tiny_items();
  auto cfg = tiny_config();
  model::MotionClipModel m(cfg.model, 2);
  m.parameter("dec.out.b").value.mutable_data()[3] = std::nan("");
  Trainer t(m, canon(), cfg);
  TempDir dir;
  TrainOptions o;
  o.checkpoint_dir = dir.path;
  try {
    t.run_epoch(items);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("snapshot"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("synth-"), std::string::npos);
  }
  Trainer t2(m, canon(), cfg);
  EXPECT_THROW(t2.train(items, o), NumericError);
  EXPECT_TRUE(fs::exists(dir.path / "nan_snapshot.txt"));
}

TEST(Train, DimensionMismatchRejected) {
  const auto items = tiny_items(16);
  model::MotionClipModel m(tiny_config().model, 2);
  Trainer t(m, canon(), tiny_config());
  EXPECT_THROW(t.run_epoch(items), DimensionError);
  auto other = tiny_config();
  other.model.d_model = 64;
  EXPECT_THROW(Trainer(m, canon(), other), ConfigMismatchError);
}

TEST(Evaluate, PerfectAlignmentFixture) {
  auto items = tiny_items();
  model::MotionClipModel m(tiny_config().model, 6);
  // Class embedding := the latent of one item of that class; every item's
  // text target := its own latent.
  std::vector<embed::SemanticVector> classes(2);
  for (auto& i : items) {
    const auto z = m.encode(i.motion);
    i.text_emb = embed::SemanticVector{{z.data().begin(), z.data().end()}};
  }
  std::vector<TrainItem> probe;
  for (const auto& i : items)
    if (classes[i.class_id].values.empty()) {
      classes[i.class_id] = *i.text_emb;
      probe.push_back(i);
    }
  const auto e = evaluate(m, canon(), probe, classes);
  EXPECT_EQ(e.count, 2u);
  EXPECT_EQ(e.top1, 1.0);
  EXPECT_EQ(e.top5, 1.0);
  EXPECT_NEAR(e.text_cosine, 1.0, 1e-12);

  const auto all = evaluate(m, canon(), items, classes);
  for (double v : {all.top1, all.top5}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GE(all.image_cosine, -1.0);
  EXPECT_LE(all.image_cosine, 1.0);
  const auto j = all.to_json();
  for (const char* key : {"count", "recon", "text_cosine", "image_cosine", "top1", "top5"}) EXPECT_TRUE(j.contains(key));
}

TEST(Checkpoint, BitwiseRoundTrip) {
  auto cfg = tiny_config();
  model::MotionClipModel m(cfg.model, 7);
  Trainer t(m, canon(), cfg);
  t.run_epoch(tiny_items());
  const auto ck = make_checkpoint(m, "stub-v1-d32-s0", t.state());
  TempDir dir;
  save_checkpoint(dir.path / "a.mclk", ck);
  const auto back = load_checkpoint(dir.path / "a.mclk");
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  EXPECT_EQ(back.provider_id, "stub-v1-d32-s0");
  const auto m2 = instantiate(back, cfg.model);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    EXPECT_TRUE(m.parameters()[i].value.bitwise_equal(m2.parameters()[i].value));
  ASSERT_TRUE(back.train);
  EXPECT_EQ(back.train->epoch, 1u);
  EXPECT_EQ(back.train->optimizer.step, 3u);
  EXPECT_EQ(back.train->optimizer.m, t.state().optimizer.m);
  EXPECT_EQ(back.train->rng_state, t.state().rng_state);
}

TEST(Checkpoint, CorruptionAndMismatchRejected) {
  model::MotionClipModel m(tiny_config().model, 7);
  const auto bytes = encode_checkpoint(make_checkpoint(m, "p"));
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 1)), IntegrityError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(20)), IntegrityError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(flipped), IntegrityError);

  // A future version with a valid checksum.
  std::vector<std::uint8_t> v2(bytes.begin(), bytes.end() - 32);
  v2[4] = 2;
  const auto digest = sha256(v2);
  v2.insert(v2.end(), digest.begin(), digest.end());
  EXPECT_THROW(decode_checkpoint(v2), UnsupportedError);

  auto other = tiny_config().model;
  other.layers = 3;
  EXPECT_THROW(instantiate(decode_checkpoint(bytes), other), ConfigMismatchError);
  EXPECT_NO_THROW(instantiate(decode_checkpoint(bytes), tiny_config().model));
}

TEST(Checkpoint, ResumeMatchesUnbrokenRun) {
  const auto items = tiny_items();
  auto cfg = tiny_config();
  cfg.epochs = 2;

  model::MotionClipModel straight(cfg.model, 9);
  Trainer a(straight, canon(), cfg);
  const auto full = a.train(items);

  TempDir dir;
  {
    model::MotionClipModel m(cfg.model, 9);
    Trainer t(m, canon(), cfg);
    t.run_epoch(items);
    save_checkpoint(dir.path / "mid.mclk", make_checkpoint(m, "stub", t.state()));
  }
  const auto ck = load_checkpoint(dir.path / "mid.mclk");
  auto resumed = instantiate(ck, cfg.model);
  Trainer b(resumed, canon(), cfg);
  b.restore(*ck.train);
  const auto rest = b.train(items);
  ASSERT_EQ(rest.size(), 1u);
  const double expect = full.back()["total"].get<double>();
  EXPECT_LE(std::abs(rest[0]["total"].get<double>() - expect), 1e-10 * std::abs(expect));
  EXPECT_EQ(rest[0]["step"], full.back()["step"]);
  for (std::size_t i = 0; i < straight.parameters().size(); ++i)
    EXPECT_TRUE(straight.parameters()[i].value.bitwise_equal(resumed.parameters()[i].value));

  auto changed = cfg;
  changed.learning_rate = 0.5;
  model::MotionClipModel m3(cfg.model, 9);
  Trainer c(m3, canon(), changed);
  EXPECT_THROW(c.restore(*ck.train), ConfigMismatchError);
}

TEST(Checkpoint, ResumeKeepsLinearSchedule) {
  const auto items = tiny_items();
  auto cfg = tiny_config();
  cfg.lr_schedule = "linear";
  model::MotionClipModel straight(cfg.model, 9);
  Trainer a(straight, canon(), cfg);
  a.train(items);

  model::MotionClipModel m(cfg.model, 9);
  Trainer t(m, canon(), cfg);
  t.run_epoch(items);
  const auto ck = decode_checkpoint(encode_checkpoint(make_checkpoint(m, "stub", t.state())));
  auto resumed = instantiate(ck, cfg.model);
  Trainer b(resumed, canon(), cfg);
  b.restore(*ck.train);
  b.train(items);
  for (std::size_t i = 0; i < straight.parameters().size(); ++i)
    EXPECT_TRUE(straight.parameters()[i].value.bitwise_equal(resumed.parameters()[i].value));

  model::MotionClipModel flat(cfg.model, 9);
  auto constant = cfg;
  constant.lr_schedule = "constant";
  Trainer c(flat, canon(), constant);
  c.train(items);
  EXPECT_FALSE(flat.parameters()[0].value.bitwise_equal(straight.parameters()[0].value));
}

TEST(Checkpoint, WrittenAtEvalIntervals) {
  const auto items = tiny_items();
  auto cfg = tiny_config();
  cfg.epochs = 3;
  cfg.eval_interval = 2;
  model::MotionClipModel m(cfg.model, 9);
  Trainer t(m, canon(), cfg);
  TempDir dir;
  TrainOptions o;
  o.checkpoint_dir = dir.path;
  o.held_out = &items;
  std::vector<std::uint64_t> evals;
  o.on_record = [&](const nlohmann::json& r) {
    if (r["type"] == "eval") evals.push_back(r["epoch"].get<std::uint64_t>());
  };
  t.train(items, o);
  EXPECT_EQ(evals, (std::vector<std::uint64_t>{2, 3}));
  const auto ck = load_checkpoint(dir.path / "checkpoint.mclk");
  EXPECT_EQ(ck.train->epoch, 3u);
}
