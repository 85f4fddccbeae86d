#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "motalign/data.hpp"
#include "motalign/model.hpp"
#include "motalign/random.hpp"

namespace motalign::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double lambda_text = model::kDefaultLambda;
  double lambda_image = model::kDefaultLambda;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  std::size_t eval_interval = 1;  // epochs between checkpoints / held-out evaluations
  std::string lr_schedule = "constant";  // "constant" | "linear" (decays towards zero at the last step)
  model::ModelConfig model;

  void validate() const;
  // Learning rate for 1-based optimizer step `step` of a run of total_steps.
  double learning_rate_at(std::uint64_t step, std::uint64_t total_steps) const;

  // Flat "key = value" text, one entry per line, '#' starts a comment. Keys
  // are the field names above; model fields are "layers", "d_model",
  // "heads", "ff_width", "max_frames". Unknown keys are rejected.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  std::vector<std::vector<double>> m, v;  // mirror the parameter list
  std::uint64_t step = 0;
};

// Everything needed to continue a run at an epoch boundary.
struct TrainState {
  TrainConfig config;
  OptimizerState optimizer;
  std::uint64_t epoch = 0;  // completed epochs
  std::string rng_state;
};

// A triplet prepared for training: target vertices precomputed.
struct TrainItem {
  std::string id;
  ad::Tensor motion;
  ad::Tensor target_vertices;
  std::optional<embed::SemanticVector> text_emb;
  std::optional<embed::SemanticVector> image_emb;
  int class_id = -1;
};

std::vector<TrainItem> prepare_items(const std::vector<data::Triplet>& triplets, const skel::SkeletonModel& skeleton);

struct LossBreakdown {
  double recon = 0.0;
  double text = 0.0;   // mean over items that carry a text target
  double image = 0.0;  // mean over items that carry an image target
  double total = 0.0;  // recon + lambda_text * text + lambda_image * image
};

// Adam update with bias correction. grads are the Parameter::grad buffers.
void adam_step(std::vector<ad::Parameter>& params, OptimizerState& state, const TrainConfig& cfg, double learning_rate);
inline void adam_step(std::vector<ad::Parameter>& params, OptimizerState& state, const TrainConfig& cfg) {
  adam_step(params, state, cfg, cfg.learning_rate);
}

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_gradients(std::vector<ad::Parameter>& params, double max_norm);

struct EvalMetrics {
  std::size_t count = 0;
  double recon = 0.0;
  double text_cosine = 0.0;   // mean cos(z, text_emb)
  double image_cosine = 0.0;  // mean cos(z, image_emb)
  double top1 = 0.0;
  double top5 = 0.0;
  nlohmann::json to_json() const;
};

// Held-out metrics. Retrieval ranks cos(z, class_embeddings[k]) for items
// with a class id; accuracy fields stay 0 when none have one.
EvalMetrics evaluate(const model::MotionClipModel& model, const skel::SkeletonModel& skeleton,
                     const std::vector<TrainItem>& items, const std::vector<embed::SemanticVector>& class_embeddings);

struct TrainOptions {
  std::ostream* metrics = nullptr;                         // NDJSON sink
  std::optional<std::filesystem::path> checkpoint_dir;     // checkpoint.mclk written at eval intervals
  const std::vector<TrainItem>* held_out = nullptr;
  const std::vector<embed::SemanticVector>* class_embeddings = nullptr;
  std::string provider_id;                                 // recorded in checkpoints
  std::function<void(const nlohmann::json&)> on_record;    // every metrics record
};

class Trainer {
 public:
  Trainer(model::MotionClipModel& model, const skel::SkeletonModel& skeleton, TrainConfig config);

  // Continue from a checkpointed state; the config must match.
  void restore(const TrainState& state);
  TrainState state() const;

  // Loss of the current parameters over items, no update.
  LossBreakdown evaluate_loss(const std::vector<TrainItem>& items) const;

  // One pass in shuffled batches; returns the mean of the batch losses and
  // the largest pre-clip gradient norm seen.
  struct EpochResult {
    LossBreakdown loss;
    double max_grad_norm = 0.0;
    std::size_t batches = 0;
  };
  EpochResult run_epoch(const std::vector<TrainItem>& items);

  // Runs the remaining epochs up to config.epochs. A fresh run first logs
  // the loss of the initial parameters as epoch 0.
  std::vector<nlohmann::json> train(const std::vector<TrainItem>& items, const TrainOptions& options = {});

  std::uint64_t epoch() const noexcept { return epoch_; }
  std::uint64_t step() const noexcept { return optimizer_.step; }

 private:
  void emit(const nlohmann::json& record, const TrainOptions& options, std::vector<nlohmann::json>& log) const;

  model::MotionClipModel& model_;
  const skel::SkeletonModel& skeleton_;
  TrainConfig config_;
  OptimizerState optimizer_;
  std::uint64_t epoch_ = 0;
  Rng rng_;
};

// ---- checkpoints --------------------------------------------------------------

struct Checkpoint {
  model::ModelConfig model;
  std::string provider_id;
  std::vector<std::pair<std::string, ad::Tensor>> parameters;
  std::optional<TrainState> train;
};

// Binary container: magic "MCKP", version, JSON metadata, named f64 tensors,
// optional optimizer moments and RNG state, trailing SHA-256 of everything
// before it.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint make_checkpoint(const model::MotionClipModel& model, const std::string& provider_id,
                           std::optional<TrainState> state = std::nullopt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds a model from a checkpoint. Throws ConfigMismatchError when expected
// is given and differs from the stored configuration.
model::MotionClipModel instantiate(const Checkpoint& c, std::optional<model::ModelConfig> expected = std::nullopt);

}  // namespace motalign::train
