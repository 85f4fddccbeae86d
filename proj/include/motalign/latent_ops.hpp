#pragma once

#include <memory>
#include <string>
#include <vector>

#include "motalign/embedding.hpp"
#include "motalign/model.hpp"

namespace motalign::ops {

inline constexpr double kDefaultTemperature = 0.01;

enum class SourceKind { motion, text, latent };

const char* kind_name(SourceKind k);
// "motion" | "text" | "latent"; InputError otherwise.
SourceKind parse_kind(const std::string& name);

struct EditTerm {
  double coefficient = 1.0;
  SourceKind kind = SourceKind::text;
  std::string text;     // kind == text
  ad::Tensor motion;    // kind == motion, [T, 144]
  ad::Tensor latent;    // kind == latent, [d_model]
  std::string label;    // used in error messages; defaults to "term <i>"
};

struct EditExpression {
  std::vector<EditTerm> terms;
  bool renormalize = false;  // rescale the sum to unit L2 norm
};

struct ClassScores {
  std::vector<std::string> classes;
  std::vector<double> cosines;
  std::vector<double> probabilities;

  // Indices of the k best classes, highest probability first; ties keep
  // input order.
  std::vector<std::size_t> top(std::size_t k) const;
};

// Read-only operations over a trained model. Safe for concurrent use when
// the provider is.
class LatentSpace {
 public:
  LatentSpace(const model::MotionClipModel& model, std::shared_ptr<embed::EmbeddingProvider> provider);

  const model::MotionClipModel& model() const noexcept { return model_; }
  embed::EmbeddingProvider& provider() const noexcept { return *provider_; }
  std::size_t dimension() const noexcept { return model_.config().d_model; }

  ad::Tensor encode(const ad::Tensor& motion) const;
  ad::Tensor decode(const ad::Tensor& z, std::size_t frames) const;
  // Text embedding as a latent; DimensionError when the provider dimension
  // differs from d_model.
  ad::Tensor embed_text(const std::string& text) const;

  ad::Tensor text_to_motion(const std::string& text, std::size_t frames = 60) const;

  // (1 - a) zA + a zB for a = k / (n - 1); the endpoints are zA and zB as given.
  static std::vector<ad::Tensor> interpolate_latents(const ad::Tensor& za, const ad::Tensor& zb, std::size_t steps);
  std::vector<ad::Tensor> interpolate(const ad::Tensor& za, const ad::Tensor& zb, std::size_t steps,
                                      std::size_t frames) const;

  // Sum of coefficient * vector(source). Terms with identical sources are
  // merged before scaling, so a single source whose coefficients add up to 1
  // reproduces that source's vector exactly. ResolutionError names the
  // failing term.
  ad::Tensor edit_latent(const EditExpression& e) const;
  ad::Tensor edit(const EditExpression& e, std::size_t frames) const;

  // softmax(cos(z, embed_text(class_i)) / temperature). At least two
  // distinct class names.
  ClassScores classify_latent(const ad::Tensor& z, const std::vector<std::string>& classes,
                              double temperature = kDefaultTemperature) const;
  ClassScores classify(const ad::Tensor& motion, const std::vector<std::string>& classes,
                       double temperature = kDefaultTemperature) const;

 private:
  ad::Tensor resolve(const EditTerm& term, const std::string& label) const;

  const model::MotionClipModel& model_;
  std::shared_ptr<embed::EmbeddingProvider> provider_;
};

}  // namespace motalign::ops
