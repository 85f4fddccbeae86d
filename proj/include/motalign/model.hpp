#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "motalign/autodiff.hpp"
#include "motalign/embedding.hpp"
#include "motalign/skeleton.hpp"

namespace motalign::model {

struct ModelConfig {
  std::size_t layers = 8;
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t ff_width = 2048;
  std::size_t max_frames = 60;

  // Throws InputError when a field is zero or d_model % heads != 0.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Closed-form parameter counts for a configuration.
std::size_t encoder_parameter_count(const ModelConfig& c);
std::size_t decoder_parameter_count(const ModelConfig& c);

// Sinusoidal positional encoding rows for positions first..first+count-1.
ad::Tensor positional_encoding(std::size_t first, std::size_t count, std::size_t d_model);

// Transformer auto-encoder over [T, 144] pose blocks.
//
// Encoder: per-frame linear projection, learned prefix token at position 0,
// frames at positions 1..T, pre-LN self-attention blocks, final LayerNorm;
// the latent is the transformed prefix position.
//
// Decoder: queries are the positional encodings of positions 1..T; each block
// applies self-attention, cross-attention to the one-element memory
// LayerNorm(z), and a GELU feed-forward; final LayerNorm and a linear map back
// to 144 features.
class MotionClipModel {
 public:
  MotionClipModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  std::vector<ad::Parameter>& parameters() noexcept { return params_; }
  const std::vector<ad::Parameter>& parameters() const noexcept { return params_; }
  ad::Parameter& parameter(const std::string& name);
  std::size_t encoder_size() const noexcept { return encoder_params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  // Parameters placed on a graph. Trainable bindings accumulate gradients into
  // the Parameter buffers; frozen bindings are constants, so a const model
  // can be shared by concurrent readers.
  struct Bound {
    std::vector<ad::Var> vars;
  };
  Bound bind(ad::Graph& g);
  Bound bind_frozen(ad::Graph& g) const;

  // motion [T, 144] -> z [d_model]
  ad::Var encode(const Bound& b, ad::Var motion) const;
  // z [d_model] -> [T, 144]
  ad::Var decode(const Bound& b, ad::Var z, std::size_t frames) const;

  ad::Tensor encode(const ad::Tensor& motion) const;
  ad::Tensor decode(const ad::Tensor& z, std::size_t frames) const;

 private:
  struct Linear {
    std::size_t w, b;
  };
  struct Norm {
    std::size_t g, b;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention attn;
    Linear ff1, ff2;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self_attn, cross_attn;
    Linear ff1, ff2;
  };

  std::size_t add(std::string name, ad::Shape shape, double init_std, double fill, std::uint64_t seed);
  Linear add_linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed);
  Norm add_norm(const std::string& name);
  Attention add_attention(const std::string& name, std::uint64_t seed);

  ad::Var linear(const Bound& b, const Linear& l, ad::Var x) const;
  ad::Var norm(const Bound& b, const Norm& n, ad::Var x) const;
  ad::Var attention(const Bound& b, const Attention& a, ad::Var xq, ad::Var xkv) const;
  ad::Var feed_forward(const Bound& b, const Linear& l1, const Linear& l2, ad::Var x) const;
  void check_frames(std::size_t frames, std::size_t min_frames, const char* what) const;

  ModelConfig config_;
  std::vector<ad::Parameter> params_;
  std::size_t encoder_params_ = 0;  // number of leading tensors owned by the encoder

  Linear in_proj_{};
  std::size_t token_ = 0;
  std::vector<EncoderLayer> enc_layers_;
  Norm enc_final_{};
  Norm mem_norm_{};
  std::vector<DecoderLayer> dec_layers_;
  Norm dec_final_{};
  Linear out_proj_{};
};

// ---- losses ---------------------------------------------------------------

struct ReconTerms {
  ad::Var pose, vertex, velocity, total;
};

// Reconstruction loss of a predicted block against a fixed target:
//   |p - p^|^2 / (|p| T) + |v - v^|^2 / (|v| T) + |dp - dp^|^2 / (|p| (T-1))
// with |p| = 144, |v| = 3V and velocities taken on the pose parameters.
// target_vertices is [T, V, 3] (see skel::vertex_positions).
ReconTerms recon_loss(const skel::SkeletonModel& skeleton, ad::Var predicted, const ad::Tensor& target,
                      const ad::Tensor& target_vertices);

// Target vertices for recon_loss.
ad::Tensor target_vertices(const skel::SkeletonModel& skeleton, const ad::Tensor& motion);

struct ReconValues {
  double pose = 0.0, vertex = 0.0, velocity = 0.0, total = 0.0;
};
// Same formula on two sequences, no graph retained.
ReconValues recon_distance(const skel::SkeletonModel& skeleton, const ad::Tensor& a, const ad::Tensor& b);

// 1 - cos(target, z).
ad::Var alignment_loss(ad::Var z, const embed::SemanticVector& target);

// recon + lambda_text * text + lambda_image * image; an absent term
// contributes zero.
ad::Var total_loss(ad::Var recon, std::optional<ad::Var> text, std::optional<ad::Var> image, double lambda_text,
                   double lambda_image);

inline constexpr double kDefaultLambda = 0.01;

}  // namespace motalign::model
