#include "motalign/model.hpp"

#include <cmath>

#include "motalign/error.hpp"
#include "motalign/random.hpp"

namespace motalign::model {

namespace {

constexpr double kInitStd = 0.02;

}  // namespace

void ModelConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || ff_width == 0 || max_frames == 0) {
    throw InputError("model config: layers, d_model, heads, ff_width and max_frames must be positive");
  }
  if (d_model % heads != 0) {
    throw InputError("model config: d_model " + std::to_string(d_model) + " is not divisible by heads " +
                     std::to_string(heads));
  }
  if (max_frames < 2) throw InputError("model config: max_frames must be at least 2");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"layers", layers}, {"d_model", d_model}, {"heads", heads}, {"ff_width", ff_width},
          {"max_frames", max_frames}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.layers = j.at("layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ff_width = j.at("ff_width").get<std::size_t>();
    c.max_frames = j.at("max_frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t encoder_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.ff_width, p = skel::kPoseWidth;
  const std::size_t layer = 4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d);
  return p * d + d + d + c.layers * layer + 2 * d;
}

std::size_t decoder_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.ff_width, p = skel::kPoseWidth;
  const std::size_t layer = 8 * (d * d + d) + 6 * d + (d * f + f) + (f * d + d);
  return 2 * d + c.layers * layer + 2 * d + d * p + p;
}

ad::Tensor positional_encoding(std::size_t first, std::size_t count, std::size_t d_model) {
  std::vector<double> pe(count * d_model);
  for (std::size_t r = 0; r < count; ++r) {
    const double pos = static_cast<double>(first + r);
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      pe[r * d_model + i] = std::sin(pos * freq);
      if (i + 1 < d_model) pe[r * d_model + i + 1] = std::cos(pos * freq);
    }
  }
  return ad::Tensor({count, d_model}, std::move(pe));
}

// ---- construction ------------------------------------------------------------

std::size_t MotionClipModel::add(std::string name, ad::Shape shape, double init_std, double fill,
                                 std::uint64_t seed) {
  const auto n = ad::shape_numel(shape);
  std::vector<double> v(n, fill);
  if (init_std > 0.0) {
    Rng rng(mix_seed(seed, params_.size()));
    for (auto& x : v) x = init_std * rng.normal();
  }
  params_.push_back({std::move(name), ad::Tensor(std::move(shape), std::move(v)), {}});
  return params_.size() - 1;
}

MotionClipModel::Linear MotionClipModel::add_linear(const std::string& name, std::size_t in, std::size_t out,
                                                    std::uint64_t seed) {
  Linear l;
  l.w = add(name + ".w", {in, out}, kInitStd, 0.0, seed);
  l.b = add(name + ".b", {out}, 0.0, 0.0, seed);
  return l;
}

MotionClipModel::Norm MotionClipModel::add_norm(const std::string& name) {
  Norm n;
  n.g = add(name + ".g", {config_.d_model}, 0.0, 1.0, 0);
  n.b = add(name + ".b", {config_.d_model}, 0.0, 0.0, 0);
  return n;
}

MotionClipModel::Attention MotionClipModel::add_attention(const std::string& name, std::uint64_t seed) {
  const auto d = config_.d_model;
  Attention a;
  a.q = add_linear(name + ".q", d, d, seed);
  a.k = add_linear(name + ".k", d, d, seed);
  a.v = add_linear(name + ".v", d, d, seed);
  a.o = add_linear(name + ".o", d, d, seed);
  return a;
}

MotionClipModel::MotionClipModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto d = config_.d_model, f = config_.ff_width;

  in_proj_ = add_linear("enc.in", skel::kPoseWidth, d, seed);
  token_ = add("enc.token", {d}, kInitStd, 0.0, seed);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = add_norm(p + ".ln1");
    layer.attn = add_attention(p + ".attn", seed);
    layer.ln2 = add_norm(p + ".ln2");
    layer.ff1 = add_linear(p + ".ff1", d, f, seed);
    layer.ff2 = add_linear(p + ".ff2", f, d, seed);
    enc_layers_.push_back(layer);
  }
  enc_final_ = add_norm("enc.ln");
  encoder_params_ = params_.size();

  mem_norm_ = add_norm("dec.mem_ln");
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    DecoderLayer layer;
    layer.ln1 = add_norm(p + ".ln1");
    layer.self_attn = add_attention(p + ".self", seed);
    layer.ln2 = add_norm(p + ".ln2");
    layer.cross_attn = add_attention(p + ".cross", seed);
    layer.ln3 = add_norm(p + ".ln3");
    layer.ff1 = add_linear(p + ".ff1", d, f, seed);
    layer.ff2 = add_linear(p + ".ff2", f, d, seed);
    dec_layers_.push_back(layer);
  }
  dec_final_ = add_norm("dec.ln");
  out_proj_ = add_linear("dec.out", d, skel::kPoseWidth, seed);
}

ad::Parameter& MotionClipModel::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw InputError("model has no parameter named '" + name + "'");
}

std::size_t MotionClipModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void MotionClipModel::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

MotionClipModel::Bound MotionClipModel::bind(ad::Graph& g) {
  Bound b;
  b.vars.reserve(params_.size());
  for (auto& p : params_) b.vars.push_back(g.parameter(p));
  return b;
}

MotionClipModel::Bound MotionClipModel::bind_frozen(ad::Graph& g) const {
  Bound b;
  b.vars.reserve(params_.size());
  for (const auto& p : params_) b.vars.push_back(g.constant(p.value));
  return b;
}

// ---- forward -----------------------------------------------------------------

ad::Var MotionClipModel::linear(const Bound& b, const Linear& l, ad::Var x) const {
  return ad::add_bias(ad::matmul(x, b.vars[l.w]), b.vars[l.b]);
}

ad::Var MotionClipModel::norm(const Bound& b, const Norm& n, ad::Var x) const {
  return ad::layer_norm(x, b.vars[n.g], b.vars[n.b]);
}

ad::Var MotionClipModel::attention(const Bound& b, const Attention& a, ad::Var xq, ad::Var xkv) const {
  const auto heads = config_.heads;
  const auto dh = config_.d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto q = linear(b, a.q, xq);
  auto k = linear(b, a.k, xkv);
  auto v = linear(b, a.v, xkv);
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = ad::slice(q, 1, h * dh, dh);
    auto kh = ad::slice(k, 1, h * dh, dh);
    auto vh = ad::slice(v, 1, h * dh, dh);
    auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
    outs.push_back(ad::matmul(ad::softmax(scores, 1), vh));
  }
  auto merged = heads == 1 ? outs.front() : ad::concat(outs, 1);
  return linear(b, a.o, merged);
}

ad::Var MotionClipModel::feed_forward(const Bound& b, const Linear& l1, const Linear& l2, ad::Var x) const {
  return linear(b, l2, ad::gelu(linear(b, l1, x)));
}

void MotionClipModel::check_frames(std::size_t frames, std::size_t min_frames, const char* what) const {
  if (frames < min_frames || frames > config_.max_frames) {
    throw InputError(std::string(what) + ": T = " + std::to_string(frames) + " outside [" +
                     std::to_string(min_frames) + ", " + std::to_string(config_.max_frames) + "]");
  }
}

ad::Var MotionClipModel::encode(const Bound& b, ad::Var motion) const {
  const auto& mv = motion.value();
  if (mv.rank() != 2 || mv.dim(1) != skel::kPoseWidth) {
    throw DimensionError("encode: motion must be [T,144], got " + ad::shape_string(mv.shape()));
  }
  const auto T = mv.dim(0);
  check_frames(T, 2, "encode");
  auto& g = motion.graph();
  const auto d = config_.d_model;

  auto frames = ad::add(linear(b, in_proj_, motion), g.constant(positional_encoding(1, T, d)));
  auto token = ad::add(ad::reshape(b.vars[token_], {1, d}), g.constant(positional_encoding(0, 1, d)));
  const std::vector<ad::Var> parts{token, frames};
  auto x = ad::concat(parts, 0);
  for (const auto& layer : enc_layers_) {
    auto h = norm(b, layer.ln1, x);
    x = ad::add(x, attention(b, layer.attn, h, h));
    x = ad::add(x, feed_forward(b, layer.ff1, layer.ff2, norm(b, layer.ln2, x)));
  }
  x = norm(b, enc_final_, x);
  return ad::reshape(ad::slice(x, 0, 0, 1), {d});
}

ad::Var MotionClipModel::decode(const Bound& b, ad::Var z, std::size_t frames) const {
  const auto d = config_.d_model;
  if (z.value().shape() != ad::Shape{d}) {
    throw DimensionError("decode: latent must be [" + std::to_string(d) + "], got " +
                         ad::shape_string(z.value().shape()));
  }
  check_frames(frames, 1, "decode");
  auto& g = z.graph();
  auto memory = norm(b, mem_norm_, ad::reshape(z, {1, d}));
  ad::Var x = g.constant(positional_encoding(1, frames, d));
  for (const auto& layer : dec_layers_) {
    auto h = norm(b, layer.ln1, x);
    x = ad::add(x, attention(b, layer.self_attn, h, h));
    x = ad::add(x, attention(b, layer.cross_attn, norm(b, layer.ln2, x), memory));
    x = ad::add(x, feed_forward(b, layer.ff1, layer.ff2, norm(b, layer.ln3, x)));
  }
  return linear(b, out_proj_, norm(b, dec_final_, x));
}

ad::Tensor MotionClipModel::encode(const ad::Tensor& motion) const {
  ad::Graph g;
  const auto b = bind_frozen(g);
  return encode(b, g.constant(motion)).value();
}

ad::Tensor MotionClipModel::decode(const ad::Tensor& z, std::size_t frames) const {
  ad::Graph g;
  const auto b = bind_frozen(g);
  return decode(b, g.constant(z), frames).value();
}

// ---- losses ------------------------------------------------------------------

ad::Tensor target_vertices(const skel::SkeletonModel& skeleton, const ad::Tensor& motion) {
  ad::Graph g;
  return skel::vertex_positions(skeleton, g.constant(motion)).value();
}

ReconTerms recon_loss(const skel::SkeletonModel& skeleton, ad::Var predicted, const ad::Tensor& target,
                      const ad::Tensor& target_vertices) {
  auto& g = predicted.graph();
  const auto& pv = predicted.value();
  if (pv.shape() != target.shape()) {
    throw ContractError("recon_loss: predicted " + ad::shape_string(pv.shape()) + " vs target " +
                        ad::shape_string(target.shape()));
  }
  if (pv.rank() != 2 || pv.dim(1) != skel::kPoseWidth) {
    throw DimensionError("recon_loss: expected [T,144], got " + ad::shape_string(pv.shape()));
  }
  const auto T = pv.dim(0);
  if (T < 2) throw ContractError("recon_loss: needs T >= 2 for the velocity term");
  const double P = static_cast<double>(skel::kPoseWidth);
  const double V3 = 3.0 * static_cast<double>(skeleton.vertex_count());
  const double Td = static_cast<double>(T);

  auto tgt = g.constant(target);
  auto diff = ad::sub(predicted, tgt);
  ReconTerms r;
  r.pose = ad::scale(ad::dot(diff, diff), 1.0 / (P * Td));

  auto verts = skel::vertex_positions(skeleton, predicted);
  if (verts.value().shape() != target_vertices.shape()) {
    throw ContractError("recon_loss: target vertices have shape " + ad::shape_string(target_vertices.shape()));
  }
  auto vdiff = ad::sub(verts, g.constant(target_vertices));
  r.vertex = ad::scale(ad::dot(vdiff, vdiff), 1.0 / (V3 * Td));

  // (p_{i+1} - p_i) - (p^_{i+1} - p^_i) equals the frame difference of diff.
  auto vel = ad::sub(ad::slice(diff, 0, 1, T - 1), ad::slice(diff, 0, 0, T - 1));
  r.velocity = ad::scale(ad::dot(vel, vel), 1.0 / (P * (Td - 1.0)));
  r.total = ad::add(ad::add(r.pose, r.vertex), r.velocity);
  return r;
}

ReconValues recon_distance(const skel::SkeletonModel& skeleton, const ad::Tensor& a, const ad::Tensor& b) {
  ad::Graph g;
  const auto terms = recon_loss(skeleton, g.constant(a), b, target_vertices(skeleton, b));
  return {terms.pose.value().item(), terms.vertex.value().item(), terms.velocity.value().item(),
          terms.total.value().item()};
}

ad::Var alignment_loss(ad::Var z, const embed::SemanticVector& target) {
  if (target.size() != z.value().size()) {
    throw DimensionError("alignment_loss: latent has " + std::to_string(z.value().size()) +
                         " entries, embedding has " + std::to_string(target.size()));
  }
  auto& g = z.graph();
  auto t = g.constant(ad::Tensor(z.value().shape(), target.values));
  return ad::add_scalar(ad::scale(ad::cosine_similarity(t, z), -1.0), 1.0);
}

ad::Var total_loss(ad::Var recon, std::optional<ad::Var> text, std::optional<ad::Var> image, double lambda_text,
                   double lambda_image) {
  if (lambda_text < 0.0 || lambda_image < 0.0) throw InputError("total_loss: lambda must be non-negative");
  ad::Var total = recon;
  if (text) total = ad::add(total, ad::scale(*text, lambda_text));
  if (image) total = ad::add(total, ad::scale(*image, lambda_image));
  return total;
}

}  // namespace motalign::model
