#include "motalign/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "motalign/error.hpp"
#include "motalign/hashing.hpp"

namespace motalign::train {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config -------------------------------------------------------------------

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError(std::string("train config: ") + name + " must be positive");
  };
  positive(learning_rate, "learning_rate");
  positive(epsilon, "epsilon");
  positive(clip_norm, "clip_norm");
  if (batch_size == 0 || epochs == 0 || eval_interval == 0)
    throw InputError("train config: batch_size, epochs and eval_interval must be positive");
  if (!(lambda_text >= 0.0) || !(lambda_image >= 0.0) || !std::isfinite(lambda_text) || !std::isfinite(lambda_image))
    throw InputError("train config: lambda_text and lambda_image must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw InputError("train config: beta1 and beta2 must lie in (0, 1)");
  if (lr_schedule != "constant" && lr_schedule != "linear")
    throw InputError("train config: lr_schedule must be constant or linear, got '" + lr_schedule + "'");
  model.validate();
}

double TrainConfig::learning_rate_at(std::uint64_t step, std::uint64_t total_steps) const {
  if (lr_schedule != "linear" || total_steps == 0) return learning_rate;
  const double done = static_cast<double>(std::min(step, total_steps) - (step > 0 ? 1 : 0));
  return learning_rate * (1.0 - done / static_cast<double>(total_steps));
}

namespace {

std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw InputError("train config: bad value '" + value + "' for " + key);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;
  auto real = [&](double& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); };
  };
  auto count = [&](std::size_t& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<std::size_t>(k, v); };
  };
  setters["learning_rate"] = real(c.learning_rate);
  setters["batch_size"] = count(c.batch_size);
  setters["epochs"] = count(c.epochs);
  setters["seed"] = [&c](const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); };
  setters["lambda_text"] = real(c.lambda_text);
  setters["lambda_image"] = real(c.lambda_image);
  setters["beta1"] = real(c.beta1);
  setters["beta2"] = real(c.beta2);
  setters["epsilon"] = real(c.epsilon);
  setters["clip_norm"] = real(c.clip_norm);
  setters["eval_interval"] = count(c.eval_interval);
  setters["lr_schedule"] = [&c](const std::string&, const std::string& v) { c.lr_schedule = v; };
  setters["layers"] = count(c.model.layers);
  setters["d_model"] = count(c.model.d_model);
  setters["heads"] = count(c.model.heads);
  setters["ff_width"] = count(c.model.ff_width);
  setters["max_frames"] = count(c.model.max_frames);

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw InputError("train config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw InputError("train config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream o;
  o << "learning_rate = " << format_double(learning_rate) << '\n'
    << "batch_size = " << batch_size << '\n'
    << "epochs = " << epochs << '\n'
    << "seed = " << seed << '\n'
    << "lambda_text = " << format_double(lambda_text) << '\n'
    << "lambda_image = " << format_double(lambda_image) << '\n'
    << "beta1 = " << format_double(beta1) << '\n'
    << "beta2 = " << format_double(beta2) << '\n'
    << "epsilon = " << format_double(epsilon) << '\n'
    << "clip_norm = " << format_double(clip_norm) << '\n'
    << "eval_interval = " << eval_interval << '\n'
    << "lr_schedule = " << lr_schedule << '\n'
    << "layers = " << model.layers << '\n'
    << "d_model = " << model.d_model << '\n'
    << "heads = " << model.heads << '\n'
    << "ff_width = " << model.ff_width << '\n'
    << "max_frames = " << model.max_frames << '\n';
  return o.str();
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size}, {"epochs", epochs},
          {"seed", seed},                   {"lambda_text", lambda_text}, {"lambda_image", lambda_image},
          {"beta1", beta1},                 {"beta2", beta2},           {"epsilon", epsilon},
          {"clip_norm", clip_norm},         {"eval_interval", eval_interval}, {"lr_schedule", lr_schedule},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.lambda_text = j.at("lambda_text").get<double>();
    c.lambda_image = j.at("lambda_image").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.eval_interval = j.at("eval_interval").get<std::size_t>();
    c.lr_schedule = j.value("lr_schedule", std::string("constant"));
  } catch (const json::exception& e) {
    throw InputError(std::string("train config: ") + e.what());
  }
  c.model = model::ModelConfig::from_json(j.at("model"));
  return c;
}

// ---- items and optimisation -----------------------------------------------------

std::vector<TrainItem> prepare_items(const std::vector<data::Triplet>& triplets, const skel::SkeletonModel& skeleton) {
  std::vector<TrainItem> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    TrainItem item;
    item.id = t.id;
    item.motion = t.motion;
    item.target_vertices = model::target_vertices(skeleton, t.motion);
    item.text_emb = t.text_emb;
    item.image_emb = t.image_emb;
    item.class_id = t.class_id;
    out.push_back(std::move(item));
  }
  return out;
}

void adam_step(std::vector<ad::Parameter>& params, OptimizerState& s, const TrainConfig& cfg, double learning_rate) {
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.value.size(), 0.0);
      s.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw ContractError("optimizer state does not mirror the parameter list");
  ++s.step;
  const double t = static_cast<double>(s.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    auto& m = s.m[i];
    auto& v = s.v[i];
    if (m.size() != p.value.size()) throw ContractError("optimizer moment shape differs for " + p.name);
    auto w = p.value.mutable_data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      w[k] -= learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.epsilon);
    }
  }
}

double clip_gradients(std::vector<ad::Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad) g *= s;
  }
  return norm;
}

json EvalMetrics::to_json() const {
  return {{"count", count}, {"recon", recon}, {"text_cosine", text_cosine}, {"image_cosine", image_cosine},
          {"top1", top1},   {"top5", top5}};
}

EvalMetrics evaluate(const model::MotionClipModel& model, const skel::SkeletonModel& skeleton,
                     const std::vector<TrainItem>& items, const std::vector<embed::SemanticVector>& class_embeddings) {
  EvalMetrics m;
  std::size_t n_text = 0, n_image = 0, n_class = 0;
  for (const auto& item : items) {
    ad::Graph g;
    const auto b = model.bind_frozen(g);
    auto z = model.encode(b, g.constant(item.motion));
    auto r = model::recon_loss(skeleton, model.decode(b, z, item.motion.dim(0)), item.motion, item.target_vertices);
    m.recon += r.total.value().item();
    const auto zs = z.value().data();
    if (item.text_emb) {
      m.text_cosine += embed::cosine(zs, item.text_emb->span());
      ++n_text;
    }
    if (item.image_emb) {
      m.image_cosine += embed::cosine(zs, item.image_emb->span());
      ++n_image;
    }
    if (item.class_id >= 0 && static_cast<std::size_t>(item.class_id) < class_embeddings.size()) {
      std::vector<double> sims;
      for (const auto& c : class_embeddings) sims.push_back(embed::cosine(zs, c.span()));
      const double mine = sims[item.class_id];
      std::size_t rank = 0;
      for (std::size_t k = 0; k < sims.size(); ++k)
        if (sims[k] > mine || (sims[k] == mine && k < static_cast<std::size_t>(item.class_id))) ++rank;
      m.top1 += rank == 0 ? 1.0 : 0.0;
      m.top5 += rank < 5 ? 1.0 : 0.0;
      ++n_class;
    }
    ++m.count;
  }
  if (m.count) m.recon /= static_cast<double>(m.count);
  if (n_text) m.text_cosine /= static_cast<double>(n_text);
  if (n_image) m.image_cosine /= static_cast<double>(n_image);
  if (n_class) {
    m.top1 /= static_cast<double>(n_class);
    m.top5 /= static_cast<double>(n_class);
  }
  return m;
}

// ---- trainer --------------------------------------------------------------------

Trainer::Trainer(model::MotionClipModel& model, const skel::SkeletonModel& skeleton, TrainConfig config)
    : model_(model), skeleton_(skeleton), config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  if (!(config_.model == model_.config()))
    throw ConfigMismatchError("train config describes a different model than the one supplied");
}

void Trainer::restore(const TrainState& s) {
  if (!(s.config == config_)) throw ConfigMismatchError("checkpointed training config differs from the current one");
  if (!s.optimizer.m.empty() && s.optimizer.m.size() != model_.parameters().size())
    throw ConfigMismatchError("optimizer state does not match the model");
  optimizer_ = s.optimizer;
  epoch_ = s.epoch;
  rng_.deserialize(s.rng_state);
}

TrainState Trainer::state() const { return {config_, optimizer_, epoch_, rng_.serialize()}; }

namespace {

struct ItemValues {
  double recon = 0.0, text = 0.0, image = 0.0;
};

void check_dimension(const TrainItem& item, std::size_t d) {
  for (const auto* e : {&item.text_emb, &item.image_emb})
    if (*e && (*e)->size() != d)
      throw DimensionError("item '" + item.id + "': embedding dimension " + std::to_string((*e)->size()) +
                           " differs from d_model " + std::to_string(d));
}

}  // namespace

LossBreakdown Trainer::evaluate_loss(const std::vector<TrainItem>& items) const {
  LossBreakdown out;
  std::size_t nt = 0, ni = 0;
  for (const auto& item : items) {
    check_dimension(item, model_.config().d_model);
    ad::Graph g;
    const auto b = model_.bind_frozen(g);
    auto z = model_.encode(b, g.constant(item.motion));
    out.recon += model::recon_loss(skeleton_, model_.decode(b, z, item.motion.dim(0)), item.motion,
                                   item.target_vertices).total.value().item();
    if (item.text_emb) {
      out.text += model::alignment_loss(z, *item.text_emb).value().item();
      ++nt;
    }
    if (item.image_emb) {
      out.image += model::alignment_loss(z, *item.image_emb).value().item();
      ++ni;
    }
  }
  if (!items.empty()) out.recon /= static_cast<double>(items.size());
  if (nt) out.text /= static_cast<double>(nt);
  if (ni) out.image /= static_cast<double>(ni);
  out.total = out.recon + config_.lambda_text * out.text + config_.lambda_image * out.image;
  return out;
}

Trainer::EpochResult Trainer::run_epoch(const std::vector<TrainItem>& items) {
  if (items.empty()) throw InputError("training needs at least one item");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

  EpochResult result;
  auto& params = model_.parameters();
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    const double n = static_cast<double>(end - begin);
    std::size_t nt = 0, ni = 0;
    for (std::size_t k = begin; k < end; ++k) {
      nt += items[order[k]].text_emb ? 1 : 0;
      ni += items[order[k]].image_emb ? 1 : 0;
    }
    model_.zero_grad();
    LossBreakdown batch;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& item = items[order[k]];
      check_dimension(item, model_.config().d_model);
      ad::Graph g;
      const auto b = model_.bind(g);
      auto z = model_.encode(b, g.constant(item.motion));
      auto recon = model::recon_loss(skeleton_, model_.decode(b, z, item.motion.dim(0)), item.motion,
                                     item.target_vertices).total;
      ItemValues v{recon.value().item()};
      ad::Var loss = ad::scale(recon, 1.0 / n);
      if (item.text_emb) {
        auto t = model::alignment_loss(z, *item.text_emb);
        v.text = t.value().item();
        loss = ad::add(loss, ad::scale(t, config_.lambda_text / static_cast<double>(nt)));
      }
      if (item.image_emb) {
        auto s = model::alignment_loss(z, *item.image_emb);
        v.image = s.value().item();
        loss = ad::add(loss, ad::scale(s, config_.lambda_image / static_cast<double>(ni)));
      }
      if (!std::isfinite(loss.value().item())) {
        json snap = {{"epoch", epoch_ + 1},
                     {"step", optimizer_.step},
                     {"item", item.id},
                     {"recon", std::isfinite(v.recon) ? json(v.recon) : json("non-finite")},
                     {"text", std::isfinite(v.text) ? json(v.text) : json("non-finite")},
                     {"image", std::isfinite(v.image) ? json(v.image) : json("non-finite")}};
        json batch_ids = json::array();
        for (std::size_t q = begin; q < end; ++q) batch_ids.push_back(items[order[q]].id);
        snap["batch"] = batch_ids;
        throw NumericError("non-finite loss; snapshot " + snap.dump());
      }
      g.backward(loss);
      batch.recon += v.recon / n;
      if (nt) batch.text += v.text / static_cast<double>(nt);
      if (ni) batch.image += v.image / static_cast<double>(ni);
    }
    batch.total = batch.recon + config_.lambda_text * batch.text + config_.lambda_image * batch.image;
    const double norm = clip_gradients(params, config_.clip_norm);
    if (!std::isfinite(norm))
      throw NumericError("non-finite gradient norm at epoch " + std::to_string(epoch_ + 1) + ", step " +
                         std::to_string(optimizer_.step));
    const std::uint64_t per_epoch = (items.size() + config_.batch_size - 1) / config_.batch_size;
    adam_step(params, optimizer_, config_, config_.learning_rate_at(optimizer_.step + 1, per_epoch * config_.epochs));
    result.max_grad_norm = std::max(result.max_grad_norm, norm);
    result.loss.recon += batch.recon;
    result.loss.text += batch.text;
    result.loss.image += batch.image;
    result.loss.total += batch.total;
    ++result.batches;
  }
  const double nb = static_cast<double>(result.batches);
  result.loss.recon /= nb;
  result.loss.text /= nb;
  result.loss.image /= nb;
  result.loss.total /= nb;
  ++epoch_;
  return result;
}

void Trainer::emit(const json& record, const TrainOptions& options, std::vector<json>& log) const {
  if (options.metrics) *options.metrics << record.dump() << '\n' << std::flush;
  if (options.on_record) options.on_record(record);
  log.push_back(record);
}

namespace {

json loss_record(const char* type, std::uint64_t epoch, std::uint64_t step, const LossBreakdown& l) {
  return {{"type", type}, {"epoch", epoch},   {"step", step},   {"recon", l.recon},
          {"text", l.text}, {"image", l.image}, {"total", l.total}};
}

}  // namespace

std::vector<json> Trainer::train(const std::vector<TrainItem>& items, const TrainOptions& options) {
  if (items.empty()) throw InputError("training needs at least one item");
  std::vector<json> log;
  if (epoch_ == 0 && optimizer_.step == 0) {
    const auto initial = evaluate_loss(items);
    if (std::isfinite(initial.total)) emit(loss_record("train", 0, 0, initial), options, log);
  }
  while (epoch_ < config_.epochs) {
    EpochResult r;
    try {
      r = run_epoch(items);
    } catch (const NumericError& e) {
      if (options.checkpoint_dir) {
        fs::create_directories(*options.checkpoint_dir);
        std::ofstream(*options.checkpoint_dir / "nan_snapshot.txt") << e.what() << '\n';
      }
      throw;
    }
    json rec = loss_record("train", epoch_, optimizer_.step, r.loss);
    rec["grad_norm_max"] = r.max_grad_norm;
    emit(rec, options, log);
    const bool boundary = epoch_ % config_.eval_interval == 0 || epoch_ == config_.epochs;
    if (!boundary) continue;
    if (options.held_out && !options.held_out->empty()) {
      static const std::vector<embed::SemanticVector> none;
      const auto m = evaluate(model_, skeleton_, *options.held_out,
                              options.class_embeddings ? *options.class_embeddings : none);
      json e = m.to_json();
      e["type"] = "eval";
      e["epoch"] = epoch_;
      e["step"] = optimizer_.step;
      emit(e, options, log);
    }
    if (options.checkpoint_dir) {
      fs::create_directories(*options.checkpoint_dir);
      save_checkpoint(*options.checkpoint_dir / "checkpoint.mclk", make_checkpoint(model_, options.provider_id, state()));
    }
  }
  return log;
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw IntegrityError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    pos_ += 4;
    return get_u32(b_, pos_ - 4);
  }
  std::uint64_t u64() {
    need(8);
    pos_ += 8;
    return get_u64(b_, pos_ - 8);
  }
  double f64() {
    need(8);
    pos_ += 8;
    return get_f64(b_, pos_ - 8);
  }
  std::string str(std::size_t n) {
    need(n);
    pos_ += n;
    return std::string(b_.begin() + pos_ - n, b_.begin() + pos_);
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  std::vector<std::uint8_t> out{'M', 'C', 'K', 'P'};
  put_u32(out, kCheckpointVersion);
  json meta = {{"model", c.model.to_json()}, {"provider_id", c.provider_id}};
  if (c.train) {
    meta["train"] = c.train->config.to_json();
    meta["epoch"] = c.train->epoch;
    meta["step"] = c.train->optimizer.step;
  }
  put_str(out, meta.dump());
  put_u32(out, static_cast<std::uint32_t>(c.parameters.size()));
  for (const auto& [name, t] : c.parameters) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
  out.push_back(c.train ? 1 : 0);
  if (c.train) {
    const auto& o = c.train->optimizer;
    const bool has_moments = !o.m.empty();
    out.push_back(has_moments ? 1 : 0);
    if (has_moments) {
      if (o.m.size() != c.parameters.size() || o.v.size() != c.parameters.size())
        throw ContractError("optimizer state does not mirror the parameter list");
      for (std::size_t i = 0; i < c.parameters.size(); ++i)
        for (const auto* moments : {&o.m[i], &o.v[i]}) {
          if (moments->size() != c.parameters[i].second.size())
            throw ContractError("optimizer moment size differs for " + c.parameters[i].first);
          for (double v : *moments) put_f64(out, v);
        }
    }
    put_str(out, c.train->rng_state);
  }
  const auto digest = sha256(out);
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 + 32) throw IntegrityError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  const auto body = bytes.first(bytes.size() - 32);
  const auto digest = sha256(body);
  if (!std::equal(digest.begin(), digest.end(), bytes.end() - 32)) throw IntegrityError("checkpoint checksum mismatch");
  if (!std::equal(body.begin(), body.begin() + 4, "MCKP")) throw IntegrityError("not a checkpoint file");
  Reader r(body);
  r.str(4);
  if (const auto v = r.u32(); v != kCheckpointVersion) throw UnsupportedError("checkpoint version " + std::to_string(v));
  Checkpoint c;
  json meta;
  try {
    meta = json::parse(r.str(r.u32()));
    c.model = model::ModelConfig::from_json(meta.at("model"));
    c.provider_id = meta.at("provider_id").get<std::string>();
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint metadata: ") + e.what());
  }
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    ad::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u32());
    const std::size_t count = ad::shape_numel(shape);
    r.need(count * 8);
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    c.parameters.emplace_back(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
  }
  r.need(1);
  const bool has_train = body[r.pos()] != 0;
  r.str(1);
  if (has_train) {
    TrainState s;
    try {
      s.config = TrainConfig::from_json(meta.at("train"));
      s.epoch = meta.at("epoch").get<std::uint64_t>();
      s.optimizer.step = meta.at("step").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw IntegrityError(std::string("checkpoint metadata: ") + e.what());
    }
    r.need(1);
    const bool has_moments = body[r.pos()] != 0;
    r.str(1);
    if (has_moments) {
      for (const auto& [name, t] : c.parameters) {
        for (auto* moments : {&s.optimizer.m, &s.optimizer.v}) {
          r.need(t.size() * 8);
          auto& vec = moments->emplace_back(t.size());
          for (auto& v : vec) v = r.f64();
        }
      }
    }
    s.rng_state = r.str(r.u32());
    c.train = std::move(s);
  }
  if (r.pos() != body.size()) throw IntegrityError("checkpoint has trailing bytes");
  return c;
}

Checkpoint make_checkpoint(const model::MotionClipModel& model, const std::string& provider_id,
                           std::optional<TrainState> state) {
  Checkpoint c;
  c.model = model.config();
  c.provider_id = provider_id;
  for (const auto& p : model.parameters()) c.parameters.emplace_back(p.name, p.value);
  c.train = std::move(state);
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& c) {
  const auto bytes = encode_checkpoint(c);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

model::MotionClipModel instantiate(const Checkpoint& c, std::optional<model::ModelConfig> expected) {
  if (expected && !(*expected == c.model))
    throw ConfigMismatchError("checkpoint model config " + c.model.to_json().dump() + " differs from expected " +
                              expected->to_json().dump());
  model::MotionClipModel m(c.model, 0);
  auto& params = m.parameters();
  if (params.size() != c.parameters.size())
    throw ConfigMismatchError("checkpoint holds " + std::to_string(c.parameters.size()) + " tensors, model expects " +
                              std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = c.parameters[i];
    if (name != params[i].name || t.shape() != params[i].value.shape())
      throw ConfigMismatchError("checkpoint tensor '" + name + "' " + ad::shape_string(t.shape()) +
                                " does not match model tensor '" + params[i].name + "' " +
                                ad::shape_string(params[i].value.shape()));
    params[i].value = t;
  }
  return m;
}

}  // namespace motalign::train
