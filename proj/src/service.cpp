#include "motalign/service.hpp"

#include <httplib.h>

#include <cmath>
#include <map>

#include "motalign/error.hpp"
#include "motalign/hashing.hpp"
#include "motalign/renderer.hpp"

namespace motalign::service {

// ---- runtime ------------------------------------------------------------------

Runtime::Runtime(const std::filesystem::path& checkpoint, embed::ProviderConfig provider) {
  auto ck = train::load_checkpoint(checkpoint);
  provider.dimension = ck.model.d_model;
  init(std::move(ck), embed::make_provider(provider));
}

Runtime::Runtime(train::Checkpoint checkpoint, std::shared_ptr<embed::EmbeddingProvider> provider) {
  init(std::move(checkpoint), std::move(provider));
}

void Runtime::init(train::Checkpoint checkpoint, std::shared_ptr<embed::EmbeddingProvider> provider) {
  if (!provider) throw ContractError("runtime needs an embedding provider");
  checkpoint_ = std::move(checkpoint);
  if (!checkpoint_.provider_id.empty() && checkpoint_.provider_id != provider->provider_id())
    throw ConfigMismatchError("checkpoint was trained with provider '" + checkpoint_.provider_id + "', got '" +
                              provider->provider_id() + "'");
  if (provider->dimension() != checkpoint_.model.d_model)
    throw ConfigMismatchError("provider dimension " + std::to_string(provider->dimension()) + " differs from d_model " +
                              std::to_string(checkpoint_.model.d_model));
  model_ = std::make_unique<model::MotionClipModel>(train::instantiate(checkpoint_));
  space_ = std::make_unique<ops::LatentSpace>(*model_, std::move(provider));
}

// ---- payloads -----------------------------------------------------------------

namespace {

double number(const json& j, const char* what) {
  if (!j.is_number()) throw InputError(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InputError(std::string(what) + " must be finite");
  return v;
}

const json& field(const json& req, const char* key) {
  if (!req.is_object() || !req.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  return req.at(key);
}

std::size_t count_field(const json& req, const char* key, std::size_t fallback) {
  if (!req.contains(key)) return fallback;
  const auto& v = req.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw InputError(std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

bool flag_field(const json& req, const char* key) {
  if (!req.contains(key)) return false;
  if (!req.at(key).is_boolean()) throw InputError(std::string("'") + key + "' must be a boolean");
  return req.at(key).get<bool>();
}

std::size_t frames_field(const json& req, const Runtime& rt) {
  const std::size_t t = count_field(req, "T", std::min<std::size_t>(60, rt.model().config().max_frames));
  if (t == 0) throw InputError("'T' must be positive");
  return t;
}

const skel::SkeletonModel* joints_source(const json& req, const Runtime& rt) {
  return flag_field(req, "joints") ? &rt.skeleton() : nullptr;
}

}  // namespace

ad::Tensor motion_from_json(const json& j, double* fps) {
  if (!j.is_object()) throw InputError("motion must be an object with 'frames'");
  const auto& frames = field(j, "frames");
  if (!frames.is_array() || frames.empty()) throw InputError("motion 'frames' must be a non-empty array");
  if (fps) *fps = j.contains("fps") ? number(j.at("fps"), "motion fps") : 30.0;
  if (fps && !(*fps > 0.0)) throw InputError("motion fps must be positive");
  std::vector<double> data;
  data.reserve(frames.size() * skel::kPoseWidth);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (!f.is_array() || f.size() != skel::kJointCount)
      throw InputError("motion frame " + std::to_string(t) + " must hold 24 joints");
    for (const auto& joint : f) {
      if (!joint.is_array() || joint.size() != skel::kRotWidth)
        throw InputError("motion frame " + std::to_string(t) + ": every joint needs 6 values");
      for (const auto& v : joint) data.push_back(number(v, "motion value"));
    }
  }
  return ad::Tensor({frames.size(), skel::kPoseWidth}, std::move(data));
}

json motion_to_json(const ad::Tensor& frames, double fps, const skel::SkeletonModel* joints_from) {
  const std::size_t T = frames.dim(0);
  json f = json::array();
  for (std::size_t t = 0; t < T; ++t) {
    json row = json::array();
    for (std::size_t j = 0; j < skel::kJointCount; ++j) {
      json r = json::array();
      for (std::size_t c = 0; c < skel::kRotWidth; ++c) r.push_back(frames.at(t, j * skel::kRotWidth + c));
      row.push_back(std::move(r));
    }
    f.push_back(std::move(row));
  }
  json out = {{"fps", fps}, {"frames", std::move(f)}};
  if (joints_from) {
    json joints = json::array();
    for (const auto& pose : skel::from_tensor(frames, fps).frames) {
      json row = json::array();
      for (const auto& p : joints_from->forward_kinematics(pose)) row.push_back({p.x(), p.y(), p.z()});
      joints.push_back(std::move(row));
    }
    out["joints"] = std::move(joints);
  }
  return out;
}

ad::Tensor latent_from_json(const json& j, std::size_t dimension) {
  if (!j.is_array()) throw InputError("latent must be an array of numbers");
  if (j.size() != dimension)
    throw DimensionError("latent has " + std::to_string(j.size()) + " values, model expects " + std::to_string(dimension));
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(number(x, "latent value"));
  return ad::Tensor::vector(std::move(v));
}

json tensor_to_json(const ad::Tensor& t) { return json(std::vector<double>(t.data().begin(), t.data().end())); }

std::string to_body(const json& j) { return j.dump() + "\n"; }

Response error_response(const std::exception& e) {
  static const std::map<std::string, int> status = {
      {"input_error", 400},     {"dimension_error", 400}, {"resolution_error", 400}, {"degenerate_error", 400},
      {"contract_error", 400},  {"unsupported", 400},     {"integrity_error", 400},  {"numeric_error", 422},
      {"config_mismatch", 409}, {"transport_error", 502}, {"io_error", 500}};
  json body;
  int code = 500;
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    const auto it = status.find(err->code());
    code = it == status.end() ? 500 : it->second;
    json detail = json::object();
    if (const auto* t = dynamic_cast<const TransportError*>(&e)) {
      detail["attempts"] = t->attempts();
      detail["last_status"] = t->last_status();
    }
    body = {{"code", err->code()}, {"message", err->what()}, {"detail", detail}};
  } else if (dynamic_cast<const json::exception*>(&e)) {
    code = 400;
    body = {{"code", "input_error"}, {"message", e.what()}, {"detail", json::object()}};
  } else {
    body = {{"code", "internal_error"}, {"message", e.what()}, {"detail", json::object()}};
  }
  return {code, to_body(body)};
}

// ---- handlers -----------------------------------------------------------------

json Api::model_info() const {
  const auto& m = rt_.model();
  return {{"model", m.config().to_json()},
          {"provider_id", rt_.checkpoint().provider_id},
          {"dimension", m.config().d_model},
          {"parameters", m.parameter_count()},
          {"skeleton_version", rt_.skeleton().version()}};
}

json Api::encode(const json& req) const {
  const auto z = rt_.space().encode(motion_from_json(field(req, "motion")));
  return {{"latent", tensor_to_json(z)}};
}

json Api::decode(const json& req) const {
  const auto z = latent_from_json(field(req, "latent"), rt_.space().dimension());
  return {{"motion", motion_to_json(rt_.space().decode(z, frames_field(req, rt_)), 30.0, joints_source(req, rt_))}};
}

json Api::text_to_motion(const json& req) const {
  const auto& text = field(req, "text");
  if (!text.is_string()) throw InputError("'text' must be a string");
  const auto z = rt_.space().embed_text(text.get<std::string>());
  return {{"latent", tensor_to_json(z)},
          {"motion", motion_to_json(rt_.space().decode(z, frames_field(req, rt_)), 30.0, joints_source(req, rt_))}};
}

namespace {

ad::Tensor latent_or_motion(const json& j, const ops::LatentSpace& space, const char* name) {
  if (j.is_array()) return latent_from_json(j, space.dimension());
  if (j.is_object()) return space.encode(motion_from_json(j));
  throw InputError(std::string("'") + name + "' must be a latent array or a motion object");
}

}  // namespace

json Api::interpolate(const json& req) const {
  const auto& space = rt_.space();
  const auto za = latent_or_motion(field(req, "a"), space, "a");
  const auto zb = latent_or_motion(field(req, "b"), space, "b");
  const std::size_t steps = count_field(req, "steps", 5);
  const std::size_t T = frames_field(req, rt_);
  const auto* joints = joints_source(req, rt_);
  json alphas = json::array(), latents = json::array(), motions = json::array();
  const auto zs = ops::LatentSpace::interpolate_latents(za, zb, steps);
  for (std::size_t k = 0; k < zs.size(); ++k) {
    alphas.push_back(static_cast<double>(k) / static_cast<double>(steps - 1));
    latents.push_back(tensor_to_json(zs[k]));
    motions.push_back(motion_to_json(space.decode(zs[k], T), 30.0, joints));
  }
  return {{"alphas", alphas}, {"latents", latents}, {"motions", motions}};
}

json Api::edit(const json& req) const {
  const auto& terms = field(req, "terms");
  if (!terms.is_array() || terms.empty()) throw InputError("'terms' must be a non-empty array");
  ops::EditExpression e;
  e.renormalize = flag_field(req, "renormalize");
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& t = terms[i];
    ops::EditTerm term;
    term.label = t.is_object() && t.contains("label") && t.at("label").is_string() ? t.at("label").get<std::string>()
                                                                                   : "term " + std::to_string(i);
    try {
      term.coefficient = t.contains("coef") ? number(t.at("coef"), "coef") : 1.0;
      term.kind = ops::parse_kind(field(t, "kind").get<std::string>());
      const auto& value = field(t, "value");
      switch (term.kind) {
        case ops::SourceKind::text:
          if (!value.is_string()) throw InputError("text value must be a string");
          term.text = value.get<std::string>();
          break;
        case ops::SourceKind::motion:
          term.motion = motion_from_json(value);
          break;
        case ops::SourceKind::latent:
          term.latent = latent_from_json(value, rt_.space().dimension());
          break;
      }
    } catch (const Error& err) {
      throw ResolutionError(term.label + ": " + err.what());
    } catch (const json::exception& err) {
      throw ResolutionError(term.label + ": " + err.what());
    }
    e.terms.push_back(std::move(term));
  }
  const auto z = rt_.space().edit_latent(e);
  return {{"latent", tensor_to_json(z)},
          {"motion", motion_to_json(rt_.space().decode(z, frames_field(req, rt_)), 30.0, joints_source(req, rt_))}};
}

json Api::classify(const json& req) const {
  const auto& classes_j = field(req, "classes");
  if (!classes_j.is_array()) throw InputError("'classes' must be an array of strings");
  std::vector<std::string> classes;
  for (const auto& c : classes_j) {
    if (!c.is_string()) throw InputError("'classes' must be an array of strings");
    classes.push_back(c.get<std::string>());
  }
  const double tau = req.contains("temperature") ? number(req.at("temperature"), "temperature") : ops::kDefaultTemperature;
  const auto z = req.contains("latent") ? latent_from_json(req.at("latent"), rt_.space().dimension())
                                        : rt_.space().encode(motion_from_json(field(req, "motion")));
  const auto s = rt_.space().classify_latent(z, classes, tau);
  const std::size_t k = count_field(req, "top_k", classes.size());
  json top = json::array();
  for (const auto i : s.top(k))
    top.push_back({{"class", s.classes[i]}, {"index", i}, {"probability", s.probabilities[i]}, {"cosine", s.cosines[i]}});
  return {{"classes", s.classes}, {"cosines", s.cosines}, {"probabilities", s.probabilities}, {"top", top}};
}

json Api::render_frame(const json& req) const {
  const auto frames = motion_from_json(field(req, "motion"));
  const std::size_t f = count_field(req, "frame", 0);
  if (f >= frames.dim(0))
    throw InputError("frame " + std::to_string(f) + " out of range for " + std::to_string(frames.dim(0)) + " frames");
  render::RenderStyle style;
  style.width = style.height = static_cast<int>(count_field(req, "size", 224));
  if (style.width < 16 || style.width > 2048) throw InputError("'size' must lie in [16, 2048]");
  const auto seq = skel::from_tensor(frames, 30.0);
  const auto img = render::rasterize(rt_.skeleton(), seq.frames[f], render::Camera::canonical(), style);
  return {{"frame", f}, {"width", img.width}, {"height", img.height}, {"png_base64", base64_encode(render::encode_png(img))}};
}

Response Api::handle(const std::string& method, const std::string& path, const std::string& body) const {
  using Handler = json (Api::*)(const json&) const;
  static const std::map<std::string, Handler> post = {
      {"/encode", &Api::encode},       {"/decode", &Api::decode}, {"/text-to-motion", &Api::text_to_motion},
      {"/interpolate", &Api::interpolate}, {"/edit", &Api::edit},  {"/classify", &Api::classify},
      {"/render-frame", &Api::render_frame}};
  const auto not_found = [&] {
    return Response{404, to_body({{"code", "not_found"}, {"message", "no endpoint " + path}, {"detail", json::object()}})};
  };
  const auto bad_method = [&] {
    return Response{405, to_body({{"code", "method_not_allowed"},
                                  {"message", method + " is not supported on " + path},
                                  {"detail", json::object()}})};
  };
  try {
    if (path == "/model-info") return method == "GET" ? Response{200, to_body(model_info())} : bad_method();
    const auto it = post.find(path);
    if (it == post.end()) return not_found();
    if (method != "POST") return bad_method();
    json req;
    try {
      req = json::parse(body);
    } catch (const json::exception&) {
      throw InputError("request body is not valid JSON");
    }
    if (!req.is_object()) throw InputError("request body must be a JSON object");
    return {200, to_body((this->*(it->second))(req))};
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

// ---- server -------------------------------------------------------------------

Server::Server(const Api& api, ServeOptions options)
    : api_(api), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  const int threads = std::max(1, options_.threads);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  server_->set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin}});
  server_->Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = api_.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server_->Get(".*", route);
  server_->Post(".*", route);
}

Server::~Server() { stop(); }

int Server::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
  } else {
    port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ < 0) throw IoError("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  return port_;
}

void Server::listen() { server_->listen_after_bind(); }

int Server::start() {
  const int port = bind();
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
  return port;
}

void Server::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace motalign::service
