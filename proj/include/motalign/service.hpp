#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "motalign/latent_ops.hpp"
#include "motalign/trainer.hpp"

namespace httplib {
class Server;
}

namespace motalign::service {

using nlohmann::json;

// A checkpoint loaded for inference together with its embedding provider.
class Runtime {
 public:
  // The provider dimension is taken from the checkpoint. ConfigMismatchError
  // when the checkpoint was trained against a different provider.
  Runtime(const std::filesystem::path& checkpoint, embed::ProviderConfig provider);
  Runtime(train::Checkpoint checkpoint, std::shared_ptr<embed::EmbeddingProvider> provider);
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  const train::Checkpoint& checkpoint() const noexcept { return checkpoint_; }
  const model::MotionClipModel& model() const noexcept { return *model_; }
  const ops::LatentSpace& space() const noexcept { return *space_; }
  const skel::SkeletonModel& skeleton() const noexcept { return skel::SkeletonModel::canonical(); }

 private:
  void init(train::Checkpoint checkpoint, std::shared_ptr<embed::EmbeddingProvider> provider);

  train::Checkpoint checkpoint_;
  std::unique_ptr<model::MotionClipModel> model_;
  std::unique_ptr<ops::LatentSpace> space_;
};

// ---- payloads -----------------------------------------------------------------

// {"fps": f, "frames": T x 24 x 6}. InputError on a malformed or non-finite
// payload.
ad::Tensor motion_from_json(const json& j, double* fps = nullptr);
json motion_to_json(const ad::Tensor& frames, double fps, const skel::SkeletonModel* joints_from = nullptr);
ad::Tensor latent_from_json(const json& j, std::size_t dimension);
json tensor_to_json(const ad::Tensor& t);

// Serialised response body shared by the HTTP service and the CLI's --json
// output.
std::string to_body(const json& j);

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// HTTP status and {code, message, detail} body for an exception.
Response error_response(const std::exception& e);

// Request handlers. Each takes the decoded JSON request and returns the
// response document; failures throw the library's error types.
class Api {
 public:
  explicit Api(const Runtime& runtime) : rt_(runtime) {}

  json model_info() const;
  json encode(const json& req) const;
  json decode(const json& req) const;
  json text_to_motion(const json& req) const;
  json interpolate(const json& req) const;
  json edit(const json& req) const;
  json classify(const json& req) const;
  json render_frame(const json& req) const;

  // Routing, body parsing and error mapping without a socket.
  Response handle(const std::string& method, const std::string& path, const std::string& body) const;

  const Runtime& runtime() const noexcept { return rt_; }

 private:
  const Runtime& rt_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin = "*";
  int threads = 4;
};

// HTTP front end over an Api.
class Server {
 public:
  Server(const Api& api, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds; IoError when the address is unavailable. Returns the bound port.
  int bind();
  // Serves until stop(); bind() first.
  void listen();
  // bind() and listen() on a background thread.
  int start();
  void stop();

 private:
  const Api& api_;
  ServeOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace motalign::service
