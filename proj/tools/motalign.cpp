#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "motalign/data.hpp"
#include "motalign/error.hpp"
#include "motalign/service.hpp"

using namespace motalign;
using service::json;
namespace fs = std::filesystem;

namespace {

struct ProviderOptions {
  std::string kind = "stub";
  std::uint64_t seed = 0;
  std::string url = "http://127.0.0.1:8765";
  std::string model = "clip-vit-b32";
  std::string cache_dir;

  void add(CLI::App* app) {
    app->add_option("--provider", kind, "Embedding provider")->check(CLI::IsMember({"stub", "remote"}));
    app->add_option("--provider-seed", seed, "Stub provider seed");
    app->add_option("--provider-url", url, "Remote provider base URL");
    app->add_option("--provider-model", model, "Remote provider model name");
    app->add_option("--embedding-cache", cache_dir, "Directory for cached embeddings");
  }

  embed::ProviderConfig config(std::size_t dimension) const {
    embed::ProviderConfig c;
    c.kind = kind;
    c.dimension = dimension;
    c.seed = seed;
    c.remote.url = url;
    c.remote.model = model;
    c.remote.dimension = dimension;
    if (!cache_dir.empty()) c.cache_dir = cache_dir;
    return c;
  }
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + p.string());
}

json parse_json(const std::string& text, const fs::path& from) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(from.string() + ": " + e.what());
  }
}

json motion_payload(const fs::path& path) {
  const auto m = data::read_motion(path);
  return service::motion_to_json(m.frames, m.fps);
}

// A .json file holding {"latent": [...]} or a bare array.
json latent_payload(const fs::path& path) {
  auto j = parse_json(read_text(path), path);
  if (j.is_object() && j.contains("latent")) return j.at("latent");
  return j;
}

json motion_or_latent(const fs::path& path) {
  return path.extension() == ".json" ? latent_payload(path) : motion_payload(path);
}

void save_motion(const fs::path& path, const json& motion) {
  double fps = 30.0;
  auto frames = service::motion_from_json(motion, &fps);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  data::write_motion(path, {fps, std::move(frames)});
}

struct CommonInference {
  std::string checkpoint;
  ProviderOptions provider;
  bool json_out = false;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Trained checkpoint (.mclk)")->required()->check(CLI::ExistingFile);
    provider.add(app);
    app->add_flag("--json", json_out, "Print the service response body");
  }

  std::unique_ptr<service::Runtime> load() const {
    const auto ck = train::load_checkpoint(checkpoint);
    return std::make_unique<service::Runtime>(checkpoint, provider.config(ck.model.d_model));
  }
};

// ---- data -----------------------------------------------------------------------

void add_data(CLI::App& app) {
  auto* data = app.add_subcommand("data", "Dataset tooling")->require_subcommand(1);

  struct Synth {
    std::size_t families = 6, per_family = 50, held_out = 0;
    std::uint64_t seed = 7;
    std::string out, held_out_dir;
  };
  auto s = std::make_shared<Synth>();
  auto* synth = data->add_subcommand("synth", "Generate the synthetic motion families");
  synth->add_option("--families", s->families, "Number of families (K)");
  synth->add_option("--per-family", s->per_family, "Samples per family (N)");
  synth->add_option("--seed", s->seed, "Generator seed");
  synth->add_option("--out", s->out, "Output dataset directory")->required();
  synth->add_option("--held-out-dir", s->held_out_dir, "Directory for held-out samples");
  synth->add_option("--held-out-per-family", s->held_out, "Last samples of each family moved to --held-out-dir");
  synth->callback([s] {
    if (s->held_out > 0 && s->held_out_dir.empty()) throw CLI::ValidationError("--held-out-per-family needs --held-out-dir");
    if (s->held_out > s->per_family) throw CLI::ValidationError("--held-out-per-family exceeds --per-family");
    auto all = data::synthesize_dataset(s->families, s->per_family, s->seed);
    std::vector<data::MotionRecord> train, held;
    for (std::size_t i = 0; i < all.size(); ++i)
      (i % s->per_family >= s->per_family - s->held_out ? held : train).push_back(std::move(all[i]));
    data::save_dataset(s->out, train);
    std::cout << "wrote " << train.size() << " records to " << s->out << '\n';
    if (!held.empty()) {
      data::save_dataset(s->held_out_dir, held);
      std::cout << "wrote " << held.size() << " records to " << s->held_out_dir << '\n';
    }
  });

  auto imp = std::make_shared<std::array<std::string, 3>>();
  auto* import = data->add_subcommand("import", "Import BABEL-style annotations");
  import->add_option("--annotations", (*imp)[0], "Annotation JSON")->required()->check(CLI::ExistingFile);
  import->add_option("--motions", (*imp)[1], "Directory of <sid>.mclip files")->required()->check(CLI::ExistingDirectory);
  import->add_option("--out", (*imp)[2], "Output dataset directory")->required();
  import->callback([imp] {
    const auto r = data::import_babel((*imp)[0], (*imp)[1]);
    for (const auto& d : r.skipped) std::cerr << "skipped: " << d << '\n';
    data::save_dataset((*imp)[2], r.records);
    std::cout << "imported " << r.records.size() << " records, skipped " << r.skipped.size() << '\n';
  });

  auto st = std::make_shared<std::pair<std::string, bool>>();
  auto* stats = data->add_subcommand("stats", "Summarise a dataset");
  stats->add_option("--dataset", st->first, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  stats->add_flag("--json", st->second, "JSON output");
  stats->callback([st] {
    const auto s = data::dataset_stats(data::load_dataset(st->first));
    if (st->second) {
      json labels = json::object();
      for (const auto& [l, n] : s.labels) labels[l] = n;
      std::cout << service::to_body({{"records", s.records}, {"frames", s.frames}, {"seconds", s.seconds}, {"labels", labels}});
      return;
    }
    std::cout << "records  " << s.records << "\nframes   " << s.frames << "\nseconds  " << s.seconds << "\nlabels\n";
    for (const auto& [l, n] : s.labels) std::cout << "  " << std::setw(6) << n << "  " << l << '\n';
  });
}

// ---- train / eval -----------------------------------------------------------------

std::vector<train::TrainItem> items_for(const std::vector<data::MotionRecord>& records, embed::EmbeddingProvider& p,
                                        std::uint64_t seed) {
  data::PipelineOptions po;
  po.triplet.keep_image = false;
  const auto& sk = skel::SkeletonModel::canonical();
  return train::prepare_items(data::build_triplets(records, sk, p, seed, po), sk);
}

std::vector<embed::SemanticVector> class_vectors(const std::vector<std::string>& names, embed::EmbeddingProvider& p) {
  std::vector<embed::SemanticVector> out;
  for (const auto& n : names) out.push_back(p.embed_text(n));
  return out;
}

void add_train(CLI::App& app) {
  struct Opts {
    std::string dataset, config, out, held_out;
    bool resume = false;
    ProviderOptions provider;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("train", "Train a model");
  cmd->add_option("--dataset", o->dataset, "Training dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--config", o->config, "Training config (key = value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Run directory (checkpoint.mclk, metrics.ndjson)")->required();
  cmd->add_option("--held-out", o->held_out, "Dataset evaluated at each interval")->check(CLI::ExistingDirectory);
  cmd->add_flag("--resume", o->resume, "Continue from <out>/checkpoint.mclk");
  o->provider.add(cmd);
  cmd->callback([o] {
    const auto cfg = train::TrainConfig::load(o->config);
    auto provider = embed::make_provider(o->provider.config(cfg.model.d_model));
    const auto items = items_for(data::load_dataset(o->dataset), *provider, cfg.seed);
    std::vector<train::TrainItem> held;
    std::vector<embed::SemanticVector> classes;
    if (!o->held_out.empty()) {
      const auto records = data::load_dataset(o->held_out);
      held = items_for(records, *provider, cfg.seed + 1);
      classes = class_vectors(data::class_names(records), *provider);
    }

    const fs::path out = o->out;
    std::optional<model::MotionClipModel> model;
    std::optional<train::TrainState> state;
    if (o->resume) {
      const auto ck = train::load_checkpoint(out / "checkpoint.mclk");
      if (!ck.train) throw InputError("checkpoint has no training state to resume from");
      if (ck.provider_id != provider->provider_id())
        throw ConfigMismatchError("checkpoint provider '" + ck.provider_id + "' differs from '" + provider->provider_id() + "'");
      model.emplace(train::instantiate(ck, cfg.model));
      state = ck.train;
    } else {
      model.emplace(cfg.model, cfg.seed);
    }
    train::Trainer trainer(*model, skel::SkeletonModel::canonical(), cfg);
    if (state) trainer.restore(*state);

    fs::create_directories(out);
    std::ofstream metrics(out / "metrics.ndjson", o->resume ? std::ios::app : std::ios::trunc);
    train::TrainOptions opts;
    opts.metrics = &metrics;
    opts.checkpoint_dir = out;
    opts.provider_id = provider->provider_id();
    if (!held.empty()) {
      opts.held_out = &held;
      opts.class_embeddings = &classes;
    }
    opts.on_record = [](const json& r) { std::cout << r.dump() << '\n' << std::flush; };
    trainer.train(items, opts);
  });
}

void add_eval(CLI::App& app) {
  auto o = std::make_shared<std::pair<CommonInference, std::string>>();
  auto* cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  o->first.add(cmd);
  cmd->add_option("--dataset", o->second, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd->callback([o] {
    const auto rt = o->first.load();
    const auto records = data::load_dataset(o->second);
    auto& p = rt->space().provider();
    const auto items = items_for(records, p, 0);
    const auto m = train::evaluate(rt->model(), rt->skeleton(), items, class_vectors(data::class_names(records), p));
    std::cout << service::to_body(m.to_json());
  });
}

// ---- latent operations ------------------------------------------------------------

void emit(const json& body, bool json_out, const std::function<void()>& human) {
  if (json_out) std::cout << service::to_body(body);
  else human();
}

void add_encode(CLI::App& app) {
  auto o = std::make_shared<std::tuple<CommonInference, std::string, std::string>>();
  auto* cmd = app.add_subcommand("encode", "Motion file -> latent");
  std::get<0>(*o).add(cmd);
  cmd->add_option("--motion", std::get<1>(*o), "Motion file (.mclip)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", std::get<2>(*o), "Write the latent JSON here");
  cmd->callback([o] {
    const auto rt = std::get<0>(*o).load();
    const auto body = service::Api(*rt).encode({{"motion", motion_payload(std::get<1>(*o))}});
    if (!std::get<2>(*o).empty()) write_text(std::get<2>(*o), service::to_body(body));
    emit(body, std::get<0>(*o).json_out || std::get<2>(*o).empty(), [] {});
  });
}

void add_decode(CLI::App& app) {
  struct Opts {
    CommonInference common;
    std::string latent, out;
    std::size_t frames = 60;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("decode", "Latent -> motion file");
  o->common.add(cmd);
  cmd->add_option("--latent", o->latent, "Latent JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--frames", o->frames, "Output length T");
  cmd->add_option("--out", o->out, "Output motion file (.mclip)");
  cmd->callback([o] {
    const auto rt = o->common.load();
    const auto body = service::Api(*rt).decode({{"latent", latent_payload(o->latent)}, {"T", o->frames}});
    if (!o->out.empty()) save_motion(o->out, body.at("motion"));
    emit(body, o->common.json_out, [o] { std::cout << "wrote " << o->out << '\n'; });
  });
}

void add_text2motion(CLI::App& app) {
  struct Opts {
    CommonInference common;
    std::string prompt, out;
    std::size_t frames = 60;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("text2motion", "Prompt -> motion file");
  o->common.add(cmd);
  cmd->add_option("--prompt", o->prompt, "Text prompt")->required();
  cmd->add_option("--frames", o->frames, "Output length T");
  cmd->add_option("--out", o->out, "Output motion file (.mclip)");
  cmd->callback([o] {
    const auto rt = o->common.load();
    const auto body = service::Api(*rt).text_to_motion({{"text", o->prompt}, {"T", o->frames}});
    if (!o->out.empty()) save_motion(o->out, body.at("motion"));
    emit(body, o->common.json_out, [o] { std::cout << "wrote " << o->out << '\n'; });
  });
}

void add_interp(CLI::App& app) {
  struct Opts {
    CommonInference common;
    std::string a, b, out_dir;
    std::size_t steps = 5, frames = 60;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("interp", "Decode evenly spaced points between two latents");
  o->common.add(cmd);
  cmd->add_option("--a", o->a, "Start: motion file or latent .json")->required()->check(CLI::ExistingFile);
  cmd->add_option("--b", o->b, "End: motion file or latent .json")->required()->check(CLI::ExistingFile);
  cmd->add_option("--steps", o->steps, "Number of outputs (>= 2)");
  cmd->add_option("--frames", o->frames, "Output length T");
  cmd->add_option("--out-dir", o->out_dir, "Writes interp_000.mclip ...");
  cmd->callback([o] {
    const auto rt = o->common.load();
    const auto body = service::Api(*rt).interpolate(
        {{"a", motion_or_latent(o->a)}, {"b", motion_or_latent(o->b)}, {"steps", o->steps}, {"T", o->frames}});
    std::vector<std::string> written;
    if (!o->out_dir.empty()) {
      const auto& motions = body.at("motions");
      for (std::size_t k = 0; k < motions.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "interp_%03zu.mclip", k);
        save_motion(fs::path(o->out_dir) / name, motions[k]);
        written.push_back((fs::path(o->out_dir) / name).string());
      }
    }
    emit(body, o->common.json_out, [written] {
      for (const auto& w : written) std::cout << "wrote " << w << '\n';
    });
  });
}

// COEF:KIND:VALUE, e.g. "1:motion:walk.mclip", "0.5:text:happy", "-1:latent:z.json".
json parse_term(const std::string& spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
  if (b == std::string::npos) throw CLI::ValidationError("--term", "expected COEF:KIND:VALUE, got '" + spec + "'");
  double coef = 0.0;
  try {
    std::size_t used = 0;
    coef = std::stod(spec.substr(0, a), &used);
    if (used != a) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw CLI::ValidationError("--term", "bad coefficient in '" + spec + "'");
  }
  const std::string kind = spec.substr(a + 1, b - a - 1), value = spec.substr(b + 1);
  json term = {{"coef", coef}, {"kind", kind}, {"label", spec}};
  if (kind == "text") {
    term["value"] = value;
  } else if (kind == "motion" || kind == "latent") {
    try {
      term["value"] = kind == "motion" ? motion_payload(value) : latent_payload(value);
    } catch (const Error& e) {
      throw ResolutionError(spec + ": " + e.what());
    }
  } else {
    throw CLI::ValidationError("--term", "unknown kind '" + kind + "' (motion, text or latent)");
  }
  return term;
}

void add_edit(CLI::App& app) {
  struct Opts {
    CommonInference common;
    std::vector<std::string> terms;
    bool renormalize = false;
    std::string out;
    std::size_t frames = 60;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("edit", "Decode a weighted sum of latents");
  o->common.add(cmd);
  cmd->add_option("--term", o->terms, "COEF:KIND:VALUE with KIND motion|text|latent")->required();
  cmd->add_flag("--renormalize", o->renormalize, "Rescale the sum to unit length");
  cmd->add_option("--frames", o->frames, "Output length T");
  cmd->add_option("--out", o->out, "Output motion file (.mclip)");
  cmd->callback([o] {
    json terms = json::array();
    for (const auto& t : o->terms) terms.push_back(parse_term(t));
    const auto rt = o->common.load();
    const auto body =
        service::Api(*rt).edit({{"terms", terms}, {"renormalize", o->renormalize}, {"T", o->frames}});
    if (!o->out.empty()) save_motion(o->out, body.at("motion"));
    emit(body, o->common.json_out, [o] { std::cout << "wrote " << o->out << '\n'; });
  });
}

void add_classify(CLI::App& app) {
  struct Opts {
    CommonInference common;
    std::string motion;
    std::vector<std::string> classes;
    std::size_t top_k = 0;
    double temperature = ops::kDefaultTemperature;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("classify", "Zero-shot classification against class names");
  o->common.add(cmd);
  cmd->add_option("--motion", o->motion, "Motion file (.mclip)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--classes", o->classes, "Comma-separated class names")->required()->delimiter(',');
  cmd->add_option("--top-k", o->top_k, "Rows to show (default all)");
  cmd->add_option("--temperature", o->temperature, "Softmax temperature");
  cmd->callback([o] {
    const auto rt = o->common.load();
    json req = {{"motion", motion_payload(o->motion)}, {"classes", o->classes}, {"temperature", o->temperature}};
    if (o->top_k > 0) req["top_k"] = o->top_k;
    const auto body = service::Api(*rt).classify(req);
    emit(body, o->common.json_out, [&body] {
      std::cout << "rank  probability  cosine    class\n";
      std::size_t rank = 1;
      for (const auto& row : body.at("top")) {
        std::cout << std::setw(4) << rank++ << "  " << std::fixed << std::setprecision(6) << std::setw(11)
                  << row.at("probability").get<double>() << "  " << std::setw(8) << std::setprecision(4)
                  << row.at("cosine").get<double>() << "  " << row.at("class").get<std::string>() << '\n';
      }
    });
  });
}

void add_render(CLI::App& app) {
  struct Opts {
    std::string motion, out, out_dir;
    std::size_t frame = 0;
    int size = 224;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("render", "Rasterise motion frames to PNG");
  cmd->add_option("--motion", o->motion, "Motion file (.mclip)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--frame", o->frame, "Frame index for --out");
  cmd->add_option("--out", o->out, "PNG for one frame");
  cmd->add_option("--out-dir", o->out_dir, "Writes frame_0000.png ... for every frame");
  cmd->add_option("--size", o->size, "Image side in pixels")->check(CLI::Range(16, 2048));
  cmd->callback([o] {
    if (o->out.empty() == o->out_dir.empty()) throw CLI::ValidationError("render: give exactly one of --out, --out-dir");
    const auto m = data::read_motion(o->motion);
    const auto seq = skel::from_tensor(m.frames, m.fps);
    render::RenderStyle style;
    style.width = style.height = o->size;
    auto draw = [&](std::size_t f, const fs::path& p) {
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      render::write_png(p, render::rasterize(skel::SkeletonModel::canonical(), seq.frames[f], render::Camera::canonical(), style));
    };
    if (!o->out.empty()) {
      if (o->frame >= seq.length()) throw InputError("frame " + std::to_string(o->frame) + " out of range");
      draw(o->frame, o->out);
      return;
    }
    for (std::size_t f = 0; f < seq.length(); ++f) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.png", f);
      draw(f, fs::path(o->out_dir) / name);
    }
    std::cout << "wrote " << seq.length() << " frames to " << o->out_dir << '\n';
  });
}

service::Server* g_server = nullptr;

void add_serve(CLI::App& app) {
  struct Opts {
    CommonInference common;
    service::ServeOptions serve;
  };
  auto o = std::make_shared<Opts>();
  auto* cmd = app.add_subcommand("serve", "HTTP service over a checkpoint");
  o->common.add(cmd);
  cmd->add_option("--host", o->serve.host, "Listen address");
  cmd->add_option("--port", o->serve.port, "Port (0 picks a free one)");
  cmd->add_option("--cors-origin", o->serve.cors_origin, "Access-Control-Allow-Origin value");
  cmd->add_option("--threads", o->serve.threads, "Worker threads");
  cmd->callback([o] {
    const auto rt = o->common.load();
    service::Api api(*rt);
    service::Server server(api, o->serve);
    const int port = server.bind();
    std::cout << "listening on http://" << o->serve.host << ":" << port << '\n' << std::flush;
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    server.listen();
    g_server = nullptr;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion auto-encoder aligned to a semantic embedding space"};
  app.require_subcommand(1);
  add_data(app);
  add_train(app);
  add_eval(app);
  add_encode(app);
  add_decode(app);
  add_text2motion(app);
  add_interp(app);
  add_edit(app);
  add_classify(app);
  add_render(app);
  add_serve(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
