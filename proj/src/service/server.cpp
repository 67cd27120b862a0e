#include "mred/service/server.hpp"

#include <httplib.h>

#include "mred/common/base64.hpp"
#include "mred/common/png_io.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::svc {

namespace {

void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason) {
  send_json(res, {{"error", reason}}, status);
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw ServiceError(400, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("malformed JSON: ") + e.what());
  }
}

Image decode_image_field(const nlohmann::json& j) {
  try {
    return decode_png(base64_decode(j.get<std::string>()));
  } catch (const std::exception& e) {
    throw ServiceError(400, std::string("bad image payload: ") + e.what());
  }
}

synth::AttributeVector parse_attrs(const nlohmann::json& j) {
  if (!j.is_object()) throw ServiceError(400, "attributes must be an object");
  synth::AttributeVector a;
  for (auto f : synth::kAllFields) {
    const auto name = std::string(synth::field_name(f));
    if (!j.contains(name)) throw ServiceError(400, "missing attribute '" + name + "'");
    const auto v = synth::parse_value(f, j.at(name).get<std::string>());
    if (!v) throw ServiceError(400, "illegal value for '" + name + "'");
    a.set(f, *v);
  }
  return a;
}

template <typename T>
std::optional<T> opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

/// Runs `fn`, mapping exceptions to JSON errors.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("bad request field: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

HttpServer::HttpServer(EditService& service, ServerConfig cfg)
    : service_(service), cfg_(std::move(cfg)), server_(std::make_unique<httplib::Server>()) {
  server_->set_payload_max_length(cfg_.max_body_bytes);
  const int workers = std::max(1, cfg_.workers);
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 413) send_error(res, 413, "request body exceeds the upload limit");
    else if (res.body.empty()) send_error(res, res.status, "not found");
  });

  s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}, {"model_version", service_.model_version()}});
  });

  s.Get("/poses", [](const httplib::Request&, httplib::Response& res) {
    nlohmann::json out = nlohmann::json::array();
    for (int id = 0; id < synth::kNumShapeTemplates; ++id) {
      auto m = synth::silhouette_template(id).mask;
      for (auto& v : m) v = v ? 255 : 0;
      out.push_back({{"id", id}, {"image", base64_encode(encode_gray_png(m, kImageSize, kImageSize))}});
    }
    send_json(res, out);
  });

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      EditSession session;
      if (body.contains("image"))
        session = service_.create_session(decode_image_field(body.at("image")));
      else if (body.contains("attributes"))
        session = service_.create_session(parse_attrs(body.at("attributes")));
      else
        throw ServiceError(400, "need 'image' or 'attributes'");
      send_json(res, session.to_json(), 201);
    });
  });

  s.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service_.history(req.matches[1]).to_json()); });
  });

  s.Post(R"(/sessions/([^/]+)/edits)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      EditParams p;
      p.text = body.value("text", std::string{});
      p.silhouette_id = opt<int>(body, "silhouette_id");
      p.seed = opt<std::uint64_t>(body, "seed");
      p.sampler = opt<std::string>(body, "sampler");
      p.steps = opt<int>(body, "steps");
      p.init_from_reference = opt<bool>(body, "init_from_ref");
      const auto id = std::string(req.matches[1]);
      auto round = service_.apply_edit(id, p).to_json();
      round["round"] = service_.history(id).rounds.size() - 1;
      send_json(res, round);
    });
  });

  s.Post(R"(/sessions/([^/]+)/compare)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto seed = opt<std::uint64_t>(body, "seed").value_or(0);
      auto r = service_.compare_orders(req.matches[1], body.value("t1", std::string{}),
                                       body.value("t2", std::string{}), seed, opt<int>(body, "silhouette_id"));
      send_json(res, {{"image_a", base64_encode(encode_png(r.image_a))},
                      {"image_b", base64_encode(encode_png(r.image_b))},
                      {"consistency", r.consistency},
                      {"seed", r.seed},
                      {"silhouette_id", r.silhouette_id}});
    });
  });

  s.Post(R"(/sessions/([^/]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service_.undo(req.matches[1]).to_json()); });
  });
}

int HttpServer::bind() {
  if (cfg_.port == 0) return server_->bind_to_any_port(cfg_.host);
  if (!server_->bind_to_port(cfg_.host, cfg_.port)) throw Error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  return cfg_.port;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace mred::svc
