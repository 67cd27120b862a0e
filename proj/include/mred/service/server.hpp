#pragma once

// HTTP + JSON front end over EditService.
//
//   POST /sessions                {"image": b64png} | {"attributes": {...}}   -> 201 session
//   GET  /sessions/{id}                                                       -> session
//   POST /sessions/{id}/edits     {"text", "silhouette_id"?, "seed"?,
//                                  "sampler"?, "steps"?, "init_from_ref"?}    -> {"round": i, ...round}
//   POST /sessions/{id}/compare   {"t1", "t2", "seed"?, "silhouette_id"?}     -> {"image_a","image_b","consistency",...}
//   POST /sessions/{id}/undo                                                  -> session
//   GET  /poses                                                               -> [{"id","image"}]
//   GET  /health                                                              -> {"status","model_version"}
//
// Images are base64 PNG strings. Errors are {"error": reason} with status
// 400 (validation), 404 (unknown session), 409 (session busy) or 413 (body too large).

#include <cstddef>
#include <memory>
#include <string>

#include "mred/service/service.hpp"

namespace httplib {
class Server;
}

namespace mred::svc {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_body_bytes = 1 << 20;
  int workers = 4;
};

class HttpServer {
 public:
  HttpServer(EditService& service, ServerConfig cfg);
  ~HttpServer();

  /// Binds and returns the port.
  int bind();
  /// Serves until stop(); bind() first.
  void run();
  void stop();

 private:
  void routes();
  EditService& service_;
  ServerConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace mred::svc
