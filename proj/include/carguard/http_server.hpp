#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "carguard/error.hpp"
#include "carguard/service.hpp"

namespace carguard {

/// HTTP status for a domain error code.
int http_status(ErrorCode code);

/// {code, message, details: {field?, stage?}}
nlohmann::json error_body(const Error& e);

/// JSON-over-HTTP front end for ClaimService:
///   POST /claims                    submit (201)
///   GET  /claims/{id}
///   POST /claims/{id}/check         optional body {policy: {mode, threshold, top_k}}
///   GET  /review/queue?page=&page_size=
///   POST /claims/{id}/adjudicate    {decision, reviewer_id, note}
///   GET  /healthz
class HttpServer {
 public:
  explicit HttpServer(ClaimService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace carguard
