#include "carguard/http_server.hpp"

#include <httplib.h>

#include <charconv>

namespace carguard {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::duplicate:
    case ErrorCode::conflict: return 409;
    case ErrorCode::payload_too_large: return 413;
    case ErrorCode::decode:
    case ErrorCode::empty_roi:
    case ErrorCode::missing_embedding: return 422;
    case ErrorCode::config:
    case ErrorCode::layout_mismatch:
    case ErrorCode::io:
    case ErrorCode::corrupt:
    case ErrorCode::internal: return 500;
  }
  return 500;
}

json error_body(const Error& e) {
  json details = json::object();
  if (!e.field().empty()) details["field"] = e.field();
  if (const auto* s = dynamic_cast<const StageError*>(&e)) details["stage"] = s->stage();
  return {{"code", to_string(e.code())}, {"message", e.what()}, {"details", std::move(details)}};
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req, bool required) {
  if (req.body.empty()) {
    if (required) throw Error(ErrorCode::validation, "request body is empty", "body");
    return json();
  }
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, std::string("malformed JSON: ") + e.what(), "body");
  }
}

std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  auto v = req.get_param_value(key);
  std::size_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) {
    throw Error(ErrorCode::validation, std::string(key) + " must be a non-negative integer", key);
  }
  return out;
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), error_body(e));
    } catch (const std::exception& e) {
      send_json(res, 500, error_body(Error(ErrorCode::internal, e.what())));
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(ClaimService& s) : service(s) {}
  ClaimService& service;
  httplib::Server server;
};

HttpServer::HttpServer(ClaimService& service)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& s = impl_->server;
  const auto& cfg = svc.config();
  // Whole request: a handful of base64 images at the per-image cap.
  s.set_payload_max_length(cfg.max_image_bytes * 8 + (1u << 20));
  if (cfg.threads > 0) {
    const auto n = cfg.threads;
    s.new_task_queue = [n] { return new httplib::ThreadPool(n); };
  }

  s.Post("/claims", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    auto result = svc.handle_submit(submission_from_json(parse_body(req, true)));
    send_json(res, 201, result_to_json(result));
  }));
  s.Get("/claims/:id", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, svc.handle_get(req.path_params.at("id")));
  }));
  s.Post("/claims/:id/check", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    auto overrides = policy_overrides_from_json(parse_body(req, false));
    send_json(res, 200, svc.handle_check(req.path_params.at("id"), overrides));
  }));
  s.Get("/review/queue", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    auto page = svc.handle_review_queue(query_size(req, "page", 1), query_size(req, "page_size", 20));
    send_json(res, 200, review_page_to_json(page));
  }));
  s.Post("/claims/:id/adjudicate",
         guarded([&svc](const httplib::Request& req, httplib::Response& res) {
           auto body = parse_body(req, true);
           std::string field = "decision";
           try {
             auto decision = parse_decision(body.at("decision").get<std::string>());
             field = "reviewer_id";
             auto reviewer = body.at("reviewer_id").get<std::string>();
             field = "note";
             auto note = body.value("note", std::string());
             send_json(res, 200,
                       svc.handle_adjudicate(req.path_params.at("id"), decision, reviewer, note));
           } catch (const json::exception& e) {
             throw Error(ErrorCode::validation, field + ": " + e.what(), field);
           }
         }));
  s.Get("/healthz", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    auto snap = svc.store().snapshot();
    send_json(res, 200,
              {{"status", "ok"}, {"claims", snap->claims.size()}, {"features", snap->features.size()}});
  }));
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto code = res.status == 404   ? ErrorCode::not_found
                      : res.status == 413 ? ErrorCode::payload_too_large
                      : res.status < 500  ? ErrorCode::validation
                                          : ErrorCode::internal;
    send_json(res, res.status, error_body(Error(code, httplib::status_message(res.status))));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::io, "cannot bind " + host, "bind_address");
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port), "port");
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace carguard
