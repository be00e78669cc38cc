#include "hintloop/http_api.hpp"

#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "hintloop/error.hpp"

namespace hintloop {
namespace {

HttpResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

std::string query_or_header(const HttpRequest& req, const std::string& key,
                            const std::string& header) {
  if (auto it = req.query.find(key); it != req.query.end()) return it->second;
  if (auto it = req.headers.find(header); it != req.headers.end()) return it->second;
  return {};
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kValidation:
    case ErrorCode::kOutOfRange:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kContract:
      return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kDuplicate:
    case ErrorCode::kAlreadySubmitted:
      return 409;
    case ErrorCode::kLeaseExpired: return 410;
    case ErrorCode::kReference: return 422;
    case ErrorCode::kNoPositives:
    case ErrorCode::kIo:
      return 500;
  }
  return 500;
}

HttpResponse route_request(ReviewService& service, const HttpRequest& req) {
  static const std::regex kHints(R"(^/v1/videos/([^/]+)/hints$)");
  static const std::regex kMedia(R"(^/v1/videos/([^/]+)/media$)");
  static const std::regex kSubmit(R"(^/v1/tasks/([^/]+)/submit$)");
  static const std::regex kMetrics(R"(^/v1/metrics/([^/]+)$)");
  std::smatch m;
  try {
    if (req.path == "/v1/tasks/next") {
      if (req.method != "GET") return error_response(405, "method_not_allowed", "use GET");
      const std::string rater = query_or_header(req, "rater", "X-Rater-Id");
      const std::string pool = query_or_header(req, "pool", "X-Rater-Pool");
      if (rater.empty() || pool.empty()) {
        return error_response(400, "validation_error", "rater and pool are required");
      }
      auto task = service.next_task(rater, parse_rater_kind(pool));
      return {200, {{"task", task ? to_json(*task) : nlohmann::json(nullptr)}}};
    }
    if (std::regex_match(req.path, m, kHints)) {
      if (req.method != "GET") return error_response(405, "method_not_allowed", "use GET");
      auto it = req.query.find("mode");
      const AssistMode mode = parse_assist_mode(it == req.query.end() ? "v1_v2" : it->second);
      return {200, service.get_hints(m[1].str(), mode)};
    }
    if (std::regex_match(req.path, m, kMedia)) {
      if (req.method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return {200, service.media(m[1].str())};
    }
    if (std::regex_match(req.path, m, kSubmit)) {
      if (req.method != "POST") return error_response(405, "method_not_allowed", "use POST");
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        return error_response(400, "parse_error", e.what());
      }
      service.submit_review(m[1].str(), submission_from_json(body));
      return {200, {{"status", "ok"}, {"task_id", m[1].str()}}};
    }
    if (std::regex_match(req.path, m, kMetrics)) {
      if (req.method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return {200, service.metrics(m[1].str())};
    }
    return error_response(404, "not_found", fmt::format("no route for {} {}", req.method, req.path));
  } catch (const Error& e) {
    return error_response(http_status(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "parse_error", e.what());
  }
}

struct HttpServer::Impl {
  ReviewService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ReviewService& s) : service(s) {
    auto handler = [this](const httplib::Request& in, httplib::Response& out) {
      HttpRequest req;
      req.method = in.method;
      req.path = in.path;
      req.body = in.body;
      for (const auto& [k, v] : in.params) req.query[k] = v;
      for (const auto& [k, v] : in.headers) req.headers[k] = v;
      HttpResponse resp = route_request(service, req);
      out.status = resp.status;
      out.set_content(resp.body.dump(), "application/json");
    };
    server.Get(R"(/v1/.*)", handler);
    server.Post(R"(/v1/.*)", handler);
  }
};

HttpServer::HttpServer(ReviewService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : port;
  if (port != 0 && !impl_->server.bind_to_port(host, port)) bound = -1;
  if (bound < 0) throw Error(ErrorCode::kIo, fmt::format("cannot bind {}:{}", host, port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool HttpServer::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace hintloop
