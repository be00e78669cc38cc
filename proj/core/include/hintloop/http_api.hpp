#pragma once

#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "hintloop/error.hpp"
#include "hintloop/reviewservice.hpp"

namespace hintloop {

struct HttpRequest {
  std::string method;  // "GET" / "POST"
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

int http_status(ErrorCode code);

/// Transport-independent router for the /v1 API. Errors become
/// {code, message} bodies.
HttpResponse route_request(ReviewService& service, const HttpRequest& request);

/// Thin cpp-httplib binding around route_request.
class HttpServer {
 public:
  explicit HttpServer(ReviewService& service);
  ~HttpServer();

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port = 0);
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hintloop
