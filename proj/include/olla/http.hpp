#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace olla::http {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // begins with '/'
};

/// Splits an absolute http(s) URL into base and path. Throws parameter errors.
Endpoint parse_endpoint(const std::string& url);

struct Response {
  int status = 0;  // 0 when the connection failed
  std::string body;
  std::string error;  // transport-level failure description

  bool ok() const { return status >= 200 && status < 300; }
  /// Connection failures, timeouts, 429 and 5xx are worth retrying.
  bool transient() const { return status == 0 || status == 429 || status >= 500; }
};

Response post_json(const Endpoint& endpoint, const std::string& body, const std::string& bearer_token,
                   std::chrono::milliseconds timeout);

}  // namespace olla::http
