#include "olla/http.hpp"

#include <httplib.h>

#include "olla/error.hpp"

namespace olla::http {

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::parameter, "endpoint URL lacks a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error(ErrorKind::parameter, "unsupported scheme: " + scheme);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.base = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (e.base.size() <= scheme_end + 3) throw Error(ErrorKind::parameter, "endpoint URL lacks a host: " + url);
  return e;
}

Response post_json(const Endpoint& endpoint, const std::string& body, const std::string& bearer_token,
                   std::chrono::milliseconds timeout) {
  httplib::Client client(endpoint.base);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
  auto result = client.Post(endpoint.path, headers, body, "application/json");
  Response out;
  if (!result) {
    out.error = httplib::to_string(result.error());
    return out;
  }
  out.status = result->status;
  out.body = result->body;
  return out;
}

}  // namespace olla::http
