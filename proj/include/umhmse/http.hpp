#pragma once

// HTTP transport for the server core and the gateway uplink.
//
//   POST /v1/observations               ObservationMsg -> {"status": "accepted"|"duplicate"}
//   GET  /v1/patients
//   GET  /v1/patients/{id}/timeline?from=&to=
//   GET  /v1/patients/{id}/prescription
//   PUT  /v1/patients/{id}/prescription
//   GET  /v1/alerts?patient=&status=
//   POST /v1/alerts/{id}/ack            {"actor": "..."}
//   GET  /v1/events?after=               text/event-stream
//
// Every request needs "Authorization: Bearer <token>". Errors come back as
// {"error": kind, "field": name, "message": text} with 400/401/404/409.

#include <memory>
#include <optional>
#include <string>

#include "umhmse/gateway.hpp"
#include "umhmse/server.hpp"

namespace umhmse::http {

int status_for(server::ErrorKind kind);

class HttpService {
 public:
  HttpService(server::Server& core, std::string token);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  bool listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ClientResult {
  int status = 0;  // 0 on transport failure
  std::string body;
  std::string error;  // transport error text
};

/// Thin authenticated client over the /v1 API.
class ApiClient {
 public:
  ApiClient(const std::string& base_url, std::string token);
  ~ApiClient();
  ApiClient(const ApiClient&) = delete;
  ApiClient& operator=(const ApiClient&) = delete;

  ClientResult get(const std::string& path);
  ClientResult post(const std::string& path, const std::string& json_body);
  ClientResult put(const std::string& path, const std::string& json_body);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Gateway uplink over POST /v1/observations. 2xx is delivered, 4xx is a
/// rejection, and anything else (including no connection) is a transport failure.
class HttpUplink final : public gateway::Uplink {
 public:
  HttpUplink(const std::string& base_url, std::string token);
  gateway::Delivery deliver(const ObservationMsg& msg) override;

 private:
  ApiClient client_;
};

/// Percent-encodes a path segment or query value.
std::string url_encode(const std::string& s);

}  // namespace umhmse::http
