#include "umhmse/http.hpp"

#include <atomic>
#include <cctype>
#include <charconv>

#include "httplib.h"

namespace umhmse::http {

using server::ErrorKind;
using server::ServerError;

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Unauthorized: return 401;
    case ErrorKind::Malformed: return 400;
    case ErrorKind::Invalid: return 400;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    case ErrorKind::CorruptLog: return 500;
  }
  return 500;
}

std::string url_encode(const std::string& s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

namespace {

constexpr const char* kJson = "application/json";
constexpr int kMaxEventStreams = 4;

void send_error(httplib::Response& res, ErrorKind kind, const std::string& field, const std::string& message) {
  res.status = status_for(kind);
  Json body{{"error", server::to_string(kind)}, {"field", field}, {"message", message}};
  res.set_content(body.dump(), kJson);
}

void send_json(httplib::Response& res, const Json& body) {
  res.status = 200;
  res.set_content(body.dump(), kJson);
}

Json parse_body(const httplib::Request& req, ErrorKind kind) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ServerError(kind, "body", std::string("body is not valid JSON: ") + e.what());
  }
}

std::optional<TimestampMs> query_ms(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto v = req.get_param_value(key);
  TimestampMs out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size())
    throw ServerError(ErrorKind::Invalid, key, std::string(key) + " must be an integer (ms)");
  return out;
}

Json summary_to_json(const server::PatientSummary& s) {
  return Json{{"patient_id", s.patient_id}, {"latest", server::to_json(s.latest)}, {"open_alerts", s.open_alerts}};
}

}  // namespace

// --- service --------------------------------------------------------------

struct HttpService::Impl {
  server::Server& core;
  std::string token;
  httplib::Server svr;
  std::atomic<int> streams{0};
  std::atomic<bool> stopping{false};

  Impl(server::Server& c, std::string t) : core(c), token(std::move(t)) { routes(); }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const ServerError& e) {
        send_error(res, e.kind(), e.field(), e.what());
      } catch (const FieldError& e) {
        send_error(res, ErrorKind::Malformed, e.field(), e.what());
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(Json{{"error", "internal"}, {"message", e.what()}}.dump(), kJson);
      }
    };
  }

  void routes() {
    svr.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.get_header_value("Authorization") != "Bearer " + token) {
        send_error(res, ErrorKind::Unauthorized, "Authorization", "missing or wrong bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    svr.Post("/v1/observations", guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto j = parse_body(req, ErrorKind::Malformed);
               ObservationMsg msg;
               try {
                 msg = observation_from_json(j);
               } catch (const FieldError& e) {
                 throw ServerError(ErrorKind::Malformed, e.field(), e.what());
               }
               auto status = core.ingest(msg);
               send_json(res, Json{{"status", server::to_string(status)}});
             }));

    svr.Get("/v1/patients", guarded([this](const httplib::Request&, httplib::Response& res) {
              Json list = Json::array();
              for (const auto& s : core.list_patients()) list.push_back(summary_to_json(s));
              send_json(res, list);
            }));

    svr.Get(R"(/v1/patients/([^/]+)/timeline)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto from = query_ms(req, "from");
              auto to = query_ms(req, "to");
              Json list = Json::array();
              for (const auto& r : core.query_timeline(req.matches[1], from, to)) list.push_back(server::to_json(r));
              send_json(res, list);
            }));

    svr.Get(R"(/v1/patients/([^/]+)/prescription)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, server::to_json(core.get_prescription(req.matches[1])));
            }));

    svr.Put(R"(/v1/patients/([^/]+)/prescription)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto j = parse_body(req, ErrorKind::Invalid);
              server::PrescriptionUpdate u;
              try {
                u = server::prescription_update_from_json(j);
              } catch (const FieldError& e) {
                throw ServerError(ErrorKind::Invalid, e.field(), e.what());
              }
              send_json(res, server::to_json(core.put_prescription(req.matches[1], u)));
            }));

    svr.Get("/v1/alerts", guarded([this](const httplib::Request& req, httplib::Response& res) {
              server::AlertFilter f;
              if (req.has_param("patient")) f.patient_id = req.get_param_value("patient");
              if (req.has_param("status")) {
                try {
                  f.status = server::alert_status_from_string(req.get_param_value("status"));
                } catch (const std::invalid_argument&) {
                  throw ServerError(ErrorKind::Invalid, "status", "status must be open, acknowledged or cleared");
                }
              }
              Json list = Json::array();
              for (const auto& a : core.list_alerts(f)) list.push_back(server::to_json(a));
              send_json(res, list);
            }));

    svr.Post(R"(/v1/alerts/([^/]+)/ack)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               auto j = parse_body(req, ErrorKind::Invalid);
               std::string actor;
               try {
                 FieldReader r(j);
                 actor = r.str("actor");
                 r.finish();
               } catch (const FieldError& e) {
                 throw ServerError(ErrorKind::Invalid, e.field(), e.what());
               }
               send_json(res, server::to_json(core.acknowledge_alert(req.matches[1], actor)));
             }));

    svr.Get("/v1/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
              std::uint64_t after = core.events().last_id();
              auto resume = req.has_param("after") ? req.get_param_value("after") : req.get_header_value("Last-Event-ID");
              if (!resume.empty()) {
                auto [p, ec] = std::from_chars(resume.data(), resume.data() + resume.size(), after);
                if (ec != std::errc{} || p != resume.data() + resume.size())
                  throw ServerError(ErrorKind::Invalid, "after", "after must be an event id");
              }
              if (streams.fetch_add(1) >= kMaxEventStreams) {
                streams.fetch_sub(1);
                res.status = 503;
                res.set_content(Json{{"error", "busy"}, {"message", "too many event streams; poll instead"}}.dump(),
                                kJson);
                return;
              }
              res.set_header("Cache-Control", "no-cache");
              res.set_chunked_content_provider(
                  "text/event-stream",
                  [this, after](std::size_t, httplib::DataSink& sink) mutable {
                    if (stopping) return false;
                    auto batch = core.events().wait_after(after, std::chrono::milliseconds(250));
                    if (stopping || core.events().closed()) return false;
                    std::string out;
                    if (batch.empty()) out = ": keepalive\n\n";
                    for (const auto& e : batch) {
                      out += "id: " + std::to_string(e.id) + "\nevent: " + e.type + "\ndata: " + e.data + "\n\n";
                      after = e.id;
                    }
                    return sink.write(out.data(), out.size());
                  },
                  [this](bool) { streams.fetch_sub(1); });
            }));
  }
};

HttpService::HttpService(server::Server& core, std::string token)
    : impl_(std::make_unique<Impl>(core, std::move(token))) {}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return impl_->svr.bind_to_any_port(host);
  return impl_->svr.bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen() { return impl_->svr.listen_after_bind(); }

void HttpService::stop() {
  impl_->stopping = true;
  impl_->svr.stop();
}

bool HttpService::running() const { return impl_->svr.is_running(); }

// --- client ---------------------------------------------------------------

struct ApiClient::Impl {
  httplib::Client cli;
  httplib::Headers headers;

  Impl(const std::string& base, const std::string& token) : cli(base) {
    cli.set_url_encode(false);
    cli.set_connection_timeout(2, 0);
    cli.set_read_timeout(10, 0);
    cli.set_write_timeout(10, 0);
    headers = {{"Authorization", "Bearer " + token}};
  }

  static ClientResult wrap(const httplib::Result& r) {
    ClientResult out;
    if (!r) {
      out.error = httplib::to_string(r.error());
      return out;
    }
    out.status = r->status;
    out.body = r->body;
    return out;
  }
};

ApiClient::ApiClient(const std::string& base_url, std::string token)
    : impl_(std::make_unique<Impl>(base_url, token)) {
  if (!impl_->cli.is_valid()) throw std::invalid_argument("invalid server URL '" + base_url + "'");
}

ApiClient::~ApiClient() = default;

ClientResult ApiClient::get(const std::string& path) { return Impl::wrap(impl_->cli.Get(path, impl_->headers)); }

ClientResult ApiClient::post(const std::string& path, const std::string& body) {
  return Impl::wrap(impl_->cli.Post(path, impl_->headers, body, kJson));
}

ClientResult ApiClient::put(const std::string& path, const std::string& body) {
  return Impl::wrap(impl_->cli.Put(path, impl_->headers, body, kJson));
}

HttpUplink::HttpUplink(const std::string& base_url, std::string token) : client_(base_url, std::move(token)) {}

gateway::Delivery HttpUplink::deliver(const ObservationMsg& msg) {
  auto r = client_.post("/v1/observations", to_json(msg).dump());
  if (r.status == 0 || r.status >= 500) return gateway::Delivery::failed;
  if (r.status >= 400) return gateway::Delivery::rejected;
  try {
    auto j = Json::parse(r.body);
    if (j.value("status", "") == "duplicate") return gateway::Delivery::duplicate;
    return gateway::Delivery::accepted;
  } catch (const Json::exception&) {
    return gateway::Delivery::failed;
  }
}

}  // namespace umhmse::http
