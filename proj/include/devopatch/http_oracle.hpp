#pragma once

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <optional>
#include <semaphore>
#include <string>

#include "devopatch/image_io.hpp"
#include "devopatch/oracle.hpp"

namespace devopatch {

inline constexpr int kDefaultHttpTimeoutMs = 10000;
inline constexpr const char* kRawTensorContentType = "application/x-devopatch-tensor";

/// DEVOPATCH_HTTP_TIMEOUT_MS if set to a positive integer, else 10 s.
inline int default_http_timeout_ms() {
  if (const char* env = std::getenv("DEVOPATCH_HTTP_TIMEOUT_MS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  return kDefaultHttpTimeoutMs;
}

enum class WireEncoding { Png, RawTensor };

struct HttpOracleOptions {
  std::string endpoint;  // scheme://host:port, requests go to {endpoint}/classify
  int timeout_ms = default_http_timeout_ms();
  int retries = 2;  // extra attempts after a timeout or connection failure
  int max_connections = 8;
  std::optional<std::string> bearer_token;
  WireEncoding encoding = WireEncoding::Png;
};

/// Parses {"label": <nonnegative int>, ...}; anything else is malformed.
inline Label parse_label_response(const std::string& body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw OracleFailure(OracleFailure::Kind::Malformed, "response is not a JSON object");
  const auto it = doc.find("label");
  if (it == doc.end() || !it->is_number_integer() || it->get<long long>() < 0)
    throw OracleFailure(OracleFailure::Kind::Malformed, "response lacks a nonnegative integer 'label'");
  return static_cast<Label>(it->get<long long>());
}

/// POSTs each image to {endpoint}/classify and reads the label from the JSON reply.
class HttpOracle final : public LabelOracle {
 public:
  explicit HttpOracle(HttpOracleOptions opts, std::optional<Shape> shape = std::nullopt)
      : LabelOracle(shape), opts_(std::move(opts)), slots_(std::max(1, opts_.max_connections)) {
    if (opts_.endpoint.empty()) throw std::invalid_argument("HTTP oracle needs an endpoint");
    while (!opts_.endpoint.empty() && opts_.endpoint.back() == '/') opts_.endpoint.pop_back();
  }

  bool deterministic() const override { return false; }

  const HttpOracleOptions& options() const { return opts_; }

 protected:
  Label do_classify(const Image& x) override {
    std::string body;
    std::string content_type;
    httplib::Headers headers;
    if (opts_.encoding == WireEncoding::Png) {
      const auto png = encode_png(x);
      body.assign(png.begin(), png.end());
      content_type = "image/png";
    } else {
      const auto raw = x.to_bytes();
      body.assign(raw.begin(), raw.end());
      content_type = kRawTensorContentType;
      headers.emplace("X-Image-Shape", std::to_string(x.channels()) + "," + std::to_string(x.height()) + "," +
                                           std::to_string(x.width()));
    }

    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const int attempts = 1 + std::max(0, opts_.retries);
    for (int attempt = 1;; ++attempt) {
      try {
        return post_once(body, content_type, headers, attempt);
      } catch (const OracleFailure& f) {
        const bool transient = f.kind() == OracleFailure::Kind::Timeout || f.kind() == OracleFailure::Kind::Connection;
        if (!transient || attempt >= attempts) throw;
      }
    }
  }

 private:
  Label post_once(const std::string& body, const std::string& content_type, const httplib::Headers& headers,
                  int attempt) {
    httplib::Client client(opts_.endpoint);
    const auto sec = opts_.timeout_ms / 1000;
    const auto usec = (opts_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    client.set_keep_alive(false);
    if (opts_.bearer_token) client.set_bearer_token_auth(*opts_.bearer_token);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post("/classify", headers, body, content_type);
    if (!res) {
      const auto elapsed =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed >= opts_.timeout_ms);
      throw OracleFailure(timed_out ? OracleFailure::Kind::Timeout : OracleFailure::Kind::Connection,
                          "POST " + opts_.endpoint + "/classify failed: " + httplib::to_string(err), attempt);
    }
    if (res->status != 200) {
      throw OracleFailure(OracleFailure::Kind::Status, "POST " + opts_.endpoint + "/classify returned " +
                                                           std::to_string(res->status), attempt, res->status);
    }
    try {
      return parse_label_response(res->body);
    } catch (const OracleFailure& f) {
      throw OracleFailure(f.kind(), f.what(), attempt);
    }
  }

  HttpOracleOptions opts_;
  std::counting_semaphore<> slots_;
};

}  // namespace devopatch
