#pragma once

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "devopatch/http_oracle.hpp"
#include "devopatch/image_io.hpp"
#include "devopatch/synthetic_oracle.hpp"

namespace devopatch {

struct StubServerOptions {
  SyntheticOracleSpec oracle = ConstantLabel{0};
  std::optional<Shape> shape;
  int delay_ms = 0;  // artificial latency before answering
};

/// Serves POST /classify backed by a synthetic oracle. Used by integration tests and the
/// `serve-stub` subcommand.
class StubServer {
 public:
  explicit StubServer(StubServerOptions opts) : opts_(std::move(opts)), oracle_(opts_.oracle, opts_.shape) {
    server_.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
  }

  ~StubServer() { stop(); }

  /// Binds to host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    port_ = bound;
    return bound;
  }

  /// Blocks serving requests until stop().
  void serve() { server_.listen_after_bind(); }

  void start_background() {
    thread_ = std::thread([this] { serve(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const { return "http://" + host_ + ":" + std::to_string(port_); }

  std::size_t served() const { return oracle_.query_count(); }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    if (opts_.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opts_.delay_ms));
    try {
      const Image img = decode_request(req);
      const Label label = oracle_.classify(img);
      res.set_content(nlohmann::json{{"label", label}, {"model", "synthetic-stub"}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  static Image decode_request(const httplib::Request& req) {
    const auto type = req.get_header_value("Content-Type");
    const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
    const std::span<const std::uint8_t> bytes(data, req.body.size());
    if (type == kRawTensorContentType) {
      Shape s;
      const auto dims = req.get_header_value("X-Image-Shape");
      if (std::sscanf(dims.c_str(), "%d,%d,%d", &s.channels, &s.height, &s.width) != 3)
        throw std::invalid_argument("missing or malformed X-Image-Shape header");
      return Image::from_bytes(s, bytes);
    }
    return decode_png(bytes);
  }

  StubServerOptions opts_;
  SyntheticOracle oracle_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
};

}  // namespace devopatch
