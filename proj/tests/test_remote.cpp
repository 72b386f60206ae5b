#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <thread>

#include "devopatch/http_oracle.hpp"
#include "devopatch/stub_server.hpp"
#include "devopatch/subprocess_oracle.hpp"

using namespace devopatch;

namespace {

Image random_image(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<std::uint8_t> b(s.elements());
  for (auto& v : b) v = static_cast<std::uint8_t>(byte(rng));
  return Image::from_bytes(s, b);
}

HttpOracleOptions http_options(const std::string& endpoint, int timeout_ms = 2000) {
  HttpOracleOptions o;
  o.endpoint = endpoint;
  o.timeout_ms = timeout_ms;
  return o;
}

/// Raw httplib server answering every classify request with a fixed body and status.
class CannedServer {
 public:
  CannedServer(std::string body, int status) {
    server_.Post("/classify", [body, status](const httplib::Request&, httplib::Response& res) {
      res.status = status;
      res.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~CannedServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST(HttpOracle, StubReturnsLabel) {
  StubServer stub(StubServerOptions{ConstantLabel{3}, std::nullopt, 0});
  stub.bind();
  stub.start_background();
  HttpOracle o(http_options(stub.endpoint()));
  EXPECT_EQ(o.classify(random_image(Shape{3, 8, 8}, 1)), 3);
  EXPECT_EQ(o.query_count(), 1u);
  EXPECT_EQ(stub.served(), 1u);
  EXPECT_FALSE(o.deterministic());
}

TEST(HttpOracle, QuadrantOverPngAndRawTensorMatchesInProcess) {
  StubServer stub(StubServerOptions{QuadrantMax{}, std::nullopt, 0});
  stub.bind();
  stub.start_background();
  auto png = http_options(stub.endpoint());
  auto raw = png;
  raw.encoding = WireEncoding::RawTensor;
  HttpOracle a(png), b(raw);
  SyntheticOracle local(QuadrantMax{});
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_image(Shape{s % 2 == 1 ? 3 : 1, 9, 12}, s);
    const auto expected = local.classify(x);
    EXPECT_EQ(a.classify(x), expected);
    EXPECT_EQ(b.classify(x), expected);
  }
}

TEST(HttpOracle, MalformedBody) {
  for (const char* body : {"not json", "{\"lbl\": 3}", "{\"label\": \"3\"}", "{\"label\": -1}", "[3]"}) {
    CannedServer server(body, 200);
    HttpOracle o(http_options(server.endpoint()));
    try {
      o.classify(Image(Shape{1, 4, 4}));
      ADD_FAILURE() << "accepted " << body;
    } catch (const OracleFailure& e) {
      EXPECT_EQ(e.kind(), OracleFailure::Kind::Malformed) << body;
    }
    EXPECT_EQ(o.query_count(), 0u);
  }
}

TEST(HttpOracle, Non200Status) {
  CannedServer server("{\"label\": 1}", 503);
  HttpOracle o(http_options(server.endpoint()));
  try {
    o.classify(Image(Shape{1, 4, 4}));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.kind(), OracleFailure::Kind::Status);
    EXPECT_EQ(e.status(), 503);
  }
  EXPECT_EQ(o.query_count(), 0u);
}

TEST(HttpOracle, SlowServerTimesOut) {
  StubServer stub(StubServerOptions{ConstantLabel{1}, std::nullopt, 100});
  stub.bind();
  stub.start_background();
  auto opts = http_options(stub.endpoint(), 50);
  opts.retries = 1;
  HttpOracle o(opts);
  try {
    o.classify(Image(Shape{1, 4, 4}));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.kind(), OracleFailure::Kind::Timeout);
    EXPECT_EQ(e.attempts(), 2);
  }
  EXPECT_EQ(o.query_count(), 0u);
}

TEST(HttpOracle, ConnectionRefused) {
  // Nothing listens on port 1.
  auto opts = http_options("http://127.0.0.1:1", 500);
  opts.retries = 0;
  HttpOracle o(opts);
  try {
    o.classify(Image(Shape{1, 4, 4}));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.kind(), OracleFailure::Kind::Connection);
  }
  EXPECT_EQ(o.query_count(), 0u);
}

TEST(HttpOracle, TimeoutDefaultsFromEnvironment) {
  ::setenv("DEVOPATCH_HTTP_TIMEOUT_MS", "1234", 1);
  EXPECT_EQ(default_http_timeout_ms(), 1234);
  ::setenv("DEVOPATCH_HTTP_TIMEOUT_MS", "garbage", 1);
  EXPECT_EQ(default_http_timeout_ms(), kDefaultHttpTimeoutMs);
  ::unsetenv("DEVOPATCH_HTTP_TIMEOUT_MS");
  EXPECT_EQ(default_http_timeout_ms(), kDefaultHttpTimeoutMs);
}

TEST(HttpOracle, ParseLabelResponseIgnoresModelField) {
  EXPECT_EQ(parse_label_response(R"({"label": 4, "model": "x"})"), 4);
}

TEST(StubServer, ConstantAndScripted) {
  StubServer constant(StubServerOptions{ConstantLabel{1}, std::nullopt, 0});
  constant.bind();
  constant.start_background();
  HttpOracle a(http_options(constant.endpoint()));
  EXPECT_EQ(a.classify(Image(Shape{1, 4, 4})), 1);

  StubServer scripted(StubServerOptions{ScriptedLabels{{0, 1}}, std::nullopt, 0});
  scripted.bind();
  scripted.start_background();
  HttpOracle b(http_options(scripted.endpoint()));
  const Image x(Shape{1, 4, 4});
  EXPECT_EQ(b.classify(x), 0);
  EXPECT_EQ(b.classify(x), 1);
  EXPECT_EQ(b.classify(x), 0);
}

TEST(StubServer, RejectsUndecodableBody) {
  StubServer stub(StubServerOptions{});
  stub.bind();
  stub.start_background();
  httplib::Client cli(stub.endpoint());
  const auto res = cli.Post("/classify", "garbage", "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(StubServer, ConcurrentClients) {
  StubServer stub(StubServerOptions{QuadrantMax{}, std::nullopt, 0});
  stub.bind();
  stub.start_background();
  auto opts = http_options(stub.endpoint());
  opts.max_connections = 4;
  HttpOracle shared(opts);
  std::atomic<int> mismatches{0};
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        SyntheticOracle local(QuadrantMax{});
        for (int k = 0; k < 10; ++k) {
          const auto x = random_image(Shape{1, 8, 8}, 100 * t + k);
          if (shared.classify(x) != local.classify(x)) ++mismatches;
        }
      });
    }
  }
  EXPECT_EQ(mismatches.load(), 0);
  EXPECT_EQ(shared.query_count(), 80u);
  EXPECT_EQ(stub.served(), 80u);
}

TEST(SubprocessOracle, EchoChild) {
  SubprocessOracle o(SubprocessOracleOptions{"while read l; do echo 5; done", 2000});
  EXPECT_EQ(o.classify(Image(Shape{1, 4, 4})), 5);
  EXPECT_EQ(o.classify(Image(Shape{3, 4, 4})), 5);
  EXPECT_EQ(o.query_count(), 2u);
}

TEST(SubprocessOracle, ChildClosingOutputIsEof) {
  SubprocessOracle o(SubprocessOracleOptions{"exec >&-; cat >/dev/null", 2000});
  try {
    o.classify(Image(Shape{1, 4, 4}));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.kind(), OracleFailure::Kind::Eof);
  }
  EXPECT_EQ(o.query_count(), 0u);
}

TEST(SubprocessOracle, NonIntegerReplyIsParseFailure) {
  SubprocessOracle o(SubprocessOracleOptions{"while read l; do echo five; done", 2000});
  try {
    o.classify(Image(Shape{1, 4, 4}));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.kind(), OracleFailure::Kind::Parse);
  }
  EXPECT_EQ(o.query_count(), 0u);
}

TEST(SubprocessOracle, SilentChildTimesOut) {
  SubprocessOracle o(SubprocessOracleOptions{"cat >/dev/null", 100});
  try {
    o.classify(Image(Shape{1, 4, 4}));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.kind(), OracleFailure::Kind::Timeout);
  }
}

TEST(SubprocessOracle, ChildOracleMatchesInProcess) {
  SubprocessOracle o(SubprocessOracleOptions{std::string(CHILD_ORACLE_PATH) + " quadrant", 5000});
  SyntheticOracle local(QuadrantMax{});
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_image(Shape{3, 10, 10}, s);
    EXPECT_EQ(o.classify(x), local.classify(x));
  }
}
