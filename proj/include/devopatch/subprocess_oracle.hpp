#pragma once

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <string>
#include <thread>

#include "devopatch/base64.hpp"
#include "devopatch/image_io.hpp"
#include "devopatch/oracle.hpp"

extern char** environ;

namespace devopatch {

struct SubprocessOracleOptions {
  std::string command;  // run through /bin/sh -c
  int timeout_ms = 10000;
};

/// Talks to a child process over a line protocol: one base64 PNG per request line,
/// one ASCII decimal label per response line. Not safe for concurrent use.
class SubprocessOracle final : public LabelOracle {
 public:
  explicit SubprocessOracle(SubprocessOracleOptions opts, std::optional<Shape> shape = std::nullopt)
      : LabelOracle(shape), opts_(std::move(opts)) {
    if (opts_.command.empty()) throw std::invalid_argument("subprocess oracle needs a command");
    spawn();
  }

  ~SubprocessOracle() override { shutdown(); }

  bool deterministic() const override { return false; }

  pid_t pid() const { return pid_; }

 protected:
  Label do_classify(const Image& x) override {
    std::string line = base64_encode(encode_png(x));
    line.push_back('\n');
    write_all(line);
    const std::string reply = read_line();
    Label label = -1;
    const char* first = reply.data();
    const char* last = reply.data() + reply.size();
    while (last > first && (last[-1] == '\r' || last[-1] == ' ')) --last;
    const auto [ptr, ec] = std::from_chars(first, last, label);
    if (ec != std::errc() || ptr != last || label < 0) {
      throw OracleFailure(OracleFailure::Kind::Parse, "child replied '" + reply + "', expected a nonnegative integer");
    }
    return label;
  }

 private:
  void spawn() {
    int in_pair[2];
    int out_pair[2];
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0 ||
        socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, out_pair) != 0) {
      throw std::system_error(errno, std::generic_category(), "socketpair");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pair[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pair[1], STDOUT_FILENO);
    const char* argv[] = {"sh", "-c", opts_.command.c_str(), nullptr};
    const int rc = posix_spawn(&pid_, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pair[1]);
    ::close(out_pair[1]);
    if (rc != 0) {
      ::close(in_pair[0]);
      ::close(out_pair[0]);
      throw std::system_error(rc, std::generic_category(), "posix_spawn");
    }
    to_child_ = in_pair[0];
    from_child_ = out_pair[0];
  }

  void write_all(const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(to_child_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleFailure(OracleFailure::Kind::ChildExit,
                            std::string("writing to oracle child failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(opts_.timeout_ms);
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) throw OracleFailure(OracleFailure::Kind::Timeout, "oracle child did not answer in time");
      pollfd pfd{from_child_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(left));
      if (ready < 0 && errno == EINTR) continue;
      if (ready <= 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(from_child_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw OracleFailure(OracleFailure::Kind::Eof, "oracle child closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ <= 0) return;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

  SubprocessOracleOptions opts_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace devopatch
