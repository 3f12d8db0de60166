#pragma once

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "fair_context/error.hpp"
#include "fair_context/predictors.hpp"

namespace fairctx {

// Client side of the adapter wire protocol: newline-delimited JSON over the
// child's stdin/stdout.
//   -> {"type":"hello","version":1}
//   <- {"type":"ready","model":"<name>","max_context":<int|null>}
//   -> {"type":"predict","id":<int>,"context_x":[[...]],"context_y":[...],"query_x":[[...]]}
//   <- {"type":"proba","id":<int>,"p1":[...]} | {"type":"error","id":<int>,"message":"..."}
//   -> {"type":"bye"}
inline constexpr int kAdapterProtocolVersion = 1;

struct AdapterOptions {
  std::chrono::milliseconds timeout{120000};
  std::size_t query_chunk = 4096;
};

class AdapterClient {
 public:
  /// Launches `command` via /bin/sh and completes the handshake.
  explicit AdapterClient(const std::string& command, AdapterOptions options = {})
      : options_(options) {
    int sockets[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sockets) != 0)
      fail(ErrorCode::adapter_unavailable, std::string("socketpair: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sockets[0]);
      ::close(sockets[1]);
      fail(ErrorCode::adapter_unavailable, std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::setpgid(0, 0);  // own group, so shutdown also reaches processes the shell spawned
      ::dup2(sockets[1], STDIN_FILENO);
      ::dup2(sockets[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sockets[1]);
    fd_ = sockets[0];

    try {
      send({{"type", "hello"}, {"version", kAdapterProtocolVersion}});
      const auto reply = receive();
      if (reply.value("type", "") != "ready")
        fail(ErrorCode::protocol_error, "expected ready message, got: " + reply.dump());
      model_ = reply.value("model", "unknown");
      if (reply.contains("max_context") && reply["max_context"].is_number_unsigned())
        max_context_ = reply["max_context"].get<std::size_t>();
    } catch (const Error& e) {
      terminate();
      if (e.code() == ErrorCode::protocol_error || e.code() == ErrorCode::timeout) throw;
      throw Error(ErrorCode::adapter_unavailable, "handshake with '" + command + "' failed: " + e.detail());
    }
  }

  AdapterClient(const AdapterClient&) = delete;
  AdapterClient& operator=(const AdapterClient&) = delete;

  ~AdapterClient() {
    if (fd_ >= 0) {
      try {
        send({{"type", "bye"}});
      } catch (...) {
      }
    }
    terminate();
  }

  const std::string& model() const { return model_; }
  std::optional<std::size_t> max_context() const { return max_context_; }

  /// One request per chunk of query rows; probabilities concatenated in order.
  Vector predict(const Matrix& context_x, std::span<const int> context_y, const Matrix& query_x) {
    detail::check_context(context_x, context_y, query_x);
    const auto cx = rows_json(context_x, 0, context_x.rows());
    const nlohmann::json cy(std::vector<int>(context_y.begin(), context_y.end()));
    Vector out(query_x.rows());
    const auto chunk = static_cast<Eigen::Index>(std::max<std::size_t>(options_.query_chunk, 1));
    for (Eigen::Index start = 0; start < query_x.rows(); start += chunk) {
      const Eigen::Index count = std::min(chunk, query_x.rows() - start);
      const auto id = next_id_++;
      send({{"type", "predict"},
            {"id", id},
            {"context_x", cx},
            {"context_y", cy},
            {"query_x", rows_json(query_x, start, count)}});
      const auto reply = receive();
      const auto type = reply.value("type", "");
      if (type == "error") fail(ErrorCode::adapter_error, reply.value("message", "(no message)"));
      if (type != "proba") fail(ErrorCode::protocol_error, "unexpected message: " + reply.dump());
      if (!reply.contains("id") || reply["id"] != id)
        fail(ErrorCode::protocol_error, "response id mismatch: " + reply.dump());
      const auto& p1 = reply.contains("p1") ? reply["p1"] : nlohmann::json();
      if (!p1.is_array() || static_cast<Eigen::Index>(p1.size()) != count)
        fail(ErrorCode::protocol_error,
             "length mismatch: expected " + std::to_string(count) + " probabilities");
      for (Eigen::Index i = 0; i < count; ++i) {
        const auto& v = p1[static_cast<std::size_t>(i)];
        if (!v.is_number() || !(v.get<double>() >= 0.0 && v.get<double>() <= 1.0))
          fail(ErrorCode::protocol_error, "probability out of range: " + v.dump());
        out(start + i) = v.get<double>();
      }
    }
    return out;
  }

 private:
  static nlohmann::json rows_json(const Matrix& m, Eigen::Index start, Eigen::Index count) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = start; i < start + count; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  }

  void send(const nlohmann::json& message) {
    const std::string line = message.dump() + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
      const auto n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::adapter_unavailable, std::string("write to adapter: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  nlohmann::json receive() {
    const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
    for (;;) {
      const auto newline = buffer_.find('\n');
      if (newline != std::string::npos) {
        std::string line = buffer_.substr(0, newline);
        buffer_.erase(0, newline + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object())
          fail(ErrorCode::protocol_error, "malformed line: " + line);
        return parsed;
      }
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) fail(ErrorCode::timeout, "no response from adapter");
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::adapter_unavailable, std::string("poll: ") + std::strerror(errno));
      }
      if (ready == 0) fail(ErrorCode::timeout, "no response from adapter");
      char chunk[65536];
      const auto n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(ErrorCode::adapter_unavailable, std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) fail(ErrorCode::adapter_unavailable, "adapter closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void terminate() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      int status = 0;
      for (int attempt = 0; attempt < 50; ++attempt) {
        if (::waitpid(pid_, &status, WNOHANG) != 0) {
          pid_ = -1;
          return;
        }
        ::usleep(10000);
      }
      ::kill(-pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  AdapterOptions options_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  std::string model_;
  std::optional<std::size_t> max_context_;
  long long next_id_ = 1;
};

/// external_predict behind the InContextPredictor interface.
class ExternalPredictor final : public InContextPredictor {
 public:
  explicit ExternalPredictor(const std::string& command, AdapterOptions options = {})
      : client_(command, options) {}

  Vector predict_proba(const Matrix& context_x, std::span<const int> context_y,
                       const Matrix& query_x) override {
    return client_.predict(context_x, context_y, query_x);
  }
  std::string name() const override { return "external:" + client_.model(); }
  std::optional<std::size_t> max_context() const override { return client_.max_context(); }

 private:
  AdapterClient client_;
};

inline Vector external_predict(AdapterClient& client, const Matrix& context_x,
                               std::span<const int> context_y, const Matrix& query_x) {
  return client.predict(context_x, context_y, query_x);
}

}  // namespace fairctx
