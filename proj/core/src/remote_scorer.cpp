#include "saber/remote_scorer.hpp"

#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "saber/error.hpp"

namespace saber {

namespace {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int connect_tcp(const std::string& hostport) {
  const auto colon = hostport.rfind(':');
  if (colon == std::string::npos) {
    throw ScorerError("endpoint 'tcp://" + hostport + "' lacks a port", false);
  }
  const std::string host = hostport.substr(0, colon);
  const std::string port = hostport.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TransportError(fmt::format("resolve {}: {}", hostport, gai_strerror(rc)));
  }
  int fd = -1;
  for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0) throw TransportError(fmt::format("connect {}: {}", hostport, std::strerror(errno)));
  return fd;
}

int spawn_stdio(const std::string& command, int& pid_out) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) {
    throw TransportError(fmt::format("socketpair: {}", std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw TransportError(fmt::format("fork: {}", std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::close(sv[0]);
    ::close(sv[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  pid_out = pid;
  return sv[0];
}

void write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(fmt::format("write: {}", std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string format_request(std::uint64_t id, const ScoreRequest& req) {
  // Field order follows the protocol documentation.
  nlohmann::ordered_json j = {{"id", id}, {"query", req.query_id}, {"icds", req.icd_ids}};
  return j.dump() + "\n";
}

RemoteScorer::RemoteScorer(RemoteOptions opts) : opts_(std::move(opts)) {
  if (!opts_.endpoint.starts_with("tcp://") && !opts_.endpoint.starts_with("stdio:")) {
    throw ConfigError("scorer endpoint must start with tcp:// or stdio:, got '" +
                      opts_.endpoint + "'");
  }
}

RemoteScorer::~RemoteScorer() { disconnect(); }

int RemoteScorer::connections() const {
  std::lock_guard lock(mu_);
  return connections_;
}

void RemoteScorer::connect_locked() {
  if (fd_ >= 0 && !broken_) return;
  if (fd_ >= 0) {
    // The reader saw the stream close; it has already released the lock for
    // the last time, so joining here cannot deadlock.
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
    if (child_pid_ > 0) {
      ::kill(child_pid_, SIGTERM);
      ::waitpid(child_pid_, nullptr, 0);
    }
    fd_ = -1;
    child_pid_ = -1;
  }
  broken_ = false;
  int pid = -1;
  const int fd = opts_.endpoint.starts_with("tcp://") ? connect_tcp(opts_.endpoint.substr(6))
                                                      : spawn_stdio(opts_.endpoint.substr(6), pid);
  fd_ = fd;
  child_pid_ = pid;
  ++generation_;
  ++connections_;
  if (reader_.joinable()) reader_.join();
  reader_ = std::thread(&RemoteScorer::reader_loop, this, fd, generation_);
}

void RemoteScorer::disconnect() {
  int fd;
  int pid;
  {
    std::lock_guard lock(mu_);
    fd = fd_;
    pid = child_pid_;
    fd_ = -1;
    child_pid_ = -1;
    broken_ = false;
    ++generation_;
  }
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  if (reader_.joinable()) reader_.join();
  if (fd >= 0) ::close(fd);
  if (pid > 0) {
    ::kill(pid, SIGTERM);
    ::waitpid(pid, nullptr, 0);
  }
}

void RemoteScorer::fail_all_locked(State state, const std::string& why) {
  for (auto& [id, p] : pending_) {
    if (p.state == State::waiting) {
      p.state = state;
      p.error = why;
    }
  }
  cv_.notify_all();
}

void RemoteScorer::reader_loop(int fd, std::uint64_t generation) {
  std::string buf;
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buf.find('\n')) != std::string::npos) {
      const std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      if (line.empty()) continue;
      std::lock_guard lock(mu_);
      if (generation != generation_) return;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
        auto it = pending_.find(j.at("id").get<std::uint64_t>());
        if (it == pending_.end()) {
          spdlog::warn("scorer: response for unknown id {}", j.at("id").dump());
          continue;
        }
        if (j.contains("error")) {
          it->second.state = State::failed;
          it->second.error = j.at("error").get<std::string>();
        } else {
          it->second.state = State::done;
          it->second.score = j.at("score").get<double>();
        }
        cv_.notify_all();
      } catch (const nlohmann::json::exception& e) {
        fail_all_locked(State::failed, fmt::format("malformed response '{}': {}", line, e.what()));
      }
    }
  }
  std::lock_guard lock(mu_);
  if (generation != generation_) return;
  // Connection lost: the next call reconnects.
  fail_all_locked(State::transport, "connection closed by scorer");
  broken_ = true;
}

double RemoteScorer::score(const ScoreRequest& req) {
  return score_many(std::span<const ScoreRequest>(&req, 1)).front();
}

std::vector<double> RemoteScorer::score_many(std::span<const ScoreRequest> reqs) {
  std::vector<double> out(reqs.size(), 0.0);
  std::vector<std::size_t> todo(reqs.size());
  for (std::size_t i = 0; i < todo.size(); ++i) todo[i] = i;
  auto backoff = opts_.backoff;
  std::string last_error;

  for (int attempt = 0; attempt <= opts_.retries && !todo.empty(); ++attempt) {
    if (attempt > 0) {
      spdlog::warn("scorer: transport error ({}); retry {}/{} in {} ms", last_error, attempt,
                   opts_.retries, backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    std::vector<std::uint64_t> ids(todo.size());
    int fd;
    try {
      std::lock_guard lock(mu_);
      connect_locked();
      fd = fd_;
      for (std::size_t k = 0; k < todo.size(); ++k) {
        ids[k] = next_id_++;
        pending_.emplace(ids[k], Pending{});
      }
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }

    bool transport_failed = false;
    try {
      std::lock_guard wlock(write_mu_);
      std::string batch;
      for (std::size_t k = 0; k < todo.size(); ++k) batch += format_request(ids[k], reqs[todo[k]]);
      write_all(fd, batch);
    } catch (const TransportError& e) {
      last_error = e.what();
      transport_failed = true;
    }

    std::vector<std::size_t> retry;
    std::string scorer_error;
    {
      std::unique_lock lock(mu_);
      const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
      if (!transport_failed) {
        const bool finished = cv_.wait_until(lock, deadline, [&] {
          for (auto id : ids) {
            if (pending_.at(id).state == State::waiting) return false;
          }
          return true;
        });
        if (!finished) last_error = fmt::format("timeout after {} ms", opts_.timeout.count());
      }
      for (std::size_t k = 0; k < todo.size(); ++k) {
        const Pending p = pending_.at(ids[k]);
        pending_.erase(ids[k]);
        switch (p.state) {
          case State::done:
            out[todo[k]] = p.score;
            break;
          case State::failed:
            if (scorer_error.empty()) scorer_error = p.error;
            break;
          case State::transport:
            last_error = p.error;
            retry.push_back(todo[k]);
            break;
          case State::waiting:
            retry.push_back(todo[k]);
            break;
        }
      }
    }
    if (!scorer_error.empty()) throw ScorerError(scorer_error, false);
    if (!retry.empty()) disconnect();
    todo = std::move(retry);
  }
  if (!todo.empty()) {
    throw ScorerError(fmt::format("scorer unreachable after {} retries: {}", opts_.retries,
                                  last_error),
                      true);
  }
  return out;
}

}  // namespace saber
