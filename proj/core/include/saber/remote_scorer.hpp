#pragma once

// Client for the saber-score/v1 protocol: newline-delimited JSON over a byte
// stream. Requests `{"id":u64,"query":str,"icds":[str..]}`, responses
// `{"id":u64,"score":f}` or `{"id":u64,"error":str}` in any order.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "saber/scorer.hpp"

namespace saber {

struct RemoteOptions {
  // "tcp://host:port", or "stdio:<command>" to spawn a server speaking the
  // protocol on its stdin/stdout (run through /bin/sh -c).
  std::string endpoint;
  std::chrono::milliseconds timeout{120'000};
  int retries = 3;
  std::chrono::milliseconds backoff{200};  // doubled after every retry
};

class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(RemoteOptions opts);
  ~RemoteScorer() override;
  RemoteScorer(const RemoteScorer&) = delete;
  RemoteScorer& operator=(const RemoteScorer&) = delete;

  double score(const ScoreRequest& req) override;
  // Pipelines every request over the one connection and waits for all.
  std::vector<double> score_many(std::span<const ScoreRequest> reqs) override;

  // Number of (re)connections made so far.
  int connections() const;

 private:
  enum class State { waiting, done, failed, transport };
  struct Pending {
    State state = State::waiting;
    double score = 0.0;
    std::string error;
  };

  void connect_locked();
  void disconnect();
  void reader_loop(int fd, std::uint64_t generation);
  void fail_all_locked(State state, const std::string& why);

  RemoteOptions opts_;
  mutable std::mutex mu_;
  std::mutex write_mu_;
  std::condition_variable cv_;
  int fd_ = -1;
  int child_pid_ = -1;
  bool broken_ = false;
  std::uint64_t generation_ = 0;
  int connections_ = 0;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, Pending> pending_;
  std::thread reader_;
};

std::string format_request(std::uint64_t id, const ScoreRequest& req);

}  // namespace saber
