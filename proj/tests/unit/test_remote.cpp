#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <map>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "saber/error.hpp"
#include "saber/remote_scorer.hpp"
#include "saber/scorer.hpp"
#include "test_support.hpp"

extern char** environ;

namespace {

using namespace saber;
using nlohmann::json;

const std::string kServer = SABER_FIXTURE_SCORER;

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string run_capture(const std::string& cmd) {
  std::string out;
  FILE* f = ::popen(cmd.c_str(), "r");
  if (f == nullptr) return out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, f)) out.append(buf, n);
  ::pclose(f);
  return out;
}

// Key responses by the raw id text so u64 ids and null compare exactly.
std::map<std::string, json> by_id(const std::vector<std::string>& lines) {
  std::map<std::string, json> out;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    const json j = json::parse(l);
    out[j.at("id").dump()] = j;
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    out.push_back(text.substr(pos, nl - pos));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return out;
}

void expect_golden(const std::map<std::string, json>& got, const std::string& where) {
  const auto want = by_id(read_lines(saber::testing::data_dir() / "protocol/responses.jsonl"));
  ASSERT_EQ(got.size(), want.size()) << where;
  for (const auto& [id, w] : want) {
    auto it = got.find(id);
    ASSERT_NE(it, got.end()) << where << ": no response for id " << id;
    if (w.contains("error")) {
      EXPECT_TRUE(it->second.contains("error")) << where << " id " << id;
      if (w.at("error") != "*") EXPECT_EQ(it->second.at("error"), w.at("error"));
    } else {
      ASSERT_TRUE(it->second.contains("score")) << where << " id " << id;
      EXPECT_EQ(it->second.at("score").get<double>(), w.at("score").get<double>());
    }
  }
}

TEST(Protocol, RequestsAreFormattedExactlyAsTheGoldenLines) {
  const auto lines = read_lines(saber::testing::data_dir() / "protocol/requests.jsonl");
  EXPECT_EQ(format_request(1, {"score=2.5", {"d00001", "d00002"}}), lines[0] + "\n");
  EXPECT_EQ(format_request(2, {"q00007", {}}), lines[1] + "\n");
  EXPECT_EQ(format_request(18446744073709551615ULL, {"score=-7.125", {"d00009"}}),
            lines[4] + "\n");
}

TEST(Protocol, FixtureServerAnswersGoldenRequests) {
  const auto req = (saber::testing::data_dir() / "protocol/requests.jsonl").string();
  expect_golden(by_id(split_lines(run_capture(kServer + " --mode echo < " + req))), "in order");
  expect_golden(by_id(split_lines(run_capture(kServer + " --mode echo --reverse 4 < " + req))),
                "reversed");
}

RemoteOptions stdio(const std::string& args) {
  RemoteOptions o;
  o.endpoint = "stdio:" + kServer + " " + args;
  o.timeout = std::chrono::milliseconds(20'000);
  o.backoff = std::chrono::milliseconds(5);
  return o;
}

TEST(RemoteScorer, EchoOverStdio) {
  RemoteScorer s(stdio("--mode echo"));
  EXPECT_EQ(s.score({"score=2.5", {"a"}}), 2.5);
  EXPECT_EQ(s.score({"q", {"a", "b", "c"}}), 3.0);
  EXPECT_EQ(s.connections(), 1);
}

TEST(RemoteScorer, PipelinedOutOfOrderResponsesAreMatchedById) {
  RemoteScorer s(stdio("--mode echo --reverse 7"));
  std::vector<ScoreRequest> reqs;
  for (int i = 0; i < 50; ++i) reqs.push_back({"score=" + std::to_string(i) + ".5", {"x"}});
  const auto got = s.score_many(reqs);
  ASSERT_EQ(got.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(got[static_cast<std::size_t>(i)], i + 0.5);
}

TEST(RemoteScorer, ServerErrorsAreNotRetried) {
  RemoteScorer s(stdio("--mode echo"));
  try {
    s.score({"bad-query", {"a"}});
    FAIL() << "expected ScorerError";
  } catch (const ScorerError& e) {
    EXPECT_FALSE(e.retriable());
  }
  EXPECT_EQ(s.connections(), 1);
  EXPECT_EQ(s.score({"score=1", {}}), 1.0);  // the connection stays usable
}

TEST(RemoteScorer, DroppedConnectionIsRetriedOnce) {
  saber::testing::TempDir dir("drop");
  const auto marker = (dir / "dropped").string();
  RemoteScorer s(stdio("--mode echo --drop-once " + marker));
  std::vector<ScoreRequest> reqs{{"score=4", {}}, {"score=5", {}}};
  EXPECT_EQ(s.score_many(reqs), (std::vector<double>{4.0, 5.0}));
  EXPECT_EQ(s.connections(), 2);
  EXPECT_TRUE(std::filesystem::exists(marker));
}

TEST(RemoteScorer, UnreachableEndpointGivesRetriableError) {
  RemoteOptions o;
  o.endpoint = "tcp://127.0.0.1:1";
  o.retries = 1;
  o.backoff = std::chrono::milliseconds(1);
  RemoteScorer s(o);
  try {
    s.score({"q", {}});
    FAIL() << "expected ScorerError";
  } catch (const ScorerError& e) {
    EXPECT_TRUE(e.retriable());
  }
  o.endpoint = "http://x";
  EXPECT_THROW(RemoteScorer{o}, ConfigError);
  o.endpoint = "tcp://localhost";
  RemoteScorer noport(o);
  EXPECT_THROW(noport.score({"q", {}}), ScorerError);
}

// Runs the fixture server on an ephemeral TCP port for the test's lifetime.
class TcpServer {
 public:
  explicit TcpServer(std::vector<std::string> extra) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe");
    std::vector<std::string> args{kServer, "--listen", "0"};
    args.insert(args.end(), extra.begin(), extra.end());
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, fds[0]);
    if (posix_spawn(&pid_, kServer.c_str(), &fa, nullptr, argv.data(), environ) != 0) {
      throw std::runtime_error("spawn");
    }
    posix_spawn_file_actions_destroy(&fa);
    ::close(fds[1]);
    FILE* out = ::fdopen(fds[0], "r");
    if (std::fscanf(out, "port %d", &port_) != 1) throw std::runtime_error("no port line");
    std::fclose(out);
  }
  ~TcpServer() {
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }
  std::string endpoint() const { return "tcp://127.0.0.1:" + std::to_string(port_); }

 private:
  pid_t pid_ = -1;
  int port_ = 0;
};

TEST(RemoteScorer, OracleOverTcpMatchesLocalOracle) {
  const auto store_path = saber::testing::data_dir() / "tiny.icdstore";
  TcpServer server({"--mode", "oracle", "--store", store_path.string(), "--reverse", "3"});
  RemoteOptions o;
  o.endpoint = server.endpoint();
  RemoteScorer remote(o);
  const Store store = load_store(store_path);
  OracleScorer local(store.library, store.queries);
  const std::vector<ScoreRequest> reqs{{"val-1", {"coco-17"}},
                                       {"val-1", {"coco-42", "coco-17"}},
                                       {"val-1", {"flickr-3", "coco-17", "coco-42"}},
                                       {"val-1", {}}};
  const auto got = remote.score_many(reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_DOUBLE_EQ(got[i], local.score(reqs[i])) << i;
  }
  EXPECT_THROW(remote.score({"val-1", {"nope"}}), ScorerError);
}

TEST(RemoteScorer, ConcurrentCallersShareOneConnection) {
  TcpServer server({"--mode", "echo"});
  RemoteOptions o;
  o.endpoint = server.endpoint();
  RemoteScorer s(o);
  std::vector<std::thread> threads;
  std::atomic<int> wrong{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        const double want = t * 100 + i;
        if (s.score({"score=" + std::to_string(want), {}}) != want) ++wrong;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(wrong.load(), 0);
  EXPECT_EQ(s.connections(), 1);
}

}  // namespace
