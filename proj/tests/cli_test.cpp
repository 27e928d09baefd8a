#include "webstar/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "webstar/sim.hpp"
#include "webstar/trajectory.hpp"
#include "webstar/util.hpp"

namespace webstar::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("webstar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    for (const char* v : {"WEBSTAR_PAGES", "WEBSTAR_CONFIG", "WEBSTAR_SEED", "WEBSTAR_API_KEY"}) ::unsetenv(v);
  }
  void TearDown() override {
    for (const char* v : {"WEBSTAR_PAGES", "WEBSTAR_CONFIG", "WEBSTAR_SEED"}) ::unsetenv(v);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::size_t pages_in(const std::string& world) const { return sim::load_world(world).site.pages.size(); }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"no-such-command"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-site"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-site", "--out", path("w.json"), "--pages", "many"}).code, kExitUsage);
  EXPECT_EQ(run({"export-sft", "--in", "x", "--out", "y", "--mode", "some"}).code, kExitUsage);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE((r.out + r.err).find("collect"), std::string::npos);
  EXPECT_EQ(run({"grade", "--help"}).code, kExitOk);
}

TEST_F(CliTest, BadInputExitsTwo) {
  EXPECT_EQ(run({"collect", "--world", path("missing.json"), "--out", path("t.jsonl")}).code, kExitInput);
  std::ofstream(path("bad.jsonl")) << "{oops\n";
  EXPECT_EQ(run({"stats", "--in", path("bad.jsonl")}).code, kExitInput);
  ASSERT_EQ(run({"gen-site", "--out", path("w.json"), "--pages", "12"}).code, kExitOk);
  ASSERT_EQ(run({"collect", "--world", path("w.json"), "--rollouts", "2", "--out", path("t.jsonl")}).code, kExitOk);
  // Ungraded trajectories cannot be exported with the step mask.
  EXPECT_EQ(run({"export-sft", "--in", path("t.jsonl"), "--out", path("s.jsonl")}).code, kExitInput);
}

TEST_F(CliTest, EnvironmentAndConfigPrecedence) {
  std::ofstream(path("c.ini")) << "# defaults\npages = 18\n[collect]\nrollouts = 3\n";
  ::setenv("WEBSTAR_CONFIG", path("c.ini").c_str(), 1);
  ASSERT_EQ(run({"gen-site", "--out", path("cfg.json")}).code, kExitOk);
  EXPECT_EQ(pages_in(path("cfg.json")), 18u);

  ::setenv("WEBSTAR_PAGES", "15", 1);
  ASSERT_EQ(run({"gen-site", "--out", path("env.json")}).code, kExitOk);
  EXPECT_EQ(pages_in(path("env.json")), 15u);

  ASSERT_EQ(run({"gen-site", "--out", path("flag.json"), "--pages", "12"}).code, kExitOk);
  EXPECT_EQ(pages_in(path("flag.json")), 12u);

  ::unsetenv("WEBSTAR_PAGES");
  ASSERT_EQ(run({"collect", "--world", path("cfg.json"), "--out", path("t.jsonl")}).code, kExitOk);
  EXPECT_EQ(read_jsonl(path("t.jsonl")).size(), 17u * 3u);
  const auto manifest = json::parse(read_file(path("t.jsonl") + ".manifest.json"));
  EXPECT_EQ(manifest["settings"]["rollouts"], "3");
}

TEST_F(CliTest, CollectCountsAndDeterminism) {
  ASSERT_EQ(run({"gen-site", "--seed", "3", "--out", path("w.json")}).code, kExitOk);
  ASSERT_EQ(run({"collect", "--world", path("w.json"), "--tasks", "50", "--rollouts", "16", "--seed", "5",
                 "--out", path("a.jsonl"), "--parallelism", "1"})
                .code,
            kExitOk);
  ASSERT_EQ(run({"collect", "--world", path("w.json"), "--tasks", "50", "--rollouts", "16", "--seed", "5",
                 "--out", path("b/a.jsonl"), "--parallelism", "8"})
                .code,
            kExitOk);
  const auto trajs = read_jsonl(path("a.jsonl"));
  EXPECT_EQ(trajs.size(), 800u);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b/a.jsonl")));
  const auto ma = read_file(path("a.jsonl") + ".manifest.json");
  EXPECT_EQ(ma, read_file(path("b/a.jsonl") + ".manifest.json"));
  const auto m = json::parse(ma);
  EXPECT_EQ(m["schema_version"], "webstar-manifest/1");
  EXPECT_EQ(m["command"], "collect");
  EXPECT_EQ(m["counts"]["trajectories"], 800);
  EXPECT_EQ(m["outputs"][0]["sha256"], sha256_hex(read_file(path("a.jsonl"))));
  EXPECT_FALSE(m["settings"].contains("parallelism"));
}

TEST_F(CliTest, PipelineThroughEval) {
  ASSERT_EQ(run({"gen-site", "--seed", "1", "--pages", "20", "--out", path("w.json")}).code, kExitOk);
  ASSERT_EQ(run({"collect", "--world", path("w.json"), "--rollouts", "4", "--out", path("t.jsonl")}).code, kExitOk);
  ASSERT_EQ(run({"grade", "--world", path("w.json"), "--in", path("t.jsonl"), "--out", path("g.jsonl")}).code, kExitOk);
  ASSERT_EQ(run({"filter", "--world", path("w.json"), "--in", path("g.jsonl"), "--out", path("f.jsonl")}).code,
            kExitOk);
  ASSERT_EQ(run({"augment", "--world", path("w.json"), "--in", path("f.jsonl"), "--out", path("a.jsonl")}).code,
            kExitOk);
  ASSERT_EQ(run({"export-sft", "--in", path("a.jsonl"), "--out", path("s.jsonl")}).code, kExitOk);
  ASSERT_EQ(run({"export-sft", "--in", path("a.jsonl"), "--out", path("all.jsonl"), "--mode", "all_steps"}).code,
            kExitOk);
  ASSERT_EQ(run({"train-toy", "--world", path("w.json"), "--in", path("s.jsonl"), "--out", path("p.json")}).code,
            kExitOk);
  ASSERT_EQ(run({"train-toy", "--world", path("w.json"), "--in", path("all.jsonl"), "--out", path("q.json")}).code,
            kExitOk);
  const auto r = run({"eval", "--world", path("w.json"), "--policy", "Filtered=" + path("p.json"), "--policy",
                      "All steps=" + path("q.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("Pass@1 (Pass@4)"), std::string::npos);
  EXPECT_NE(r.out.find("Filtered"), std::string::npos);
  const auto st = run({"stats", "--in", path("g.jsonl")});
  EXPECT_EQ(st.code, kExitOk);
}

TEST_F(CliTest, AgreementFromCounts) {
  const auto r = run({"agreement", "--counts", "36,16,11,37"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("0.73"), std::string::npos);
  EXPECT_EQ(run({"agreement", "--counts", "1,2"}).code, kExitUsage);
}

// Alternates a valid grade with an authorization failure.
class AlternatingServer {
 public:
  AlternatingServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
      if (calls_++ % 2 == 0) {
        res.set_content(R"({"choices":[{"message":{"content":"8. Expected Value\nExpected value: 7"}}]})",
                        "application/json");
      } else {
        res.status = 401;
        res.set_content("{}", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~AlternatingServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  int calls_ = 0;
  std::thread thread_;
};

TEST_F(CliTest, RemoteFailuresArePartialOrBackend) {
  ASSERT_EQ(run({"gen-site", "--pages", "8", "--out", path("w.json")}).code, kExitOk);
  ASSERT_EQ(run({"collect", "--world", path("w.json"), "--tasks", "1", "--rollouts", "1", "--noise", "0",
                 "--out", path("t.jsonl")})
                .code,
            kExitOk);
  const auto steps = read_jsonl(path("t.jsonl"))[0].steps.size();
  ASSERT_GE(steps, 2u);
  {
    AlternatingServer server;
    const auto r = run({"grade", "--backend", "remote", "--url", server.url(), "--world", path("w.json"), "--in",
                        path("t.jsonl"), "--out", path("g.jsonl"), "--retries", "1", "--parallelism", "1"});
    EXPECT_EQ(r.code, kExitPartial) << r.err;
    const auto graded = read_jsonl(path("g.jsonl"));
    ASSERT_EQ(graded.size(), 1u);
    EXPECT_EQ(graded[0].steps[0].grade->score, 7);
    EXPECT_FALSE(graded[0].steps[1].grade.has_value());
    EXPECT_TRUE(fs::exists(path("g.jsonl") + ".failures.json"));
  }
  int closed = 0;
  {
    httplib::Server probe;
    closed = probe.bind_to_any_port("127.0.0.1");
  }
  const auto r = run({"grade", "--backend", "remote", "--url", "http://127.0.0.1:" + std::to_string(closed) + "/v1",
                      "--world", path("w.json"), "--in", path("t.jsonl"), "--out", path("h.jsonl"), "--retries", "1",
                      "--retry-delay-ms", "0", "--timeout", "1"});
  EXPECT_EQ(r.code, kExitBackend);
}

}  // namespace
}  // namespace webstar::cli
