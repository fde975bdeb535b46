#include <doctest.h>

#include <chrono>
#include <fstream>
#include <random>

#include <json.hpp>

#include "memhub/fake_shim.hpp"
#include "memhub/memory.hpp"
#include "memhub/sandbox.hpp"
#include "test_util.hpp"

using namespace memhub;
using nlohmann::json;

namespace {

std::unique_ptr<Sandbox> fake_session(const std::string& id, FakeShimOptions opts = {}) {
  return InProcessSandboxProvider("/tmp/memhub-sbx", opts).open(id);
}

ExecLimits limits(int timeout_s = 5) { return ExecLimits{timeout_s, 512}; }

// Coder driven by a fixed list of programs; records the context it was shown.
class ScriptCoder : public CoderContract {
 public:
  explicit ScriptCoder(std::vector<std::string> programs) : programs_(std::move(programs)) {}
  std::string write_code(const CoderTurn& turn) override {
    seen_.push_back(turn.context.size());
    contexts_.push_back(turn.context);
    return programs_.at(std::min(turn.iteration, programs_.size() - 1));
  }
  std::vector<std::size_t> seen_;
  std::vector<std::vector<CodeContextEntry>> contexts_;

 private:
  std::vector<std::string> programs_;
};

class CollectingWriter : public ExperienceWriter {
 public:
  void write(const EpisodicExperience& exp, const std::string& prefix) override {
    got.emplace_back(exp, prefix);
  }
  std::vector<std::pair<EpisodicExperience, std::string>> got;
};

TaskSpec task(std::string id = "t1") {
  TaskSpec t;
  t.id = std::move(id);
  t.description = "count the pages";
  return t;
}

}  // namespace

TEST_CASE("shim wire forms are bit-exact") {
  ShimRequest r;
  r.code = "print(\"a\")\n";
  r.timeout_s = 5;
  CHECK(encode_shim_request(r) == R"({"op":"exec","code":"print(\"a\")\n","timeout_s":5})");
  ShimRequest reset;
  reset.op = ShimRequest::Op::kReset;
  CHECK(encode_shim_request(reset) == R"({"op":"reset"})");
  ShimReply rep;
  rep.stdout_text = "6\n";
  rep.wall_ms = 3;
  CHECK(encode_shim_reply(rep) ==
        R"({"status":"ok","stdout":"6\n","stderr":"","error_kind":null,"traceback":null,"wall_ms":3})");
  const auto back = decode_shim_request(encode_shim_request(r));
  CHECK(back.code == r.code);
  CHECK(back.timeout_s == 5);
  CHECK_THROWS_AS(decode_shim_request(R"({"op":"exec"})"), Error);
  CHECK_THROWS_AS(decode_shim_request(R"({"op":"run","code":"x"})"), Error);
  CHECK_THROWS_AS(decode_shim_request(R"({"op":"exec","code":"x","timeout_s":"5"})"), Error);
}

TEST_CASE("exec examples") {
  auto sbx = fake_session("sbx-exec");
  SUBCASE("arithmetic") {
    const auto fb = feedback(sbx->exec("print(1+1)", limits()));
    REQUIRE(fb.is_success());
    CHECK(fb.stdout_text().find('2') != std::string::npos);
  }
  SUBCASE("division by zero") {
    const auto fb = feedback(sbx->exec("1/0", limits()));
    REQUIRE_FALSE(fb.is_success());
    CHECK(fb.kind() == ErrorKind::kRuntimeError);
    CHECK(fb.message().find("division") != std::string::npos);
  }
  SUBCASE("empty code is rejected") {
    CHECK_THROWS_AS(sbx->exec("  \n", limits()), Error);
    CHECK(sbx->exec_calls() == 0);
  }
}

TEST_CASE("exec threads the environment state") {
  auto sbx = fake_session("sbx-state");
  const EnvState e0 = sbx->state();
  CHECK(e0.snapshot_ref() == "sbx-state#0");
  auto r1 = exec(*sbx, e0, "pip install pdfminer\nx = 41", limits());
  CHECK(r1.env.installed_packages == std::set<std::string>{"pdfminer"});
  CHECK(r1.env.exec_count == 1);
  auto r2 = exec(*sbx, r1.env, "import pdfminer\nprint(x + 1)", limits());
  CHECK(feedback(r2.raw) == Feedback::success("42\n"));
  CHECK(r2.env.variables_alive);
  // A stale state is refused.
  CHECK_THROWS_AS(exec(*sbx, e0, "print(1)", limits()), Error);
}

TEST_CASE("feedback classification") {
  SUBCASE("status ok") {
    ShimReply r;
    r.stdout_text = "ok";
    CHECK(feedback(parse_raw_output(encode_shim_reply(r))) == Feedback::success("ok"));
  }
  SUBCASE("traceback names a syntax failure and the kind is missing") {
    ShimReply r;
    r.status = "error";
    r.traceback = "  File \"<cell>\", line 1\n    def (:\nSyntaxError: invalid syntax\n";
    const auto fb = feedback(parse_raw_output(encode_shim_reply(r)));
    CHECK(fb.kind() == ErrorKind::kSyntaxError);
    CHECK(fb.message() == "SyntaxError: invalid syntax");
  }
  SUBCASE("uninstalled import on a clean sandbox") {
    auto sbx = fake_session("sbx-clean");
    const auto fb = feedback(sbx->exec("import chess", limits()));
    CHECK(fb.kind() == ErrorKind::kMissingDependency);
    CHECK(fb.message() == "ModuleNotFoundError: No module named 'chess'");
  }
  SUBCASE("malformed reply") {
    for (const char* bad : {"", "{", "[]", R"({"status":"maybe","stdout":"","stderr":"","error_kind":null,"traceback":null,"wall_ms":0})",
                            R"({"status":"ok","stdout":"","stderr":""})"}) {
      const auto fb = feedback(parse_raw_output(bad));
      CHECK(fb.kind() == ErrorKind::kRuntimeError);
      CHECK(fb.message() == "malformed sandbox reply");
    }
  }
  SUBCASE("every table row") {
    auto sbx = fake_session("sbx-table");
    CHECK(feedback(sbx->exec("def f(:\n  pass", limits())).kind() == ErrorKind::kSyntaxError);
    CHECK(feedback(sbx->exec("undefined_name", limits())).kind() == ErrorKind::kRuntimeError);
    CHECK(feedback(sbx->exec("from zipline import x", limits())).kind() == ErrorKind::kMissingDependency);
    CHECK(feedback(sbx->exec("while True:\n    pass", limits(2))).kind() == ErrorKind::kTimeout);
    CHECK(feedback(sbx->exec("b = bytearray(4000000000000)", limits())).kind() == ErrorKind::kResourceLimit);
  }
}

TEST_CASE("fake shim interpreter basics") {
  FakeShim shim;
  const auto run = [&](const std::string& code) { return shim.exec(code, 5); };
  CHECK(run("print(7 // 2, -7 // 2, 7 % -3, 1 / 4)").stdout_text == "3 -4 -2 0.25\n");
  CHECK(run("print(2.0, 0.1 + 0.2, 1e20)").stdout_text == "2.0 0.30000000000000004 1e+20\n");
  CHECK(run("s = 'ab' + \"cd\"\nprint(s * 2, len(s))").stdout_text == "abcdabcd 4\n");
  CHECK(run("def add(a, b):\n    \"\"\"Add.\"\"\"\n    return a + b\nprint(add(2, 3))").stdout_text == "5\n");
  CHECK(run("total = 0\nfor i in range(5):\n    if i == 3:\n        continue\n    total += i\nprint(total)")
            .stdout_text == "7\n");
  CHECK(run("n = 0\nwhile n < 10:\n    n += 3\nprint(n)").stdout_text == "12\n");
  CHECK(run("x = 5\nif x > 9:\n    print('big')\nelif x > 4:\n    print('mid')\nelse:\n    print('small')")
            .stdout_text == "mid\n");
  CHECK(run("print(int('12') + 1, str(3) + 'x', float('2.5'))").stdout_text == "13 3x 2.5\n");
  CHECK(run("def f(n):\n    return f(n + 1)\nf(0)").traceback->find("RecursionError") != std::string::npos);
  const auto partial = run("print('before')\nraise KeyError('k')\nprint('after')");
  CHECK(partial.stdout_text == "before\n");
  CHECK(partial.traceback->find("KeyError: k") != std::string::npos);
  const auto nested = run("  x = 1");
  CHECK(*nested.error_kind == "SyntaxError");
  CHECK(*run("def g():\nprint(1)").error_kind == "SyntaxError");
  CHECK(*run("return 3").error_kind == "SyntaxError");
  CHECK(*run("print('open").error_kind == "SyntaxError");
}

TEST_CASE("golden shim protocol suite against the in-process shim") {
  std::ifstream in(std::string(MEMHUB_TEST_DATA) + "/shim_protocol.jsonl");
  REQUIRE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    const auto c = json::parse(line);
    CAPTURE(c["name"].get<std::string>());
    FakeShim shim;
    for (const auto& s : c["setup"]) shim.handle_line(s.get<std::string>());
    const std::string request = c["request"].get<std::string>();
    // Valid requests must round-trip to the exact bytes in the suite.
    std::optional<ShimRequest> decoded;
    try {
      decoded = decode_shim_request(request);
    } catch (const Error&) {
    }
    if (decoded) {
      CHECK(encode_shim_request(*decoded) == request);
    } else {
      CHECK(c["expect"]["error_kind"] == "protocol");
    }
    const RawOutput raw = parse_raw_output(shim.handle_line(request));
    REQUIRE(raw.reply.has_value());
    const auto& e = c["expect"];
    const ShimReply& r = *raw.reply;
    CHECK(r.status == e["status"].get<std::string>());
    if (e.contains("stdout")) CHECK(r.stdout_text == e["stdout"].get<std::string>());
    if (e.contains("stderr")) CHECK(r.stderr_text == e["stderr"].get<std::string>());
    if (e["error_kind"].is_null()) {
      CHECK_FALSE(r.error_kind.has_value());
    } else {
      CHECK(r.error_kind == std::optional<std::string>(e["error_kind"].get<std::string>()));
    }
    if (e.contains("traceback_contains")) {
      REQUIRE(r.traceback.has_value());
      CHECK(r.traceback->find(e["traceback_contains"].get<std::string>()) != std::string::npos);
    }
    if (e.contains("stdout_len")) CHECK(r.stdout_text.size() == e["stdout_len"].get<std::size_t>());
    if (e.contains("stdout_suffix")) {
      const auto suffix = e["stdout_suffix"].get<std::string>();
      CHECK(r.stdout_text.ends_with(suffix));
    }
    if (e.contains("max_wall_ms")) CHECK(r.wall_ms <= e["max_wall_ms"].get<std::int64_t>());
    ++cases;
  }
  CHECK(cases == 12);
}

TEST_CASE("process shim: protocol, timeout and recycling") {
  const auto root = memhub::testing::temp_dir("proc");
  SUBCASE("real-time hang reported by the shim within timeout + grace") {
    ProcessSandboxProvider provider({MEMHUB_SHIM_PATH, "--real-time"}, root, 0);
    auto sbx = provider.open("sbx-proc-a");
    CHECK(std::filesystem::is_directory(sbx->state().workdir));
    CHECK(feedback(sbx->exec("x = 3\nprint(x * 2)", limits())) == Feedback::success("6\n"));
    const auto t0 = std::chrono::steady_clock::now();
    const auto fb = feedback(sbx->exec("while True:\n    pass", limits(2)));
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    CHECK(fb.kind() == ErrorKind::kTimeout);
    CHECK(elapsed >= std::chrono::milliseconds(1900));
    CHECK(elapsed <= std::chrono::milliseconds(3000));
    // The watchdog recovered, so the namespace survives.
    CHECK(feedback(sbx->exec("print(x)", limits())) == Feedback::success("3\n"));
    CHECK(sbx->state().generation == 0);
  }
  SUBCASE("unresponsive shim is killed after the grace period and respawned") {
    ProcessSandboxProvider provider({MEMHUB_SHIM_PATH, "--ignore-timeout"}, root, 0);
    auto sbx = provider.open("sbx-proc-b");
    sbx->exec("pip install chess\nx = 1", limits());
    CHECK(sbx->state().installed_packages.contains("chess"));
    const auto t0 = std::chrono::steady_clock::now();
    const auto raw = sbx->exec("while True:\n    pass", limits(1));
    const auto elapsed = std::chrono::steady_clock::now() - t0;
    CHECK(raw.timed_out_hard);
    CHECK(feedback(raw).kind() == ErrorKind::kTimeout);
    CHECK(elapsed <= std::chrono::milliseconds(2500));
    CHECK(sbx->state().generation == 1);
    CHECK_FALSE(sbx->state().variables_alive);
    CHECK(sbx->state().installed_packages.empty());
    // Fresh interpreter: x is gone, but the session works.
    CHECK(feedback(sbx->exec("print(x)", limits())).kind() == ErrorKind::kRuntimeError);
    CHECK(sbx->state().variables_alive);
  }
  SUBCASE("shim that exits is unavailable for that request, then respawned") {
    ProcessSandboxProvider provider({MEMHUB_SHIM_PATH}, root, 0);
    auto sbx = provider.open("sbx-proc-c");
    CHECK_THROWS_AS(sbx->exec("import os\nos._exit(3)", limits()), Error);
    CHECK(feedback(sbx->exec("print(5)", limits())) == Feedback::success("5\n"));
  }
  SUBCASE("missing shim binary") {
    ProcessSandboxProvider provider({"/nonexistent/shim"}, root, 0);
    auto sbx = provider.open("sbx-proc-d");
    try {
      sbx->exec("print(1)", limits());
      FAIL("expected SandboxUnavailable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kSandboxUnavailable);
    }
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("in-process shim exit surfaces as SandboxUnavailable") {
  auto sbx = fake_session("sbx-exit");
  try {
    sbx->exec("import sys\nsys.exit(1)", limits());
    FAIL("expected SandboxUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSandboxUnavailable);
  }
}

TEST_CASE("sessions are isolated") {
  InProcessSandboxProvider provider("/tmp/memhub-sbx");
  auto a = provider.open("sbx-t1-p0");
  auto b = provider.open("sbx-t1-p1");
  CHECK(a->state().session_id != b->state().session_id);
  CHECK(a->state().workdir != b->state().workdir);
  a->exec("secret = 1", limits());
  CHECK(feedback(b->exec("print(secret)", limits())).kind() == ErrorKind::kRuntimeError);
}

TEST_CASE("refinement loop: success on the first iteration") {
  auto sbx = fake_session("sbx-loop1");
  ScriptCoder coder({"def fetch_page():\n    return 'ok'\nprint(fetch_page())"});
  LoopOptions opts;
  opts.tool_id = "tool-t1-0";
  const auto out = run_refinement_loop(task(), "fetch the page", coder, *sbx, opts);
  REQUIRE(std::holds_alternative<ToolEpisode>(out));
  const auto& ep = std::get<ToolEpisode>(out);
  CHECK(ep.trajectory.size() == 1);
  CHECK(ep.tool_id == "tool-t1-0");
  CHECK(ep.title == "fetch_page");
  CHECK(ep.description == "fetch the page");
  CHECK(ep.final_code == ep.trajectory[0].code);
  CHECK(ep.trajectory[0].env_snapshot_ref == "sbx-loop1#1");
  CHECK(ep.trajectory[0].feedback == Feedback::success("ok\n"));
  CHECK_NOTHROW(validate(ep));
}

TEST_CASE("refinement loop: the second call sees the first (code, feedback) pair") {
  auto sbx = fake_session("sbx-loop2");
  ScriptCoder coder({"import PyPDF2\nprint(1)", "pip install PyPDF2\nimport PyPDF2\nprint(1)"});
  const auto out = run_refinement_loop(task(), "read pdf", coder, *sbx, LoopOptions{});
  REQUIRE(std::holds_alternative<ToolEpisode>(out));
  const auto& ep = std::get<ToolEpisode>(out);
  REQUIRE(ep.trajectory.size() == 2);
  CHECK(ep.trajectory[0].feedback.kind() == ErrorKind::kMissingDependency);
  CHECK(ep.trajectory[1].feedback.is_success());
  REQUIRE(coder.contexts_.size() == 2);
  CHECK(coder.contexts_[0].empty());
  REQUIRE(coder.contexts_[1].size() == 1);
  CHECK(coder.contexts_[1][0].code == "import PyPDF2\nprint(1)");
  CHECK(coder.contexts_[1][0].feedback == ep.trajectory[0].feedback);
  CHECK(sbx->state().installed_packages.contains("PyPDF2"));
}

TEST_CASE("refinement loop: exhaustion returns LoopFailure") {
  auto sbx = fake_session("sbx-loop3");
  ScriptCoder coder({"raise RuntimeError('never')"});
  LoopOptions opts;
  opts.max_iters = 10;
  const auto out = run_refinement_loop(task(), "x", coder, *sbx, opts);
  REQUIRE(std::holds_alternative<LoopFailure>(out));
  CHECK(std::get<LoopFailure>(out).trajectory.size() == 10);
  CHECK(sbx->exec_calls() == 10);
  CHECK(coder.seen_ == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("refinement loop: coder failure keeps the trajectory") {
  auto sbx = fake_session("sbx-loop4");
  struct Flaky : CoderContract {
    std::string write_code(const CoderTurn& t) override {
      if (t.iteration == 2) throw std::runtime_error("endpoint down");
      return "1/0";
    }
  } coder;
  try {
    run_refinement_loop(task(), "x", coder, *sbx, LoopOptions{});
    FAIL("expected CoderUnavailable");
  } catch (const CoderUnavailable& e) {
    CHECK(e.code() == ErrorCode::kCoderUnavailable);
    CHECK(e.trajectory().size() == 2);
  }
}

TEST_CASE("refinement loop: empty code counts as a syntax failure without exec") {
  auto sbx = fake_session("sbx-loop5");
  ScriptCoder coder({"", "print(1)"});
  const auto out = run_refinement_loop(task(), "x", coder, *sbx, LoopOptions{});
  REQUIRE(std::holds_alternative<ToolEpisode>(out));
  const auto& ep = std::get<ToolEpisode>(out);
  CHECK(ep.trajectory[0].feedback.kind() == ErrorKind::kSyntaxError);
  CHECK(sbx->exec_calls() == 1);
}

TEST_CASE("tester commentary is attached to the context, not to the classification") {
  struct Echo : TesterCommentary {
    std::string comment(const std::string&, const Feedback& fb) override { return "saw " + fb.describe(); }
  } tester;
  auto sbx = fake_session("sbx-loop6");
  ScriptCoder coder({"1/0", "print(2)"});
  LoopOptions opts;
  opts.tester = &tester;
  run_refinement_loop(task(), "x", coder, *sbx, opts);
  REQUIRE(coder.contexts_.size() == 2);
  CHECK(coder.contexts_[1][0].commentary.rfind("saw error RuntimeError", 0) == 0);
}

TEST_CASE("register_tool") {
  ToolRepository repo;
  CollectingWriter writer;
  ToolEpisode ep;
  ep.tool_id = "tool-a";
  ep.task_id = "t1";
  ep.final_code = "print(1)";
  ep.title = "t";
  ep.description = "print one";
  ep.trajectory = {{"print(1)", "s#1", Feedback::success("1\n")}};

  SUBCASE("valid one-step episode") {
    CHECK(register_tool(repo, ep, "task text", &writer) == "tool-a");
    CHECK(repo.size() == 1);
    REQUIRE(writer.got.size() == 1);
    const auto& exp = writer.got[0].first;
    CHECK(exp.owner == AgentKind::developer());
    CHECK(exp.task_id == "t1");
    CHECK(exp.task_description == "task text");
    REQUIRE(exp.trajectory.size() == 1);
    CHECK(std::get<CodeAction>(exp.trajectory[0].second).source == "print(1)");
    CHECK(writer.got[0].second == "tool-a");
    CHECK_THROWS_AS(register_tool(repo, ep, "task text", &writer), Error);
    CHECK(writer.got.size() == 1);
  }
  SUBCASE("error tail is rejected") {
    ep.trajectory = {{"print(1)", "s#1", Feedback::error(ErrorKind::kRuntimeError, "boom")}};
    try {
      register_tool(repo, ep, "", &writer);
      FAIL("expected RejectedEpisode");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kRejectedEpisode);
    }
    CHECK(repo.size() == 0);
    CHECK(writer.got.empty());
  }
  SUBCASE("success before the tail is rejected") {
    ep.trajectory = {{"print(1)", "s#1", Feedback::success("1\n")}, {"print(1)", "s#2", Feedback::success("1\n")}};
    CHECK_THROWS_AS(register_tool(repo, ep, "", nullptr), Error);
  }
}

TEST_CASE("a 3-step episode yields one developer record per rendered chunk") {
  auto sbx = fake_session("sbx-3step");
  ScriptCoder coder({"import chess\nprint(1)", "pip install chess\nx = 1/0",
                     "def best_move(board):\n    return 'e4'\nprint(best_move('start'))"});
  LoopOptions opts;
  opts.tool_id = "tool-chess-1";
  const auto out = run_refinement_loop(task("chess-1"), "pick a move", coder, *sbx, opts);
  REQUIRE(std::holds_alternative<ToolEpisode>(out));
  const auto ep = std::get<ToolEpisode>(out);
  REQUIRE(ep.trajectory.size() == 3);

  struct MemoryWriter : ExperienceWriter {
    MemoryRepository repo{AgentKind::developer(), MemoryKind::kEpisodic, 32};
    HashingEmbedder emb{32, 1};
    LexicalSparseEncoder sparse;
    OutlineSummarizer summ;
    void write(const EpisodicExperience& exp, const std::string& prefix) override {
      for (auto& r : abstract_experience(exp, summ, emb, sparse, AbstractionOptions{prefix, 120})) {
        repo.store(std::move(r));
      }
    }
  } mw;
  ToolRepository tools;
  register_tool(tools, ep, "choose the best chess move", &mw);
  const auto exp = to_developer_experience(ep, "choose the best chess move");
  const auto chunks = segment_trajectory(render_trajectory(exp.trajectory), 120);
  CHECK(chunks.size() > 3);
  CHECK(mw.repo.size() == chunks.size());
  CHECK(exp.trajectory[2].first.env_feedback == ep.trajectory[1].feedback);
}
