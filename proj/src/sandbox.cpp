#include "memhub/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "memhub/chat.hpp"
#include "memhub/fake_shim.hpp"

namespace memhub {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

std::string encode_shim_request(const ShimRequest& req) {
  ordered_json o;
  if (req.op == ShimRequest::Op::kReset) {
    o["op"] = "reset";
  } else {
    o["op"] = "exec";
    o["code"] = req.code;
    o["timeout_s"] = req.timeout_s;
  }
  return o.dump();
}

ShimRequest decode_shim_request(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("request is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "request lacks a string 'op'");
  }
  ShimRequest req;
  const auto op = j["op"].get<std::string>();
  if (op == "reset") {
    req.op = ShimRequest::Op::kReset;
    return req;
  }
  if (op != "exec") throw Error(ErrorCode::kInvalidArgument, "unknown op '" + op + "'");
  if (!j.contains("code") || !j["code"].is_string()) {
    throw Error(ErrorCode::kInvalidArgument, "exec request lacks a string 'code'");
  }
  req.code = j["code"].get<std::string>();
  if (j.contains("timeout_s")) {
    if (!j["timeout_s"].is_number_integer() || j["timeout_s"].get<long long>() < 1) {
      throw Error(ErrorCode::kInvalidArgument, "'timeout_s' must be a positive integer");
    }
    req.timeout_s = j["timeout_s"].get<int>();
  }
  return req;
}

std::string encode_shim_reply(const ShimReply& r) {
  ordered_json o;
  o["status"] = r.status;
  o["stdout"] = r.stdout_text;
  o["stderr"] = r.stderr_text;
  o["error_kind"] = r.error_kind ? ordered_json(*r.error_kind) : ordered_json(nullptr);
  o["traceback"] = r.traceback ? ordered_json(*r.traceback) : ordered_json(nullptr);
  o["wall_ms"] = r.wall_ms;
  // Replace rather than throw on invalid UTF-8 produced by user code.
  return o.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

RawOutput parse_raw_output(std::string line) {
  RawOutput raw;
  raw.line = std::move(line);
  json j;
  try {
    j = json::parse(raw.line);
  } catch (const json::exception&) {
    return raw;
  }
  if (!j.is_object()) return raw;
  const auto str_field = [&](const char* key) { return j.contains(key) && j[key].is_string(); };
  const auto opt_str_field = [&](const char* key) {
    return j.contains(key) && (j[key].is_string() || j[key].is_null());
  };
  if (!str_field("status") || !str_field("stdout") || !str_field("stderr") ||
      !opt_str_field("error_kind") || !opt_str_field("traceback") || !j.contains("wall_ms") ||
      !j["wall_ms"].is_number_integer()) {
    return raw;
  }
  ShimReply r;
  r.status = j["status"].get<std::string>();
  if (r.status != "ok" && r.status != "error") return raw;
  r.stdout_text = j["stdout"].get<std::string>();
  r.stderr_text = j["stderr"].get<std::string>();
  if (j["error_kind"].is_string()) r.error_kind = j["error_kind"].get<std::string>();
  if (j["traceback"].is_string()) r.traceback = j["traceback"].get<std::string>();
  r.wall_ms = j["wall_ms"].get<std::int64_t>();
  raw.reply = std::move(r);
  return raw;
}

namespace {

std::string last_nonblank_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) last = line;
  }
  return last;
}

ErrorKind classify_traceback(const std::string& tb) {
  const std::string last = last_nonblank_line(tb);
  const auto names = [&](std::string_view exc) { return last.rfind(exc, 0) == 0; };
  if (names("SyntaxError") || names("IndentationError") || names("TabError")) return ErrorKind::kSyntaxError;
  if (names("ModuleNotFoundError") || names("ImportError")) return ErrorKind::kMissingDependency;
  if (names("MemoryError")) return ErrorKind::kResourceLimit;
  if (names("TimeoutError")) return ErrorKind::kTimeout;
  return ErrorKind::kRuntimeError;
}

}  // namespace

Feedback feedback(const RawOutput& raw) {
  if (!raw.reply) return Feedback::error(ErrorKind::kRuntimeError, "malformed sandbox reply", raw.line);
  const ShimReply& r = *raw.reply;
  if (r.status == "ok") return Feedback::success(r.stdout_text);

  const std::string tb = r.traceback.value_or("");
  std::optional<ErrorKind> kind;
  if (r.error_kind) kind = parse_error_kind(*r.error_kind);
  if (!kind) kind = classify_traceback(tb);

  std::string message = last_nonblank_line(tb);
  if (message.empty()) message = last_nonblank_line(r.stderr_text);
  if (message.empty()) message = r.error_kind.value_or("error");
  return Feedback::error(*kind, message, tb);
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

namespace {

std::once_flag g_sigpipe_once;

}  // namespace

ProcessShim::ProcessShim(std::vector<std::string> argv, std::filesystem::path workdir, int mem_mb)
    : argv_(std::move(argv)), workdir_(std::move(workdir)), mem_mb_(mem_mb) {
  if (argv_.empty()) throw Error(ErrorCode::kConfigError, "shim command is empty");
  // A dead shim must surface as a failed write, not kill the engine.
  std::call_once(g_sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

ProcessShim::~ProcessShim() { kill_child(); }

void ProcessShim::spawn() {
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kSandboxUnavailable, std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(ErrorCode::kSandboxUnavailable, std::string("pipe: ") + std::strerror(errno));
  }
  std::vector<char*> args;
  for (auto& a : argv_) args.push_back(a.data());
  args.push_back(nullptr);
  const std::string wd = workdir_.string();

  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw Error(ErrorCode::kSandboxUnavailable, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::signal(SIGPIPE, SIG_DFL);
    if (!wd.empty() && ::chdir(wd.c_str()) != 0) ::_exit(126);
    if (mem_mb_ > 0) {
      const rlim_t bytes = static_cast<rlim_t>(mem_mb_) << 20;
      rlimit lim{bytes, bytes};
      ::setrlimit(RLIMIT_AS, &lim);
    }
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  pending_.clear();
  ++starts_;
}

void ProcessShim::kill_child() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
  }
  pid_ = -1;
  pending_.clear();
}

std::optional<std::string> ProcessShim::roundtrip(const std::string& line,
                                                  std::chrono::milliseconds deadline) {
  if (pid_ <= 0) spawn();
  const std::string msg = line + "\n";
  std::size_t written = 0;
  while (written < msg.size()) {
    const ssize_t n = ::write(to_child_, msg.data() + written, msg.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      kill_child();
      throw Error(ErrorCode::kSandboxUnavailable, std::string("shim write failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }

  const auto until = std::chrono::steady_clock::now() + deadline;
  for (;;) {
    if (auto nl = pending_.find('\n'); nl != std::string::npos) {
      std::string reply = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return reply;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        until - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      kill_child();
      spawn();
      return std::nullopt;
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (pr < 0) {
      if (errno == EINTR) continue;
      kill_child();
      throw Error(ErrorCode::kSandboxUnavailable, std::string("poll: ") + std::strerror(errno));
    }
    if (pr == 0) continue;
    char buf[65536];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      kill_child();
      throw Error(ErrorCode::kSandboxUnavailable, std::string("shim read failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      kill_child();
      throw Error(ErrorCode::kSandboxUnavailable, "shim closed its output");
    }
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

InProcessShim::InProcessShim(std::unique_ptr<FakeShim> shim) : shim_(std::move(shim)) {}
InProcessShim::~InProcessShim() = default;

std::optional<std::string> InProcessShim::roundtrip(const std::string& line,
                                                    std::chrono::milliseconds) {
  try {
    return shim_->handle_line(line);
  } catch (const ShimExit& e) {
    shim_->reset();
    throw Error(ErrorCode::kSandboxUnavailable,
                "shim exited with status " + std::to_string(e.code));
  }
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

std::string EnvState::snapshot_ref() const { return session_id + "#" + std::to_string(exec_count); }

std::vector<std::string> install_directives(const std::string& code) {
  std::vector<std::string> pkgs;
  std::istringstream in(code);
  std::string line;
  while (std::getline(in, line)) {
    std::string_view t = line;
    while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.remove_prefix(1);
    if (!t.empty() && (t.front() == '!' || t.front() == '%')) t.remove_prefix(1);
    if (t.rfind("pip install ", 0) != 0) continue;
    std::istringstream words{std::string(t.substr(12))};
    std::string w;
    while (words >> w) {
      if (w[0] != '-') pkgs.push_back(w);
    }
  }
  return pkgs;
}

Sandbox::Sandbox(EnvState initial, std::unique_ptr<ShimTransport> transport)
    : env_(std::move(initial)), transport_(std::move(transport)) {}

RawOutput Sandbox::exec(const std::string& code, const ExecLimits& limits) {
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "exec requires non-empty code");
  }
  if (limits.timeout_s < 1) throw Error(ErrorCode::kInvalidArgument, "timeout_s must be >= 1");
  ShimRequest req;
  req.code = code;
  req.timeout_s = limits.timeout_s;
  ++exec_calls_;
  const std::size_t starts_before = transport_->starts();
  const auto deadline = std::chrono::milliseconds(std::int64_t{limits.timeout_s} * 1000) + kGrace;

  std::optional<std::string> line;
  try {
    line = transport_->roundtrip(encode_shim_request(req), deadline);
  } catch (const Error&) {
    env_.variables_alive = false;
    throw;
  }
  ++env_.exec_count;

  RawOutput raw;
  if (!line) {
    ShimReply r;
    r.status = "error";
    r.error_kind = "Timeout";
    r.traceback = "TimeoutError: no reply within " + std::to_string(limits.timeout_s) +
                  " s plus grace; session recycled\n";
    r.wall_ms = deadline.count();
    raw = parse_raw_output(encode_shim_reply(r));
    raw.timed_out_hard = true;
  } else {
    raw = parse_raw_output(std::move(*line));
  }

  if (raw.timed_out_hard) {
    ++env_.generation;
    env_.installed_packages.clear();
    env_.variables_alive = false;
  } else {
    if (starts_before != 0 && transport_->starts() != starts_before) {
      // The shim was restarted before this request ran.
      ++env_.generation;
      env_.installed_packages.clear();
    }
    env_.variables_alive = true;
  }
  if (raw.reply && raw.reply->error_kind != std::optional<std::string>("SyntaxError")) {
    for (auto& p : install_directives(code)) env_.installed_packages.insert(std::move(p));
  }
  return raw;
}

void Sandbox::reset() {
  ShimRequest req;
  req.op = ShimRequest::Op::kReset;
  const auto line = transport_->roundtrip(encode_shim_request(req), std::chrono::seconds(10));
  if (!line) throw Error(ErrorCode::kSandboxUnavailable, "shim did not acknowledge reset");
  env_.variables_alive = true;
}

ExecResult exec(Sandbox& sandbox, const EnvState& env, const std::string& code,
                const ExecLimits& limits) {
  if (env.session_id != sandbox.state().session_id || env.exec_count != sandbox.state().exec_count) {
    throw Error(ErrorCode::kInvalidArgument,
                "environment " + env.snapshot_ref() + " is not the session's current state " +
                    sandbox.state().snapshot_ref());
  }
  RawOutput raw = sandbox.exec(code, limits);
  return {sandbox.state(), std::move(raw)};
}

InProcessSandboxProvider::InProcessSandboxProvider(std::filesystem::path workdir_root,
                                                   FakeShimOptions options)
    : root_(std::move(workdir_root)), options_(options) {}

std::unique_ptr<Sandbox> InProcessSandboxProvider::open(const std::string& session_id) {
  EnvState env;
  env.session_id = session_id;
  env.workdir = root_ / session_id;
  return std::make_unique<Sandbox>(
      std::move(env), std::make_unique<InProcessShim>(std::make_unique<FakeShim>(options_)));
}

ProcessSandboxProvider::ProcessSandboxProvider(std::vector<std::string> argv,
                                               std::filesystem::path workdir_root, int mem_mb)
    : argv_(std::move(argv)), root_(std::move(workdir_root)), mem_mb_(mem_mb) {}

std::unique_ptr<Sandbox> ProcessSandboxProvider::open(const std::string& session_id) {
  EnvState env;
  env.session_id = session_id;
  env.workdir = root_ / session_id;
  std::error_code ec;
  std::filesystem::create_directories(env.workdir, ec);
  if (ec) {
    throw Error(ErrorCode::kSandboxUnavailable,
                "cannot create workdir " + env.workdir.string() + ": " + ec.message());
  }
  auto transport = std::make_unique<ProcessShim>(argv_, env.workdir, mem_mb_);
  return std::make_unique<Sandbox>(std::move(env), std::move(transport));
}

// ---------------------------------------------------------------------------
// Refinement loop
// ---------------------------------------------------------------------------

std::string ChatTesterCommentary::comment(const std::string& code, const Feedback& fb) {
  ChatRequest req;
  req.model = model_;
  req.temperature = 0.2;
  std::string body = "## code\n" + code + "\n## result\n" + fb.describe();
  if (!fb.is_success() && !fb.traceback().empty()) body += "\n## traceback\n" + fb.traceback();
  req.messages = {{"system", "You are the tester. In at most three sentences, explain the result "
                             "and what the developer should change."},
                  {"user", body}};
  return chat_.complete(req).content;
}

namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

// Name of the first top-level function, if any.
std::string first_def_name(const std::string& code) {
  std::istringstream in(code);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("def ", 0) != 0) continue;
    const auto open = line.find('(');
    if (open == std::string::npos) continue;
    return line.substr(4, open - 4);
  }
  return {};
}

}  // namespace

LoopOutcome run_refinement_loop(const TaskSpec& task, const std::string& intent,
                                CoderContract& coder, Sandbox& sandbox,
                                const LoopOptions& options) {
  if (options.max_iters < 1) throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  std::vector<CodeContextEntry> context;
  std::vector<ToolStep> trajectory;
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    std::string code;
    try {
      code = coder.write_code(CoderTurn{task, intent, it, context});
    } catch (const std::exception& e) {
      throw CoderUnavailable(std::string("coder failed at iteration ") + std::to_string(it) + ": " +
                                 e.what(),
                             trajectory);
    }

    Feedback fb = Feedback::error(ErrorKind::kSyntaxError, "SyntaxError: empty code", "");
    if (code.find_first_not_of(" \t\r\n") != std::string::npos) {
      fb = feedback(sandbox.exec(code, options.limits));
    }
    std::string commentary;
    if (options.tester != nullptr) commentary = options.tester->comment(code, fb);

    trajectory.push_back({code, sandbox.state().snapshot_ref(), fb});
    if (fb.is_success()) {
      ToolEpisode ep;
      ep.tool_id = options.tool_id.empty() ? sandbox.state().session_id + "-tool" : options.tool_id;
      ep.final_code = code;
      ep.trajectory = std::move(trajectory);
      ep.task_id = task.id;
      const std::string def = first_def_name(code);
      ep.title = def.empty() ? first_line(intent) : def;
      ep.description = intent;
      return ep;
    }
    context.push_back({std::move(code), std::move(fb), std::move(commentary)});
  }
  return LoopFailure{std::move(trajectory),
                     "no successful execution within " + std::to_string(options.max_iters) +
                         " iterations"};
}

void validate(const ToolEpisode& ep) {
  const auto reject = [&](const std::string& why) {
    throw Error(ErrorCode::kRejectedEpisode, "tool episode '" + ep.tool_id + "': " + why);
  };
  if (ep.tool_id.empty()) reject("empty tool id");
  if (ep.trajectory.empty()) reject("empty trajectory");
  for (std::size_t i = 0; i + 1 < ep.trajectory.size(); ++i) {
    if (ep.trajectory[i].feedback.is_success()) {
      reject("success before the tail at entry " + std::to_string(i));
    }
  }
  if (!ep.trajectory.back().feedback.is_success()) reject("last feedback is not Success");
  if (ep.final_code != ep.trajectory.back().code) reject("final code differs from the last entry");
}

// ---------------------------------------------------------------------------
// Tool repository
// ---------------------------------------------------------------------------

std::size_t ToolRepository::size() const {
  std::lock_guard lock(mu_);
  return episodes_.size();
}

std::optional<ToolEpisode> ToolRepository::find(const std::string& tool_id) const {
  std::lock_guard lock(mu_);
  if (auto it = index_.find(tool_id); it != index_.end()) return episodes_[it->second];
  return std::nullopt;
}

std::vector<ToolEpisode> ToolRepository::episodes() const {
  std::lock_guard lock(mu_);
  return episodes_;
}

std::string ToolRepository::add(ToolEpisode ep) {
  validate(ep);
  std::lock_guard lock(mu_);
  if (index_.contains(ep.tool_id)) {
    throw Error(ErrorCode::kDuplicateId, "tool '" + ep.tool_id + "' is already registered");
  }
  std::string id = ep.tool_id;
  index_.emplace(id, episodes_.size());
  episodes_.push_back(std::move(ep));
  return id;
}

EpisodicExperience to_developer_experience(const ToolEpisode& ep,
                                           const std::string& task_description) {
  EpisodicExperience exp;
  exp.owner = AgentKind::developer();
  exp.task_id = ep.task_id;
  exp.task_description = task_description;
  for (std::size_t i = 0; i < ep.trajectory.size(); ++i) {
    AgentState s;
    s.task_id = ep.task_id;
    s.step_index = i;
    s.context_summary = "intent: " + first_line(ep.description) + "\niteration: " + std::to_string(i);
    if (i > 0) {
      s.env_feedback = ep.trajectory[i - 1].feedback;
      s.context_summary += "\nprevious: " + ep.trajectory[i - 1].feedback.describe();
    }
    exp.trajectory.emplace_back(std::move(s), CodeAction{ep.trajectory[i].code});
  }
  return exp;
}

std::string register_tool(ToolRepository& repo, const ToolEpisode& ep,
                          const std::string& task_description, ExperienceWriter* writer) {
  validate(ep);
  if (repo.find(ep.tool_id)) {
    throw Error(ErrorCode::kDuplicateId, "tool '" + ep.tool_id + "' is already registered");
  }
  if (writer != nullptr) writer->write(to_developer_experience(ep, task_description), ep.tool_id);
  return repo.add(ep);
}

}  // namespace memhub
