#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "memhub/error.hpp"
#include "memhub/types.hpp"

namespace memhub {

class ChatClient;

// ---------------------------------------------------------------------------
// Shim protocol
// ---------------------------------------------------------------------------

struct ShimRequest {
  enum class Op { kExec, kReset };
  Op op = Op::kExec;
  std::string code;
  int timeout_s = 120;
};

struct ShimReply {
  std::string status = "ok";  // "ok" | "error"
  std::string stdout_text;
  std::string stderr_text;
  std::optional<std::string> error_kind;
  std::optional<std::string> traceback;
  std::int64_t wall_ms = 0;

  friend bool operator==(const ShimReply&, const ShimReply&) = default;
};

// Bit-exact wire forms: one compact JSON object per line, keys in the order
// op, code, timeout_s for requests and status, stdout, stderr, error_kind,
// traceback, wall_ms for replies.
std::string encode_shim_request(const ShimRequest& req);
// Throws Error(kInvalidArgument) describing the protocol violation.
ShimRequest decode_shim_request(const std::string& line);
std::string encode_shim_reply(const ShimReply& reply);

// ---------------------------------------------------------------------------
// Environment and raw output
// ---------------------------------------------------------------------------

struct ExecLimits {
  int timeout_s = 120;
  int mem_mb = 2048;
};

struct EnvState {
  std::string session_id;
  std::filesystem::path workdir;
  std::set<std::string> installed_packages;
  bool variables_alive = true;
  std::size_t exec_count = 0;
  // Bumped whenever the shim is recycled and its namespace lost.
  std::size_t generation = 0;

  // "{session_id}#{exec_count}"
  std::string snapshot_ref() const;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct RawOutput {
  std::string line;  // reply exactly as received
  std::optional<ShimReply> reply;  // nullopt when `line` is not a valid reply
  bool timed_out_hard = false;  // no reply before timeout + grace; shim was recycled
};

// Parses a reply line. Never throws; invalid input leaves reply empty.
RawOutput parse_raw_output(std::string line);

// Classifies a raw output. status "ok" becomes Success(stdout); otherwise the
// structured error_kind decides, with the traceback consulted when the kind is
// missing or unknown.
Feedback feedback(const RawOutput& raw);

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

class ShimTransport {
 public:
  virtual ~ShimTransport() = default;
  // Sends one request line and returns the reply line. Returns nullopt when
  // nothing arrived before `deadline`; the transport has then recycled the
  // shim. Throws Error(kSandboxUnavailable) when the shim cannot be reached.
  virtual std::optional<std::string> roundtrip(const std::string& line,
                                               std::chrono::milliseconds deadline) = 0;
  // Number of times the underlying shim has been (re)started.
  virtual std::size_t starts() const = 0;
};

// Runs the shim as a child process speaking the protocol over pipes. The child
// runs in `workdir` with an address-space limit of mem_mb (0 disables it).
class ProcessShim final : public ShimTransport {
 public:
  ProcessShim(std::vector<std::string> argv, std::filesystem::path workdir, int mem_mb);
  ~ProcessShim() override;

  ProcessShim(const ProcessShim&) = delete;
  ProcessShim& operator=(const ProcessShim&) = delete;

  std::optional<std::string> roundtrip(const std::string& line,
                                       std::chrono::milliseconds deadline) override;
  std::size_t starts() const override { return starts_; }

 private:
  void spawn();
  void kill_child();

  std::vector<std::string> argv_;
  std::filesystem::path workdir_;
  int mem_mb_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  std::size_t starts_ = 0;
};

class FakeShim;

// In-process transport around the deterministic fake shim.
class InProcessShim final : public ShimTransport {
 public:
  explicit InProcessShim(std::unique_ptr<FakeShim> shim);
  ~InProcessShim() override;

  std::optional<std::string> roundtrip(const std::string& line,
                                       std::chrono::milliseconds deadline) override;
  std::size_t starts() const override { return 1; }

 private:
  std::unique_ptr<FakeShim> shim_;
};

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

// One isolated interpreter session owned by one rollout. Not thread-safe.
class Sandbox {
 public:
  Sandbox(EnvState initial, std::unique_ptr<ShimTransport> transport);

  const EnvState& state() const noexcept { return env_; }

  // Runs code in the session. Lines of the form "pip install <pkg>..." (also
  // with a leading "!") are install directives and are recorded in
  // installed_packages. Throws Error(kInvalidArgument) for empty code and
  // Error(kSandboxUnavailable) when the shim is unreachable.
  RawOutput exec(const std::string& code, const ExecLimits& limits);

  // Clears the interpreter namespace.
  void reset();

  std::size_t exec_calls() const noexcept { return exec_calls_; }

  static inline constexpr std::chrono::milliseconds kGrace{1000};

 private:
  EnvState env_;
  std::unique_ptr<ShimTransport> transport_;
  std::size_t exec_calls_ = 0;
};

struct ExecResult {
  EnvState env;
  RawOutput raw;
};

// exec: E x C -> E x O. `env` must describe the session's current state.
ExecResult exec(Sandbox& sandbox, const EnvState& env, const std::string& code,
                const ExecLimits& limits);

std::vector<std::string> install_directives(const std::string& code);

class SandboxProvider {
 public:
  virtual ~SandboxProvider() = default;
  virtual std::unique_ptr<Sandbox> open(const std::string& session_id) = 0;
};

struct FakeShimOptions {
  // Sleep through simulated hangs instead of reporting them immediately.
  bool real_time = false;
  std::size_t mem_limit_bytes = std::size_t{2048} << 20;
  std::size_t output_cap = std::size_t{1} << 20;
  // Never reply to a request that hangs. Exercises the launcher's kill path.
  bool ignore_timeout = false;
};

class InProcessSandboxProvider final : public SandboxProvider {
 public:
  explicit InProcessSandboxProvider(std::filesystem::path workdir_root, FakeShimOptions options = {});
  std::unique_ptr<Sandbox> open(const std::string& session_id) override;

 private:
  std::filesystem::path root_;
  FakeShimOptions options_;
};

class ProcessSandboxProvider final : public SandboxProvider {
 public:
  ProcessSandboxProvider(std::vector<std::string> argv, std::filesystem::path workdir_root,
                         int mem_mb);
  std::unique_ptr<Sandbox> open(const std::string& session_id) override;

 private:
  std::vector<std::string> argv_;
  std::filesystem::path root_;
  int mem_mb_;
};

// ---------------------------------------------------------------------------
// Refinement loop
// ---------------------------------------------------------------------------

struct CodeContextEntry {
  std::string code;
  Feedback feedback;
  std::string commentary;
};

struct CoderTurn {
  const TaskSpec& task;
  const std::string& intent;
  std::size_t iteration;  // 0-based
  const std::vector<CodeContextEntry>& context;  // C_code, size == iteration
};

// Code-writing contract. Throwing anything signals CoderUnavailable.
class CoderContract {
 public:
  virtual ~CoderContract() = default;
  virtual std::string write_code(const CoderTurn& turn) = 0;
};

struct ToolStep {
  std::string code;
  std::string env_snapshot_ref;
  Feedback feedback;

  friend bool operator==(const ToolStep&, const ToolStep&) = default;
};

struct ToolEpisode {
  std::string tool_id;
  std::string final_code;
  std::vector<ToolStep> trajectory;
  std::string task_id;
  std::string title;
  std::string description;

  friend bool operator==(const ToolEpisode&, const ToolEpisode&) = default;
};

struct LoopFailure {
  std::vector<ToolStep> trajectory;
  std::string reason;
};

class CoderUnavailable : public Error {
 public:
  CoderUnavailable(const std::string& what, std::vector<ToolStep> trajectory)
      : Error(ErrorCode::kCoderUnavailable, what), trajectory_(std::move(trajectory)) {}
  const std::vector<ToolStep>& trajectory() const noexcept { return trajectory_; }

 private:
  std::vector<ToolStep> trajectory_;
};

// Optional tester pass that adds model commentary to each feedback. The
// classification itself is always the deterministic feedback().
class TesterCommentary {
 public:
  virtual ~TesterCommentary() = default;
  virtual std::string comment(const std::string& code, const Feedback& fb) = 0;
};

class ChatTesterCommentary final : public TesterCommentary {
 public:
  ChatTesterCommentary(ChatClient& chat, std::string model) : chat_(chat), model_(std::move(model)) {}
  std::string comment(const std::string& code, const Feedback& fb) override;

 private:
  ChatClient& chat_;
  std::string model_;
};

struct LoopOptions {
  std::size_t max_iters = 10;
  ExecLimits limits;
  std::string tool_id;
  TesterCommentary* tester = nullptr;
};

using LoopOutcome = std::variant<ToolEpisode, LoopFailure>;

// c_{t+1} = coder(c_t, f_t, task, C_code) until feedback is Success or
// max_iters coder calls have been made.
LoopOutcome run_refinement_loop(const TaskSpec& task, const std::string& intent,
                                CoderContract& coder, Sandbox& sandbox,
                                const LoopOptions& options);

// Throws Error(kRejectedEpisode) unless the trajectory is non-empty, ends in
// Success and has no earlier Success, and final_code equals the last code.
void validate(const ToolEpisode& ep);

// ---------------------------------------------------------------------------
// Tool repository
// ---------------------------------------------------------------------------

class ToolRepository {
 public:
  std::size_t size() const;
  std::optional<ToolEpisode> find(const std::string& tool_id) const;
  std::vector<ToolEpisode> episodes() const;  // registration order

  // Throws RejectedEpisode or DuplicateId.
  std::string add(ToolEpisode ep);

 private:
  mutable std::mutex mu_;
  std::vector<ToolEpisode> episodes_;
  std::map<std::string, std::size_t> index_;
};

// Receives developer experiences derived from registered tools.
class ExperienceWriter {
 public:
  virtual ~ExperienceWriter() = default;
  virtual void write(const EpisodicExperience& exp, const std::string& id_prefix) = 0;
};

// The developer experience equivalent of a tool episode: one Code action per
// iteration, each state carrying the intent and the previous feedback.
EpisodicExperience to_developer_experience(const ToolEpisode& ep,
                                           const std::string& task_description);

// Adds the episode to the repository and forwards its developer experience
// (id prefix = tool id) to `writer` when given.
std::string register_tool(ToolRepository& repo, const ToolEpisode& ep,
                          const std::string& task_description, ExperienceWriter* writer);

}  // namespace memhub
