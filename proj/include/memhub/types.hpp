#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace memhub {

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

enum class AgentRole { kPlanner, kDeveloper, kTester, kJudge, kProxy };

// Identity of a sub-agent. Proxy agents carry a name; every other role is a
// singleton within a run.
class AgentKind {
 public:
  static AgentKind planner() { return AgentKind(AgentRole::kPlanner); }
  static AgentKind developer() { return AgentKind(AgentRole::kDeveloper); }
  static AgentKind tester() { return AgentKind(AgentRole::kTester); }
  static AgentKind judge() { return AgentKind(AgentRole::kJudge); }
  static AgentKind proxy(std::string name) { return AgentKind(AgentRole::kProxy, std::move(name)); }

  // Parses the canonical spelling produced by to_string(); throws Error on
  // unknown input.
  static AgentKind parse(std::string_view text);

  AgentRole role() const noexcept { return role_; }
  const std::string& proxy_name() const noexcept { return proxy_name_; }

  // Planner and Developer own an episodic repository; Tester and Judge don't.
  bool owns_episodic_repository() const noexcept {
    return role_ == AgentRole::kPlanner || role_ == AgentRole::kDeveloper;
  }

  std::string to_string() const;

  friend bool operator==(const AgentKind&, const AgentKind&) = default;

 private:
  explicit AgentKind(AgentRole role, std::string name = {})
      : role_(role), proxy_name_(std::move(name)) {}

  AgentRole role_;
  std::string proxy_name_;
};

struct ProceduralMemory {
  AgentKind agent = AgentKind::planner();
  std::string system_prompt;
  std::string behavioral_guidelines;
};

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::string id;
  std::string description;
  std::vector<std::string> attachments;
  int human_difficulty = 1;
  std::optional<std::string> ground_truth;
};

// Trims surrounding whitespace and lowercases ASCII letters before answers
// are compared with a ground truth.
std::string normalize_answer(std::string_view s);

// ---------------------------------------------------------------------------
// Sandbox feedback
// ---------------------------------------------------------------------------

enum class ErrorKind { kSyntaxError, kRuntimeError, kTimeout, kResourceLimit, kMissingDependency };

std::string_view to_string(ErrorKind kind);
std::optional<ErrorKind> parse_error_kind(std::string_view text);

class Feedback {
 public:
  static Feedback success(std::string stdout_text) {
    Feedback f;
    f.success_ = true;
    f.stdout_ = std::move(stdout_text);
    return f;
  }
  static Feedback error(ErrorKind kind, std::string message, std::string traceback = {}) {
    Feedback f;
    f.success_ = false;
    f.kind_ = kind;
    f.message_ = std::move(message);
    f.traceback_ = std::move(traceback);
    return f;
  }

  bool is_success() const noexcept { return success_; }
  const std::string& stdout_text() const noexcept { return stdout_; }
  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& traceback() const noexcept { return traceback_; }

  // One-line rendering used in prompts and trajectory renderings.
  std::string describe() const;

  friend bool operator==(const Feedback&, const Feedback&) = default;

 private:
  Feedback() = default;

  bool success_ = true;
  std::string stdout_;
  ErrorKind kind_ = ErrorKind::kRuntimeError;
  std::string message_;
  std::string traceback_;
};

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct AgentState {
  std::string task_id;
  std::size_t step_index = 0;
  std::string context_summary;
  std::optional<Feedback> env_feedback;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct CodeAction {
  std::string source;
  friend bool operator==(const CodeAction&, const CodeAction&) = default;
};

struct SubPlanAction {
  std::string intent;
  friend bool operator==(const SubPlanAction&, const SubPlanAction&) = default;
};

struct ToolInvocationAction {
  std::string tool_id;
  std::string args;
  friend bool operator==(const ToolInvocationAction&, const ToolInvocationAction&) = default;
};

// Terminal planner action carrying the declared answer.
struct FinalAnswerAction {
  std::string answer;
  friend bool operator==(const FinalAnswerAction&, const FinalAnswerAction&) = default;
};

using Action = std::variant<CodeAction, SubPlanAction, ToolInvocationAction, FinalAnswerAction>;

// "code", "subplan", "tool" or "answer".
std::string_view action_kind(const Action& action);

// Text shown under a step header: fenced source, intent, invocation or answer.
std::string action_body(const Action& action);

using Step = std::pair<AgentState, Action>;

struct EpisodicExperience {
  AgentKind owner = AgentKind::planner();
  std::string task_id;
  std::string task_description;
  std::vector<Step> trajectory;
  // Only successful trajectories are ever represented; there is no failure
  // outcome to carry.
};

// Throws Error(kInvalidArgument) when the trajectory is empty, steps are not
// strictly increasing, or the owner has no episodic repository.
void validate(const EpisodicExperience& exp);

}  // namespace memhub
