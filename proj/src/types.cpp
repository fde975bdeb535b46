#include "memhub/types.hpp"

#include <cctype>

#include "memhub/error.hpp"

namespace memhub {

AgentKind AgentKind::parse(std::string_view text) {
  if (text == "planner") return planner();
  if (text == "developer") return developer();
  if (text == "tester") return tester();
  if (text == "judge") return judge();
  if (text.starts_with("proxy:") && text.size() > 6) return proxy(std::string(text.substr(6)));
  throw Error(ErrorCode::kInvalidArgument, "unknown agent kind '" + std::string(text) + "'");
}

std::string AgentKind::to_string() const {
  switch (role_) {
    case AgentRole::kPlanner: return "planner";
    case AgentRole::kDeveloper: return "developer";
    case AgentRole::kTester: return "tester";
    case AgentRole::kJudge: return "judge";
    case AgentRole::kProxy: return "proxy:" + proxy_name_;
  }
  return "unknown";
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSyntaxError: return "SyntaxError";
    case ErrorKind::kRuntimeError: return "RuntimeError";
    case ErrorKind::kTimeout: return "Timeout";
    case ErrorKind::kResourceLimit: return "ResourceLimit";
    case ErrorKind::kMissingDependency: return "MissingDependency";
  }
  return "RuntimeError";
}

std::optional<ErrorKind> parse_error_kind(std::string_view text) {
  if (text == "SyntaxError") return ErrorKind::kSyntaxError;
  if (text == "RuntimeError") return ErrorKind::kRuntimeError;
  if (text == "Timeout") return ErrorKind::kTimeout;
  if (text == "ResourceLimit") return ErrorKind::kResourceLimit;
  if (text == "MissingDependency") return ErrorKind::kMissingDependency;
  return std::nullopt;
}

std::string Feedback::describe() const {
  if (success_) {
    return "success";
  }
  return "error " + std::string(to_string(kind_)) + ": " + message_;
}

std::string_view action_kind(const Action& action) {
  struct Visitor {
    std::string_view operator()(const CodeAction&) const { return "code"; }
    std::string_view operator()(const SubPlanAction&) const { return "subplan"; }
    std::string_view operator()(const ToolInvocationAction&) const { return "tool"; }
    std::string_view operator()(const FinalAnswerAction&) const { return "answer"; }
  };
  return std::visit(Visitor{}, action);
}

std::string action_body(const Action& action) {
  struct Visitor {
    std::string operator()(const CodeAction& a) const { return "```python\n" + a.source + "\n```"; }
    std::string operator()(const SubPlanAction& a) const { return "- " + a.intent; }
    std::string operator()(const ToolInvocationAction& a) const {
      return "TOOL: " + a.tool_id + (a.args.empty() ? "" : " " + a.args);
    }
    std::string operator()(const FinalAnswerAction& a) const { return "FINAL ANSWER: " + a.answer; }
  };
  return std::visit(Visitor{}, action);
}

void validate(const EpisodicExperience& exp) {
  if (!exp.owner.owns_episodic_repository()) {
    throw Error(ErrorCode::kInvalidArgument,
                exp.owner.to_string() + " does not own an episodic repository");
  }
  if (exp.trajectory.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "experience for task '" + exp.task_id +
                                                 "' has an empty trajectory");
  }
  for (std::size_t i = 1; i < exp.trajectory.size(); ++i) {
    if (exp.trajectory[i].first.step_index <= exp.trajectory[i - 1].first.step_index) {
      throw Error(ErrorCode::kInvalidArgument, "step_index must strictly increase");
    }
  }
}

std::string normalize_answer(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace memhub
