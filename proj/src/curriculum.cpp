#include "memhub/curriculum.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

#include "memhub/error.hpp"

namespace memhub {

namespace {

std::vector<std::string> plan_bullets(const std::string& reply) {
  static const std::regex bullet(R"(^\s*(?:[-*+]|\d+[.)])\s+(.*\S)\s*$)");
  std::vector<std::string> out;
  std::istringstream in(reply);
  for (std::string line; std::getline(in, line);) {
    std::smatch m;
    if (std::regex_match(line, m, bullet)) out.push_back(m[1].str());
  }
  return out;
}

std::string proxy_system(ProxyStyle style) {
  if (style == ProxyStyle::kReactLike) {
    return "You are a ReAct-style agent. Each reply is either one fenced Python code block to run, "
           "or a line starting \"FINAL ANSWER:\".";
  }
  return "You are a plan-then-execute agent. First reply with a bulleted plan, then one fenced "
         "Python code block per plan step, then a line starting \"FINAL ANSWER:\".";
}

class ProxyRun {
 public:
  ProxyRun(const TaskSpec& task, const ProxyConfig& proxy, ChatClient& chat, Sandbox& sandbox,
           const ExecLimits& limits)
      : task_(task), proxy_(proxy), chat_(chat), sandbox_(sandbox), limits_(limits) {}

  ProxyOutcome run() {
    std::optional<std::string> answer = proxy_.style == ProxyStyle::kReactLike ? react() : plan_execute();
    outcome_.success = answer.has_value() &&
                       (!task_.ground_truth || normalize_answer(*answer) == normalize_answer(*task_.ground_truth));
    return outcome_;
  }

 private:
  std::string ask(const std::string& instruction) {
    ++outcome_.steps_used;
    std::string user = "## task\n" + task_.description + "\n\n## history\n" +
                       (history_.empty() ? "(none)" : history_) + "\n\n## instruction\n" + instruction;
    return chat_.complete({proxy_.model.name, {{"system", proxy_system(proxy_.style)}, {"user", user}},
                           proxy_.model.temperature})
        .content;
  }

  void run_code(const std::string& code) {
    ++outcome_.iterations_used;
    const auto fb = code.empty() ? Feedback::error(ErrorKind::kSyntaxError, "empty code")
                                 : feedback(sandbox_.exec(code, limits_));
    history_ += "code:\n```python\n" + code + "\n```\nobservation: " +
                (fb.is_success() ? fb.stdout_text() : fb.describe()) + "\n";
  }

  std::optional<std::string> react() {
    while (outcome_.steps_used < proxy_.step_cap) {
      const auto a = parse_action(ask("Next action."));
      if (!a) {
        history_ += "observation: no action\n";
      } else if (const auto* fin = std::get_if<FinalAnswerAction>(&*a)) {
        return fin->answer;
      } else if (const auto* code = std::get_if<CodeAction>(&*a)) {
        run_code(code->source);
      } else {
        history_ += "observation: unsupported action\n";
      }
    }
    return std::nullopt;
  }

  std::optional<std::string> plan_execute() {
    const auto plan = plan_bullets(ask("Write the plan as bullets."));
    for (const auto& step : plan) {
      if (outcome_.steps_used >= proxy_.step_cap) return std::nullopt;
      history_ += "plan step: " + step + "\n";
      const auto a = parse_action(ask("Write code for the plan step: " + step));
      if (a && std::holds_alternative<CodeAction>(*a)) run_code(std::get<CodeAction>(*a).source);
      else history_ += "observation: no code\n";
    }
    if (outcome_.steps_used >= proxy_.step_cap) return std::nullopt;
    const auto a = parse_action(ask("Give the final answer."));
    if (a && std::holds_alternative<FinalAnswerAction>(*a)) return std::get<FinalAnswerAction>(*a).answer;
    return std::nullopt;
  }

  const TaskSpec& task_;
  const ProxyConfig& proxy_;
  ChatClient& chat_;
  Sandbox& sandbox_;
  const ExecLimits& limits_;
  ProxyOutcome outcome_;
  std::string history_;
};

}  // namespace

DifficultyDistribution DifficultyDistribution::uniform(std::size_t levels) {
  if (levels == 0) throw Error(ErrorCode::kShapeError, "distribution needs at least one level");
  return {std::vector<double>(levels, 1.0 / static_cast<double>(levels))};
}

void validate(const DifficultyDistribution& dist) {
  if (dist.probs.empty()) throw Error(ErrorCode::kShapeError, "empty distribution");
  double sum = 0.0;
  for (const double p : dist.probs) {
    if (!std::isfinite(p) || p < 0.0) throw Error(ErrorCode::kShapeError, "negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw Error(ErrorCode::kShapeError, "probabilities sum to " + std::to_string(sum));
  }
}

std::string_view to_string(ProxyStyle style) {
  return style == ProxyStyle::kReactLike ? "react" : "plan-execute";
}

ProxyStyle parse_proxy_style(std::string_view text) {
  if (text == "react") return ProxyStyle::kReactLike;
  if (text == "plan-execute") return ProxyStyle::kPlanExecuteLike;
  throw Error(ErrorCode::kConfigError, "unknown proxy style '" + std::string(text) + "'");
}

DifficultyDistribution outcome_distribution(const ProxyOutcome& outcome, std::size_t step_cap,
                                            std::size_t levels) {
  if (levels != 4) {
    throw Error(ErrorCode::kConfigError, "the proxy outcome table is defined for 4 levels only");
  }
  if (step_cap == 0) throw Error(ErrorCode::kConfigError, "proxy step cap must be positive");
  const std::size_t quarter = (step_cap + 3) / 4;
  const std::size_t half = (step_cap + 1) / 2;
  if (!outcome.success) return {{0.0, 0.1, 0.2, 0.7}};
  if (outcome.steps_used <= quarter) return {{0.7, 0.2, 0.1, 0.0}};
  if (outcome.steps_used <= half) return {{0.2, 0.6, 0.2, 0.0}};
  return {{0.05, 0.25, 0.6, 0.1}};
}

ProxyEstimate proxy_estimate(const TaskSpec& task, const ProxyConfig& proxy, ChatClient& chat,
                             SandboxProvider& sandboxes, const ExecLimits& limits,
                             std::size_t levels) {
  // Configuration problems are not rollout crashes.
  outcome_distribution({}, proxy.step_cap, levels);
  try {
    auto sandbox = sandboxes.open("proxy-" + proxy.name + "-" + task.id);
    const auto outcome = ProxyRun(task, proxy, chat, *sandbox, limits).run();
    return {outcome_distribution(outcome, proxy.step_cap, levels), outcome, std::nullopt};
  } catch (const std::exception& e) {
    return {DifficultyDistribution::uniform(levels), std::nullopt,
            "proxy '" + proxy.name + "' crashed on " + task.id + ": " + e.what()};
  }
}

DifficultyDistribution ensemble_consensus(const std::vector<DifficultyDistribution>& dists,
                                          const std::vector<double>& weights) {
  if (dists.empty() || dists.size() != weights.size()) {
    throw Error(ErrorCode::kShapeError, std::to_string(dists.size()) + " distributions but " +
                                            std::to_string(weights.size()) + " weights");
  }
  const auto n = dists.front().probs.size();
  double total = 0.0;
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (dists[k].probs.size() != n) throw Error(ErrorCode::kShapeError, "distribution lengths differ");
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k])) {
      throw Error(ErrorCode::kInvalidArgument, "weights must be nonnegative");
    }
    total += weights[k];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "weights sum to zero");

  DifficultyDistribution out{std::vector<double>(n, 0.0)};
  for (std::size_t k = 0; k < dists.size(); ++k) {
    const double w = weights[k] / total;
    for (std::size_t l = 0; l < n; ++l) out.probs[l] += w * dists[k].probs[l];
  }
  return out;
}

int reestimated_level(const DifficultyDistribution& dist) {
  if (dist.probs.empty()) throw Error(ErrorCode::kShapeError, "empty distribution");
  std::size_t best = 0;
  for (std::size_t l = 1; l < dist.probs.size(); ++l) {
    if (dist.probs[l] > dist.probs[best]) best = l;
  }
  return static_cast<int>(best) + 1;
}

std::vector<std::string> next_batch(const std::map<std::string, int>& levels,
                                    const CurriculumState& state) {
  std::vector<std::pair<int, std::string>> picked;
  for (const auto& [id, level] : levels) {
    if (level <= state.threshold && !state.done.contains(id)) picked.emplace_back(level, id);
  }
  std::sort(picked.begin(), picked.end());
  std::vector<std::string> out;
  out.reserve(picked.size());
  for (auto& p : picked) out.push_back(std::move(p.second));
  return out;
}

CurriculumState update_threshold(CurriculumState state, bool outcome, const CurriculumParams& params) {
  state.window.push_back(outcome);
  while (state.window.size() > params.window) state.window.pop_front();
  if (state.window.size() == params.window &&
      state.threshold < static_cast<int>(params.levels)) {
    const auto wins = std::count(state.window.begin(), state.window.end(), true);
    if (static_cast<double>(wins) >= params.promote_rate * static_cast<double>(params.window)) {
      ++state.threshold;
      state.window.clear();
    }
  }
  return state;
}

CurriculumTrace run_curriculum(const std::map<std::string, int>& levels,
                               const CurriculumParams& params,
                               const std::function<bool(const std::string&)>& run_one) {
  if (params.levels == 0 || params.window == 0) {
    throw Error(ErrorCode::kConfigError, "curriculum needs at least one level and a positive window");
  }
  CurriculumTrace trace;
  auto& state = trace.final_state;
  while (state.done.size() < levels.size()) {
    const auto batch = next_batch(levels, state);
    if (batch.empty()) {
      if (state.threshold >= static_cast<int>(params.levels)) {
        throw Error(ErrorCode::kInvalidArgument, "tasks with levels above L' can never be scheduled");
      }
      ++state.threshold;
      state.window.clear();
      ++trace.steps;
      trace.thresholds.push_back(state.threshold);
      continue;
    }
    state.batch_log.emplace_back(state.threshold, batch);
    for (const auto& id : batch) {
      const bool ok = run_one(id);
      state.done.insert(id);
      trace.order.push_back(id);
      state = update_threshold(std::move(state), ok, params);
      ++trace.steps;
      trace.thresholds.push_back(state.threshold);
    }
  }
  return trace;
}

std::vector<std::vector<std::size_t>> confusion_matrix(
    const std::vector<std::pair<int, int>>& human_and_re, std::size_t human_levels,
    std::size_t re_levels) {
  std::vector<std::vector<std::size_t>> m(human_levels, std::vector<std::size_t>(re_levels, 0));
  for (const auto& [h, r] : human_and_re) {
    if (h < 1 || h > static_cast<int>(human_levels) || r < 1 || r > static_cast<int>(re_levels)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "level pair (" + std::to_string(h) + ", " + std::to_string(r) + ") out of range");
    }
    ++m[h - 1][r - 1];
  }
  return m;
}

}  // namespace memhub
