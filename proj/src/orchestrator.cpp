#include "memhub/orchestrator.hpp"

#include <algorithm>
#include <future>
#include <regex>
#include <sstream>

#include "memhub/error.hpp"

namespace memhub {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

// Collapses output onto one line so it cannot open a markdown section.
std::string one_line(const std::string& text, std::size_t cap = 500) {
  std::string out;
  for (const auto& line : split_lines(trim(text))) {
    if (!out.empty()) out += " / ";
    out += trim(line);
  }
  if (out.size() > cap) out = out.substr(0, cap) + "...";
  return out;
}

std::string system_text(const ProceduralMemory& proc) {
  std::string s = proc.system_prompt;
  if (!proc.behavioral_guidelines.empty()) {
    if (!s.empty()) s += "\n\n";
    s += proc.behavioral_guidelines;
  }
  return s;
}

std::string reask_text(const AgentKind& agent) {
  if (agent.role() == AgentRole::kDeveloper) {
    return "Reply again with exactly one fenced code block containing the complete program.";
  }
  return "Reply again with exactly one action: a single bullet naming the next sub-plan, or a "
         "line starting \"FINAL ANSWER:\".";
}

std::string developer_summary(const std::string& intent, std::size_t iteration,
                              const std::vector<CodeContextEntry>& context) {
  std::string s = "intent: " + first_line(intent) + "\niteration: " + std::to_string(iteration);
  if (iteration > 0) s += "\nprevious: " + context.back().feedback.describe();
  return s;
}

std::string attempt_text(const CodeContextEntry& prev) {
  std::string s = "previous code:\n```python\n" + prev.code + "\n```";
  if (!prev.feedback.traceback().empty()) s += "\ntraceback:\n" + trim(prev.feedback.traceback());
  if (!prev.commentary.empty()) s += "\ntester: " + prev.commentary;
  return s;
}

RetrievalEvent make_event(const std::string& task_id, std::size_t path, const AgentKind& agent,
                          std::size_t step, const RetrievalResult& r) {
  RetrievalEvent ev;
  ev.task_id = task_id;
  ev.path_index = path;
  ev.agent = agent;
  ev.step = step;
  for (const auto& x : r.semantic) ev.semantic_ids.push_back(x.record_id);
  for (const auto& x : r.episodic) {
    ev.episodic_ids.push_back(x.record_id);
    ev.episodic_sources.push_back(x.record && x.record->source_task_id ? *x.record->source_task_id : "");
  }
  return ev;
}

// Per-path view used by both the planner loop and the developer coder.
struct PathContext {
  const TaskSpec& task;
  std::size_t path_index;
  const ModelProfile& model;
  const MemoryHub& hub;
  Backends& backends;
  const OrchestratorConfig& config;
  RolloutCandidate& cand;

  RetrievalResult retrieve_for(const AgentKind& agent, const AgentState& state) {
    const auto q = make_query(agent, task.description, state.context_summary, backends.embedder,
                              backends.sparse);
    RetrievalLimits limits =
        agent.role() == AgentRole::kPlanner ? config.planner_limits : config.developer_limits;
    if (!config.episodic_retrieval) limits.episodic_k = 0;
    auto r = retrieve(q, hub.semantic(agent), hub.episodic(agent), limits, config.rrf_k);
    ++cand.retrieve_calls;
    cand.retrievals.push_back(make_event(task.id, path_index, agent, state.step_index, r));
    return r;
  }

  Action act_as(const AgentKind& agent, const AgentState& state, const ProceduralMemory& proc,
                std::string_view attempt = {}) {
    const auto mem = retrieve_for(agent, state);
    ++cand.act_calls;
    if (agent.role() == AgentRole::kPlanner) ++cand.planner_calls;
    else ++cand.developer_calls;
    return act(agent, task, state, mem, proc, backends.chat, model, config.max_reasks, attempt);
  }
};

class DeveloperCoder final : public CoderContract {
 public:
  explicit DeveloperCoder(PathContext& ctx) : ctx_(ctx) {}

  std::string write_code(const CoderTurn& turn) override {
    AgentState state;
    state.task_id = turn.task.id;
    state.step_index = turn.iteration;
    state.context_summary = developer_summary(turn.intent, turn.iteration, turn.context);
    std::string attempt;
    if (!turn.context.empty()) {
      state.env_feedback = turn.context.back().feedback;
      attempt = attempt_text(turn.context.back());
    }
    const Action a =
        ctx_.act_as(AgentKind::developer(), state, ctx_.config.developer_proc, attempt);
    return std::get<CodeAction>(a).source;
  }

 private:
  PathContext& ctx_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Models and memory
// ---------------------------------------------------------------------------

void validate(const ModelProfile& model) {
  if (!(model.temperature > 0.0 && model.temperature <= 1.0)) {
    throw Error(ErrorCode::kConfigError,
                "model '" + model.name + "' temperature must lie in (0, 1]");
  }
  if (model.name.empty()) throw Error(ErrorCode::kConfigError, "model name is empty");
}

MemoryHub::MemoryHub(std::size_t dense_dim)
    : dense_dim_(dense_dim),
      planner_sem_(AgentKind::planner(), MemoryKind::kSemantic, dense_dim),
      planner_ep_(AgentKind::planner(), MemoryKind::kEpisodic, dense_dim),
      developer_sem_(AgentKind::developer(), MemoryKind::kSemantic, dense_dim),
      developer_ep_(AgentKind::developer(), MemoryKind::kEpisodic, dense_dim) {}

MemoryRepository& MemoryHub::semantic(const AgentKind& agent) {
  return const_cast<MemoryRepository&>(std::as_const(*this).semantic(agent));
}

MemoryRepository& MemoryHub::episodic(const AgentKind& agent) {
  return const_cast<MemoryRepository&>(std::as_const(*this).episodic(agent));
}

const MemoryRepository& MemoryHub::semantic(const AgentKind& agent) const {
  switch (agent.role()) {
    case AgentRole::kPlanner: return planner_sem_;
    case AgentRole::kDeveloper: return developer_sem_;
    default:
      throw Error(ErrorCode::kWrongRepository, agent.to_string() + " has no semantic repository");
  }
}

const MemoryRepository& MemoryHub::episodic(const AgentKind& agent) const {
  switch (agent.role()) {
    case AgentRole::kPlanner: return planner_ep_;
    case AgentRole::kDeveloper: return developer_ep_;
    default:
      throw Error(ErrorCode::kWrongRepository, agent.to_string() + " has no episodic repository");
  }
}

void HubExperienceWriter::write(const EpisodicExperience& exp, const std::string& id_prefix) {
  auto records =
      abstract_experience(exp, summarizer_, embedder_, sparse_, {id_prefix, max_chunk_chars_});
  auto& repo = hub_.episodic(exp.owner);
  for (auto& r : records) repo.store(std::move(r));
}

// ---------------------------------------------------------------------------
// Acting
// ---------------------------------------------------------------------------

std::optional<Action> parse_action(const std::string& reply) {
  const auto lines = split_lines(reply);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!starts_with(trim(lines[i]), "```")) continue;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (trim(lines[j]) == "```") {
        std::string code;
        for (std::size_t k = i + 1; k < j; ++k) {
          if (k > i + 1) code += '\n';
          code += lines[k];
        }
        return CodeAction{code};
      }
    }
    break;
  }

  for (const auto& raw : lines) {
    const auto line = trim(raw);
    if (starts_with(line, "FINAL ANSWER:")) {
      return FinalAnswerAction{trim(std::string_view(line).substr(13))};
    }
  }

  for (const auto& raw : lines) {
    const auto line = trim(raw);
    if (!starts_with(line, "TOOL:")) continue;
    const auto rest = trim(std::string_view(line).substr(5));
    if (rest.empty()) continue;
    const auto sp = rest.find_first_of(" \t");
    if (sp == std::string::npos) return ToolInvocationAction{rest, ""};
    return ToolInvocationAction{rest.substr(0, sp), trim(std::string_view(rest).substr(sp))};
  }

  static const std::regex bullet(R"(^(?:[-*+]|\d+[.)])\s+(.*\S))");
  for (const auto& raw : lines) {
    const auto line = trim(raw);
    std::smatch m;
    if (std::regex_match(line, m, bullet)) return SubPlanAction{m[1].str()};
  }
  return std::nullopt;
}

bool action_valid_for(const AgentKind& agent, const Action& action) {
  switch (agent.role()) {
    case AgentRole::kPlanner:
      return std::holds_alternative<SubPlanAction>(action) ||
             std::holds_alternative<FinalAnswerAction>(action);
    case AgentRole::kDeveloper:
      return std::holds_alternative<CodeAction>(action);
    default:
      return false;
  }
}

std::string render_memories(const std::vector<RankedResult>& results) {
  std::string out;
  for (const auto& r : results) {
    if (!out.empty()) out += "\n\n";
    out += "### " + r.record_id + "\n" + (r.record ? r.record->chunk_text : std::string());
  }
  return out.empty() ? "(none)" : out;
}

std::vector<ChatMessage> build_act_prompt(const TaskSpec& task, const AgentState& state,
                                          const RetrievalResult& mem, const ProceduralMemory& proc,
                                          std::string_view attempt) {
  std::string user = "## task\n" + task.description;
  if (!task.attachments.empty()) {
    user += "\nattachments:";
    for (const auto& a : task.attachments) user += " " + a;
  }
  user += "\n\n## state\n" + state.context_summary;
  if (!attempt.empty()) user += "\n" + std::string(attempt);
  user += "\n\n## semantic memory\n" + render_memories(mem.semantic);
  user += "\n\n## episodic memory\n" + render_memories(mem.episodic);
  return {{"system", system_text(proc)}, {"user", user}};
}

Action act(const AgentKind& agent, const TaskSpec& task, const AgentState& state,
           const RetrievalResult& mem, const ProceduralMemory& proc, ChatClient& chat,
           const ModelProfile& model, std::size_t max_reasks, std::string_view attempt) {
  auto messages = build_act_prompt(task, state, mem, proc, attempt);
  for (std::size_t attempt_no = 0;; ++attempt_no) {
    const auto reply = chat.complete({model.name, messages, model.temperature}).content;
    if (auto a = parse_action(reply); a && action_valid_for(agent, *a)) return *a;
    if (attempt_no == max_reasks) {
      throw Error(ErrorCode::kActionParseError,
                  agent.to_string() + " reply has no valid action after " +
                      std::to_string(max_reasks) + " re-asks: " + one_line(reply, 200));
    }
    messages.push_back({"assistant", reply});
    messages.push_back({"user", reask_text(agent)});
  }
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

std::string planner_state_summary(std::size_t step, const std::vector<std::string>& completed,
                                  const std::string& last_intent, const std::string& last_result,
                                  const std::string& last_output) {
  std::string s = "step: " + std::to_string(step) + "\ncompleted:";
  if (completed.empty()) s += " none";
  for (std::size_t i = 0; i < completed.size(); ++i) s += (i ? "; " : " ") + first_line(completed[i]);
  s += "\nlast sub-plan: " + (last_intent.empty() ? "none" : first_line(last_intent));
  s += "\nlast result: " + (last_result.empty() ? "none" : last_result);
  s += "\nlast output: " + (last_output.empty() ? "none" : last_output);
  return s;
}

RolloutCandidate run_task_path(const TaskSpec& task, std::size_t path_index,
                               const ModelProfile& model, const MemoryHub& hub, Backends& backends,
                               const OrchestratorConfig& config) {
  RolloutCandidate cand;
  cand.path_index = path_index;
  cand.model = model;
  cand.session_id = "sbx-" + task.id + "-p" + std::to_string(path_index);

  PathContext ctx{task, path_index, model, hub, backends, config, cand};
  std::unique_ptr<Sandbox> sandbox;
  std::vector<std::string> completed;
  std::string last_intent, last_result, last_output;
  std::optional<Feedback> last_feedback;

  try {
    for (std::size_t step = 0; step < config.outer_max_steps; ++step) {
      AgentState state;
      state.task_id = task.id;
      state.step_index = step;
      state.context_summary =
          planner_state_summary(step, completed, last_intent, last_result, last_output);
      state.env_feedback = last_feedback;

      const Action a = ctx.act_as(AgentKind::planner(), state, config.planner_proc);
      cand.trajectory.emplace_back(state, a);

      if (const auto* fin = std::get_if<FinalAnswerAction>(&a)) {
        cand.final_answer = fin->answer;
        cand.succeeded = true;
        break;
      }

      const auto& intent = std::get<SubPlanAction>(a).intent;
      if (!sandbox) sandbox = backends.sandboxes.open(cand.session_id);
      LoopOptions lo;
      lo.max_iters = config.max_iters;
      lo.limits = config.limits;
      lo.tool_id = "tool-" + task.id + "-p" + std::to_string(path_index) + "-s" + std::to_string(step);
      lo.tester = backends.tester;
      DeveloperCoder coder(ctx);
      const auto outcome = run_refinement_loop(task, intent, coder, *sandbox, lo);

      last_intent = intent;
      if (const auto* ep = std::get_if<ToolEpisode>(&outcome)) {
        completed.push_back(intent);
        last_result = "success";
        last_feedback = ep->trajectory.back().feedback;
        last_output = one_line(last_feedback->stdout_text());
        cand.pending_tools.push_back(*ep);
      } else {
        const auto& fail = std::get<LoopFailure>(outcome);
        last_result = "failed after " + std::to_string(fail.trajectory.size()) + " attempts";
        if (!fail.trajectory.empty()) {
          last_feedback = fail.trajectory.back().feedback;
          last_output = one_line(last_feedback->describe());
        } else {
          last_feedback.reset();
          last_output.clear();
        }
      }
    }
    if (!cand.succeeded) {
      cand.error = "no final answer within " + std::to_string(config.outer_max_steps) + " steps";
    }
  } catch (const Error& e) {
    cand.succeeded = false;
    cand.error = e.what();
  }
  if (sandbox) cand.sandbox_calls = sandbox->exec_calls();

  if (cand.succeeded) {
    try {
      EpisodicExperience exp{AgentKind::planner(), task.id, task.description, cand.trajectory};
      cand.pending_planner_records = abstract_experience(
          exp, backends.summarizer, backends.embedder, backends.sparse,
          {"ep-planner-" + task.id + "-p" + std::to_string(path_index), config.max_chunk_chars});
      for (const auto& tool : cand.pending_tools) {
        auto recs = abstract_experience(to_developer_experience(tool, task.description),
                                        backends.summarizer, backends.embedder, backends.sparse,
                                        {tool.tool_id, config.max_chunk_chars});
        for (auto& r : recs) cand.pending_developer_records.push_back(std::move(r));
      }
    } catch (const Error& e) {
      cand.succeeded = false;
      cand.error = e.what();
    }
  }
  if (!cand.succeeded) {
    cand.pending_planner_records.clear();
    cand.pending_developer_records.clear();
    cand.pending_tools.clear();
  }
  return cand;
}

CommitCounts commit_candidate(MemoryHub& hub, const RolloutCandidate& cand) {
  CommitCounts n;
  if (!cand.succeeded) return n;
  for (const auto& tool : cand.pending_tools) {
    hub.tools().add(tool);
    ++n.tools;
  }
  for (const auto& r : cand.pending_planner_records) {
    hub.episodic(AgentKind::planner()).store(r);
    ++n.records;
  }
  for (const auto& r : cand.pending_developer_records) {
    hub.episodic(AgentKind::developer()).store(r);
    ++n.records;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

std::vector<ChatMessage> build_judge_prompt(const std::vector<const RolloutCandidate*>& shown,
                                            const TaskSpec& task, const ProceduralMemory& proc,
                                            std::size_t lookback) {
  std::string user = "## task\n" + task.description + "\n";
  for (const auto* c : shown) {
    user += "\n# path " + std::to_string(c->path_index) + "\nfinal answer: " + c->final_answer + "\n";
    const auto n = std::min(lookback, c->trajectory.size());
    for (auto i = c->trajectory.size() - n; i < c->trajectory.size(); ++i) {
      user += render_step(c->trajectory[i].first, c->trajectory[i].second) + "\n";
    }
  }
  user += "\nChoose the path whose answer is best supported. Reply with a line \"CHOSEN PATH: <n>\" "
          "followed by your rationale.";
  return {{"system", system_text(proc)}, {"user", user}};
}

JudgeVerdict judge(const std::vector<RolloutCandidate>& candidates, const TaskSpec& task,
                   ChatClient& chat, const ModelProfile& judge_model, const ProceduralMemory& proc,
                   std::size_t lookback, std::size_t max_reasks) {
  std::vector<const RolloutCandidate*> shown;
  for (const auto& c : candidates) {
    if (c.succeeded) shown.push_back(&c);
  }
  if (shown.empty()) throw Error(ErrorCode::kInvalidArgument, "no succeeded candidate to judge");

  JudgeVerdict v;
  for (const auto* c : shown) v.lookback_used.push_back(std::min(lookback, c->trajectory.size()));

  const auto choose = [&](const RolloutCandidate& c) {
    v.chosen_path = c.path_index;
    v.final_answer = c.final_answer;
  };

  if (shown.size() == 1) {
    choose(*shown.front());
    v.rationale = "single succeeded candidate";
    return v;
  }

  static const std::regex chosen(R"(CHOSEN PATH:\s*(\d+))");
  auto messages = build_judge_prompt(shown, task, proc, lookback);
  for (std::size_t attempt = 0;; ++attempt) {
    const auto reply = chat.complete({judge_model.name, messages, judge_model.temperature}).content;
    std::smatch m;
    if (std::regex_search(reply, m, chosen)) {
      const auto n = std::stoull(m[1].str());
      for (const auto* c : shown) {
        if (c->path_index == n) {
          choose(*c);
          v.rationale = trim(reply);
          return v;
        }
      }
    }
    if (attempt == max_reasks) break;
    std::string ids;
    for (const auto* c : shown) ids += (ids.empty() ? "" : ", ") + std::to_string(c->path_index);
    messages.push_back({"assistant", reply});
    messages.push_back({"user", "Reply with a line \"CHOSEN PATH: <n>\" where n is one of " + ids + "."});
  }
  choose(*shown.front());
  v.fallback = true;
  v.rationale = "judge reply unparseable; first succeeded candidate chosen";
  return v;
}

TaskOutcome run_task(const TaskSpec& task, const std::vector<ModelProfile>& paths,
                     const ModelProfile& judge_model, MemoryHub& hub, Backends& backends,
                     const OrchestratorConfig& config) {
  TaskOutcome out;
  const MemoryHub& view = hub;
  if (config.parallel_paths && paths.size() > 1) {
    std::vector<std::future<RolloutCandidate>> futures;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return run_task_path(task, i, paths[i], view, backends, config);
      }));
    }
    for (auto& f : futures) out.candidates.push_back(f.get());
  } else {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      out.candidates.push_back(run_task_path(task, i, paths[i], view, backends, config));
    }
  }

  const bool any = std::any_of(out.candidates.begin(), out.candidates.end(),
                               [](const RolloutCandidate& c) { return c.succeeded; });
  if (!any) return out;

  out.verdict = judge(out.candidates, task, backends.chat, judge_model, config.judge_proc,
                      config.judge_lookback, config.max_reasks);

  for (const auto& c : out.candidates) {
    const auto n = commit_candidate(hub, c);
    out.committed_records += n.records;
    out.committed_tools += n.tools;
  }
  return out;
}

}  // namespace memhub
