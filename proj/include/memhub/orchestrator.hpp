#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memhub/chat.hpp"
#include "memhub/embedding.hpp"
#include "memhub/memory.hpp"
#include "memhub/retrieval.hpp"
#include "memhub/sandbox.hpp"
#include "memhub/types.hpp"

namespace memhub {

// ---------------------------------------------------------------------------
// Models and memory
// ---------------------------------------------------------------------------

struct ModelProfile {
  enum class Role { kPath, kJudge, kProxy };
  std::string name;
  std::string endpoint_ref;
  double temperature = 1.0;
  Role role = Role::kPath;
};

// Throws Error(kConfigError) unless 0 < temperature <= 1.
void validate(const ModelProfile& model);

// All repositories of a run: semantic and episodic memory for the planner and
// the developer, plus the tool repository.
class MemoryHub {
 public:
  explicit MemoryHub(std::size_t dense_dim);

  MemoryHub(const MemoryHub&) = delete;
  MemoryHub& operator=(const MemoryHub&) = delete;

  std::size_t dense_dim() const noexcept { return dense_dim_; }

  // Throws Error(kWrongRepository) for agents without repositories.
  MemoryRepository& semantic(const AgentKind& agent);
  MemoryRepository& episodic(const AgentKind& agent);
  const MemoryRepository& semantic(const AgentKind& agent) const;
  const MemoryRepository& episodic(const AgentKind& agent) const;
  ToolRepository& tools() noexcept { return tools_; }
  const ToolRepository& tools() const noexcept { return tools_; }

 private:
  std::size_t dense_dim_;
  MemoryRepository planner_sem_, planner_ep_, developer_sem_, developer_ep_;
  ToolRepository tools_;
};

// Writes experiences into the hub's episodic repositories via abstraction.
class HubExperienceWriter final : public ExperienceWriter {
 public:
  HubExperienceWriter(MemoryHub& hub, Summarizer& summarizer, Embedder& embedder,
                      const SparseEncoder& sparse, std::size_t max_chunk_chars)
      : hub_(hub), summarizer_(summarizer), embedder_(embedder), sparse_(sparse),
        max_chunk_chars_(max_chunk_chars) {}

  void write(const EpisodicExperience& exp, const std::string& id_prefix) override;

 private:
  MemoryHub& hub_;
  Summarizer& summarizer_;
  Embedder& embedder_;
  const SparseEncoder& sparse_;
  std::size_t max_chunk_chars_;
};

// ---------------------------------------------------------------------------
// Configuration and injected backends
// ---------------------------------------------------------------------------

struct OrchestratorConfig {
  std::size_t outer_max_steps = 12;
  std::size_t judge_lookback = 5;
  std::size_t max_reasks = 2;
  std::size_t max_iters = 10;
  ExecLimits limits;
  RetrievalLimits planner_limits = RetrievalLimits::planner_defaults();
  RetrievalLimits developer_limits = RetrievalLimits::developer_defaults();
  int rrf_k = kDefaultRrfConstant;
  std::size_t max_chunk_chars = kDefaultMaxChunkChars;
  // Ablation switch: when false, retrieval never consults episodic memory.
  bool episodic_retrieval = true;
  bool parallel_paths = true;
  ProceduralMemory planner_proc{AgentKind::planner(), "", ""};
  ProceduralMemory developer_proc{AgentKind::developer(), "", ""};
  ProceduralMemory judge_proc{AgentKind::judge(), "", ""};
};

struct Backends {
  ChatClient& chat;  // dispatches on ChatRequest::model
  Embedder& embedder;
  const SparseEncoder& sparse;
  Summarizer& summarizer;
  SandboxProvider& sandboxes;
  TesterCommentary* tester = nullptr;
};

// ---------------------------------------------------------------------------
// Acting
// ---------------------------------------------------------------------------

// Parses a model reply. Precedence: a fenced block gives Code (exact fence
// contents); a line starting "FINAL ANSWER:" gives FinalAnswer; a line
// starting "TOOL:" gives ToolInvocation; the first bullet or numbered item
// gives SubPlan. Returns nullopt when nothing matches.
std::optional<Action> parse_action(const std::string& reply);

// True when `action` is a legal output for `agent`: Planner emits SubPlan or
// FinalAnswer, Developer emits Code.
bool action_valid_for(const AgentKind& agent, const Action& action);

// Renders retrieved memories as "### {id}\n{chunk_text}" blocks.
std::string render_memories(const std::vector<RankedResult>& results);

// The prompt of one act call: system message from procedural memory, then a
// user message with the sections task, state, semantic memory and episodic
// memory, in that order. `attempt` (previous code and traceback) is appended
// to the state section.
std::vector<ChatMessage> build_act_prompt(const TaskSpec& task, const AgentState& state,
                                          const RetrievalResult& mem, const ProceduralMemory& proc,
                                          std::string_view attempt = {});

// a_t ~ pi(task + state + retrieved | proc). Re-asks up to max_reasks times on
// an unparseable or role-invalid reply, then throws Error(kActionParseError).
Action act(const AgentKind& agent, const TaskSpec& task, const AgentState& state,
           const RetrievalResult& mem, const ProceduralMemory& proc, ChatClient& chat,
           const ModelProfile& model, std::size_t max_reasks = 2,
           std::string_view attempt = {});

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

struct RetrievalEvent {
  std::string task_id;
  std::size_t path_index = 0;
  AgentKind agent = AgentKind::planner();
  std::size_t step = 0;  // planner step, or developer iteration
  std::vector<std::string> semantic_ids;
  std::vector<std::string> episodic_ids;
  std::vector<std::string> episodic_sources;  // source_task_id of each episodic hit
};

struct RolloutCandidate {
  std::size_t path_index = 0;
  ModelProfile model;
  std::string final_answer;
  std::vector<Step> trajectory;  // planner trajectory
  bool succeeded = false;
  std::optional<std::string> error;

  // Writes held back until the judge has run.
  std::vector<MemoryRecord> pending_planner_records;
  std::vector<MemoryRecord> pending_developer_records;
  std::vector<ToolEpisode> pending_tools;

  std::vector<RetrievalEvent> retrievals;
  std::size_t planner_calls = 0;
  std::size_t developer_calls = 0;
  std::size_t act_calls = 0;
  std::size_t retrieve_calls = 0;
  std::size_t sandbox_calls = 0;
  std::string session_id;
};

// Renders the planner's view of progress.
std::string planner_state_summary(std::size_t step, const std::vector<std::string>& completed,
                                  const std::string& last_intent, const std::string& last_result,
                                  const std::string& last_output);

RolloutCandidate run_task_path(const TaskSpec& task, std::size_t path_index,
                               const ModelProfile& model, const MemoryHub& hub, Backends& backends,
                               const OrchestratorConfig& config);

struct CommitCounts {
  std::size_t records = 0;
  std::size_t tools = 0;
};

// Stores a succeeded candidate's held-back tools and records into the hub.
// Failed candidates store nothing.
CommitCounts commit_candidate(MemoryHub& hub, const RolloutCandidate& cand);

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

struct JudgeVerdict {
  std::size_t chosen_path = 0;
  std::string final_answer;
  std::string rationale;
  std::vector<std::size_t> lookback_used;  // one per judged candidate, in path order
  bool fallback = false;

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

// The judge prompt: each succeeded candidate's final answer and its last
// min(lookback, len) state-action pairs.
std::vector<ChatMessage> build_judge_prompt(const std::vector<const RolloutCandidate*>& shown,
                                            const TaskSpec& task, const ProceduralMemory& proc,
                                            std::size_t lookback);

// Picks one succeeded candidate. A single succeeded candidate is chosen
// without a model call. The reply must contain "CHOSEN PATH: <n>" naming a
// shown path; after max_reasks failed re-asks the first succeeded candidate is
// chosen and `fallback` set. Throws Error(kInvalidArgument) when no
// candidate succeeded.
JudgeVerdict judge(const std::vector<RolloutCandidate>& candidates, const TaskSpec& task,
                   ChatClient& chat, const ModelProfile& judge_model, const ProceduralMemory& proc,
                   std::size_t lookback = 5, std::size_t max_reasks = 2);

struct TaskOutcome {
  std::optional<JudgeVerdict> verdict;
  std::vector<RolloutCandidate> candidates;
  std::size_t committed_records = 0;
  std::size_t committed_tools = 0;
};

// Runs every path, judges, then commits the held-back writes of every
// succeeded path in path order.
TaskOutcome run_task(const TaskSpec& task, const std::vector<ModelProfile>& paths,
                     const ModelProfile& judge_model, MemoryHub& hub, Backends& backends,
                     const OrchestratorConfig& config);

}  // namespace memhub
