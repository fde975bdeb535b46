#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "memhub/chat.hpp"
#include "memhub/orchestrator.hpp"
#include "memhub/sandbox.hpp"
#include "memhub/types.hpp"

namespace memhub {

inline constexpr std::size_t kDefaultLevels = 4;
inline constexpr double kSimplexTolerance = 1e-9;

struct DifficultyDistribution {
  std::vector<double> probs;

  static DifficultyDistribution uniform(std::size_t levels);

  friend bool operator==(const DifficultyDistribution&, const DifficultyDistribution&) = default;
};

// Throws Error(kShapeError) when empty, any entry is negative or not finite,
// or the entries do not sum to 1 within kSimplexTolerance.
void validate(const DifficultyDistribution& dist);

// ---------------------------------------------------------------------------
// Proxy agents
// ---------------------------------------------------------------------------

enum class ProxyStyle { kReactLike, kPlanExecuteLike };

std::string_view to_string(ProxyStyle style);
ProxyStyle parse_proxy_style(std::string_view text);

struct ProxyConfig {
  std::string name;
  ProxyStyle style = ProxyStyle::kReactLike;
  double weight = 0.5;
  ModelProfile model;
  std::size_t step_cap = 8;
};

struct ProxyOutcome {
  bool success = false;
  std::size_t steps_used = 0;  // model calls
  std::size_t iterations_used = 0;  // sandbox executions

  friend bool operator==(const ProxyOutcome&, const ProxyOutcome&) = default;
};

// Fixed outcome table over four levels. With q = ceil(cap/4), h = ceil(cap/2):
//   success in <= q steps -> (0.7, 0.2, 0.1, 0)
//   success in <= h steps -> (0.2, 0.6, 0.2, 0)
//   later success         -> (0.05, 0.25, 0.6, 0.1)
//   failure               -> (0, 0.1, 0.2, 0.7)
// Throws Error(kConfigError) when levels != 4 or step_cap == 0.
DifficultyDistribution outcome_distribution(const ProxyOutcome& outcome, std::size_t step_cap,
                                            std::size_t levels = kDefaultLevels);

struct ProxyEstimate {
  DifficultyDistribution dist;
  std::optional<ProxyOutcome> outcome;  // nullopt when the rollout crashed
  std::optional<std::string> warning;
};

// Runs one cheap proxy rollout and maps its outcome through the table.
// ReactLike: each model call either runs a fenced code block in the sandbox or
// answers with "FINAL ANSWER:". PlanExecuteLike: one call for a bulleted plan,
// one code call per bullet, then one call for the answer. Success means an
// answer within the step cap that matches the ground truth when one exists.
// A crashed rollout yields the uniform distribution and a warning.
ProxyEstimate proxy_estimate(const TaskSpec& task, const ProxyConfig& proxy, ChatClient& chat,
                             SandboxProvider& sandboxes, const ExecLimits& limits = {},
                             std::size_t levels = kDefaultLevels);

// Weighted average after normalizing the weights. Throws Error(kShapeError)
// on count or length mismatch and Error(kInvalidArgument) for negative
// weights or a non-positive weight sum.
DifficultyDistribution ensemble_consensus(const std::vector<DifficultyDistribution>& dists,
                                          const std::vector<double>& weights);

// 1-based argmax; ties go to the lower level.
int reestimated_level(const DifficultyDistribution& dist);

// ---------------------------------------------------------------------------
// Scheduling
// ---------------------------------------------------------------------------

struct CurriculumParams {
  std::size_t levels = kDefaultLevels;  // L'
  std::size_t window = 8;  // W
  double promote_rate = 0.5;
};

struct CurriculumState {
  std::set<std::string> done;
  int threshold = 1;
  std::deque<bool> window;
  std::vector<std::pair<int, std::vector<std::string>>> batch_log;
};

// Undone tasks with level <= threshold, ordered by (level, id).
std::vector<std::string> next_batch(const std::map<std::string, int>& levels,
                                    const CurriculumState& state);

// Pushes the outcome; a full window with success rate >= promote_rate raises
// the threshold by one (up to L') and clears the window.
CurriculumState update_threshold(CurriculumState state, bool outcome, const CurriculumParams& params);

struct CurriculumTrace {
  std::vector<std::string> order;
  std::vector<int> thresholds;  // threshold after each step
  CurriculumState final_state;
  std::size_t steps = 0;  // task executions plus forced threshold raises
};

// Iterates next_batch -> run -> mark done -> update_threshold until every
// task is done. An empty batch below L' forces the threshold up by one.
CurriculumTrace run_curriculum(const std::map<std::string, int>& levels,
                               const CurriculumParams& params,
                               const std::function<bool(const std::string&)>& run_one);

// Cell (h-1, r-1) counts tasks with human level h and re-estimated level r.
// Levels outside 1..human_levels or 1..re_levels throw Error(kInvalidArgument).
std::vector<std::vector<std::size_t>> confusion_matrix(
    const std::vector<std::pair<int, int>>& human_and_re, std::size_t human_levels,
    std::size_t re_levels);

}  // namespace memhub
