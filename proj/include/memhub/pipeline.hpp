#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "memhub/chat.hpp"
#include "memhub/config.hpp"
#include "memhub/curriculum.hpp"
#include "memhub/embedding.hpp"
#include "memhub/orchestrator.hpp"
#include "memhub/report.hpp"
#include "memhub/sandbox.hpp"

namespace memhub {

// Owns the model, embedding and sandbox backends of one run.
struct RunBackends {
  std::unique_ptr<ChatClient> chat;
  std::unique_ptr<Embedder> embedder;
  LexicalSparseEncoder sparse;
  std::unique_ptr<Summarizer> summarizer;
  std::unique_ptr<SandboxProvider> sandboxes;

  Backends view() { return Backends{*chat, *embedder, sparse, *summarizer, *sandboxes}; }
};

// Scripted mode reads the script file: {"kind": "toy", ...} selects the
// rule-based toy policy, anything else is a digest-table script. Live mode
// builds HTTP clients. Throws Error(kConfigError).
std::unique_ptr<RunBackends> make_backends(const RunConfig& config);

struct LevelEstimate {
  std::string task_id;
  int level_human = 0;
  std::vector<ProxyEstimate> proxies;  // config order
  DifficultyDistribution consensus;
  int level_re = 0;
};

std::vector<LevelEstimate> estimate_levels(const std::vector<TaskSpec>& tasks, const RunConfig& config,
                                           ChatClient& chat, SandboxProvider& sandboxes);

// Fisher-Yates over mt19937_64: for i = n-1..1 swap i with rng() % (i + 1).
std::vector<std::size_t> random_order(std::size_t n, std::uint64_t seed);

struct RunResult {
  RunReport report;
  std::vector<RetrievalEvent> retrievals;  // execution order, path order within a task
  std::vector<LevelEstimate> levels;  // task file order
  std::vector<int> thresholds;  // curriculum threshold each task was scheduled under, 0 without curriculum
};

// Estimates levels, orders tasks (curriculum or seeded random order) and runs
// each through run_task. Module errors become task-level failures.
RunResult run_pipeline(const std::vector<TaskSpec>& tasks, const RunConfig& config, MemoryHub& hub,
                       RunBackends& backends, std::ostream* progress = nullptr);

ProceduralMemory load_procedural(const RunConfig& config, AgentKind agent);

// Loads config.store when set, then ingests config.demos when both semantic
// repositories are still empty.
void prepare_hub(MemoryHub& hub, const RunConfig& config, RunBackends& backends);

std::string levels_csv(const std::vector<LevelEstimate>& levels);
std::string confusion_csv(const std::vector<LevelEstimate>& levels, int human_levels, std::size_t re_levels);
std::string curriculum_csv(const RunResult& result);

// Writes report.json, report.csv, run_log.jsonl, trend.csv,
// sharing_matrix.{json,csv}, curriculum.csv, confusion.csv and store/ under
// config.out.
void write_run_outputs(const RunConfig& config, const RunResult& result, const MemoryHub& hub,
                       const std::string& embedder_name);

// Full run: validate, build backends, run, write outputs. Returns the exit
// code: 0 success, 1 when some task recorded a module failure, 2 on a
// configuration error (nothing is run).
int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace memhub
