#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "memhub/orchestrator.hpp"
#include "memhub/types.hpp"

namespace memhub {

struct AgentHits {
  std::size_t retrievals = 0;
  std::size_t semantic_hits = 0;
  std::size_t episodic_hits = 0;

  friend bool operator==(const AgentHits&, const AgentHits&) = default;
};

struct TaskRow {
  std::string task_id;
  std::size_t position = 0;  // 0-based execution order
  int level_human = 0;
  int level_re = 0;
  std::vector<bool> path_success;
  std::optional<std::size_t> chosen_path;
  std::string answer;
  std::optional<std::string> ground_truth;
  bool correct = false;
  std::optional<std::string> error;  // task-level module failure
  AgentHits planner;
  AgentHits developer;
  std::size_t committed_records = 0;
  std::size_t committed_tools = 0;

  friend bool operator==(const TaskRow&, const TaskRow&) = default;
};

struct LevelAccuracy {
  std::size_t tasks = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;

  friend bool operator==(const LevelAccuracy&, const LevelAccuracy&) = default;
};

struct RunReport {
  std::vector<TaskRow> rows;  // execution order
  double pass_at_1 = 0.0;  // 0 for an empty run
  std::map<int, LevelAccuracy> by_human_level;
  std::map<int, LevelAccuracy> by_re_level;
  std::size_t failures = 0;  // rows with an error
};

// Counts retrieval hits per agent across every path of a task.
void tally_hits(const std::vector<RetrievalEvent>& events, TaskRow& row);

// Answers match after trimming whitespace and ignoring ASCII case.
bool answers_match(const std::string& answer, const std::string& truth);

RunReport aggregate(std::vector<TaskRow> rows);

std::string report_json(const RunReport& report);
// One line per task; path_success is a '|'-joined list of 0/1.
std::string report_csv(const RunReport& report);

// ---------------------------------------------------------------------------
// Run log: one JSON object per line. "task" lines list tasks in execution
// order with their outcome; "retrieval" lines carry every retrieval event.
// ---------------------------------------------------------------------------

struct LoggedTask {
  std::string task_id;
  std::size_t position = 0;
  int level_human = 0;
  int level_re = 0;
  bool success = false;

  friend bool operator==(const LoggedTask&, const LoggedTask&) = default;
};

struct RunLog {
  std::vector<LoggedTask> tasks;
  std::vector<RetrievalEvent> retrievals;
};

RunLog make_run_log(const RunReport& report, const std::vector<RetrievalEvent>& retrievals);
std::string encode_run_log(const RunLog& log);
// Throws Error(kReportError) on malformed lines or retrievals for unknown tasks.
RunLog parse_run_log(const std::string& text);
// Throws Error(kReportError) when the file is missing.
RunLog load_run_log(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Figure data
// ---------------------------------------------------------------------------

struct TrendRow {
  std::string task_id;
  std::size_t position = 0;
  std::string agent;  // "planner" | "developer"
  std::size_t retrievals = 0;
  std::size_t semantic_hits = 0;
  std::size_t episodic_hits = 0;
  std::size_t max_hits_per_retrieval = 0;
  std::optional<double> ratio;  // episodic / total, nullopt without hits
};

// Rows for every (task, agent) in execution order, planner first.
std::vector<TrendRow> memory_trend(const RunLog& log);
std::string trend_csv(const std::vector<TrendRow>& rows);

struct SharingMatrix {
  std::vector<std::string> task_ids;  // execution order
  std::vector<bool> success;
  std::set<std::pair<std::size_t, std::size_t>> entries;  // (i, j): task i retrieved from task j
  std::size_t external_sources = 0;  // hits whose source is not a task of this run

  bool at(std::size_t i, std::size_t j) const { return entries.contains({i, j}); }
};

SharingMatrix sharing_matrix(const RunLog& log);
std::string sharing_matrix_json(const SharingMatrix& m);
// Dense N x N grid; the header row and first column carry task ids.
std::string sharing_matrix_csv(const SharingMatrix& m);

// id, owner, kind, source_task_id, d0..d{D-1}; floats printed with %.17g.
std::string embeddings_csv(const std::vector<MemoryRecord>& records, std::size_t dense_dim);

struct EmbeddingRow {
  std::string id;
  std::string owner;
  std::string kind;
  std::string source_task_id;
  DenseVector values;
};
std::vector<EmbeddingRow> parse_embeddings_csv(const std::string& text);

// RFC 4180 quoting when the field holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace memhub
