#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memhub/curriculum.hpp"
#include "memhub/orchestrator.hpp"

namespace memhub {

enum class BackendMode { kScripted, kLive };
enum class SandboxMode { kFake, kProcess };

std::string_view to_string(BackendMode mode);
BackendMode parse_backend_mode(std::string_view text);

struct RunConfig {
  std::filesystem::path tasks;
  std::optional<std::filesystem::path> demos;
  // Hub directory loaded before the run; the grown hub is written to out/store.
  std::optional<std::filesystem::path> store;
  std::filesystem::path out = "out";
  // Directory holding planner.md, developer.md and judge.md. Each file is the
  // system prompt, a line "---", then the behavioral guidelines.
  std::optional<std::filesystem::path> procedural;

  BackendMode backend = BackendMode::kScripted;
  std::optional<std::filesystem::path> script;  // scripted chat backend
  std::string chat_endpoint;  // live
  std::string embed_endpoint;  // live
  std::string embed_model = "live-embedder";

  SandboxMode sandbox = SandboxMode::kFake;
  std::vector<std::string> shim_command;

  std::vector<ModelProfile> paths;  // k = paths.size()
  ModelProfile judge_model{"judge", "", 1.0, ModelProfile::Role::kJudge};
  OrchestratorConfig orchestrator;

  bool curriculum = true;
  CurriculumParams curriculum_params;
  std::vector<ProxyConfig> proxies;
  int human_levels = 3;

  std::size_t dense_dim = 256;
  std::uint64_t embed_seed = 0;
  std::string summarizer = "outline";  // outline | identity
  std::uint64_t seed = 42;
};

RunConfig default_run_config();

// "key = value" lines; '#' starts a comment; relative paths resolve against
// base_dir. Unknown keys and malformed values throw Error(kConfigError) naming
// the line.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);

// Cross-field checks run before any task: live mode needs both endpoints,
// scripted mode needs a script, path count and proxy list are usable, and
// referenced input files exist. Throws Error(kConfigError).
void validate(const RunConfig& config);

// Reads "system prompt\n---\nguidelines". Without a separator the whole file
// is the system prompt.
ProceduralMemory parse_procedural(const std::string& text, AgentKind agent);

}  // namespace memhub
