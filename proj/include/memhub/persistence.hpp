#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memhub/embedding.hpp"
#include "memhub/error.hpp"
#include "memhub/memory.hpp"
#include "memhub/orchestrator.hpp"
#include "memhub/sandbox.hpp"
#include "memhub/types.hpp"

namespace memhub {

inline constexpr int kStoreFormatVersion = 1;

struct StoreManifest {
  int format_version = kStoreFormatVersion;
  std::string embedder_name;
  std::size_t dense_dim = 0;
  std::size_t record_count = 0;
  AgentKind owner = AgentKind::planner();
  MemoryKind kind = MemoryKind::kSemantic;

  friend bool operator==(const StoreManifest&, const StoreManifest&) = default;
};

struct StoreContents {
  StoreManifest manifest;
  std::vector<MemoryRecord> records;
};

// Raised when a store file ends early or holds an unreadable line. Carries
// every record before the damage.
class CorruptStore : public Error {
 public:
  CorruptStore(const std::string& message, StoreContents recovered)
      : Error(ErrorCode::kCorruptStore, message), recovered_(std::move(recovered)) {}

  const StoreContents& recovered() const noexcept { return recovered_; }
  // Index of the last intact record, or nullopt when none survived.
  std::optional<std::size_t> last_good_index() const {
    if (recovered_.records.empty()) return std::nullopt;
    return recovered_.records.size() - 1;
  }

 private:
  StoreContents recovered_;
};

std::string encode_manifest(const StoreManifest& m);
std::string encode_record(const MemoryRecord& r);
MemoryRecord decode_record(const std::string& line);

// Line 1 is the manifest, then one record per line. Written to a sibling
// temporary file and renamed into place.
void save_store(const MemoryRepository& repo, const std::filesystem::path& path,
                const std::string& embedder_name);

// Throws Error(kIncompatibleStore) on a format, embedder or dimension
// mismatch and CorruptStore on damage.
StoreContents load_store(const std::filesystem::path& path, const std::string& embedder_name,
                         std::size_t dense_dim);

// Loads a store file into an empty repository with matching owner and kind.
void load_into(MemoryRepository& repo, const std::filesystem::path& path,
               const std::string& embedder_name);

// Tool episodes, one JSON object per line in registration order.
std::string encode_tool(const ToolEpisode& ep);
ToolEpisode decode_tool(const std::string& line);
void save_tools(const ToolRepository& repo, const std::filesystem::path& path);
void load_tools(ToolRepository& repo, const std::filesystem::path& path);

// Every repository of a hub under one directory: planner-semantic.jsonl,
// planner-episodic.jsonl, developer-semantic.jsonl, developer-episodic.jsonl
// and tools.jsonl. Loading a directory without files leaves the hub empty.
void save_hub(const MemoryHub& hub, const std::filesystem::path& dir, const std::string& embedder_name);
void load_hub(MemoryHub& hub, const std::filesystem::path& dir, const std::string& embedder_name);

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

// One JSON object per line with task_id, question, level and optional
// file_name and final_answer. Levels must lie in 1..human_levels. Blank lines
// are skipped. Throws IngestError with the 1-based line number.
std::vector<TaskSpec> ingest_tasks(const std::filesystem::path& path, int human_levels = 3);
std::vector<TaskSpec> parse_tasks(const std::string& text, int human_levels = 3);

struct SemanticDemo {
  std::string title;
  std::string description;
  std::string code;
  std::vector<std::string> tags;
  AgentKind target = AgentKind::planner();
};

// Title line, blank line, description, blank line, fenced code.
std::string render_demo(const SemanticDemo& demo);

std::vector<SemanticDemo> parse_demos(const std::string& text);

// Renders, embeds and stores each demo in its target agent's semantic
// repository as "sem-{agent}-{NNNN}", numbered from the repository's size.
// Returns the number of records stored.
std::size_t ingest_demos(const std::filesystem::path& path, MemoryHub& hub, Embedder& embedder,
                         const SparseEncoder& sparse);
std::size_t store_demos(const std::vector<SemanticDemo>& demos, MemoryHub& hub, Embedder& embedder,
                        const SparseEncoder& sparse);

std::string read_file(const std::filesystem::path& path);
// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace memhub
