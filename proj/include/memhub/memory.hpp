#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memhub/embedding.hpp"
#include "memhub/types.hpp"

namespace memhub {

enum class MemoryKind { kSemantic, kEpisodic };

std::string_view to_string(MemoryKind kind);
MemoryKind parse_memory_kind(std::string_view text);

// One retrievable unit of semantic or episodic memory.
struct MemoryRecord {
  std::string id;
  AgentKind owner = AgentKind::planner();
  MemoryKind kind = MemoryKind::kSemantic;
  std::optional<std::string> source_task_id;
  std::string chunk_text;
  std::string summary;
  DenseVector dense_vec;
  SparseVector sparse_vec;

  friend bool operator==(const MemoryRecord&, const MemoryRecord&) = default;
};

inline constexpr double kUnitNormTolerance = 1e-6;

// Throws Error(kInvalidRecord) unless dense_vec has unit norm, sparse weights
// are nonnegative, the id is non-empty and semantic records carry no source.
void validate(const MemoryRecord& rec);

// Append-only store of records owned by one agent. Concurrent readers are
// allowed; writers are serialized and never tear a reader's snapshot.
class MemoryRepository {
 public:
  using RecordPtr = std::shared_ptr<const MemoryRecord>;

  MemoryRepository(AgentKind owner, MemoryKind kind, std::size_t dense_dim);

  MemoryRepository(const MemoryRepository&) = delete;
  MemoryRepository& operator=(const MemoryRepository&) = delete;

  const AgentKind& owner() const noexcept { return owner_; }
  MemoryKind kind() const noexcept { return kind_; }
  std::size_t dense_dim() const noexcept { return dense_dim_; }

  std::size_t size() const;
  std::vector<RecordPtr> snapshot() const;
  RecordPtr find(const std::string& id) const;

  // Errors: WrongRepository (owner or kind), DuplicateId, DimensionMismatch,
  // InvalidRecord.
  std::string store(MemoryRecord rec);

 private:
  AgentKind owner_;
  MemoryKind kind_;
  std::size_t dense_dim_;

  mutable std::shared_mutex mu_;
  std::vector<RecordPtr> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::string store(MemoryRepository& repo, MemoryRecord rec) {
  return repo.store(std::move(rec));
}

// ---------------------------------------------------------------------------
// Trajectory rendering and segmentation
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultMaxChunkChars = 4000;

// Renders every (state, action) pair as
//   ## step {index} [{kind}]
//   {state summary}
//   {action body}
// with sections joined by a single newline.
std::string render_step(const AgentState& state, const Action& action);
std::string render_trajectory(const std::vector<Step>& trajectory);

struct Chunk {
  std::string text;
  // Byte offset in the source document of the first byte not copied from a
  // section header.
  std::size_t offset = 0;
  // Leading bytes of `text` that repeat the section header (plus its newline)
  // on continuation pieces of an oversized section; 0 otherwise.
  std::size_t repeated_prefix = 0;
  // True when the previous piece was cut mid-line, so no newline separates
  // the two in the source.
  bool glued = false;

  bool continuation() const noexcept { return repeated_prefix > 0 || glued; }
  std::string_view content() const { return std::string_view(text).substr(repeated_prefix); }

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

// Splits on level-2 headers ("## " at line start). Sections longer than
// max_chunk_chars are split at the last line break that keeps the piece within
// the limit; continuation pieces repeat the section header. Throws
// Error(kEmptyDocument) for empty input.
std::vector<Chunk> segment_trajectory(std::string_view rendered,
                                      std::size_t max_chunk_chars = kDefaultMaxChunkChars);

// Inverse of segment_trajectory: drops repeated headers and joins with '\n'.
std::string reassemble(const std::vector<Chunk>& chunks);

// ---------------------------------------------------------------------------
// Abstraction
// ---------------------------------------------------------------------------

struct AbstractionOptions {
  std::string id_prefix;
  std::size_t max_chunk_chars = kDefaultMaxChunkChars;
};

inline constexpr std::string_view kAugmentationSeparator = "\n\n---\ntask: ";

// Turns one successful experience into retrievable records, one per chunk of
// its rendered trajectory. Developer chunks route their code through the
// summarizer; planner chunks are augmented with the task description.
// Record ids are "{id_prefix}:{chunk index}". Throws AbstractionFailed.
std::vector<MemoryRecord> abstract_experience(const EpisodicExperience& exp,
                                              Summarizer& summarizer, Embedder& embedder,
                                              const SparseEncoder& sparse,
                                              const AbstractionOptions& options);

}  // namespace memhub
