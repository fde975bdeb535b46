#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "memhub/embedding.hpp"
#include "memhub/memory.hpp"
#include "memhub/types.hpp"

namespace memhub {

inline constexpr int kDefaultRrfConstant = 60;

struct Query {
  AgentKind owner = AgentKind::planner();
  std::string task_description;
  std::string state_summary;
  DenseVector dense_vec;
  SparseVector sparse_vec;
};

// Embeds task_description + "\n" + state_summary on both channels.
Query make_query(AgentKind owner, std::string task_description, std::string state_summary,
                 Embedder& embedder, const SparseEncoder& sparse);

struct RetrievalLimits {
  std::size_t semantic_k = 3;
  std::size_t episodic_k = 4;

  static RetrievalLimits planner_defaults() { return {3, 4}; }
  static RetrievalLimits developer_defaults() { return {3, 6}; }
};

struct FusedResult {
  std::string id;
  // 1-based rank in each input ranking, in input order; nullopt if absent.
  std::vector<std::optional<std::size_t>> ranks;
  double fused_score = 0.0;
};

struct RankedResult {
  std::string record_id;
  std::optional<std::size_t> dense_rank;
  std::optional<std::size_t> sparse_rank;
  double fused_score = 0.0;
  MemoryRepository::RecordPtr record;
};

struct RetrievalResult {
  std::vector<RankedResult> semantic;
  std::vector<RankedResult> episodic;
};

// Inner product of two unit vectors. Throws Error(kDimensionMismatch).
double dense_score(const DenseVector& query, const DenseVector& record);
double dense_score(const Query& q, const MemoryRecord& m);

// Sum over shared terms of the product of weights.
double sparse_score(const SparseVector& query, const SparseVector& record);
double sparse_score(const Query& q, const MemoryRecord& m);

// Reciprocal Rank Fusion: score(d) = sum over rankings containing d of
// 1 / (k_const + rank(d)). Sorted by score descending, ties by id ascending.
// Per-item contributions are summed smallest-rank first so the result does
// not depend on the order of `rankings`. Throws Error(kMalformedRanking).
std::vector<FusedResult> rrf_fuse(const std::vector<std::vector<std::string>>& rankings,
                                  int k_const = kDefaultRrfConstant);

// Ranks every record of one repository by dense and by sparse score and fuses
// the two rankings. Records with zero sparse overlap are absent from the
// sparse ranking. Returns at most k results.
std::vector<RankedResult> rank_repository(const Query& q, const MemoryRepository& repo,
                                          std::size_t k, int k_const = kDefaultRrfConstant);

// Per-repository hybrid retrieval. Throws Error(kWrongRepository) when the
// query owner does not own either repository.
RetrievalResult retrieve(const Query& q, const MemoryRepository& semantic_repo,
                         const MemoryRepository& episodic_repo, const RetrievalLimits& limits,
                         int k_const = kDefaultRrfConstant);

}  // namespace memhub
