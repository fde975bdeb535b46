#include "memhub/retrieval.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "memhub/error.hpp"

namespace memhub {

Query make_query(AgentKind owner, std::string task_description, std::string state_summary,
                 Embedder& embedder, const SparseEncoder& sparse) {
  Query q;
  q.owner = std::move(owner);
  const std::string text = task_description + "\n" + state_summary;
  q.task_description = std::move(task_description);
  q.state_summary = std::move(state_summary);
  q.dense_vec = embedder.embed_one(text);
  q.sparse_vec = sparse.encode(text);
  return q;
}

double dense_score(const DenseVector& query, const DenseVector& record) {
  if (query.size() != record.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "query has dimension " +
                                                   std::to_string(query.size()) + ", record " +
                                                   std::to_string(record.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < query.size(); ++i) s += query[i] * record[i];
  return s;
}

double dense_score(const Query& q, const MemoryRecord& m) { return dense_score(q.dense_vec, m.dense_vec); }

double sparse_score(const SparseVector& query, const SparseVector& record) {
  // Both maps are ordered: merge-walk the shared keys.
  double s = 0.0;
  auto a = query.begin();
  auto b = record.begin();
  while (a != query.end() && b != record.end()) {
    if (a->first < b->first) {
      ++a;
    } else if (b->first < a->first) {
      ++b;
    } else {
      s += a->second * b->second;
      ++a;
      ++b;
    }
  }
  return s;
}

double sparse_score(const Query& q, const MemoryRecord& m) { return sparse_score(q.sparse_vec, m.sparse_vec); }

std::vector<FusedResult> rrf_fuse(const std::vector<std::vector<std::string>>& rankings,
                                  int k_const) {
  if (k_const < 1) {
    throw Error(ErrorCode::kInvalidArgument, "k_const must be >= 1");
  }
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<FusedResult> out;
  for (std::size_t li = 0; li < rankings.size(); ++li) {
    std::unordered_set<std::string_view> seen;
    for (std::size_t pos = 0; pos < rankings[li].size(); ++pos) {
      const std::string& id = rankings[li][pos];
      if (!seen.insert(id).second) {
        throw Error(ErrorCode::kMalformedRanking,
                    "id '" + id + "' appears twice in ranking " + std::to_string(li));
      }
      auto [it, inserted] = slot.emplace(id, out.size());
      if (inserted) {
        out.push_back(FusedResult{id, std::vector<std::optional<std::size_t>>(rankings.size()), 0.0});
      }
      out[it->second].ranks[li] = pos + 1;
    }
  }

  const double k = static_cast<double>(k_const);
  std::vector<std::size_t> present;
  for (auto& r : out) {
    present.clear();
    for (const auto& rank : r.ranks) {
      if (rank) present.push_back(*rank);
    }
    std::sort(present.begin(), present.end());
    double s = 0.0;
    for (std::size_t rank : present) s += 1.0 / (k + static_cast<double>(rank));
    r.fused_score = s;
  }
  std::sort(out.begin(), out.end(), [](const FusedResult& a, const FusedResult& b) {
    if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
    return a.id < b.id;
  });
  return out;
}

namespace {

struct Scored {
  double score;
  const MemoryRecord* rec;
};

std::vector<std::string> order_ids(std::vector<Scored>& scored) {
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.rec->id < b.rec->id;
  });
  std::vector<std::string> ids;
  ids.reserve(scored.size());
  for (const auto& s : scored) ids.push_back(s.rec->id);
  return ids;
}

}  // namespace

std::vector<RankedResult> rank_repository(const Query& q, const MemoryRepository& repo,
                                          std::size_t k, int k_const) {
  if (k == 0) return {};
  const auto records = repo.snapshot();
  if (records.empty()) return {};
  if (q.dense_vec.size() != repo.dense_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "query has dimension " + std::to_string(q.dense_vec.size()) + ", repository " +
                    std::to_string(repo.dense_dim()));
  }

  std::vector<Scored> dense;
  std::vector<Scored> sparse;
  dense.reserve(records.size());
  std::unordered_map<std::string_view, const MemoryRepository::RecordPtr*> by_id;
  for (const auto& rec : records) {
    by_id.emplace(rec->id, &rec);
    dense.push_back({dense_score(q, *rec), rec.get()});
    const double s = sparse_score(q, *rec);
    if (s > 0.0) sparse.push_back({s, rec.get()});
  }

  const auto fused = rrf_fuse({order_ids(dense), order_ids(sparse)}, k_const);
  std::vector<RankedResult> out;
  const std::size_t n = std::min(k, fused.size());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = fused[i];
    out.push_back(RankedResult{f.id, f.ranks[0], f.ranks[1], f.fused_score, *by_id.at(f.id)});
  }
  return out;
}

RetrievalResult retrieve(const Query& q, const MemoryRepository& semantic_repo,
                         const MemoryRepository& episodic_repo, const RetrievalLimits& limits,
                         int k_const) {
  if (!(semantic_repo.owner() == q.owner) || !(episodic_repo.owner() == q.owner)) {
    throw Error(ErrorCode::kWrongRepository,
                "query owner " + q.owner.to_string() + " does not own the given repositories");
  }
  RetrievalResult out;
  out.semantic = rank_repository(q, semantic_repo, limits.semantic_k, k_const);
  out.episodic = rank_repository(q, episodic_repo, limits.episodic_k, k_const);
  return out;
}

}  // namespace memhub
