#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "memhub/memory.hpp"

namespace memhub::testing {

inline DenseVector random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  DenseVector v(dim);
  for (auto& x : v) x = n(rng);
  normalize_in_place(v);
  return v;
}

inline MemoryRecord make_record(std::string id, AgentKind owner, MemoryKind kind, DenseVector dense,
                                SparseVector sparse = {}) {
  MemoryRecord r;
  r.id = std::move(id);
  r.owner = std::move(owner);
  r.kind = kind;
  if (kind == MemoryKind::kEpisodic) r.source_task_id = "task-" + r.id;
  r.chunk_text = "chunk " + r.id;
  r.summary = "summary " + r.id;
  r.dense_vec = std::move(dense);
  r.sparse_vec = std::move(sparse);
  return r;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("memhub-test-" + name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace memhub::testing
