#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memhub {

using DenseVector = std::vector<double>;
using SparseVector = std::map<std::string, double>;

// Lowercased maximal runs of ASCII letters and digits. Underscores and all
// other bytes separate tokens.
std::vector<std::string> tokenize(std::string_view text);

double l2_norm(std::span<const double> v);

// Scales v to unit length. A zero vector becomes the first basis vector so the
// unit-norm invariant always holds.
void normalize_in_place(DenseVector& v);

// ---------------------------------------------------------------------------
// Contracts
// ---------------------------------------------------------------------------

// Dense embedding backend. Implementations must return unit-norm vectors of
// dimension() entries and be safe to call from concurrent paths.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<DenseVector> embed(std::span<const std::string> texts) = 0;

  DenseVector embed_one(const std::string& text);
};

class SparseEncoder {
 public:
  virtual ~SparseEncoder() = default;
  virtual SparseVector encode(std::string_view text) const = 0;
};

// Condenses a code block before it is embedded.
class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string summarize(const std::string& code) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic implementations
// ---------------------------------------------------------------------------

// Feature-hashing embedder: each token lands in one signed bucket with weight
// 1 + ln(tf), then the vector is normalized.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension, std::uint64_t seed = 0);

  std::string name() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<DenseVector> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// weight(term) = 1 + ln(term frequency).
class LexicalSparseEncoder final : public SparseEncoder {
 public:
  SparseVector encode(std::string_view text) const override;
};

class IdentitySummarizer final : public Summarizer {
 public:
  std::string summarize(const std::string& code) override { return code; }
};

// Keeps the first `limit` bytes, backing off to a UTF-8 boundary.
class TruncatingSummarizer final : public Summarizer {
 public:
  explicit TruncatingSummarizer(std::size_t limit) : limit_(limit) {}
  std::string summarize(const std::string& code) override;

 private:
  std::size_t limit_;
};

// Keeps signatures, comments, docstring-like lines and imports; drops bodies.
class OutlineSummarizer final : public Summarizer {
 public:
  std::string summarize(const std::string& code) override;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);
std::string hex64(std::uint64_t value);

}  // namespace memhub
