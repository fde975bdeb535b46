#include "memhub/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "memhub/error.hpp"

namespace memhub {

namespace {

bool is_token_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

std::map<std::string, int> term_counts(std::string_view text) {
  std::map<std::string, int> counts;
  for (auto& t : tokenize(text)) {
    ++counts[t];
  }
  return counts;
}

std::string_view trim_left(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_token_char(c)) {
      cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void normalize_in_place(DenseVector& v) {
  if (v.empty()) return;
  const double n = l2_norm(v);
  if (n == 0.0 || !std::isfinite(n)) {
    std::fill(v.begin(), v.end(), 0.0);
    v[0] = 1.0;
    return;
  }
  for (double& x : v) x /= n;
}

DenseVector Embedder::embed_one(const std::string& text) {
  auto out = embed(std::span<const std::string>(&text, 1));
  if (out.size() != 1) {
    throw Error(ErrorCode::kModelUnavailable, "embedder returned " + std::to_string(out.size()) +
                                                  " vectors for 1 text");
  }
  return std::move(out.front());
}

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
  }
}

std::string HashingEmbedder::name() const {
  return "hashing-" + std::to_string(dimension_) + (seed_ != 0 ? "-s" + std::to_string(seed_) : "");
}

std::vector<DenseVector> HashingEmbedder::embed(std::span<const std::string> texts) {
  std::vector<DenseVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    DenseVector v(dimension_, 0.0);
    for (const auto& [term, tf] : term_counts(text)) {
      const std::uint64_t h = fnv1a64(term, seed_);
      const std::size_t bucket = static_cast<std::size_t>(h % dimension_);
      const double sign = ((h >> 63) & 1U) != 0 ? -1.0 : 1.0;
      v[bucket] += sign * (1.0 + std::log(static_cast<double>(tf)));
    }
    normalize_in_place(v);
    out.push_back(std::move(v));
  }
  return out;
}

SparseVector LexicalSparseEncoder::encode(std::string_view text) const {
  SparseVector out;
  for (const auto& [term, tf] : term_counts(text)) {
    out.emplace(term, 1.0 + std::log(static_cast<double>(tf)));
  }
  return out;
}

std::string TruncatingSummarizer::summarize(const std::string& code) {
  if (code.size() <= limit_) return code;
  std::size_t cut = limit_;
  // Never split a multi-byte sequence.
  while (cut > 0 && (static_cast<unsigned char>(code[cut]) & 0xC0) == 0x80) --cut;
  return code.substr(0, cut);
}

std::string OutlineSummarizer::summarize(const std::string& code) {
  std::istringstream in(code);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    const auto t = trim_left(line);
    const bool keep = t.starts_with("def ") || t.starts_with("class ") || t.starts_with("#") ||
                      t.starts_with("import ") || t.starts_with("from ") ||
                      t.starts_with("\"\"\"") || t.starts_with("'''");
    if (keep) {
      if (!out.empty()) out.push_back('\n');
      out.append(line);
    }
  }
  return out.empty() ? code : out;
}

}  // namespace memhub
