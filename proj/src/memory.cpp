#include "memhub/memory.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "memhub/error.hpp"

namespace memhub {

std::string_view to_string(MemoryKind kind) {
  return kind == MemoryKind::kSemantic ? "semantic" : "episodic";
}

MemoryKind parse_memory_kind(std::string_view text) {
  if (text == "semantic") return MemoryKind::kSemantic;
  if (text == "episodic") return MemoryKind::kEpisodic;
  throw Error(ErrorCode::kInvalidArgument, "unknown memory kind '" + std::string(text) + "'");
}

void validate(const MemoryRecord& rec) {
  if (rec.id.empty()) {
    throw Error(ErrorCode::kInvalidRecord, "record id is empty");
  }
  if (rec.dense_vec.empty() || std::abs(l2_norm(rec.dense_vec) - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::kInvalidRecord, "record '" + rec.id + "' dense_vec is not unit norm");
  }
  for (const auto& [term, w] : rec.sparse_vec) {
    if (!(w >= 0.0)) {
      throw Error(ErrorCode::kInvalidRecord,
                  "record '" + rec.id + "' has negative sparse weight for '" + term + "'");
    }
  }
  if (rec.kind == MemoryKind::kSemantic && rec.source_task_id.has_value()) {
    throw Error(ErrorCode::kInvalidRecord, "semantic record '" + rec.id + "' has a source task");
  }
}

// ---------------------------------------------------------------------------
// MemoryRepository
// ---------------------------------------------------------------------------

MemoryRepository::MemoryRepository(AgentKind owner, MemoryKind kind, std::size_t dense_dim)
    : owner_(std::move(owner)), kind_(kind), dense_dim_(dense_dim) {
  if (dense_dim_ == 0) {
    throw Error(ErrorCode::kInvalidArgument, "repository dense_dim must be positive");
  }
  if (kind_ == MemoryKind::kEpisodic && !owner_.owns_episodic_repository()) {
    throw Error(ErrorCode::kWrongRepository,
                owner_.to_string() + " cannot own an episodic repository");
  }
}

std::size_t MemoryRepository::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::vector<MemoryRepository::RecordPtr> MemoryRepository::snapshot() const {
  std::shared_lock lock(mu_);
  return records_;
}

MemoryRepository::RecordPtr MemoryRepository::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : records_[it->second];
}

std::string MemoryRepository::store(MemoryRecord rec) {
  if (!(rec.owner == owner_)) {
    throw Error(ErrorCode::kWrongRepository, "record '" + rec.id + "' is owned by " +
                                                 rec.owner.to_string() + ", repository by " +
                                                 owner_.to_string());
  }
  if (rec.kind != kind_) {
    throw Error(ErrorCode::kWrongRepository, "record '" + rec.id + "' is " +
                                                 std::string(to_string(rec.kind)) +
                                                 ", repository is " +
                                                 std::string(to_string(kind_)));
  }
  if (rec.dense_vec.size() != dense_dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "record '" + rec.id + "' has dimension " + std::to_string(rec.dense_vec.size()) +
                    ", repository expects " + std::to_string(dense_dim_));
  }
  validate(rec);

  auto ptr = std::make_shared<const MemoryRecord>(std::move(rec));
  std::unique_lock lock(mu_);
  if (index_.contains(ptr->id)) {
    throw Error(ErrorCode::kDuplicateId, "record id '" + ptr->id + "' already stored");
  }
  index_.emplace(ptr->id, records_.size());
  records_.push_back(ptr);
  return ptr->id;
}

// ---------------------------------------------------------------------------
// Rendering and segmentation
// ---------------------------------------------------------------------------

std::string render_step(const AgentState& state, const Action& action) {
  std::string out = "## step " + std::to_string(state.step_index) + " [" +
                    std::string(action_kind(action)) + "]\n";
  if (!state.context_summary.empty()) {
    out += state.context_summary;
    out += '\n';
  }
  out += action_body(action);
  return out;
}

std::string render_trajectory(const std::vector<Step>& trajectory) {
  std::string out;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (i > 0) out += '\n';
    out += render_step(trajectory[i].first, trajectory[i].second);
  }
  return out;
}

namespace {

bool header_at(std::string_view doc, std::size_t pos) {
  return (pos == 0 || doc[pos - 1] == '\n') && doc.substr(pos, 3) == "## ";
}

std::size_t utf8_floor(std::string_view s, std::size_t pos) {
  while (pos > 0 && pos < s.size() && (static_cast<unsigned char>(s[pos]) & 0xC0) == 0x80) --pos;
  return pos;
}

// Splits one section [begin, end) of doc into pieces no longer than max_chars.
void split_section(std::string_view doc, std::size_t begin, std::size_t end, std::size_t max_chars,
                   bool is_header_section, std::vector<Chunk>& out) {
  const std::string_view section = doc.substr(begin, end - begin);
  if (section.size() <= max_chars) {
    out.push_back(Chunk{std::string(section), begin, 0, false});
    return;
  }

  std::string prefix;
  if (is_header_section) {
    const auto nl = section.find('\n');
    if (nl != std::string_view::npos && nl + 1 < max_chars) {
      prefix = std::string(section.substr(0, nl + 1));
    }
  }

  std::size_t pos = 0;  // relative to section
  bool first = true;
  bool glued = false;
  while (pos < section.size() || first) {
    const std::string_view rest = section.substr(pos);
    const std::string_view lead = first ? std::string_view{} : std::string_view(prefix);
    const std::size_t budget = max_chars - lead.size();

    if (rest.size() <= budget) {
      out.push_back(Chunk{std::string(lead) + std::string(rest), begin + pos, lead.size(), glued});
      break;
    }

    // Last line break at index b <= budget with a non-empty piece before it.
    std::size_t b = rest.rfind('\n', budget);
    if (b != std::string_view::npos && b > 0) {
      out.push_back(
          Chunk{std::string(lead) + std::string(rest.substr(0, b)), begin + pos, lead.size(), glued});
      pos += b + 1;
      glued = false;
    } else {
      std::size_t cut = utf8_floor(rest, budget);
      if (cut == 0) cut = std::max<std::size_t>(budget, 1);
      out.push_back(
          Chunk{std::string(lead) + std::string(rest.substr(0, cut)), begin + pos, lead.size(), glued});
      pos += cut;
      glued = true;
    }
    first = false;
    if (pos == section.size()) {
      // The cut consumed a trailing newline: an empty final line remains.
      if (!glued) {
        out.push_back(Chunk{std::string(prefix), begin + pos, prefix.size(), false});
      }
      break;
    }
  }
}

}  // namespace

std::vector<Chunk> segment_trajectory(std::string_view rendered, std::size_t max_chunk_chars) {
  if (rendered.empty()) {
    throw Error(ErrorCode::kEmptyDocument, "cannot segment an empty document");
  }
  if (max_chunk_chars == 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_chunk_chars must be positive");
  }

  std::vector<std::size_t> starts;
  for (std::size_t pos = 0; pos < rendered.size(); ++pos) {
    if (header_at(rendered, pos)) starts.push_back(pos);
  }

  std::vector<Chunk> out;
  const bool has_preamble = starts.empty() || starts.front() != 0;
  if (has_preamble) {
    const std::size_t end = starts.empty() ? rendered.size() : starts.front() - 1;
    split_section(rendered, 0, end, max_chunk_chars, false, out);
  }
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] - 1 : rendered.size();
    split_section(rendered, starts[i], end, max_chunk_chars, true, out);
  }
  return out;
}

std::string reassemble(const std::vector<Chunk>& chunks) {
  std::string out;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (i > 0 && !chunks[i].glued) out += '\n';
    out += chunks[i].content();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Abstraction
// ---------------------------------------------------------------------------

namespace {

std::string first_line(std::string_view s) {
  const auto nl = s.find('\n');
  return std::string(nl == std::string_view::npos ? s : s.substr(0, nl));
}

std::string strip_header_line(std::string_view s) {
  if (!s.starts_with("## ")) return std::string(s);
  const auto nl = s.find('\n');
  return nl == std::string_view::npos ? std::string() : std::string(s.substr(nl + 1));
}

}  // namespace

std::vector<MemoryRecord> abstract_experience(const EpisodicExperience& exp,
                                              Summarizer& summarizer, Embedder& embedder,
                                              const SparseEncoder& sparse,
                                              const AbstractionOptions& options) {
  validate(exp);
  const bool is_planner = exp.owner.role() == AgentRole::kPlanner;

  // Byte offset of every step within the rendering.
  std::vector<std::size_t> step_offsets;
  std::vector<std::string> step_texts;
  std::string rendered;
  for (std::size_t i = 0; i < exp.trajectory.size(); ++i) {
    if (i > 0) rendered += '\n';
    step_offsets.push_back(rendered.size());
    step_texts.push_back(render_step(exp.trajectory[i].first, exp.trajectory[i].second));
    rendered += step_texts.back();
  }

  const auto chunks = segment_trajectory(rendered, options.max_chunk_chars);
  std::vector<MemoryRecord> out;
  out.reserve(chunks.size());

  for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
    const Chunk& chunk = chunks[ci];
    std::size_t step = 0;
    while (step + 1 < step_offsets.size() && step_offsets[step + 1] <= chunk.offset) ++step;
    const auto& [state, action] = exp.trajectory[step];
    const bool whole_step = !chunk.continuation() && chunk.offset == step_offsets[step] &&
                            chunk.content() == step_texts[step];

    MemoryRecord rec;
    rec.id = options.id_prefix + ":" + std::to_string(ci);
    rec.owner = exp.owner;
    rec.kind = MemoryKind::kEpisodic;
    rec.source_task_id = exp.task_id;

    std::string embed_text;
    try {
      if (is_planner) {
        rec.summary = std::string(chunk.content());
        rec.chunk_text = chunk.text + std::string(kAugmentationSeparator) + exp.task_description;
        embed_text = rec.chunk_text;
      } else {
        rec.chunk_text = chunk.text;
        std::string code;
        if (whole_step) {
          if (const auto* c = std::get_if<CodeAction>(&action)) {
            code = c->source;
          } else {
            code = action_body(action);
          }
        } else {
          code = strip_header_line(chunk.text);
        }
        rec.summary = summarizer.summarize(code);
        embed_text = first_line(state.context_summary) + "\n" + rec.summary;
      }
      rec.dense_vec = embedder.embed_one(embed_text);
    } catch (const AbstractionFailed&) {
      throw;
    } catch (const std::exception& e) {
      throw AbstractionFailed(ci, e.what());
    }
    if (rec.dense_vec.size() != embedder.dimension() ||
        std::abs(l2_norm(rec.dense_vec) - 1.0) > kUnitNormTolerance) {
      throw AbstractionFailed(ci, "embedder returned a vector that is not unit norm of dimension " +
                                      std::to_string(embedder.dimension()));
    }
    rec.sparse_vec = sparse.encode(embed_text);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace memhub
