#include "memhub/persistence.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace memhub {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json feedback_json(const Feedback& fb) {
  ordered_json o;
  if (fb.is_success()) {
    o["success"] = true;
    o["stdout"] = fb.stdout_text();
  } else {
    o["success"] = false;
    o["kind"] = std::string(to_string(fb.kind()));
    o["message"] = fb.message();
    o["traceback"] = fb.traceback();
  }
  return o;
}

Feedback feedback_from(const ordered_json& o) {
  if (o.at("success").get<bool>()) return Feedback::success(o.at("stdout").get<std::string>());
  const auto kind = parse_error_kind(o.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::kInvalidArgument, "unknown error kind");
  return Feedback::error(*kind, o.at("message").get<std::string>(), o.at("traceback").get<std::string>());
}

std::vector<std::string> lines_of(const std::string& text, bool* torn_tail) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      if (torn_tail) *torn_tail = true;
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string store_file_name(const AgentKind& agent, MemoryKind kind) {
  return agent.to_string() + "-" + std::string(to_string(kind)) + ".jsonl";
}

std::string require_text(const ordered_json& o, const char* key, std::size_t line, bool non_empty) {
  if (!o.contains(key) || !o[key].is_string()) {
    throw IngestError(line, std::string("missing or non-string field \"") + key + "\"");
  }
  auto s = o[key].get<std::string>();
  if (non_empty && s.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw IngestError(line, std::string("field \"") + key + "\" is empty");
  }
  return s;
}

template <typename Fn>
void for_each_json_line(const std::string& text, Fn&& fn) {
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json o;
    try {
      o = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!o.is_object()) throw IngestError(line_no, "expected a JSON object");
    fn(o, line_no);
  }
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kInvalidArgument, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Store files
// ---------------------------------------------------------------------------

std::string encode_manifest(const StoreManifest& m) {
  ordered_json o;
  o["format_version"] = m.format_version;
  o["embedder_name"] = m.embedder_name;
  o["dense_dim"] = m.dense_dim;
  o["record_count"] = m.record_count;
  o["owner"] = m.owner.to_string();
  o["kind"] = std::string(to_string(m.kind));
  return o.dump();
}

std::string encode_record(const MemoryRecord& r) {
  ordered_json o;
  o["id"] = r.id;
  o["owner"] = r.owner.to_string();
  o["kind"] = std::string(to_string(r.kind));
  o["source_task_id"] = r.source_task_id ? ordered_json(*r.source_task_id) : ordered_json(nullptr);
  o["chunk_text"] = r.chunk_text;
  o["summary"] = r.summary;
  o["dense"] = r.dense_vec;
  ordered_json sparse = ordered_json::object();
  for (const auto& [term, w] : r.sparse_vec) sparse[term] = w;
  o["sparse"] = std::move(sparse);
  return o.dump();
}

MemoryRecord decode_record(const std::string& line) {
  const auto o = ordered_json::parse(line);
  MemoryRecord r;
  r.id = o.at("id").get<std::string>();
  r.owner = AgentKind::parse(o.at("owner").get<std::string>());
  r.kind = parse_memory_kind(o.at("kind").get<std::string>());
  if (!o.at("source_task_id").is_null()) r.source_task_id = o["source_task_id"].get<std::string>();
  r.chunk_text = o.at("chunk_text").get<std::string>();
  r.summary = o.at("summary").get<std::string>();
  r.dense_vec = o.at("dense").get<DenseVector>();
  for (const auto& [term, w] : o.at("sparse").items()) r.sparse_vec[term] = w.get<double>();
  return r;
}

void save_store(const MemoryRepository& repo, const std::filesystem::path& path,
                const std::string& embedder_name) {
  const auto records = repo.snapshot();
  StoreManifest m{kStoreFormatVersion, embedder_name, repo.dense_dim(), records.size(), repo.owner(),
                  repo.kind()};
  std::string out = encode_manifest(m) + "\n";
  for (const auto& r : records) out += encode_record(*r) + "\n";
  write_file_atomic(path, out);
}

StoreContents load_store(const std::filesystem::path& path, const std::string& embedder_name,
                         std::size_t dense_dim) {
  bool torn = false;
  const auto lines = lines_of(read_file(path), &torn);
  if (lines.empty() || (torn && lines.size() == 1)) {
    throw CorruptStore(path.string() + ": missing manifest", {});
  }

  StoreContents out;
  try {
    const auto o = ordered_json::parse(lines[0]);
    out.manifest.format_version = o.at("format_version").get<int>();
    out.manifest.embedder_name = o.at("embedder_name").get<std::string>();
    out.manifest.dense_dim = o.at("dense_dim").get<std::size_t>();
    out.manifest.record_count = o.at("record_count").get<std::size_t>();
    out.manifest.owner = AgentKind::parse(o.at("owner").get<std::string>());
    out.manifest.kind = parse_memory_kind(o.at("kind").get<std::string>());
  } catch (const std::exception& e) {
    throw CorruptStore(path.string() + ": unreadable manifest: " + e.what(), {});
  }
  if (out.manifest.format_version != kStoreFormatVersion) {
    throw Error(ErrorCode::kIncompatibleStore,
                path.string() + ": format version " + std::to_string(out.manifest.format_version));
  }
  if (out.manifest.embedder_name != embedder_name || out.manifest.dense_dim != dense_dim) {
    throw Error(ErrorCode::kIncompatibleStore,
                path.string() + ": built with " + out.manifest.embedder_name + " (dim " +
                    std::to_string(out.manifest.dense_dim) + "), active " + embedder_name + " (dim " +
                    std::to_string(dense_dim) + ")");
  }

  for (std::size_t i = 1; i < lines.size(); ++i) {
    try {
      auto r = decode_record(lines[i]);
      validate(r);
      if (r.dense_vec.size() != dense_dim) throw Error(ErrorCode::kDimensionMismatch, "record dimension");
      out.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw CorruptStore(path.string() + ": line " + std::to_string(i + 1) + ": " + e.what(),
                         std::move(out));
    }
  }
  if (out.records.size() != out.manifest.record_count) {
    const auto have = out.records.size();
    throw CorruptStore(path.string() + ": manifest lists " + std::to_string(out.manifest.record_count) +
                           " records, file holds " + std::to_string(have),
                       std::move(out));
  }
  return out;
}

void load_into(MemoryRepository& repo, const std::filesystem::path& path,
               const std::string& embedder_name) {
  auto contents = load_store(path, embedder_name, repo.dense_dim());
  if (!(contents.manifest.owner == repo.owner()) || contents.manifest.kind != repo.kind()) {
    throw Error(ErrorCode::kIncompatibleStore, path.string() + " belongs to " +
                                                   contents.manifest.owner.to_string() + " " +
                                                   std::string(to_string(contents.manifest.kind)));
  }
  for (auto& r : contents.records) repo.store(std::move(r));
}

std::string encode_tool(const ToolEpisode& ep) {
  ordered_json o;
  o["tool_id"] = ep.tool_id;
  o["task_id"] = ep.task_id;
  o["title"] = ep.title;
  o["description"] = ep.description;
  o["final_code"] = ep.final_code;
  ordered_json steps = ordered_json::array();
  for (const auto& s : ep.trajectory) {
    ordered_json st;
    st["code"] = s.code;
    st["env"] = s.env_snapshot_ref;
    st["feedback"] = feedback_json(s.feedback);
    steps.push_back(std::move(st));
  }
  o["trajectory"] = std::move(steps);
  return o.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

ToolEpisode decode_tool(const std::string& line) {
  const auto o = ordered_json::parse(line);
  ToolEpisode ep;
  ep.tool_id = o.at("tool_id").get<std::string>();
  ep.task_id = o.at("task_id").get<std::string>();
  ep.title = o.at("title").get<std::string>();
  ep.description = o.at("description").get<std::string>();
  ep.final_code = o.at("final_code").get<std::string>();
  for (const auto& st : o.at("trajectory")) {
    ep.trajectory.push_back({st.at("code").get<std::string>(), st.at("env").get<std::string>(),
                             feedback_from(st.at("feedback"))});
  }
  return ep;
}

void save_tools(const ToolRepository& repo, const std::filesystem::path& path) {
  std::string out;
  for (const auto& ep : repo.episodes()) out += encode_tool(ep) + "\n";
  write_file_atomic(path, out);
}

void load_tools(ToolRepository& repo, const std::filesystem::path& path) {
  bool torn = false;
  const auto lines = lines_of(read_file(path), &torn);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      if (torn && i + 1 == lines.size()) throw Error(ErrorCode::kCorruptStore, "torn final line");
      repo.add(decode_tool(lines[i]));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDuplicateId || e.code() == ErrorCode::kRejectedEpisode) throw;
      throw CorruptStore(path.string() + ": line " + std::to_string(i + 1) + ": " + e.what(), {});
    } catch (const std::exception& e) {
      throw CorruptStore(path.string() + ": line " + std::to_string(i + 1) + ": " + e.what(), {});
    }
  }
}

void save_hub(const MemoryHub& hub, const std::filesystem::path& dir, const std::string& embedder_name) {
  std::filesystem::create_directories(dir);
  for (const auto& agent : {AgentKind::planner(), AgentKind::developer()}) {
    save_store(hub.semantic(agent), dir / store_file_name(agent, MemoryKind::kSemantic), embedder_name);
    save_store(hub.episodic(agent), dir / store_file_name(agent, MemoryKind::kEpisodic), embedder_name);
  }
  save_tools(hub.tools(), dir / "tools.jsonl");
}

void load_hub(MemoryHub& hub, const std::filesystem::path& dir, const std::string& embedder_name) {
  for (const auto& agent : {AgentKind::planner(), AgentKind::developer()}) {
    for (const auto kind : {MemoryKind::kSemantic, MemoryKind::kEpisodic}) {
      const auto p = dir / store_file_name(agent, kind);
      if (!std::filesystem::exists(p)) continue;
      load_into(kind == MemoryKind::kSemantic ? hub.semantic(agent) : hub.episodic(agent), p,
                embedder_name);
    }
  }
  if (std::filesystem::exists(dir / "tools.jsonl")) load_tools(hub.tools(), dir / "tools.jsonl");
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

std::vector<TaskSpec> parse_tasks(const std::string& text, int human_levels) {
  std::vector<TaskSpec> out;
  std::set<std::string> ids;
  for_each_json_line(text, [&](const ordered_json& o, std::size_t line) {
    TaskSpec t;
    t.id = require_text(o, "task_id", line, true);
    t.description = require_text(o, "question", line, true);
    if (!o.contains("level")) throw IngestError(line, "missing field \"level\"");
    const auto& lv = o["level"];
    if (lv.is_number_integer()) {
      t.human_difficulty = lv.get<int>();
    } else if (lv.is_string()) {
      try {
        std::size_t used = 0;
        t.human_difficulty = std::stoi(lv.get<std::string>(), &used);
        if (used != lv.get<std::string>().size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw IngestError(line, "level is not an integer");
      }
    } else {
      throw IngestError(line, "level is not an integer");
    }
    if (t.human_difficulty < 1 || t.human_difficulty > human_levels) {
      throw IngestError(line, "level " + std::to_string(t.human_difficulty) + " outside 1.." +
                                  std::to_string(human_levels));
    }
    if (o.contains("file_name") && !o["file_name"].is_null()) {
      const auto f = require_text(o, "file_name", line, false);
      if (!f.empty()) t.attachments.push_back(f);
    }
    if (o.contains("final_answer") && !o["final_answer"].is_null()) {
      t.ground_truth = require_text(o, "final_answer", line, false);
    }
    if (!ids.insert(t.id).second) throw IngestError(line, "duplicate task_id \"" + t.id + "\"");
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<TaskSpec> ingest_tasks(const std::filesystem::path& path, int human_levels) {
  return parse_tasks(read_file(path), human_levels);
}

std::string render_demo(const SemanticDemo& demo) {
  return demo.title + "\n\n" + demo.description + "\n\n```python\n" + demo.code + "\n```";
}

std::vector<SemanticDemo> parse_demos(const std::string& text) {
  std::vector<SemanticDemo> out;
  for_each_json_line(text, [&](const ordered_json& o, std::size_t line) {
    SemanticDemo d;
    d.title = require_text(o, "title", line, true);
    if (d.title.find('\n') != std::string::npos) throw IngestError(line, "title spans several lines");
    d.description = require_text(o, "description", line, true);
    d.code = require_text(o, "code", line, false);
    if (o.contains("tags")) {
      if (!o["tags"].is_array()) throw IngestError(line, "tags must be an array of strings");
      for (const auto& t : o["tags"]) {
        if (!t.is_string()) throw IngestError(line, "tags must be an array of strings");
        d.tags.push_back(t.get<std::string>());
      }
    }
    const auto target = require_text(o, "target_agent", line, true);
    if (target == "planner") d.target = AgentKind::planner();
    else if (target == "developer") d.target = AgentKind::developer();
    else throw IngestError(line, "target_agent must be planner or developer");
    out.push_back(std::move(d));
  });
  return out;
}

std::size_t store_demos(const std::vector<SemanticDemo>& demos, MemoryHub& hub, Embedder& embedder,
                        const SparseEncoder& sparse) {
  for (const auto& d : demos) {
    auto& repo = hub.semantic(d.target);
    char num[16];
    std::snprintf(num, sizeof num, "%04zu", repo.size());
    MemoryRecord r;
    r.id = "sem-" + d.target.to_string() + "-" + num;
    r.owner = d.target;
    r.kind = MemoryKind::kSemantic;
    r.chunk_text = render_demo(d);
    r.summary = d.title;
    r.dense_vec = embedder.embed_one(r.chunk_text);
    r.sparse_vec = sparse.encode(r.chunk_text);
    repo.store(std::move(r));
  }
  return demos.size();
}

std::size_t ingest_demos(const std::filesystem::path& path, MemoryHub& hub, Embedder& embedder,
                         const SparseEncoder& sparse) {
  return store_demos(parse_demos(read_file(path)), hub, embedder, sparse);
}

}  // namespace memhub
