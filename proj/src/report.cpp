#include "memhub/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "memhub/error.hpp"
#include "memhub/persistence.hpp"

namespace memhub {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ordered_json hits_json(const AgentHits& h) {
  return {{"retrievals", h.retrievals}, {"semantic_hits", h.semantic_hits}, {"episodic_hits", h.episodic_hits}};
}

ordered_json level_json(const std::map<int, LevelAccuracy>& m) {
  ordered_json o = ordered_json::object();
  for (const auto& [level, acc] : m) {
    o[std::to_string(level)] = {{"tasks", acc.tasks}, {"correct", acc.correct}, {"accuracy", acc.accuracy}};
  }
  return o;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

[[noreturn]] void report_error(const std::string& msg) { throw Error(ErrorCode::kReportError, msg); }

}  // namespace

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void tally_hits(const std::vector<RetrievalEvent>& events, TaskRow& row) {
  for (const auto& ev : events) {
    AgentHits* h = nullptr;
    if (ev.agent.role() == AgentRole::kPlanner) h = &row.planner;
    else if (ev.agent.role() == AgentRole::kDeveloper) h = &row.developer;
    if (h == nullptr) continue;
    ++h->retrievals;
    h->semantic_hits += ev.semantic_ids.size();
    h->episodic_hits += ev.episodic_ids.size();
  }
}

bool answers_match(const std::string& answer, const std::string& truth) {
  return normalize_answer(answer) == normalize_answer(truth);
}

RunReport aggregate(std::vector<TaskRow> rows) {
  RunReport r;
  r.rows = std::move(rows);
  std::size_t correct = 0;
  for (const auto& row : r.rows) {
    if (row.correct) ++correct;
    if (row.error) ++r.failures;
    for (auto* m : {&r.by_human_level, &r.by_re_level}) {
      auto& acc = (*m)[m == &r.by_human_level ? row.level_human : row.level_re];
      ++acc.tasks;
      if (row.correct) ++acc.correct;
    }
  }
  for (auto* m : {&r.by_human_level, &r.by_re_level}) {
    for (auto& [level, acc] : *m) acc.accuracy = static_cast<double>(acc.correct) / static_cast<double>(acc.tasks);
  }
  r.pass_at_1 = r.rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.rows.size());
  return r;
}

std::string report_json(const RunReport& report) {
  ordered_json rows = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json o;
    o["task_id"] = row.task_id;
    o["position"] = row.position;
    o["level_human"] = row.level_human;
    o["level_re"] = row.level_re;
    o["path_success"] = row.path_success;
    o["chosen_path"] = row.chosen_path ? ordered_json(*row.chosen_path) : ordered_json(nullptr);
    o["answer"] = row.answer;
    o["ground_truth"] = row.ground_truth ? ordered_json(*row.ground_truth) : ordered_json(nullptr);
    o["correct"] = row.correct;
    o["error"] = row.error ? ordered_json(*row.error) : ordered_json(nullptr);
    o["planner"] = hits_json(row.planner);
    o["developer"] = hits_json(row.developer);
    o["committed_records"] = row.committed_records;
    o["committed_tools"] = row.committed_tools;
    rows.push_back(std::move(o));
  }
  std::size_t correct = 0;
  for (const auto& row : report.rows) correct += row.correct ? 1 : 0;
  ordered_json out;
  out["tasks"] = report.rows.size();
  out["correct"] = correct;
  out["pass_at_1"] = report.pass_at_1;
  out["failures"] = report.failures;
  out["by_human_level"] = level_json(report.by_human_level);
  out["by_re_level"] = level_json(report.by_re_level);
  out["rows"] = std::move(rows);
  return out.dump(2) + "\n";
}

std::string report_csv(const RunReport& report) {
  std::string out =
      "task_id,position,level_human,level_re,path_success,chosen_path,answer,ground_truth,correct,error,"
      "planner_semantic_hits,planner_episodic_hits,developer_semantic_hits,developer_episodic_hits\n";
  for (const auto& row : report.rows) {
    std::string paths;
    for (std::size_t i = 0; i < row.path_success.size(); ++i) {
      if (i > 0) paths += '|';
      paths += row.path_success[i] ? '1' : '0';
    }
    out += csv_field(row.task_id) + ',' + std::to_string(row.position) + ',' + std::to_string(row.level_human) + ',' +
           std::to_string(row.level_re) + ',' + paths + ',' +
           (row.chosen_path ? std::to_string(*row.chosen_path) : std::string()) + ',' + csv_field(row.answer) + ',' +
           csv_field(row.ground_truth.value_or("")) + ',' + (row.correct ? "1" : "0") + ',' +
           csv_field(row.error.value_or("")) + ',' + std::to_string(row.planner.semantic_hits) + ',' +
           std::to_string(row.planner.episodic_hits) + ',' + std::to_string(row.developer.semantic_hits) + ',' +
           std::to_string(row.developer.episodic_hits) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run log
// ---------------------------------------------------------------------------

RunLog make_run_log(const RunReport& report, const std::vector<RetrievalEvent>& retrievals) {
  RunLog log;
  for (const auto& row : report.rows) {
    log.tasks.push_back({row.task_id, row.position, row.level_human, row.level_re, row.correct});
  }
  log.retrievals = retrievals;
  return log;
}

std::string encode_run_log(const RunLog& log) {
  std::string out;
  for (const auto& t : log.tasks) {
    ordered_json o;
    o["type"] = "task";
    o["task_id"] = t.task_id;
    o["position"] = t.position;
    o["level_human"] = t.level_human;
    o["level_re"] = t.level_re;
    o["success"] = t.success;
    out += o.dump() + "\n";
  }
  for (const auto& ev : log.retrievals) {
    ordered_json o;
    o["type"] = "retrieval";
    o["task_id"] = ev.task_id;
    o["path"] = ev.path_index;
    o["agent"] = ev.agent.to_string();
    o["step"] = ev.step;
    o["semantic_ids"] = ev.semantic_ids;
    o["episodic_ids"] = ev.episodic_ids;
    o["episodic_sources"] = ev.episodic_sources;
    out += o.dump() + "\n";
  }
  return out;
}

RunLog parse_run_log(const std::string& text) {
  RunLog log;
  std::set<std::string> known;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "run log line " + std::to_string(line_no) + ": ";
    try {
      const auto o = nlohmann::json::parse(line);
      const auto type = o.at("type").get<std::string>();
      if (type == "task") {
        LoggedTask t{o.at("task_id").get<std::string>(), o.at("position").get<std::size_t>(),
                     o.at("level_human").get<int>(), o.at("level_re").get<int>(), o.at("success").get<bool>()};
        if (!known.insert(t.task_id).second) report_error(where + "duplicate task " + t.task_id);
        log.tasks.push_back(std::move(t));
      } else if (type == "retrieval") {
        RetrievalEvent ev;
        ev.task_id = o.at("task_id").get<std::string>();
        if (!known.contains(ev.task_id)) report_error(where + "retrieval for unknown task " + ev.task_id);
        ev.path_index = o.at("path").get<std::size_t>();
        ev.agent = AgentKind::parse(o.at("agent").get<std::string>());
        ev.step = o.at("step").get<std::size_t>();
        ev.semantic_ids = o.at("semantic_ids").get<std::vector<std::string>>();
        ev.episodic_ids = o.at("episodic_ids").get<std::vector<std::string>>();
        ev.episodic_sources = o.at("episodic_sources").get<std::vector<std::string>>();
        if (ev.episodic_sources.size() != ev.episodic_ids.size()) {
          report_error(where + "episodic_sources and episodic_ids differ in length");
        }
        log.retrievals.push_back(std::move(ev));
      } else {
        report_error(where + "unknown type \"" + type + "\"");
      }
    } catch (const nlohmann::json::exception& e) {
      report_error(where + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kReportError) throw;
      report_error(where + e.what());
    }
  }
  return log;
}

RunLog load_run_log(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) report_error("run log " + path.string() + " not found");
  return parse_run_log(read_file(path));
}

// ---------------------------------------------------------------------------
// Figure data
// ---------------------------------------------------------------------------

std::vector<TrendRow> memory_trend(const RunLog& log) {
  std::map<std::string, std::size_t> index;
  std::vector<TrendRow> rows;
  for (const auto& t : log.tasks) {
    index[t.task_id] = rows.size();
    for (const char* agent : {"planner", "developer"}) {
      TrendRow r;
      r.task_id = t.task_id;
      r.position = t.position;
      r.agent = agent;
      rows.push_back(std::move(r));
    }
  }
  for (const auto& ev : log.retrievals) {
    const auto it = index.find(ev.task_id);
    if (it == index.end()) continue;
    std::size_t slot = it->second;
    if (ev.agent.role() == AgentRole::kDeveloper) ++slot;
    else if (ev.agent.role() != AgentRole::kPlanner) continue;
    auto& r = rows[slot];
    ++r.retrievals;
    r.semantic_hits += ev.semantic_ids.size();
    r.episodic_hits += ev.episodic_ids.size();
    r.max_hits_per_retrieval = std::max(r.max_hits_per_retrieval, ev.semantic_ids.size() + ev.episodic_ids.size());
  }
  for (auto& r : rows) {
    const auto total = r.semantic_hits + r.episodic_hits;
    if (total > 0) r.ratio = static_cast<double>(r.episodic_hits) / static_cast<double>(total);
  }
  return rows;
}

std::string trend_csv(const std::vector<TrendRow>& rows) {
  std::string out = "task_id,position,agent,retrievals,semantic_hits,episodic_hits,max_hits_per_retrieval,ratio\n";
  for (const auto& r : rows) {
    out += csv_field(r.task_id) + ',' + std::to_string(r.position) + ',' + r.agent + ',' +
           std::to_string(r.retrievals) + ',' + std::to_string(r.semantic_hits) + ',' +
           std::to_string(r.episodic_hits) + ',' + std::to_string(r.max_hits_per_retrieval) + ',' +
           (r.ratio ? fmt17(*r.ratio) : std::string()) + '\n';
  }
  return out;
}

SharingMatrix sharing_matrix(const RunLog& log) {
  SharingMatrix m;
  std::map<std::string, std::size_t> index;
  for (const auto& t : log.tasks) {
    index[t.task_id] = m.task_ids.size();
    m.task_ids.push_back(t.task_id);
    m.success.push_back(t.success);
  }
  for (const auto& ev : log.retrievals) {
    const auto i = index.find(ev.task_id);
    if (i == index.end()) continue;
    for (const auto& src : ev.episodic_sources) {
      const auto j = index.find(src);
      if (j == index.end()) {
        ++m.external_sources;
        continue;
      }
      if (i->second != j->second) m.entries.emplace(i->second, j->second);
    }
  }
  return m;
}

std::string sharing_matrix_json(const SharingMatrix& m) {
  ordered_json tasks = ordered_json::array();
  for (std::size_t i = 0; i < m.task_ids.size(); ++i) {
    tasks.push_back({{"index", i}, {"task_id", m.task_ids[i]}, {"success", static_cast<bool>(m.success[i])}});
  }
  ordered_json entries = ordered_json::array();
  for (const auto& [i, j] : m.entries) entries.push_back({i, j});
  ordered_json out;
  out["size"] = m.task_ids.size();
  out["tasks"] = std::move(tasks);
  out["entries"] = std::move(entries);
  out["external_sources"] = m.external_sources;
  return out.dump(2) + "\n";
}

std::string sharing_matrix_csv(const SharingMatrix& m) {
  std::string out = "task_id,success";
  for (const auto& id : m.task_ids) out += ',' + csv_field(id);
  out += '\n';
  for (std::size_t i = 0; i < m.task_ids.size(); ++i) {
    out += csv_field(m.task_ids[i]) + ',' + (m.success[i] ? "1" : "0");
    for (std::size_t j = 0; j < m.task_ids.size(); ++j) out += m.at(i, j) ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

std::string embeddings_csv(const std::vector<MemoryRecord>& records, std::size_t dense_dim) {
  std::string out = "id,owner,kind,source_task_id";
  for (std::size_t d = 0; d < dense_dim; ++d) out += ",d" + std::to_string(d);
  out += '\n';
  for (const auto& r : records) {
    if (r.dense_vec.size() != dense_dim) {
      throw Error(ErrorCode::kDimensionMismatch, "record " + r.id + " has dimension " +
                                                     std::to_string(r.dense_vec.size()));
    }
    out += csv_field(r.id) + ',' + csv_field(r.owner.to_string()) + ',' + std::string(to_string(r.kind)) + ',' +
           csv_field(r.source_task_id.value_or(""));
    for (double v : r.dense_vec) out += ',' + fmt17(v);
    out += '\n';
  }
  return out;
}

std::vector<EmbeddingRow> parse_embeddings_csv(const std::string& text) {
  std::vector<EmbeddingRow> rows;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) report_error("embedding export has no header");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "id") report_error("embedding export header is malformed");
  const auto dim = header.size() - 4;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) report_error("embedding row has " + std::to_string(f.size()) + " fields");
    EmbeddingRow r{f[0], f[1], f[2], f[3], {}};
    r.values.reserve(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      std::size_t used = 0;
      r.values.push_back(std::stod(f[4 + d], &used));
      if (used != f[4 + d].size()) report_error("embedding value \"" + f[4 + d] + "\" is not a number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace memhub
