#include "memhub/pipeline.hpp"

#include <cstdio>
#include <map>
#include <random>

#include <json.hpp>

#include "memhub/error.hpp"
#include "memhub/persistence.hpp"
#include "memhub/toy.hpp"

namespace memhub {

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_toy_script(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    return j.is_object() && j.value("kind", "") == "toy";
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("script file: ") + e.what());
  }
}

}  // namespace

std::unique_ptr<RunBackends> make_backends(const RunConfig& config) {
  auto b = std::make_unique<RunBackends>();
  if (config.backend == BackendMode::kLive) {
    b->chat = std::make_unique<HttpChatClient>(config.chat_endpoint);
    b->embedder = std::make_unique<HttpEmbedder>(config.embed_endpoint, config.embed_model, config.dense_dim);
  } else {
    std::string text;
    try {
      text = read_file(*config.script);
    } catch (const Error&) {
      throw Error(ErrorCode::kConfigError, "cannot read script " + config.script->string());
    }
    if (is_toy_script(text)) b->chat = ToyPolicyChat::from_json(text);
    else b->chat = ScriptedChat::from_json(text);
    b->embedder = std::make_unique<HashingEmbedder>(config.dense_dim, config.embed_seed);
  }
  if (config.summarizer == "identity") b->summarizer = std::make_unique<IdentitySummarizer>();
  else b->summarizer = std::make_unique<OutlineSummarizer>();

  const auto work = config.out / "work";
  if (config.sandbox == SandboxMode::kProcess) {
    b->sandboxes = std::make_unique<ProcessSandboxProvider>(config.shim_command, work, config.orchestrator.limits.mem_mb);
  } else {
    b->sandboxes = std::make_unique<InProcessSandboxProvider>(work);
  }
  return b;
}

std::vector<LevelEstimate> estimate_levels(const std::vector<TaskSpec>& tasks, const RunConfig& config,
                                           ChatClient& chat, SandboxProvider& sandboxes) {
  std::vector<double> weights;
  for (const auto& p : config.proxies) weights.push_back(p.weight);
  std::vector<LevelEstimate> out;
  out.reserve(tasks.size());
  for (const auto& task : tasks) {
    LevelEstimate e;
    e.task_id = task.id;
    e.level_human = task.human_difficulty;
    std::vector<DifficultyDistribution> dists;
    for (const auto& proxy : config.proxies) {
      e.proxies.push_back(proxy_estimate(task, proxy, chat, sandboxes, config.orchestrator.limits,
                                         config.curriculum_params.levels));
      dists.push_back(e.proxies.back().dist);
    }
    e.consensus = ensemble_consensus(dists, weights);
    e.level_re = reestimated_level(e.consensus);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::size_t> random_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

ProceduralMemory load_procedural(const RunConfig& config, AgentKind agent) {
  if (!config.procedural) return ProceduralMemory{agent, "", ""};
  const auto file = *config.procedural / (agent.to_string() + ".md");
  return parse_procedural(read_file(file), agent);
}

void prepare_hub(MemoryHub& hub, const RunConfig& config, RunBackends& backends) {
  if (config.store && std::filesystem::is_directory(*config.store)) {
    load_hub(hub, *config.store, backends.embedder->name());
  }
  if (config.demos && hub.semantic(AgentKind::planner()).size() == 0 &&
      hub.semantic(AgentKind::developer()).size() == 0) {
    ingest_demos(*config.demos, hub, *backends.embedder, backends.sparse);
  }
}

RunResult run_pipeline(const std::vector<TaskSpec>& tasks, const RunConfig& config, MemoryHub& hub,
                       RunBackends& backends, std::ostream* progress) {
  RunResult result;
  result.levels = estimate_levels(tasks, config, *backends.chat, *backends.sandboxes);

  std::map<std::string, std::size_t> index;
  std::map<std::string, int> levels;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!index.emplace(tasks[i].id, i).second) {
      throw Error(ErrorCode::kIngestError, "duplicate task id " + tasks[i].id);
    }
    levels[tasks[i].id] = result.levels[i].level_re;
  }

  OrchestratorConfig orch = config.orchestrator;
  orch.planner_proc = load_procedural(config, AgentKind::planner());
  orch.developer_proc = load_procedural(config, AgentKind::developer());
  orch.judge_proc = load_procedural(config, AgentKind::judge());
  auto view = backends.view();

  std::vector<TaskRow> rows;
  const auto run_one = [&](const std::string& id) {
    const auto& task = tasks[index.at(id)];
    const auto& est = result.levels[index.at(id)];
    TaskRow row;
    row.task_id = task.id;
    row.position = rows.size();
    row.level_human = task.human_difficulty;
    row.level_re = est.level_re;
    row.ground_truth = task.ground_truth;
    try {
      auto outcome = run_task(task, config.paths, config.judge_model, hub, view, orch);
      for (const auto& c : outcome.candidates) {
        row.path_success.push_back(c.succeeded);
        result.retrievals.insert(result.retrievals.end(), c.retrievals.begin(), c.retrievals.end());
        tally_hits(c.retrievals, row);
      }
      if (outcome.verdict) {
        row.chosen_path = outcome.verdict->chosen_path;
        row.answer = outcome.verdict->final_answer;
      }
      row.committed_records = outcome.committed_records;
      row.committed_tools = outcome.committed_tools;
    } catch (const Error& e) {
      row.error = e.what();
    }
    row.correct = row.chosen_path.has_value() && !row.error &&
                  (task.ground_truth ? answers_match(row.answer, *task.ground_truth) : true);
    if (progress != nullptr) {
      *progress << "[" << row.position + 1 << "/" << tasks.size() << "] " << task.id << " L" << row.level_re << " "
                << (row.error ? "error" : row.correct ? "ok" : "wrong") << "\n";
    }
    const bool ok = row.correct;
    rows.push_back(std::move(row));
    return ok;
  };

  if (config.curriculum) {
    const auto trace = run_curriculum(levels, config.curriculum_params, run_one);
    std::map<std::string, int> scheduled;
    for (const auto& [threshold, batch] : trace.final_state.batch_log) {
      for (const auto& id : batch) scheduled.emplace(id, threshold);
    }
    for (const auto& row : rows) result.thresholds.push_back(scheduled.at(row.task_id));
  } else {
    for (const auto i : random_order(tasks.size(), config.seed)) {
      run_one(tasks[i].id);
      result.thresholds.push_back(0);
    }
  }
  result.report = aggregate(std::move(rows));
  return result;
}

std::string levels_csv(const std::vector<LevelEstimate>& levels) {
  std::string out = "task_id,level_human,level_re";
  const std::size_t width = levels.empty() ? 0 : levels.front().consensus.probs.size();
  for (std::size_t l = 0; l < width; ++l) out += ",p" + std::to_string(l + 1);
  out += ",proxy_steps,warnings\n";
  for (const auto& e : levels) {
    out += csv_field(e.task_id) + ',' + std::to_string(e.level_human) + ',' + std::to_string(e.level_re);
    for (double p : e.consensus.probs) out += ',' + fmt17(p);
    std::string steps, warnings;
    for (std::size_t i = 0; i < e.proxies.size(); ++i) {
      if (i > 0) steps += '|';
      const auto& pe = e.proxies[i];
      steps += pe.outcome ? (pe.outcome->success ? std::to_string(pe.outcome->steps_used) : std::string("fail"))
                          : std::string("crash");
      if (pe.warning) warnings += (warnings.empty() ? "" : "; ") + *pe.warning;
    }
    out += ',' + steps + ',' + csv_field(warnings) + '\n';
  }
  return out;
}

std::string confusion_csv(const std::vector<LevelEstimate>& levels, int human_levels, std::size_t re_levels) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& e : levels) pairs.emplace_back(e.level_human, e.level_re);
  const auto m = confusion_matrix(pairs, static_cast<std::size_t>(human_levels), re_levels);
  std::string out = "human\\re";
  for (std::size_t r = 0; r < re_levels; ++r) out += ",L" + std::to_string(r + 1);
  out += '\n';
  for (std::size_t h = 0; h < m.size(); ++h) {
    out += "L" + std::to_string(h + 1);
    for (auto c : m[h]) out += ',' + std::to_string(c);
    out += '\n';
  }
  return out;
}

std::string curriculum_csv(const RunResult& result) {
  std::string out = "position,task_id,level_human,level_re,threshold,correct\n";
  for (std::size_t i = 0; i < result.report.rows.size(); ++i) {
    const auto& row = result.report.rows[i];
    out += std::to_string(row.position) + ',' + csv_field(row.task_id) + ',' + std::to_string(row.level_human) + ',' +
           std::to_string(row.level_re) + ',' + std::to_string(result.thresholds.at(i)) + ',' +
           (row.correct ? "1" : "0") + '\n';
  }
  return out;
}

void write_run_outputs(const RunConfig& config, const RunResult& result, const MemoryHub& hub,
                       const std::string& embedder_name) {
  const auto& dir = config.out;
  std::filesystem::create_directories(dir);
  const auto log = make_run_log(result.report, result.retrievals);
  write_file_atomic(dir / "report.json", report_json(result.report));
  write_file_atomic(dir / "report.csv", report_csv(result.report));
  write_file_atomic(dir / "run_log.jsonl", encode_run_log(log));
  write_file_atomic(dir / "trend.csv", trend_csv(memory_trend(log)));
  const auto matrix = sharing_matrix(log);
  write_file_atomic(dir / "sharing_matrix.json", sharing_matrix_json(matrix));
  write_file_atomic(dir / "sharing_matrix.csv", sharing_matrix_csv(matrix));
  write_file_atomic(dir / "curriculum.csv", curriculum_csv(result));
  write_file_atomic(dir / "levels.csv", levels_csv(result.levels));
  write_file_atomic(dir / "confusion.csv",
                    confusion_csv(result.levels, config.human_levels, config.curriculum_params.levels));
  std::filesystem::create_directories(dir / "store");
  save_hub(hub, dir / "store", embedder_name);
}

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  std::unique_ptr<RunBackends> backends;
  std::vector<TaskSpec> tasks;
  std::unique_ptr<MemoryHub> hub;
  try {
    validate(config);
    tasks = ingest_tasks(config.tasks, config.human_levels);
    backends = make_backends(config);
    hub = std::make_unique<MemoryHub>(config.dense_dim);
    prepare_hub(*hub, config, *backends);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  }
  RunResult result;
  try {
    result = run_pipeline(tasks, config, *hub, *backends, &err);
  } catch (const Error& e) {
    err << "run aborted: " << e.what() << "\n";
    return 2;
  }
  write_run_outputs(config, result, *hub, backends->embedder->name());
  const auto& r = result.report;
  std::size_t correct = 0;
  for (const auto& row : r.rows) correct += row.correct ? 1 : 0;
  out << "tasks " << r.rows.size() << ", correct " << correct << ", pass@1 " << fmt17(r.pass_at_1) << ", failures "
      << r.failures << "\n";
  return r.failures > 0 ? 1 : 0;
}

}  // namespace memhub
