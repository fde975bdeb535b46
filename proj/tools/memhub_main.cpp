// memhub command-line interface.
//
//   memhub run                --config FILE [--seed N] [--backend scripted|live] [--out DIR]
//   memhub report-trend       --log FILE [--out FILE]
//   memhub report-matrix      --log FILE [--out DIR]
//   memhub export-embeddings  --store FILE --config FILE [--out FILE]
//   memhub ingest-tasks       --config FILE [--tasks FILE]
//   memhub ingest-demos       --config FILE --demos FILE --store DIR
//   memhub estimate-difficulty --config FILE [--out DIR]
//
// Exit codes: 0 success, 1 partial task failures or a report error, 2 config error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "memhub/config.hpp"
#include "memhub/error.hpp"
#include "memhub/persistence.hpp"
#include "memhub/pipeline.hpp"
#include "memhub/report.hpp"

namespace fs = std::filesystem;
using namespace memhub;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string out;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? default_run_config() : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.backend.empty()) cfg.backend = parse_backend_mode(c.backend);
  if (!c.out.empty()) cfg.out = c.out;
  return cfg;
}

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file_atomic(path, content);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memhub: hierarchical-memory agent orchestration"};
  app.require_subcommand(1);

  Common common;
  const auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--config", common.config, "key = value run configuration");
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_option("--backend", common.backend, "scripted or live")->check(CLI::IsMember({"scripted", "live"}));
    if (with_out) sub->add_option("--out", common.out, "output directory");
  };

  auto* run = app.add_subcommand("run", "run the task set end to end");
  add_common(run, true);

  std::string log_path, out_file;
  auto* trend = app.add_subcommand("report-trend", "per-task episodic hit ratio per agent (CSV)");
  trend->add_option("--log", log_path, "run_log.jsonl from a run")->required();
  trend->add_option("--out", out_file, "output CSV (stdout when omitted)");

  auto* matrix = app.add_subcommand("report-matrix", "task-to-task experience sharing matrix");
  matrix->add_option("--log", log_path, "run_log.jsonl from a run")->required();
  matrix->add_option("--out", common.out, "output directory (JSON to stdout when omitted)");

  std::string store_path;
  auto* emb = app.add_subcommand("export-embeddings", "dense vectors and labels of one store file (CSV)");
  add_common(emb, false);
  emb->add_option("--store", store_path, "store file, e.g. store/developer-episodic.jsonl")->required();
  emb->add_option("--out", out_file, "output CSV (stdout when omitted)");

  std::string tasks_path;
  auto* itasks = app.add_subcommand("ingest-tasks", "validate a task file");
  add_common(itasks, false);
  itasks->add_option("--tasks", tasks_path, "task file (defaults to the configured one)");

  std::string demos_path;
  auto* idemos = app.add_subcommand("ingest-demos", "add semantic demonstrations to a hub directory");
  add_common(idemos, false);
  idemos->add_option("--demos", demos_path, "demo file")->required();
  idemos->add_option("--store", store_path, "hub directory")->required();

  auto* estimate = app.add_subcommand("estimate-difficulty", "re-estimate task levels with the proxy ensemble");
  add_common(estimate, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      return cmd_run(resolve_config(common), std::cout, std::cerr);
    }
    if (trend->parsed()) {
      write_or_print(out_file, trend_csv(memory_trend(load_run_log(log_path))));
      return 0;
    }
    if (matrix->parsed()) {
      const auto m = sharing_matrix(load_run_log(log_path));
      if (common.out.empty()) {
        std::cout << sharing_matrix_json(m);
      } else {
        fs::create_directories(common.out);
        write_file_atomic(fs::path(common.out) / "sharing_matrix.json", sharing_matrix_json(m));
        write_file_atomic(fs::path(common.out) / "sharing_matrix.csv", sharing_matrix_csv(m));
      }
      return 0;
    }
    if (emb->parsed()) {
      const auto cfg = resolve_config(common);
      const auto backends = make_backends(cfg);
      const auto contents = load_store(store_path, backends->embedder->name(), cfg.dense_dim);
      write_or_print(out_file, embeddings_csv(contents.records, contents.manifest.dense_dim));
      return 0;
    }
    if (itasks->parsed()) {
      const auto cfg = resolve_config(common);
      const fs::path path = tasks_path.empty() ? cfg.tasks : fs::path(tasks_path);
      const auto tasks = ingest_tasks(path, cfg.human_levels);
      std::cout << tasks.size() << " tasks ok\n";
      return 0;
    }
    if (idemos->parsed()) {
      const auto cfg = resolve_config(common);
      const auto backends = make_backends(cfg);
      MemoryHub hub(cfg.dense_dim);
      if (fs::is_directory(store_path)) load_hub(hub, store_path, backends->embedder->name());
      const auto n = ingest_demos(demos_path, hub, *backends->embedder, backends->sparse);
      fs::create_directories(store_path);
      save_hub(hub, store_path, backends->embedder->name());
      std::cout << n << " demos stored\n";
      return 0;
    }
    if (estimate->parsed()) {
      const auto cfg = resolve_config(common);
      validate(cfg);
      const auto tasks = ingest_tasks(cfg.tasks, cfg.human_levels);
      const auto backends = make_backends(cfg);
      const auto levels = estimate_levels(tasks, cfg, *backends->chat, *backends->sandboxes);
      fs::create_directories(cfg.out);
      write_file_atomic(cfg.out / "levels.csv", levels_csv(levels));
      write_file_atomic(cfg.out / "confusion.csv",
                        confusion_csv(levels, cfg.human_levels, cfg.curriculum_params.levels));
      std::cout << levels_csv(levels);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::kConfigError:
      case ErrorCode::kIngestError:
      case ErrorCode::kIncompatibleStore:
        return 2;
      default:
        return 1;
    }
  }
  return 0;
}
