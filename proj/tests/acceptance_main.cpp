// Acceptance suite: one PASS/FAIL line per primary criterion.
//
//   memhub_acceptance [--known-red NAME]...
//
// Exits non-zero when any criterion fails, except criteria named with
// --known-red, whose FAIL line is still printed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "memhub/config.hpp"
#include "memhub/curriculum.hpp"
#include "memhub/error.hpp"
#include "memhub/orchestrator.hpp"
#include "memhub/persistence.hpp"
#include "memhub/pipeline.hpp"
#include "memhub/retrieval.hpp"
#include "memhub/sandbox.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace memhub;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kRrfTolerance = 1e-12;
constexpr double kRetrievalBudgetS = 30.0;
constexpr double kCurriculumBudgetS = 10.0;
constexpr double kBenchmarkBudgetS = 300.0;
constexpr std::size_t kFullMin = 22;
constexpr std::size_t kNoEpisodicMax = 16;
constexpr std::size_t kNoCurriculumMax = 19;
constexpr double kLateEpisodicRatioMin = 0.5;
constexpr std::size_t kJudgeLookback = 5;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(prec);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("memhub-acceptance-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Retrieval and fusion
// ---------------------------------------------------------------------------

Outcome retrieval_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(715);
  std::vector<std::string> vocab;
  for (int i = 0; i < 40; ++i) vocab.push_back("w" + std::to_string(i));
  std::uniform_real_distribution<double> weight(0.05, 4.0);
  std::size_t mismatches = 0, records = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 8 + rng() % 57;
    const std::size_t n = trial == 0 ? 0 : (trial == 1 ? 1000 : rng() % 1001);
    const AgentKind owner = trial % 2 ? AgentKind::planner() : AgentKind::developer();
    MemoryRepository sem(owner, MemoryKind::kSemantic, dim), ep(owner, MemoryKind::kEpisodic, dim);
    std::vector<MemoryRecord> sem_all, ep_all;
    for (std::size_t i = 0; i < n; ++i) {
      const auto kind = rng() % 2 ? MemoryKind::kSemantic : MemoryKind::kEpisodic;
      SparseVector sv;
      const auto terms = rng() % 5;  // zero terms makes a dense-only record
      for (std::size_t t = 0; t < terms; ++t) sv[vocab[rng() % vocab.size()]] = weight(rng);
      auto r = testing::make_record("r" + std::to_string(i), owner, kind, testing::random_unit(rng, dim), sv);
      (kind == MemoryKind::kSemantic ? sem_all : ep_all).push_back(r);
      (kind == MemoryKind::kSemantic ? sem : ep).store(std::move(r));
    }
    records += n;
    SparseVector qs;
    const auto qterms = rng() % 4;
    for (std::size_t t = 0; t < qterms; ++t) qs[vocab[rng() % vocab.size()]] = weight(rng);
    const Query q{owner, "task", "state", testing::random_unit(rng, dim), qs};
    const RetrievalLimits limits{rng() % 8, rng() % 10};
    const int k_const = 1 + static_cast<int>(rng() % 120);

    const auto got = retrieve(q, sem, ep, limits, k_const);
    const auto want_sem = oracle::retrieve_ids(q.dense_vec, q.sparse_vec, sem_all, limits.semantic_k, k_const);
    const auto want_ep = oracle::retrieve_ids(q.dense_vec, q.sparse_vec, ep_all, limits.episodic_k, k_const);
    const auto ids = [](const std::vector<RankedResult>& v) {
      std::vector<std::string> out;
      for (const auto& r : v) out.push_back(r.record_id);
      return out;
    };
    if (ids(got.semantic) != want_sem || ids(got.episodic) != want_ep) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < kRetrievalBudgetS,
          "200 repos, " + std::to_string(records) + " records, " + std::to_string(mismatches) + " mismatches, " +
              fmt(s) + " s (budget " + fmt(kRetrievalBudgetS, 0) + " s)"};
}

Outcome rrf_correctness() {
  std::mt19937_64 rng(716);
  double worst = 0.0;
  std::size_t order_mismatch = 0, perm_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::vector<std::string>> rankings(1 + rng() % 6);
    const std::size_t pool = 1 + rng() % 40;
    for (auto& r : rankings) {
      std::vector<std::string> ids;
      for (std::size_t i = 0; i < pool; ++i) ids.push_back("d" + std::to_string(i));
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(rng() % (pool + 1));
      r = std::move(ids);
    }
    const int k = 1 + static_cast<int>(rng() % 100);
    const auto got = rrf_fuse(rankings, k);

    // Direct formula per id, independent of either implementation's sort.
    std::map<std::string, double> direct;
    for (const auto& r : rankings) {
      for (std::size_t pos = 0; pos < r.size(); ++pos) direct[r[pos]] += 1.0 / (k + static_cast<double>(pos + 1));
    }
    if (got.size() != direct.size()) ++order_mismatch;
    for (const auto& f : got) worst = std::max(worst, std::abs(f.fused_score - direct[f.id]));
    const auto want = oracle::rrf(rankings, k);
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
      if (got[i].id != want[i].first) {
        ++order_mismatch;
        break;
      }
    }

    std::shuffle(rankings.begin(), rankings.end(), rng);
    const auto perm = rrf_fuse(rankings, k);
    bool same = perm.size() == got.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = perm[i].id == got[i].id && perm[i].fused_score == got[i].fused_score;
    }
    if (!same) ++perm_mismatch;
  }
  return {worst <= kRrfTolerance && order_mismatch == 0 && perm_mismatch == 0,
          "1000 instances, max |fused - direct| = " + [&] {
            std::ostringstream s;
            s << worst;
            return s.str();
          }() + " (tol 1e-12), order mismatches " + std::to_string(order_mismatch) +
              ", permutation mismatches " + std::to_string(perm_mismatch)};
}

// ---------------------------------------------------------------------------
// Curriculum
// ---------------------------------------------------------------------------

Outcome curriculum_invariants() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(717);
  std::size_t violations = 0;
  const auto fail = [&](bool bad) { violations += bad ? 1 : 0; };

  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> w(0.01, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    // Simplex closure and argmax scale invariance of the consensus.
    std::vector<DifficultyDistribution> dists(1 + rng() % 4);
    std::vector<double> weights;
    for (auto& d : dists) {
      d.probs.resize(kDefaultLevels);
      double s = 0;
      for (auto& p : d.probs) s += (p = e(rng));
      for (auto& p : d.probs) p /= s;
      weights.push_back(w(rng));
    }
    const auto base = ensemble_consensus(dists, weights);
    double sum = 0;
    for (double p : base.probs) {
      fail(p < 0);
      sum += p;
    }
    fail(std::abs(sum - 1.0) > kSimplexTolerance);
    auto scaled = weights;
    const double c = w(rng) * 100;
    for (auto& x : scaled) x *= c;
    fail(reestimated_level(ensemble_consensus(dists, scaled)) != reestimated_level(base));

    // Scheduling over a random outcome sequence.
    const CurriculumParams params{kDefaultLevels, 1 + rng() % 8, static_cast<double>(rng() % 101) / 100.0};
    std::map<std::string, int> levels;
    const auto n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) levels["t" + std::to_string(i)] = 1 + static_cast<int>(rng() % 4);
    std::bernoulli_distribution coin(static_cast<double>(rng() % 101) / 100.0);

    std::set<std::string> done;
    CurriculumTrace trace;
    try {
      trace = run_curriculum(levels, params, [&](const std::string& id) {
        fail(done.contains(id));
        done.insert(id);
        return coin(rng);
      });
    } catch (const Error&) {
      ++violations;
      continue;
    }
    fail(trace.final_state.done.size() != levels.size());
    fail(trace.steps > levels.size() + params.levels);
    for (std::size_t i = 1; i < trace.thresholds.size(); ++i) fail(trace.thresholds[i - 1] > trace.thresholds[i]);
    std::set<std::string> before;
    for (const auto& [threshold, batch] : trace.final_state.batch_log) {
      for (const auto& id : batch) {
        fail(levels.at(id) > threshold);
        fail(before.contains(id));
      }
      before.insert(batch.begin(), batch.end());
    }
  }
  const double s = seconds_since(t0);
  return {violations == 0 && s < kCurriculumBudgetS,
          "500 sequences, " + std::to_string(violations) + " violations, " + fmt(s) + " s (budget " +
              fmt(kCurriculumBudgetS, 0) + " s)"};
}

// ---------------------------------------------------------------------------
// Sandbox refinement loop
// ---------------------------------------------------------------------------

class ListCoder final : public CoderContract {
 public:
  explicit ListCoder(std::vector<std::string> programs) : programs_(std::move(programs)) {}
  std::string write_code(const CoderTurn& turn) override {
    contexts.push_back(turn.context);
    return programs_.at(std::min(turn.iteration, programs_.size() - 1));
  }
  std::vector<std::vector<CodeContextEntry>> contexts;

 private:
  std::vector<std::string> programs_;
};

Outcome sandbox_loop_contract() {
  std::mt19937_64 rng(718);
  const std::vector<std::string> failing = {"raise RuntimeError('boom')", "x = 1/0", "def f(:\n    pass",
                                            "import frobnicate\nprint(1)", "print(undefined_name)"};
  InProcessSandboxProvider provider(fs::temp_directory_path() / "memhub-acceptance-sbx");
  std::size_t violations = 0, successes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 1 + rng() % 12;
    std::vector<std::string> programs;
    std::optional<std::size_t> first_success;
    for (std::size_t i = 0; i < len; ++i) {
      if (rng() % 3 == 0) {
        programs.push_back("def tool_" + std::to_string(i) + "():\n    return " + std::to_string(i) + "\nprint(tool_" +
                           std::to_string(i) + "())");
        if (!first_success) first_success = i;
      } else {
        programs.push_back(failing[rng() % failing.size()]);
      }
    }
    LoopOptions opts;
    opts.max_iters = 1 + rng() % 10;
    opts.tool_id = "tool-acc-" + std::to_string(trial);
    auto sandbox = provider.open("acc-loop-" + std::to_string(trial));
    ListCoder coder(programs);
    const TaskSpec task{"acc-" + std::to_string(trial), "randomized script", {}, 1, {}};
    const auto out = run_refinement_loop(task, "intent", coder, *sandbox, opts);

    const auto at = [&](std::size_t i) { return programs.at(std::min(i, programs.size() - 1)); };
    std::vector<ToolStep> traj;
    if (const auto* ep = std::get_if<ToolEpisode>(&out)) {
      ++successes;
      traj = ep->trajectory;
      // Tail success, no earlier success, final code is the last attempt.
      if (traj.empty() || !traj.back().feedback.is_success() || ep->final_code != traj.back().code) ++violations;
      for (std::size_t i = 0; i + 1 < traj.size(); ++i) violations += traj[i].feedback.is_success() ? 1 : 0;
      try {
        validate(*ep);
      } catch (const Error&) {
        ++violations;
      }
      if (!first_success || traj.size() != *first_success + 1) ++violations;
    } else {
      traj = std::get<LoopFailure>(out).trajectory;
      for (const auto& st : traj) violations += st.feedback.is_success() ? 1 : 0;
      if (traj.size() != opts.max_iters || (first_success && *first_success < opts.max_iters)) ++violations;
    }
    // Termination.
    if (traj.size() > opts.max_iters || sandbox->exec_calls() > opts.max_iters) ++violations;
    // Shape: attempt i is program i.
    for (std::size_t i = 0; i < traj.size(); ++i) violations += traj[i].code != at(i) ? 1 : 0;
    // Context monotonicity: turn i sees exactly the i earlier (code, feedback) pairs.
    if (coder.contexts.size() != traj.size()) ++violations;
    for (std::size_t i = 0; i < coder.contexts.size(); ++i) {
      const auto& ctx = coder.contexts[i];
      if (ctx.size() != i) {
        ++violations;
        continue;
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (ctx[j].code != traj[j].code || !(ctx[j].feedback == traj[j].feedback)) ++violations;
      }
    }
  }
  return {violations == 0,
          "100 scripts (" + std::to_string(successes) + " tool episodes), " + std::to_string(violations) + " violations"};
}

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

RolloutCandidate candidate(std::size_t path, std::size_t len) {
  RolloutCandidate c;
  c.path_index = path;
  c.final_answer = "answer-" + std::to_string(path);
  c.succeeded = true;
  for (std::size_t i = 0; i < len; ++i) {
    AgentState s{"t", i, "p" + std::to_string(path) + "s" + std::to_string(i), {}};
    if (i + 1 == len) c.trajectory.emplace_back(s, FinalAnswerAction{c.final_answer});
    else c.trajectory.emplace_back(s, SubPlanAction{"sub"});
  }
  return c;
}

Outcome judge_lookback() {
  const TaskSpec task{"t", "d", {}, 1, {}};
  const ProceduralMemory proc{AgentKind::judge(), "judge", ""};
  const ModelProfile model{"judge", "", 1.0, ModelProfile::Role::kJudge};
  std::size_t bad = 0;
  for (std::size_t len = 1; len <= 12; ++len) {
    const auto other = 13 - len;
    std::vector<RolloutCandidate> cands = {candidate(0, len), candidate(1, other)};
    std::string prompt;
    FunctionChat chat([&](const ChatRequest& r) {
      prompt = r.messages.at(1).content;
      return std::string("CHOSEN PATH: 0");
    });
    const auto v = judge(cands, task, chat, model, proc, kJudgeLookback);
    const auto split = prompt.find("# path 1");
    if (split == std::string::npos) {
      ++bad;
      continue;
    }
    const auto a = prompt.substr(0, split), b = prompt.substr(split);
    const auto want_a = std::min(kJudgeLookback, len), want_b = std::min(kJudgeLookback, other);
    if (count_of(a, "## step ") != want_a || count_of(b, "## step ") != want_b) ++bad;
    // The window is the most recent steps.
    if (count_of(a, "## step " + std::to_string(len - want_a) + " ") != 1 ||
        (len > want_a && count_of(a, "## step " + std::to_string(len - want_a - 1) + " ") != 0)) {
      ++bad;
    }
    if (v.lookback_used != std::vector<std::size_t>{want_a, want_b}) ++bad;
  }
  return {bad == 0, "lengths 1..12, " + std::to_string(bad) + " prompts with a wrong step count"};
}

// ---------------------------------------------------------------------------
// End-to-end scripted benchmark
// ---------------------------------------------------------------------------

const std::vector<std::string> kGoldenFiles = {"report.json", "report.csv",   "trend.csv",     "sharing_matrix.json",
                                               "curriculum.csv", "levels.csv", "confusion.csv"};
const std::vector<std::string> kAllOutputs = {
    "report.json",   "report.csv", "run_log.jsonl", "trend.csv",
    "sharing_matrix.json", "sharing_matrix.csv", "curriculum.csv", "levels.csv",
    "confusion.csv", "store/planner-semantic.jsonl", "store/planner-episodic.jsonl",
    "store/developer-semantic.jsonl", "store/developer-episodic.jsonl", "store/tools.jsonl"};

struct ToyRun {
  std::string name;
  fs::path out;
  int exit_code = -1;
  nlohmann::json report;
  std::vector<nlohmann::json> log;
};

ToyRun run_toy(const std::string& config_name, const std::string& tag) {
  ToyRun r;
  r.name = config_name;
  auto cfg = load_run_config(fs::path(MEMHUB_TOY_DIR) / (config_name + ".conf"));
  cfg.out = scratch(config_name + "-" + tag);
  r.out = cfg.out;
  std::ostringstream sink;
  r.exit_code = cmd_run(cfg, sink, sink);
  r.report = nlohmann::json::parse(slurp(r.out / "report.json"));
  std::istringstream in(slurp(r.out / "run_log.jsonl"));
  for (std::string line; std::getline(in, line);) r.log.push_back(nlohmann::json::parse(line));
  return r;
}

// Recounts correctness from the task file's ground truths.
std::size_t recount_correct(const ToyRun& r, const std::map<std::string, std::string>& truth) {
  std::size_t n = 0;
  for (const auto& row : r.report["rows"]) n += row["answer"].get<std::string>() == truth.at(row["task_id"]) ? 1 : 0;
  return n;
}

std::map<std::string, ToyRun> g_runs;

Outcome e2e_benchmark() {
  const auto t0 = Clock::now();
  std::map<std::string, std::string> truth;
  {
    std::istringstream in(slurp(fs::path(MEMHUB_TOY_DIR) / "tasks.jsonl"));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      truth[j["task_id"]] = j["final_answer"];
    }
  }
  std::ostringstream detail;
  bool pass = truth.size() == 24;
  std::map<std::string, std::size_t> correct;
  for (const std::string name : {"full", "no_episodic", "no_curriculum"}) {
    auto first = run_toy(name, "a");
    const auto second = run_toy(name, "b");
    bool deterministic = true;
    for (const auto& f : kAllOutputs) deterministic = deterministic && slurp(first.out / f) == slurp(second.out / f);
    bool golden = true;
    for (const auto& f : kGoldenFiles) {
      golden = golden && slurp(first.out / f) == slurp(fs::path(MEMHUB_GOLDEN_DIR) / name / f);
    }
    const auto n = recount_correct(first, truth);
    correct[name] = n;
    const bool rows_ok = first.report["rows"].size() == 24 && first.report["correct"] == n;
    pass = pass && deterministic && golden && rows_ok && first.exit_code == 0;
    detail << name << " " << n << "/24" << (deterministic ? "" : " NONDETERMINISTIC") << (golden ? "" : " GOLDEN-DIFF")
           << (rows_ok ? "" : " BAD-ROWS") << "; ";
    g_runs[name] = std::move(first);
  }

  // The eight level-3/4 tasks must fail without episodic sharing and pass with it.
  std::size_t hard = 0, hard_needs_episodic = 0;
  for (const auto& row : g_runs["full"].report["rows"]) {
    if (row["level_re"].get<int>() < 3) continue;
    ++hard;
    const auto id = row["task_id"].get<std::string>();
    for (const auto& other : g_runs["no_episodic"].report["rows"]) {
      if (other["task_id"] == id && !other["correct"].get<bool>() && row["correct"].get<bool>()) ++hard_needs_episodic;
    }
  }
  const double s = seconds_since(t0);
  const bool a = correct["full"] >= kFullMin, b = correct["no_episodic"] <= kNoEpisodicMax,
             c = correct["no_curriculum"] <= kNoCurriculumMax;
  pass = pass && a && b && c && hard == 8 && hard_needs_episodic == 8 && s < kBenchmarkBudgetS;
  detail << "(a) >=" << kFullMin << (a ? " ok" : " MISSED") << ", (b) <=" << kNoEpisodicMax << (b ? " ok" : " MISSED")
         << ", (c) <=" << kNoCurriculumMax << (c ? " ok" : " MISSED") << "; " << hard_needs_episodic
         << "/8 hard tasks need episodic memory; deterministic x2 and golden-checked; " << fmt(s) << " s";
  return {pass, detail.str()};
}

Outcome memory_trend_check() {
  const auto& run = g_runs["full"];
  if (run.log.empty()) return {false, "full toy run unavailable"};
  // Recount from raw retrieval lines.
  std::vector<std::string> order;
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> hits;  // (ep, total)
  std::size_t over_limit = 0;
  for (const auto& l : run.log) {
    if (l["type"] == "task") {
      order.push_back(l["task_id"]);
      continue;
    }
    const auto agent = l["agent"].get<std::string>();
    const auto ep = l["episodic_ids"].size(), total = ep + l["semantic_ids"].size();
    if (total > (agent == "planner" ? 3u + 4u : 3u + 6u)) ++over_limit;
    auto& h = hits[{l["task_id"], agent}];
    h.first += ep;
    h.second += total;
  }
  const auto ratio = [&](const std::string& task, const std::string& agent) {
    const auto& h = hits[{task, agent}];
    return h.second == 0 ? 0.0 : static_cast<double>(h.first) / static_cast<double>(h.second);
  };
  // Library trend must agree with the recount.
  std::size_t disagreements = 0;
  std::istringstream csv(slurp(run.out / "trend.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (line.back() == ',') f.push_back("");
    const auto& h = hits[{f[0], f[2]}];
    const auto want = h.second == 0 ? std::string() : [&] {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(h.first) / static_cast<double>(h.second));
      return std::string(buf);
    }();
    if (f.size() != 8 || f[7] != want) ++disagreements;
  }

  const std::size_t quartile = (order.size() + 3) / 4;
  bool pass = over_limit == 0 && disagreements == 0 && !order.empty();
  std::ostringstream d;
  for (const std::string agent : {"planner", "developer"}) {
    const double first = ratio(order.front(), agent);
    double late = 0;
    for (std::size_t i = order.size() - quartile; i < order.size(); ++i) late += ratio(order[i], agent);
    late /= static_cast<double>(quartile);
    pass = pass && first == 0.0 && late >= kLateEpisodicRatioMin;
    d << agent << " first " << fmt(first) << ", last-quartile mean " << fmt(late, 3) << "; ";
  }
  d << "threshold " << kLateEpisodicRatioMin << ", recount disagreements " << disagreements << ", over-limit retrievals "
    << over_limit;
  return {pass, d.str()};
}

Outcome sharing_matrix_check() {
  const auto& run = g_runs["full"];
  if (run.log.empty()) return {false, "full toy run unavailable"};
  std::map<std::string, std::size_t> pos;
  for (const auto& l : run.log) {
    if (l["type"] == "task") pos[l["task_id"]] = l["position"];
  }
  std::set<std::pair<std::size_t, std::size_t>> scan;
  for (const auto& l : run.log) {
    if (l["type"] != "retrieval") continue;
    for (const auto& src : l["episodic_sources"]) {
      if (pos.contains(src) && src != l["task_id"]) scan.emplace(pos.at(l["task_id"]), pos.at(src));
    }
  }
  const auto m = nlohmann::json::parse(slurp(run.out / "sharing_matrix.json"));
  std::set<std::pair<std::size_t, std::size_t>> exported;
  std::size_t diagonal = 0, acausal = 0;
  for (const auto& e : m["entries"]) {
    const std::size_t i = e[0], j = e[1];
    exported.emplace(i, j);
    if (i == j) ++diagonal;
    if (j >= i) ++acausal;
  }
  const bool pass = diagonal == 0 && acausal == 0 && exported == scan && !exported.empty();
  return {pass, std::to_string(exported.size()) + " nonzero entries over " + std::to_string(pos.size()) +
                    " tasks, diagonal " + std::to_string(diagonal) + ", acausal " + std::to_string(acausal) +
                    ", matches log scan: " + (exported == scan ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

bool same_bits(const MemoryRecord& a, const MemoryRecord& b) {
  if (a.id != b.id || !(a.owner == b.owner) || a.kind != b.kind || a.source_task_id != b.source_task_id ||
      a.chunk_text != b.chunk_text || a.summary != b.summary || a.dense_vec.size() != b.dense_vec.size() ||
      std::memcmp(a.dense_vec.data(), b.dense_vec.data(), a.dense_vec.size() * sizeof(double)) != 0 ||
      a.sparse_vec.size() != b.sparse_vec.size()) {
    return false;
  }
  for (auto i = a.sparse_vec.begin(), j = b.sparse_vec.begin(); i != a.sparse_vec.end(); ++i, ++j) {
    if (i->first != j->first || std::memcmp(&i->second, &j->second, sizeof(double)) != 0) return false;
  }
  return true;
}

Outcome persistence_roundtrip() {
  const auto dir = scratch("store");
  std::mt19937_64 rng(723);
  std::uniform_real_distribution<double> w(0.0, 3.0);
  MemoryRepository repo(AgentKind::developer(), MemoryKind::kEpisodic, 32);
  for (std::size_t i = 0; i < 10000; ++i) {
    auto r = testing::make_record("rec-" + std::to_string(i), repo.owner(), repo.kind(), testing::random_unit(rng, 32));
    r.chunk_text = "## step " + std::to_string(i) + " [code]\n\"q\" \\ \xc3\xa9\t" + std::to_string(rng());
    for (int t = 0; t < 4; ++t) r.sparse_vec["t" + std::to_string(rng() % 97)] = w(rng);
    repo.store(std::move(r));
  }
  const auto file = dir / "store.jsonl";
  save_store(repo, file, "acc-embedder");
  const auto bytes = slurp(file);
  const auto loaded = load_store(file, "acc-embedder", 32);
  const auto original = repo.snapshot();
  std::size_t differing = loaded.records.size() == original.size() ? 0 : 1;
  for (std::size_t i = 0; differing == 0 && i < original.size(); ++i) {
    differing += same_bits(*original[i], loaded.records[i]) ? 0 : 1;
  }
  MemoryRepository back(repo.owner(), repo.kind(), 32);
  load_into(back, file, "acc-embedder");
  save_store(back, dir / "again.jsonl", "acc-embedder");
  const bool resave_identical = slurp(dir / "again.jsonl") == bytes;

  // Torn files: cut at random byte offsets; every complete record must load.
  std::vector<std::size_t> line_ends;
  for (std::size_t p = bytes.find('\n'); p != std::string::npos; p = bytes.find('\n', p + 1)) line_ends.push_back(p);
  std::size_t torn_bad = 0;
  for (int cut = 0; cut < 20; ++cut) {
    const std::size_t at = line_ends.front() + 1 + rng() % (bytes.size() - line_ends.front() - 2);
    {
      std::ofstream out(dir / "torn.jsonl", std::ios::binary | std::ios::trunc);
      out << bytes.substr(0, at);
    }
    // Complete records: lines after the manifest whose newline lies inside the prefix.
    std::size_t complete = 0;
    for (std::size_t k = 1; k < line_ends.size(); ++k) complete += line_ends[k] < at ? 1 : 0;
    try {
      const auto partial = load_store(dir / "torn.jsonl", "acc-embedder", 32);
      // A cut right before a newline leaves the last line whole.
      if (partial.records.size() != complete + 1) ++torn_bad;
    } catch (const CorruptStore& e) {
      const auto& rec = e.recovered().records;
      if (rec.size() != complete) ++torn_bad;
      for (std::size_t i = 0; torn_bad == 0 && i < rec.size(); ++i) torn_bad += same_bits(*original[i], rec[i]) ? 0 : 1;
    }
  }
  fs::remove_all(dir);
  const bool pass = differing == 0 && resave_identical && torn_bad == 0;
  return {pass, "10000 records, " + std::to_string(differing) + " differing, re-save byte-identical: " +
                    (resave_identical ? "yes" : "no") + ", 20 torn cuts, " + std::to_string(torn_bad) +
                    " bad recoveries"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> known_red;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-red" && i + 1 < argc) {
      known_red.insert(argv[++i]);
    } else {
      std::cerr << "usage: memhub_acceptance [--known-red NAME]...\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"retrieval-oracle-equivalence", retrieval_oracle},
      {"rrf-correctness", rrf_correctness},
      {"curriculum-invariants", curriculum_invariants},
      {"sandbox-loop-contract", sandbox_loop_contract},
      {"judge-lookback", judge_lookback},
      {"e2e-scripted-benchmark", e2e_benchmark},
      {"memory-evolution-trend", memory_trend_check},
      {"sharing-matrix-structure", sharing_matrix_check},
      {"persistence-round-trip", persistence_roundtrip},
  };

  int unexpected = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool red_ok = !o.pass && known_red.contains(name);
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  " << o.detail
              << (red_ok ? "  [known red]" : "") << "\n";
    if (!o.pass && !red_ok) ++unexpected;
  }
  std::cout.flush();
  return unexpected == 0 ? 0 : 1;
}
