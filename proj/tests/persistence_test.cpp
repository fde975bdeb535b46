#include <doctest.h>

#include <cstring>
#include <fstream>

#include "memhub/error.hpp"
#include "memhub/persistence.hpp"
#include "test_util.hpp"

using namespace memhub;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

// Bitwise identity, so -0.0 and 0.0 differ and NaN payloads would matter.
bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_bits(const MemoryRecord& a, const MemoryRecord& b) {
  if (a.id != b.id || !(a.owner == b.owner) || a.kind != b.kind || a.source_task_id != b.source_task_id ||
      a.chunk_text != b.chunk_text || a.summary != b.summary || !same_bits(a.dense_vec, b.dense_vec) ||
      a.sparse_vec.size() != b.sparse_vec.size()) {
    return false;
  }
  for (auto i = a.sparse_vec.begin(), j = b.sparse_vec.begin(); i != a.sparse_vec.end(); ++i, ++j) {
    if (i->first != j->first || std::memcmp(&i->second, &j->second, sizeof(double)) != 0) return false;
  }
  return true;
}

void fill(MemoryRepository& repo, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(0.0, 3.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = testing::make_record("r" + std::to_string(i), repo.owner(), repo.kind(),
                                  testing::random_unit(rng, repo.dense_dim()));
    r.chunk_text = "## step " + std::to_string(i) + " [code]\nunicode \xe2\x9c\x93 \"q\" \\ tab\t";
    for (int t = 0; t < 3; ++t) r.sparse_vec["term" + std::to_string(rng() % 50)] = w(rng);
    if (i % 7 == 0) r.dense_vec[0] = -0.0 * r.dense_vec[0];
    normalize_in_place(r.dense_vec);
    repo.store(std::move(r));
  }
}

}  // namespace

TEST_CASE("empty store round-trip") {
  const auto dir = testing::temp_dir("store-empty");
  MemoryRepository repo(AgentKind::planner(), MemoryKind::kEpisodic, 8);
  save_store(repo, dir / "s.jsonl", "hash-8");
  const auto c = load_store(dir / "s.jsonl", "hash-8", 8);
  CHECK(c.manifest.record_count == 0);
  CHECK(c.records.empty());
  CHECK(c.manifest.owner == AgentKind::planner());
  CHECK(c.manifest.kind == MemoryKind::kEpisodic);
  std::filesystem::remove_all(dir);
}

TEST_CASE("1000-record store is bit-identical after round-trip") {
  const auto dir = testing::temp_dir("store-1000");
  MemoryRepository repo(AgentKind::developer(), MemoryKind::kEpisodic, 24);
  fill(repo, 1000, 11);
  save_store(repo, dir / "s.jsonl", "hash-24");
  const auto bytes = read_file(dir / "s.jsonl");

  MemoryRepository back(AgentKind::developer(), MemoryKind::kEpisodic, 24);
  load_into(back, dir / "s.jsonl", "hash-24");
  const auto a = repo.snapshot();
  const auto b = back.snapshot();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_bits(*a[i], *b[i]));

  save_store(back, dir / "again.jsonl", "hash-24");
  CHECK(read_file(dir / "again.jsonl") == bytes);
  CHECK_FALSE(std::filesystem::exists(dir / "s.jsonl.tmp"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("incompatible stores are rejected") {
  const auto dir = testing::temp_dir("store-compat");
  MemoryRepository repo(AgentKind::planner(), MemoryKind::kSemantic, 512);
  save_store(repo, dir / "s.jsonl", "remote");
  for (const auto& [name, dim] : std::vector<std::pair<std::string, std::size_t>>{{"remote", 1024}, {"other", 512}}) {
    try {
      load_store(dir / "s.jsonl", name, dim);
      FAIL("expected IncompatibleStore");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIncompatibleStore);
    }
  }
  MemoryRepository wrong(AgentKind::developer(), MemoryKind::kSemantic, 512);
  CHECK_THROWS_AS(load_into(wrong, dir / "s.jsonl", "remote"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("torn and truncated files recover every complete record") {
  const auto dir = testing::temp_dir("store-torn");
  MemoryRepository repo(AgentKind::planner(), MemoryKind::kEpisodic, 16);
  fill(repo, 50, 3);
  save_store(repo, dir / "s.jsonl", "h");
  const auto bytes = read_file(dir / "s.jsonl");

  SUBCASE("cut inside the last record") {
    write_text(dir / "t.jsonl", bytes.substr(0, bytes.size() - 20));
    try {
      load_store(dir / "t.jsonl", "h", 16);
      FAIL("expected CorruptStore");
    } catch (const CorruptStore& e) {
      CHECK(e.recovered().records.size() == 49);
      CHECK(e.last_good_index() == std::optional<std::size_t>(48));
      CHECK(e.recovered().records.back().id == "r48");
    }
  }
  SUBCASE("whole trailing lines missing") {
    auto cut = bytes.substr(0, bytes.size() - 1);
    cut = cut.substr(0, cut.rfind('\n') + 1);
    write_text(dir / "t.jsonl", cut);
    try {
      load_store(dir / "t.jsonl", "h", 16);
      FAIL("expected CorruptStore");
    } catch (const CorruptStore& e) {
      CHECK(e.recovered().records.size() == 49);
    }
  }
  SUBCASE("damaged middle line") {
    auto lines = bytes;
    const auto p = lines.find("\"r10\"");
    lines.replace(p, 5, "{{{{{");
    write_text(dir / "t.jsonl", lines);
    try {
      load_store(dir / "t.jsonl", "h", 16);
      FAIL("expected CorruptStore");
    } catch (const CorruptStore& e) {
      CHECK(e.recovered().records.size() == 10);
    }
  }
  SUBCASE("missing final newline alone is fine") {
    write_text(dir / "t.jsonl", bytes.substr(0, bytes.size() - 1));
    CHECK(load_store(dir / "t.jsonl", "h", 16).records.size() == 50);
  }
  SUBCASE("no manifest") {
    write_text(dir / "t.jsonl", "");
    CHECK_THROWS_AS(load_store(dir / "t.jsonl", "h", 16), CorruptStore);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("tool episodes and whole hubs round-trip") {
  const auto dir = testing::temp_dir("hub");
  MemoryHub hub(16);
  fill(hub.episodic(AgentKind::planner()), 5, 1);
  fill(hub.semantic(AgentKind::developer()), 3, 2);
  hub.tools().add({"tool-a", "print(1)",
                   {{"prin(1)", "s#1", Feedback::error(ErrorKind::kRuntimeError, "NameError: prin", "Traceback\nNameError: prin")},
                    {"print(1)", "s#2", Feedback::success("1\n")}},
                   "t", "title", "say \xc3\xa9"});
  save_hub(hub, dir, "h16");

  MemoryHub back(16);
  load_hub(back, dir, "h16");
  CHECK(back.tools().episodes() == hub.tools().episodes());
  for (const auto& agent : {AgentKind::planner(), AgentKind::developer()}) {
    const auto a = hub.episodic(agent).snapshot();
    const auto b = back.episodic(agent).snapshot();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_bits(*a[i], *b[i]));
    CHECK(back.semantic(agent).size() == hub.semantic(agent).size());
  }
  MemoryHub empty(16);
  load_hub(empty, dir / "nothing-here", "h16");
  CHECK(empty.tools().size() == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("task ingest") {
  const auto tasks = parse_tasks(
      "{\"task_id\":\"a\",\"question\":\"Q1\",\"level\":1}\n"
      "{\"task_id\":\"b\",\"question\":\"Q2\",\"level\":\"2\",\"file_name\":\"x.pdf\"}\n"
      "\n"
      "{\"task_id\":\"c\",\"question\":\"Q3\",\"level\":3,\"final_answer\":\"42\"}\n");
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[1].human_difficulty == 2);
  CHECK(tasks[1].attachments == std::vector<std::string>{"x.pdf"});
  CHECK(tasks[2].ground_truth == std::optional<std::string>("42"));
  CHECK_FALSE(tasks[0].ground_truth.has_value());

  try {
    parse_tasks("{\"task_id\":\"a\",\"question\":\"Q\",\"level\":1}\n{\"task_id\":\"b\",\"question\":\"Q\"}\n");
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("level") != std::string::npos);
  }
  try {
    parse_tasks("{\"task_id\":\"dup\",\"question\":\"Q\",\"level\":1}\n{\"task_id\":\"dup\",\"question\":\"Q\",\"level\":1}\n");
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(std::string(e.what()).find("dup") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_tasks("{\"task_id\":\"a\",\"question\":\"Q\",\"level\":4}\n"), IngestError);
  CHECK(parse_tasks("{\"task_id\":\"a\",\"question\":\"Q\",\"level\":4}\n", 4).size() == 1);
  CHECK_THROWS_AS(parse_tasks("not json\n"), IngestError);
  CHECK(parse_tasks("").empty());
}

TEST_CASE("demo ingest stores into the target agent") {
  HashingEmbedder emb(32, 1);
  LexicalSparseEncoder sparse;
  MemoryHub hub(32);
  const auto demos = parse_demos(
      "{\"title\":\"Fetch a page\",\"description\":\"Downloads a URL.\",\"code\":\"def fetch(u):\\n    pass\","
      "\"tags\":[\"web\"],\"target_agent\":\"developer\"}\n"
      "{\"title\":\"Split the work\",\"description\":\"Break a task into steps.\",\"code\":\"\","
      "\"tags\":[],\"target_agent\":\"planner\"}\n");
  CHECK(store_demos(demos, hub, emb, sparse) == 2);
  CHECK(hub.semantic(AgentKind::planner()).size() == 1);
  CHECK(hub.semantic(AgentKind::developer()).size() == 1);
  const auto rec = hub.semantic(AgentKind::developer()).find("sem-developer-0000");
  REQUIRE(rec != nullptr);
  CHECK(rec->chunk_text == "Fetch a page\n\nDownloads a URL.\n\n```python\ndef fetch(u):\n    pass\n```");
  CHECK(rec->chunk_text.find("Downloads") < rec->chunk_text.find("```"));
  CHECK_FALSE(rec->source_task_id.has_value());

  try {
    parse_demos("{\"title\":\"T\",\"description\":\"\",\"code\":\"\",\"tags\":[],\"target_agent\":\"planner\"}\n");
    FAIL("expected IngestError");
  } catch (const IngestError& e) {
    CHECK(e.line() == 1);
  }
  CHECK_THROWS_AS(parse_demos("{\"title\":\"T\",\"description\":\"d\",\"code\":\"\",\"target_agent\":\"judge\"}\n"),
                  IngestError);
}

TEST_CASE("demo ingest is idempotent and self-retrievable") {
  const auto dir = testing::temp_dir("demos");
  const std::vector<std::string> topics = {
      "wayback snapshot", "pdf table",     "chess position", "csv pivot",     "audio transcript",
      "wiki infobox",     "orbit period",  "zip archive",    "image caption", "weather station",
      "stock ticker",     "genome strand", "recipe scaling", "flight route",  "currency rates",
      "poem meter",       "tide chart",    "patent claims",  "census table",  "bird migration"};
  std::string file;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    file += "{\"title\":\"" + topics[i] + " helper\",\"description\":\"Works with " + topics[i] +
            " data.\",\"code\":\"def helper_" + std::to_string(i) + "():\\n    return 1\",\"tags\":[],"
            "\"target_agent\":\"" + (i % 2 ? "developer" : "planner") + "\"}\n";
  }
  write_text(dir / "demos.jsonl", file);

  HashingEmbedder emb(64, 0);
  LexicalSparseEncoder sparse;
  MemoryHub a(64), b(64);
  CHECK(ingest_demos(dir / "demos.jsonl", a, emb, sparse) == 20);
  CHECK(ingest_demos(dir / "demos.jsonl", b, emb, sparse) == 20);
  save_hub(a, dir / "a", emb.name());
  save_hub(b, dir / "b", emb.name());
  for (const auto* f : {"planner-semantic.jsonl", "developer-semantic.jsonl"}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }

  for (std::size_t i = 0; i < topics.size(); ++i) {
    const auto agent = i % 2 ? AgentKind::developer() : AgentKind::planner();
    const auto q = make_query(agent, topics[i] + " helper", "", emb, sparse);
    const auto top = rank_repository(q, a.semantic(agent), 1);
    REQUIRE(top.size() == 1);
    CHECK(top[0].record->summary == topics[i] + " helper");
  }
  std::filesystem::remove_all(dir);
}
