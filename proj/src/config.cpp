#include "memhub/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "memhub/error.hpp"
#include "memhub/persistence.hpp"

namespace memhub {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, sep)) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

[[noreturn]] void bad(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::kConfigError, "line " + std::to_string(line) + ": " + msg);
}

template <typename T>
T parse_number(const std::string& v, std::size_t line, const std::string& key) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad(line, key + " expects a number, got \"" + v + "\"");
  return out;
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& key) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  bad(line, key + " expects true or false, got \"" + v + "\"");
}

std::vector<ProxyConfig> parse_proxies(const std::string& v, std::size_t line) {
  std::vector<ProxyConfig> out;
  for (const auto& item : split_list(v)) {
    const auto parts = split_list(item, ':');
    if (parts.size() != 3) bad(line, "proxy \"" + item + "\" is not style:model:weight");
    ProxyConfig p;
    try {
      p.style = parse_proxy_style(parts[0]);
    } catch (const Error&) {
      bad(line, "unknown proxy style \"" + parts[0] + "\"");
    }
    p.name = parts[1];
    p.model = ModelProfile{parts[1], "", 1.0, ModelProfile::Role::kProxy};
    p.weight = parse_number<double>(parts[2], line, "proxy weight");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::string_view to_string(BackendMode mode) { return mode == BackendMode::kLive ? "live" : "scripted"; }

BackendMode parse_backend_mode(std::string_view text) {
  if (text == "scripted") return BackendMode::kScripted;
  if (text == "live") return BackendMode::kLive;
  throw Error(ErrorCode::kConfigError, "backend must be scripted or live, got \"" + std::string(text) + "\"");
}

RunConfig default_run_config() {
  RunConfig c;
  for (const char* name : {"path-a", "path-b", "path-c"}) c.paths.push_back(ModelProfile{name, "", 1.0, ModelProfile::Role::kPath});
  c.proxies = {
      ProxyConfig{"proxy-react", ProxyStyle::kReactLike, 0.5,
                  ModelProfile{"proxy-react", "", 1.0, ModelProfile::Role::kProxy}},
      ProxyConfig{"proxy-plan", ProxyStyle::kPlanExecuteLike, 0.5,
                  ModelProfile{"proxy-plan", "", 1.0, ModelProfile::Role::kProxy}},
  };
  return c;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c = default_run_config();
  std::optional<std::size_t> paths_k;
  std::optional<double> path_temperature;
  std::optional<std::size_t> proxy_cap;
  auto& o = c.orchestrator;

  const auto resolve = [&](const std::string& v) {
    const std::filesystem::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };

  using Setter = std::function<void(const std::string&, std::size_t, const std::string&)>;
  const auto size_key = [](std::size_t& field) -> Setter {
    return [&field](const std::string& v, std::size_t line, const std::string& k) {
      field = parse_number<std::size_t>(v, line, k);
    };
  };
  const auto int_key = [](int& field) -> Setter {
    return [&field](const std::string& v, std::size_t line, const std::string& k) {
      field = parse_number<int>(v, line, k);
    };
  };
  const auto bool_key = [](bool& field) -> Setter {
    return [&field](const std::string& v, std::size_t line, const std::string& k) { field = parse_bool(v, line, k); };
  };

  const std::map<std::string, Setter> setters = {
      {"tasks", [&](const std::string& v, std::size_t, const std::string&) { c.tasks = resolve(v); }},
      {"demos", [&](const std::string& v, std::size_t, const std::string&) { c.demos = resolve(v); }},
      {"store", [&](const std::string& v, std::size_t, const std::string&) { c.store = resolve(v); }},
      {"out", [&](const std::string& v, std::size_t, const std::string&) { c.out = resolve(v); }},
      {"procedural", [&](const std::string& v, std::size_t, const std::string&) { c.procedural = resolve(v); }},
      {"backend",
       [&](const std::string& v, std::size_t line, const std::string&) {
         try {
           c.backend = parse_backend_mode(v);
         } catch (const Error& e) {
           bad(line, e.what());
         }
       }},
      {"script", [&](const std::string& v, std::size_t, const std::string&) { c.script = resolve(v); }},
      {"chat_endpoint", [&](const std::string& v, std::size_t, const std::string&) { c.chat_endpoint = v; }},
      {"embed_endpoint", [&](const std::string& v, std::size_t, const std::string&) { c.embed_endpoint = v; }},
      {"embed_model", [&](const std::string& v, std::size_t, const std::string&) { c.embed_model = v; }},
      {"sandbox",
       [&](const std::string& v, std::size_t line, const std::string&) {
         if (v == "fake") c.sandbox = SandboxMode::kFake;
         else if (v == "process") c.sandbox = SandboxMode::kProcess;
         else bad(line, "sandbox must be fake or process");
       }},
      {"shim_command",
       [&](const std::string& v, std::size_t, const std::string&) { c.shim_command = split_list(v, ' '); }},
      {"paths",
       [&](const std::string& v, std::size_t line, const std::string&) {
         c.paths.clear();
         for (const auto& name : split_list(v)) c.paths.push_back(ModelProfile{name, "", 1.0, ModelProfile::Role::kPath});
         if (c.paths.empty()) bad(line, "paths lists no models");
       }},
      {"paths_k",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         paths_k = parse_number<std::size_t>(v, line, k);
       }},
      {"path_temperature",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         path_temperature = parse_number<double>(v, line, k);
       }},
      {"judge_model", [&](const std::string& v, std::size_t, const std::string&) { c.judge_model.name = v; }},
      {"judge_temperature",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         c.judge_model.temperature = parse_number<double>(v, line, k);
       }},
      {"planner_semantic_k", size_key(o.planner_limits.semantic_k)},
      {"planner_episodic_k", size_key(o.planner_limits.episodic_k)},
      {"developer_semantic_k", size_key(o.developer_limits.semantic_k)},
      {"developer_episodic_k", size_key(o.developer_limits.episodic_k)},
      {"rrf_k", int_key(o.rrf_k)},
      {"max_chunk_chars", size_key(o.max_chunk_chars)},
      {"outer_max_steps", size_key(o.outer_max_steps)},
      {"judge_lookback", size_key(o.judge_lookback)},
      {"max_reasks", size_key(o.max_reasks)},
      {"max_iters", size_key(o.max_iters)},
      {"timeout_s", int_key(o.limits.timeout_s)},
      {"mem_mb", int_key(o.limits.mem_mb)},
      {"episodic", bool_key(o.episodic_retrieval)},
      {"parallel_paths", bool_key(o.parallel_paths)},
      {"curriculum", bool_key(c.curriculum)},
      {"levels", size_key(c.curriculum_params.levels)},
      {"window", size_key(c.curriculum_params.window)},
      {"promote_rate",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         c.curriculum_params.promote_rate = parse_number<double>(v, line, k);
       }},
      {"proxies", [&](const std::string& v, std::size_t line, const std::string&) { c.proxies = parse_proxies(v, line); }},
      {"proxy_step_cap",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         proxy_cap = parse_number<std::size_t>(v, line, k);
       }},
      {"human_levels", int_key(c.human_levels)},
      {"dense_dim", size_key(c.dense_dim)},
      {"embed_seed",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         c.embed_seed = parse_number<std::uint64_t>(v, line, k);
       }},
      {"summarizer", [&](const std::string& v, std::size_t, const std::string&) { c.summarizer = v; }},
      {"seed",
       [&](const std::string& v, std::size_t line, const std::string& k) {
         c.seed = parse_number<std::uint64_t>(v, line, k);
       }},
  };

  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto l = trim(raw);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string::npos) bad(line, "expected key = value");
    const auto key = trim(std::string_view(l).substr(0, eq));
    const auto value = trim(std::string_view(l).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) bad(line, "unknown key \"" + key + "\"");
    if (!seen.insert(key).second) bad(line, "duplicate key \"" + key + "\"");
    it->second(value, line, key);
  }

  if (paths_k) {
    if (!seen.contains("paths")) {
      c.paths.clear();
      for (std::size_t i = 0; i < *paths_k; ++i) c.paths.push_back(ModelProfile{"path-" + std::to_string(i + 1), "", 1.0, ModelProfile::Role::kPath});
    } else if (*paths_k != c.paths.size()) {
      throw Error(ErrorCode::kConfigError, "paths_k is " + std::to_string(*paths_k) + " but paths lists " +
                                               std::to_string(c.paths.size()) + " models");
    }
  }
  if (path_temperature) {
    for (auto& p : c.paths) p.temperature = *path_temperature;
  }
  if (proxy_cap) {
    for (auto& p : c.proxies) p.step_cap = *proxy_cap;
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, "cannot read config " + file.string());
  }
  return parse_run_config(text, file.parent_path());
}

void validate(const RunConfig& c) {
  const auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfigError, msg); };
  if (c.tasks.empty()) fail("no task file configured");
  if (!std::filesystem::is_regular_file(c.tasks)) fail("task file " + c.tasks.string() + " not found");
  if (c.demos && !std::filesystem::is_regular_file(*c.demos)) fail("demo file " + c.demos->string() + " not found");
  if (c.backend == BackendMode::kLive) {
    if (c.chat_endpoint.empty() || c.embed_endpoint.empty()) {
      fail("live backend requires chat_endpoint and embed_endpoint");
    }
  } else if (!c.script) {
    fail("scripted backend requires a script file");
  } else if (!std::filesystem::is_regular_file(*c.script)) {
    fail("script file " + c.script->string() + " not found");
  }
  if (c.sandbox == SandboxMode::kProcess && c.shim_command.empty()) fail("process sandbox requires shim_command");
  if (c.paths.empty()) fail("at least one path model is required");
  for (const auto& p : c.paths) {
    if (p.name.empty()) fail("path model names must not be empty");
    validate(p);
  }
  validate(c.judge_model);
  if (c.proxies.empty()) fail("at least one difficulty proxy is required");
  double weights = 0;
  for (const auto& p : c.proxies) {
    if (p.weight < 0) fail("proxy weights must not be negative");
    if (p.step_cap == 0) fail("proxy_step_cap must be positive");
    weights += p.weight;
  }
  if (weights <= 0) fail("proxy weights must sum to a positive value");
  if (c.curriculum_params.levels != kDefaultLevels) {
    fail("only " + std::to_string(kDefaultLevels) + " re-estimated levels are supported");
  }
  if (c.curriculum_params.window == 0) fail("window must be positive");
  if (c.curriculum_params.promote_rate < 0 || c.curriculum_params.promote_rate > 1) {
    fail("promote_rate must lie in [0, 1]");
  }
  if (c.human_levels < 1) fail("human_levels must be positive");
  if (c.dense_dim == 0) fail("dense_dim must be positive");
  if (c.summarizer != "outline" && c.summarizer != "identity") {
    fail("summarizer must be outline or identity");
  }
  if (c.orchestrator.outer_max_steps == 0 || c.orchestrator.max_iters == 0) {
    fail("outer_max_steps and max_iters must be positive");
  }
  if (c.orchestrator.limits.timeout_s <= 0) fail("timeout_s must be positive");
  if (c.procedural) {
    for (const char* f : {"planner.md", "developer.md", "judge.md"}) {
      if (!std::filesystem::is_regular_file(*c.procedural / f)) {
        fail("procedural file " + (*c.procedural / f).string() + " not found");
      }
    }
  }
}

ProceduralMemory parse_procedural(const std::string& text, AgentKind agent) {
  ProceduralMemory p{std::move(agent), "", ""};
  const auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
  };
  std::size_t sep = std::string::npos;
  if (text.rfind("---\n", 0) == 0) sep = 0;
  else if (const auto pos = text.find("\n---\n"); pos != std::string::npos) sep = pos + 1;
  if (sep == std::string::npos) {
    p.system_prompt = strip(text);
  } else {
    p.system_prompt = strip(text.substr(0, sep));
    p.behavioral_guidelines = strip(text.substr(sep + 4));
  }
  return p;
}

}  // namespace memhub
