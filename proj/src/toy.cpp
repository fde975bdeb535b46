#include "memhub/toy.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <optional>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "memhub/error.hpp"

namespace memhub {

namespace {

struct Spec {
  std::string name;
  std::string expr;
};

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string section(const std::string& user, const std::string& header) {
  const auto start = user.find(header + "\n");
  if (start == std::string::npos) return {};
  const auto body = start + header.size() + 1;
  const auto end = user.find("\n## ", body);
  return user.substr(body, end == std::string::npos ? std::string::npos : end - body);
}

std::optional<Spec> find_spec(const std::string& text, const std::string& prefix) {
  const std::regex re("^" + prefix + R"(\s*(\w+)\s*=\s*(.+?)\s*$)");
  for (const auto& line : lines_of(text)) {
    std::smatch m;
    if (std::regex_match(line, m, re)) return Spec{m[1].str(), m[2].str()};
  }
  return std::nullopt;
}

std::vector<std::string> calls_in(const std::string& text) {
  static const std::regex call(R"(\b([A-Za-z_]\w*)\(\))");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), call); it != std::sregex_iterator(); ++it) {
    const auto name = (*it)[1].str();
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

std::string field(const std::string& text, const std::string& key) {
  for (const auto& line : lines_of(text)) {
    if (line.rfind(key, 0) == 0) return line.substr(key.size());
  }
  return {};
}

}  // namespace

std::map<std::string, std::string> find_def_blocks(const std::string& text) {
  static const std::regex head(R"(^def ([A-Za-z_]\w*)\(.*$)");
  std::map<std::string, std::string> out;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::smatch m;
    if (!std::regex_match(lines[i], m, head)) continue;
    std::size_t end = i + 1;
    std::size_t last = i;
    while (end < lines.size() && (lines[end].empty() || lines[end][0] == ' ' || lines[end][0] == '\t')) {
      if (!lines[end].empty()) last = end;
      ++end;
    }
    std::string block;
    for (std::size_t k = i; k <= last; ++k) block += lines[k] + (k == last ? "" : "\n");
    out.emplace(m[1].str(), std::move(block));
    i = last;
  }
  return out;
}

std::unique_ptr<ToyPolicyChat> ToyPolicyChat::from_json(const std::string& text) {
  auto chat = std::make_unique<ToyPolicyChat>();
  try {
    const auto o = nlohmann::json::parse(text);
    if (o.value("kind", "") != "toy") throw Error(ErrorCode::kConfigError, "script kind is not \"toy\"");
    const auto hasty = o.value("hasty_models", nlohmann::json::array());
    for (const auto& m : hasty) chat->hasty_models_.insert(m.get<std::string>());
    chat->hasty_answer_ = o.value("hasty_answer", chat->hasty_answer_);
    const auto proxies = o.value("proxies", nlohmann::json::object());
    for (const auto& [name, styles] : proxies.items()) {
      for (const auto& [style, s] : styles.items()) {
        chat->proxies_[name][style] = {s.at("steps").get<std::size_t>(), s.at("answer").get<std::string>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("toy script: ") + e.what());
  }
  return chat;
}

std::unique_ptr<ToyPolicyChat> ToyPolicyChat::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read toy script " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ChatReply ToyPolicyChat::complete(const ChatRequest& r) {
  if (r.messages.size() < 2) throw Error(ErrorCode::kModelUnavailable, "toy policy needs a user message");
  const auto& user = r.messages[1].content;
  if (user.find("## instruction\n") != std::string::npos) {
    return {proxy(user, r.messages[0].content.find("ReAct") != std::string::npos)};
  }
  if (user.find("CHOSEN PATH") != std::string::npos) return {judge(user)};
  const auto state = section(user, "## state");
  if (state.rfind("intent:", 0) == 0) return {developer(user)};
  if (state.rfind("step:", 0) == 0) return {planner(r, user)};
  throw Error(ErrorCode::kModelUnavailable, "toy policy cannot classify the request");
}

std::string ToyPolicyChat::planner(const ChatRequest& r, const std::string& user) const {
  const auto spec = find_spec(section(user, "## task"), "spec:");
  if (!spec) return "FINAL ANSWER: unknown";
  const auto state = section(user, "## state");
  if (field(state, "last result: ") == "success") return "FINAL ANSWER: " + field(state, "last output: ");
  if (hasty_models_.contains(r.model) && calls_in(spec->expr).size() >= 2) {
    return "FINAL ANSWER: " + hasty_answer_;
  }
  return "- implement " + spec->name + " = " + spec->expr;
}

std::string ToyPolicyChat::developer(const std::string& user) const {
  const auto intent = find_spec(section(user, "## state"), "intent: implement");
  if (!intent) return "```python\nprint('no intent')\n```";
  const auto defs = find_def_blocks(user);

  std::vector<std::string> order;
  std::set<std::string> seen{intent->name};
  std::function<void(const std::string&)> visit = [&](const std::string& name) {
    if (!seen.insert(name).second) return;
    const auto it = defs.find(name);
    if (it == defs.end()) return;
    for (const auto& dep : calls_in(it->second)) visit(dep);
    order.push_back(it->second);
  };
  for (const auto& name : calls_in(intent->expr)) visit(name);

  std::string code;
  for (const auto& block : order) code += block + "\n\n\n";
  code += "def " + intent->name + "():\n    return " + intent->expr + "\n\n\nprint(" + intent->name + "())";
  return "```python\n" + code + "\n```";
}

std::string ToyPolicyChat::judge(const std::string& user) const {
  static const std::regex path_head(R"(^# path (\d+)$)");
  const auto lines = lines_of(user);
  std::string first;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::smatch m;
    if (!std::regex_match(lines[i], m, path_head)) continue;
    const auto id = m[1].str();
    if (first.empty()) first = id;
    std::string answer, last_output;
    for (std::size_t j = i + 1; j < lines.size() && !std::regex_match(lines[j], path_head); ++j) {
      if (lines[j].rfind("final answer: ", 0) == 0) answer = lines[j].substr(14);
      if (lines[j].rfind("last output: ", 0) == 0) last_output = lines[j].substr(13);
    }
    if (!answer.empty() && answer == last_output) {
      return "Path " + id + " reports " + answer + ", which its own tool output confirms.\nCHOSEN PATH: " + id;
    }
  }
  return "No answer is confirmed by tool output.\nCHOSEN PATH: " + (first.empty() ? "0" : first);
}

std::string ToyPolicyChat::proxy(const std::string& user, bool react) const {
  const auto spec = find_spec(section(user, "## task"), "spec:");
  ProxyScript script;
  if (spec) {
    if (const auto it = proxies_.find(spec->name); it != proxies_.end()) {
      if (const auto s = it->second.find(react ? "react" : "plan-execute"); s != it->second.end()) script = s->second;
    }
  }
  const auto instruction = section(user, "## instruction");
  if (react) {
    std::size_t observed = 0;
    for (auto p = user.find("observation:"); p != std::string::npos; p = user.find("observation:", p + 1)) ++observed;
    if (script.steps > 0 && observed + 1 >= script.steps) return "FINAL ANSWER: " + script.answer;
    return "```python\nprint(" + std::to_string(observed) + ")\n```";
  }
  if (instruction.rfind("Write the plan", 0) == 0) {
    // Steps = plan + one call per bullet + answer; a failing script over-plans.
    const std::size_t bullets = script.steps >= 2 ? script.steps - 2 : 16;
    std::string plan;
    for (std::size_t i = 0; i < bullets; ++i) plan += "- part " + std::to_string(i + 1) + "\n";
    return plan;
  }
  if (instruction.rfind("Write code", 0) == 0) return "```python\nprint('step')\n```";
  return "FINAL ANSWER: " + (script.steps > 0 ? script.answer : std::string("unknown"));
}

}  // namespace memhub
