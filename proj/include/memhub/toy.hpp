#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "memhub/chat.hpp"

namespace memhub {

// Rule-based scripted backend for the bundled toy suite. Every toy task
// carries a line "spec: NAME = EXPR" where EXPR calls zero-argument helpers.
//
//   planner    emits "- implement NAME = EXPR", then answers with the last
//              tool output once a sub-plan succeeded. Models listed as hasty
//              answer composite specs (two or more calls) at once with a guess.
//   developer  assembles code from def blocks visible anywhere in its prompt
//              (retrieved memory or its previous attempt), resolving helper
//              calls transitively, then defines NAME and prints it. Missing
//              helpers are called anyway and fail with NameError.
//   judge      picks the path whose final answer equals the last output its
//              own trajectory shows.
//   proxies    replay per-spec step counts: success after `steps` model calls
//              with the scripted answer, or never when steps is 0.
class ToyPolicyChat final : public ChatClient {
 public:
  struct ProxyScript {
    std::size_t steps = 0;
    std::string answer;
  };

  static std::unique_ptr<ToyPolicyChat> from_json(const std::string& text);
  static std::unique_ptr<ToyPolicyChat> from_file(const std::filesystem::path& path);

  ChatReply complete(const ChatRequest& request) override;

 private:
  std::string planner(const ChatRequest& r, const std::string& user) const;
  std::string developer(const std::string& user) const;
  std::string judge(const std::string& user) const;
  std::string proxy(const std::string& user, bool react) const;

  std::set<std::string> hasty_models_;
  std::string hasty_answer_ = "42";
  // spec name -> style ("react" | "plan-execute") -> script
  std::map<std::string, std::map<std::string, ProxyScript>> proxies_;
};

// Def blocks ("def name(" at column 0 plus the indented body) found in text,
// first occurrence per name.
std::map<std::string, std::string> find_def_blocks(const std::string& text);

}  // namespace memhub
