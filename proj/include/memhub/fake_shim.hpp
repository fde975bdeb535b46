#pragma once

#include <iosfwd>
#include <memory>
#include <set>
#include <string>
#include <string_view>

#include "memhub/sandbox.hpp"

namespace memhub {

// Thrown out of FakeShim::handle_line when user code asks the interpreter
// process to exit (os._exit / sys.exit).
struct ShimExit {
  int code = 0;
};

// Deterministic stand-in for the sandbox shim. It interprets a small
// Python-like subset, enough for scripted coders and protocol tests:
//
//   print, assignment, def/return, if/elif/else, while, for-in-range,
//   import / from-import, raise, pip install, time.sleep, bytearray(n),
//   int/float/str values with + - * / // % and comparisons.
//
// Errors carry Python exception names and tracebacks. Loops that exceed the
// step budget and sleeps past the timeout are reported as Timeout.
class FakeShim {
 public:
  explicit FakeShim(FakeShimOptions options = {});
  ~FakeShim();

  FakeShim(const FakeShim&) = delete;
  FakeShim& operator=(const FakeShim&) = delete;

  // Handles one protocol line and returns one reply line. Malformed lines get
  // an error reply with error_kind "protocol".
  std::string handle_line(const std::string& line);

  ShimReply exec(const std::string& code, int timeout_s);
  void reset();

  const std::set<std::string>& installed() const noexcept { return installed_; }

 private:
  struct Impl;
  FakeShimOptions options_;
  std::set<std::string> installed_;
  std::unique_ptr<Impl> impl_;
};

// Request loop of the standalone shim executable: one reply per line until
// EOF. Returns the process exit code.
int serve_shim(std::istream& in, std::ostream& out, FakeShim& shim);

inline constexpr std::string_view kTruncationMarker = "\n...[truncated]\n";

}  // namespace memhub
