// Standalone fake shim speaking the sandbox protocol on stdin/stdout.

#include <iostream>

#include <CLI11.hpp>

#include "memhub/fake_shim.hpp"

int main(int argc, char** argv) {
  CLI::App app{"memhub-shim: deterministic sandbox shim"};
  memhub::FakeShimOptions opts;
  std::size_t mem_mb = 2048;
  app.add_flag("--real-time", opts.real_time, "sleep through hangs instead of replying at once");
  app.add_flag("--ignore-timeout", opts.ignore_timeout, "never reply to a hanging request");
  app.add_option("--mem-limit-mb", mem_mb, "allocation limit reported as MemoryError");
  CLI11_PARSE(app, argc, argv);
  opts.mem_limit_bytes = mem_mb << 20;

  std::ios::sync_with_stdio(false);
  memhub::FakeShim shim(opts);
  return memhub::serve_shim(std::cin, std::cout, shim);
}
