#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bpo/oracle.hpp"

namespace bpo {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

// Entry point of the `bpo` tool: subcommands oracle-check, variance-gap,
// learn and selftest.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Fast invariant checks run by `bpo selftest`.
std::vector<oracle::CheckResult> run_selftest(std::uint64_t seed, int threads);

void print_checks(std::ostream& out, const std::vector<oracle::CheckResult>& checks);

}  // namespace bpo
