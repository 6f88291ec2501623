#pragma once
// The citekg command line: one binary with ingest, generate, sample, ablate,
// split, qc, train, eval, sweep, report and communities subcommands.

#include <iosfwd>
#include <string>
#include <vector>

namespace citekg::cli {

// Runs one command line (without the program name). Returns the process exit
// code: 0 success, 1 internal, 2 usage or input, 3 numeric divergence,
// 4 contract violation.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace citekg::cli
