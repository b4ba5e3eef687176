#pragma once

#include <iosfwd>

namespace ttad {

// Full command-line entry point (subcommands: synth, train, detect, eval,
// ablate). Returns the process exit code; failures print one line to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ttad
