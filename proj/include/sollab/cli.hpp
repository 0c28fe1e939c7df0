#pragma once

#include <string>
#include <vector>

namespace sollab {

// Experiment driver. Subcommands: tails, diam, correlate, clt, tower-tv,
// couple, e3-audit, escape. Returns the process exit status; on error the
// module message is printed verbatim and partial outputs are removed.
int run_cli(const std::vector<std::string>& args);

}  // namespace sollab
