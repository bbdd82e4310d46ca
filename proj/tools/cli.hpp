#pragma once

namespace divnorm {

// Runs one subcommand (synth | train | eval | ablate-query-strategy |
// ablate-drop-clothes | gradcheck). Returns 0 on success, 1 on validation
// errors (bad flags, bad config, missing inputs), 2 on runtime failures.
int run_cli(int argc, const char* const* argv);

}  // namespace divnorm
