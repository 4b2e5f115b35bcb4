// Command-line front end: gen-data / train / eval / report subcommands over a
// single JSON config with flag overrides (flags win).
#pragma once

namespace wm {

// Exit codes: 0 ok, 1 runtime failure, 2 usage error.
int cli_main(int argc, char** argv);

}  // namespace wm
