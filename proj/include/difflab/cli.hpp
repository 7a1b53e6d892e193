#pragma once

namespace difflab {

// Full command-line entry point (subcommand dispatch, config resolution,
// artifact writing). Returns the process exit code: 0 success, 2 config or
// input error, 3 numeric failure.
int run_cli(int argc, char** argv);

}  // namespace difflab
