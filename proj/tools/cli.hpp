#pragma once

namespace verlab::cli {

/// Entry point of the `verlab` command. Returns the process exit code:
/// 0 success, 1 some samples failed, 2 fatal config or IO error.
int run(int argc, char** argv);

}  // namespace verlab::cli
