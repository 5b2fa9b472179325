#pragma once

namespace windcast {

/// Subcommand driver for the windcast executable. Returns the process exit
/// code: 0 on success, 1 on validation errors (bad config/schema/usage),
/// 2 on runtime failures.
int run_cli(int argc, const char* const* argv);

}  // namespace windcast
