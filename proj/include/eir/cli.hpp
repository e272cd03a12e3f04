#pragma once

namespace eir::cli {

/// Entry point for the eir tool: train / eval / ablate / sweep / project /
/// diagnose. Returns the process exit code (0 ok, 2 config, 3 data,
/// 4 numeric).
int run(int argc, const char* const* argv);

}  // namespace eir::cli
