#pragma once

namespace geox::cli {

/// Parses flags, runs one subcommand and maps failures to exit codes:
/// 2 bad flags or config, 3 I/O or format failure, 4 missing input,
/// 5 non-finite loss.
int run(int argc, char** argv);

}  // namespace geox::cli
