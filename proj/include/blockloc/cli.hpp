#pragma once

namespace blockloc::cli {

/// Entry point for the command-line tool.  Subcommands:
///   simulate        run a seeded ensemble at one threshold setting
///   roc             sweep the threshold grids and emit one row per point
///   blocking-stats  sample the unobstructed-channel count distribution
///   oracle-compare  exhaustive-search agreement harness on tiny instances
///   replay          run the matcher on a stored measurement file
/// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
int run(int argc, char** argv);

}  // namespace blockloc::cli
