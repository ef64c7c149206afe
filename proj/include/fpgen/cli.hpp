#pragma once

namespace fpgen {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

// Subcommands: preprocess, synth-data, train-gan, train-sr, generate, evaluate, report.
// Every run that has --out writes <out>/resolved_config.json before doing work.
int parse_and_dispatch(int argc, const char* const* argv);

}  // namespace fpgen
