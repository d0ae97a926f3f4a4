#pragma once

#include <ostream>

namespace detectgnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// detectgnn <synth|train|eval|stream|bench> [flags]. Returns the exit code:
/// 0 success, 2 usage or configuration error, 3 runtime or numeric error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace detectgnn::cli
