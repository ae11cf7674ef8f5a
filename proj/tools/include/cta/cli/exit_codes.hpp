#pragma once

namespace cta::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFormat = 3;

}  // namespace cta::cli
