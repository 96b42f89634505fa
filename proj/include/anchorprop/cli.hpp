#pragma once

#include <iosfwd>

namespace anchorprop {

// Exit codes: 0 success, 1 usage error, 2 data or validation error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

int cli_dispatch(int argc, const char* const* argv);
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace anchorprop
