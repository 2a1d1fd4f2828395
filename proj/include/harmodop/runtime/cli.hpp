// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

#include "harmodop/error.hpp"

namespace harmodop::runtime {

/// Process exit status for a failure category. Success is 0; anything that
/// is not a categorized error exits with 70.
int exit_code(ErrorCategory category) noexcept;
inline constexpr int kInternalErrorExit = 70;

/// Entry point behind the `harmodop` tool. Failures print one line
/// `error: <category>: <message>` on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace harmodop::runtime
