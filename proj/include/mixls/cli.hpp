#pragma once

namespace mixls {

/// Entry point behind the mixls binary. Exit codes: 0 success,
/// 2 usage/config error, 3 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace mixls
