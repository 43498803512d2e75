#pragma once
// Subcommand dispatcher behind the cbanet binary. Lives in the library so
// tests can drive it in-process; main() is a one-liner.

namespace cbanet {

// Exit status: 0 success, 1 validation/config error, 2 runtime failure.
int cli_main(int argc, const char* const* argv);

}  // namespace cbanet
