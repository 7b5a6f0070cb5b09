#pragma once

namespace fundus::cli {

// Full command-line entry point (synth | train | eval | infer | checkgrad).
// Exit codes: 0 success, 1 usage/config error, 2 runtime/data error,
// 3 verification failure.
int run(int argc, const char* const* argv);

}  // namespace fundus::cli
