#pragma once

namespace latentflow {

// Entry point behind the `latentflow` binary; separated so tests can drive
// the CLI in-process and assert on exit codes.
int cli_main(int argc, const char* const* argv);

}  // namespace latentflow
