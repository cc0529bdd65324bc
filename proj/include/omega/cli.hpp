#pragma once

namespace omega {

// Entry point behind the omega_seg binary; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace omega
