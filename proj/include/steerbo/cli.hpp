#pragma once

namespace steerbo {

// Parses and executes one command line (bo-run, train, evaluate,
// preprocess, gradcheck, synth-data). Returns the process exit code:
// 0 success, 1 unexpected failure, 2 configuration error, 3 data error,
// 4 numeric failure.
int run_cli(int argc, const char* const* argv);

} // namespace steerbo
