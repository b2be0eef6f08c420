#pragma once

#include "dgsm/error.hpp"

#include <iosfwd>

namespace dgsm {

/// 0 ok, 2 input/schema, 3 insufficient data, 4 numerical failure, 1 other.
int exit_code(ErrorCode code);

/// Entry point of the command-line tool; commands: ingest, synth,
/// measure-divergence, train, evaluate, report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dgsm
