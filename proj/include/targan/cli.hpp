#pragma once

#include <iosfwd>

namespace targan {

/// Entry point for the targan tool. Returns 0 on success, 2 for a
/// configuration error and 3 for a runtime or numerical failure.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace targan
