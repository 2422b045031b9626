#pragma once

#include <ostream>

namespace efemb {

/// Entry point of the efemb command-line tool. Returns the process exit
/// code: 0 success, 2 usage or configuration, 3 data, 4 numeric abort.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace efemb
