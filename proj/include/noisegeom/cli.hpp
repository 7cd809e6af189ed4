#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace noisegeom {

/// Command-line entry. args excludes the program name.
/// Exit codes: 0 success, 1 validation or usage error, 2 numerical failure.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace noisegeom
