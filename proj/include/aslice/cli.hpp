#pragma once

#include <iosfwd>

namespace aslice {

// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace aslice
