#pragma once

namespace ecoc {

// Entry point used by the ecoc binary and by in-process CLI tests.
// Exit codes: 0 success, 1 property/attack failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace ecoc
