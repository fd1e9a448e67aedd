#pragma once

namespace cmrplan::cli {

// Exit codes: 0 success, 1 domain error, 2 usage error.
int run(int argc, char** argv);

} // namespace cmrplan::cli
