#pragma once

#include <ostream>

namespace tmvit {

// Runs the built-in invariant checks, printing one line per check to `out`.
// Returns the number of failed checks.
int run_selftest(std::ostream& out);

} // namespace tmvit
