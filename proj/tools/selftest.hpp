#pragma once

#include <string>

#include "msnode/shooting.hpp"

namespace msnode::cli {

// Runs the property suites (finite differences, operators against
// independently assembled Jacobians, transpose identities, CG against the
// direct KKT solve, assembly cost, dense against matrix-free training).
// Instances are visited from the smallest (m, n) up, so a failure names the
// smallest failing case. Returns true when every suite passes.
bool run_selftest(Mutation mutation, bool verbose);

Mutation mutation_from_string(const std::string& s);

}  // namespace msnode::cli
