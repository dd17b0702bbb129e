#pragma once

#include <iosfwd>

namespace nexus::selfcheck {

/// Fast invariant self-test: dimension contracts of all five
/// architectures, layer gradient spot checks against finite differences,
/// softmax/probability contracts, morphology exactness and metric
/// identities. Prints one line per check; returns false if any fails.
bool run_all(std::ostream& out);

} // namespace nexus::selfcheck
