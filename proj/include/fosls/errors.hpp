#pragma once

#include <stdexcept>

namespace fosls {

// Thrown when a direction of nonpositive curvature shows up in CG; the
// assembled system was expected to be SPD on the constrained subspace.
struct NotSpdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Newton (or the linear solver inside it) failed to make progress.
struct NonconvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fosls
