#pragma once

#include <memory>
#include <string>

#include "fosls/twophase.hpp"

namespace fosls {

// A complete test case: parameters, boundary conditions, initial phase
// field, and (when known) exact fields plus the matching body forcing.
struct Problem {
  std::string name;
  Params params;
  BCSpec bcs;
  std::function<double(Point)> phi0;
  // Exact solution per component; empty when unknown.
  std::vector<std::function<double(Point)>> exact;
};

// Two osculating bubbles on the unit square.
Problem coalescence_problem();
// Square bubble of side 1/2 centered in the unit square.
Problem square_problem();
// Smooth steady solenoidal flow with an analytically derived forcing; the
// forcing is baked into params and matches params' coefficients. Solving one
// implicit step from zero history reproduces the exact fields up to
// discretization error.
Problem manufactured_problem();

std::shared_ptr<Space> build_problem_space(std::shared_ptr<const Mesh> mesh, int degree,
                                           const Problem& problem);

// u = 0, p = 0, V = 0, phi interpolated, B recovered as the nodal average of
// grad(phi_h); boundary values imposed.
State build_initial_state(std::shared_ptr<const Space> space, const Problem& problem);

// Nodal interpolant of the exact fields (requires problem.exact).
State exact_state(std::shared_ptr<const Space> space, const Problem& problem);

// Product-space H1 error (squared) against the exact fields over all nine
// components; exact gradients are differenced numerically.
double h1_error_squared(const State& s, const Problem& problem);

}  // namespace fosls
