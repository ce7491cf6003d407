#pragma once

#include <memory>

#include "fosls/twophase.hpp"

namespace fosls {

// Elementwise local functional values used as error indicators.
struct ErrorField {
  std::vector<double> local;  // by leaf index, nonnegative
  double total = 0.0;

  static ErrorField from_functional(const FunctionalResult& g);
};

// Efficiency-based marking: elements are sorted by local functional and the
// marked prefix maximizes the predicted log error reduction per predicted
// work. Refining an element of degree p is modeled to cut its contribution
// by 4^-p; work is (elements + 3 * marked)^work_exponent.
MarkSet mark_ace(const ErrorField& err, const Mesh& mesh, int degree,
                 double work_exponent = 1.0);

// Smallest prefix of the functional-sorted elements holding at least
// theta * total; ties broken by element id.
MarkSet mark_dorfler(const ErrorField& err, const Mesh& mesh, double theta);

struct TransferResult {
  std::shared_ptr<const Space> space;
  State state;
  TimeHistory history;
};

// Refine the state's mesh (marks plus closure), rebuild the space with the
// same degree and boundary conditions, and carry the state across by the
// exact nested embedding. History states living on the same space are
// transferred the same way; others are kept as-is (they are evaluated as FE
// functions of their own meshes wherever needed).
TransferResult refine_and_transfer(const State& state, const TimeHistory& history,
                                   const MarkSet& marks);

}  // namespace fosls
