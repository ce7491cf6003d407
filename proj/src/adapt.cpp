#include "fosls/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fosls {

ErrorField ErrorField::from_functional(const FunctionalResult& g) {
  ErrorField f;
  f.local = g.per_element;
  f.total = g.total;
  return f;
}

namespace {

// Leaf indices sorted by decreasing local value, element id breaking ties.
std::vector<int> sorted_by_error(const ErrorField& err, const Mesh& mesh) {
  std::vector<int> order(err.local.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (err.local[a] != err.local[b]) return err.local[a] > err.local[b];
    return mesh.leaves()[a] < mesh.leaves()[b];
  });
  return order;
}

}  // namespace

MarkSet mark_ace(const ErrorField& err, const Mesh& mesh, int degree, double work_exponent) {
  if (int(err.local.size()) != mesh.n_leaves())
    throw std::invalid_argument("mark_ace: indicator count does not match the mesh");
  MarkSet marks;
  if (!(err.total > 0.0)) return marks;

  const std::vector<int> order = sorted_by_error(err, mesh);
  const int n = int(order.size());
  const double reduction = std::pow(4.0, -degree);

  double captured = 0.0;
  double best = -1.0;
  int best_m = 0;
  for (int m = 1; m <= n; ++m) {
    captured += err.local[order[m - 1]];
    const double r = std::min(captured / err.total, 1.0);
    const double predicted = (1.0 - r) + r * reduction;  // relative to err.total
    const double work = std::pow(double(n) + 3.0 * m, work_exponent);
    const double effectiveness = -std::log(predicted) / work;
    if (effectiveness > best) {
      best = effectiveness;
      best_m = m;
    }
  }
  for (int m = 0; m < best_m; ++m) marks.insert(mesh.leaves()[order[m]]);
  return marks;
}

MarkSet mark_dorfler(const ErrorField& err, const Mesh& mesh, double theta) {
  if (int(err.local.size()) != mesh.n_leaves())
    throw std::invalid_argument("mark_dorfler: indicator count does not match the mesh");
  if (!(theta > 0.0) || theta > 1.0)
    throw std::invalid_argument("mark_dorfler: theta must lie in (0, 1]");
  MarkSet marks;
  if (!(err.total > 0.0)) return marks;

  const std::vector<int> order = sorted_by_error(err, mesh);
  double captured = 0.0;
  for (int idx : order) {
    if (err.local[idx] <= 0.0) break;
    if (captured >= theta * err.total) break;
    marks.insert(mesh.leaves()[idx]);
    captured += err.local[idx];
  }
  return marks;
}

TransferResult refine_and_transfer(const State& state, const TimeHistory& history,
                                   const MarkSet& marks) {
  const Space& old_space = *state.space;
  TransferResult out;
  if (marks.empty()) {
    out.space = state.space;
    out.state = state;
    out.history = history;
    return out;
  }

  auto fine_mesh = std::make_shared<Mesh>(refine(old_space.mesh(), marks));
  auto fine_space = std::make_shared<Space>(fine_mesh, old_space.degree(),
                                            old_space.n_components(), old_space.bcs());
  out.space = fine_space;
  out.state.space = out.space;
  out.state.coef = prolong(old_space, *out.space, state.coef);
  out.state.time = state.time;

  out.history.bdf = history.bdf;
  for (const State& h : history.states) {
    if (h.space == state.space) {
      State t;
      t.space = out.space;
      t.coef = prolong(old_space, *out.space, h.coef);
      t.time = h.time;
      out.history.states.push_back(std::move(t));
    } else {
      out.history.states.push_back(h);
    }
  }
  return out;
}

}  // namespace fosls
