#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "fosls/adapt.hpp"
#include "fosls/problems.hpp"

using namespace fosls;

namespace {

// Reference effectiveness search over all prefixes.
int brute_best_prefix(std::vector<double> values, int degree, double work_exponent) {
  std::sort(values.begin(), values.end(), std::greater<>());
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  const int n = int(values.size());
  double captured = 0.0, best = -1.0;
  int best_m = 0;
  for (int m = 1; m <= n; ++m) {
    captured += values[m - 1];
    const double r = std::min(captured / total, 1.0);
    const double predicted = (1.0 - r) + r * std::pow(4.0, -degree);
    const double eff = -std::log(predicted) / std::pow(n + 3.0 * m, work_exponent);
    if (eff > best) {
      best = eff;
      best_m = m;
    }
  }
  return best_m;
}

ErrorField field_of(const std::vector<double>& values) {
  ErrorField f;
  f.local = values;
  f.total = std::accumulate(values.begin(), values.end(), 0.0);
  return f;
}

}  // namespace

TEST_CASE("efficiency marking") {
  SUBCASE("uniform error marks everything") {
    Mesh mesh = build_uniform(4, 4);
    std::vector<double> vals(16, 1.0);
    for (int p = 1; p <= 2; ++p) {
      CHECK(brute_best_prefix(vals, p, 1.0) == 16);
      MarkSet marks = mark_ace(field_of(vals), mesh, p);
      CHECK(int(marks.size()) == 16);
    }
  }

  SUBCASE("a dominant element is marked alone") {
    Mesh mesh = build_uniform(10, 10);
    std::vector<double> vals(100, 0.001 / 99.0);
    vals[42] = 0.999;
    CHECK(brute_best_prefix(vals, 2, 1.0) == 1);
    MarkSet marks = mark_ace(field_of(vals), mesh, 2);
    REQUIRE(marks.size() == 1);
    CHECK(*marks.begin() == mesh.leaves()[42]);
  }

  SUBCASE("0.9 / 0.1 split marks the first element only") {
    Mesh mesh = build_uniform(2, 1);
    std::vector<double> vals = {0.9, 0.1};
    CHECK(brute_best_prefix(vals, 2, 1.0) == 1);
    MarkSet marks = mark_ace(field_of(vals), mesh, 2);
    REQUIRE(marks.size() == 1);
    CHECK(*marks.begin() == mesh.leaves()[0]);
  }

  SUBCASE("implementation agrees with the brute-force prefix search") {
    std::mt19937 rng(77);
    std::exponential_distribution<double> E(1.0);
    Mesh mesh = build_uniform(8, 8);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> vals(64);
      for (double& v : vals) v = E(rng);
      for (int p = 1; p <= 2; ++p) {
        const int expected = brute_best_prefix(vals, p, 1.0);
        CHECK(int(mark_ace(field_of(vals), mesh, p).size()) == expected);
      }
    }
  }

  SUBCASE("zero total marks nothing") {
    Mesh mesh = build_uniform(2, 2);
    CHECK(mark_ace(field_of({0, 0, 0, 0}), mesh, 2).empty());
  }
}

TEST_CASE("fixed-fraction marking") {
  Mesh mesh = build_uniform(4, 1);

  SUBCASE("hand-computed prefix") {
    MarkSet marks = mark_dorfler(field_of({4, 3, 2, 1}), mesh, 0.5);
    CHECK(marks == MarkSet{mesh.leaves()[0], mesh.leaves()[1]});
  }
  SUBCASE("theta = 1 marks every nonzero element") {
    MarkSet marks = mark_dorfler(field_of({4, 0, 2, 1}), mesh, 1.0);
    CHECK(marks == MarkSet{mesh.leaves()[0], mesh.leaves()[2], mesh.leaves()[3]});
  }
  SUBCASE("single element") {
    Mesh one = build_uniform(1, 1);
    CHECK(mark_dorfler(field_of({0.3}), one, 0.1) == MarkSet{0});
    CHECK(mark_dorfler(field_of({0.3}), one, 1.0) == MarkSet{0});
  }
  SUBCASE("invalid theta rejected") {
    CHECK_THROWS_AS(mark_dorfler(field_of({1, 1, 1, 1}), mesh, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(mark_dorfler(field_of({1, 1, 1, 1}), mesh, 1.5), std::invalid_argument);
  }
}

TEST_CASE("marking is permutation invariant up to the id tie-break") {
  std::mt19937 rng(5);
  Mesh mesh = build_uniform(4, 4);
  std::vector<double> vals(16);
  std::exponential_distribution<double> E(1.0);
  for (double& v : vals) v = E(rng);

  auto values_of = [&](const MarkSet& marks, const std::vector<double>& field) {
    std::vector<double> out;
    for (int id : marks)
      for (int li = 0; li < mesh.n_leaves(); ++li)
        if (mesh.leaves()[li] == id) out.push_back(field[li]);
    std::sort(out.begin(), out.end());
    return out;
  };

  std::vector<double> shuffled = vals;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(values_of(mark_ace(field_of(vals), mesh, 2), vals) ==
        values_of(mark_ace(field_of(shuffled), mesh, 2), shuffled));
  CHECK(values_of(mark_dorfler(field_of(vals), mesh, 0.6), vals) ==
        values_of(mark_dorfler(field_of(shuffled), mesh, 0.6), shuffled));
}

TEST_CASE("refine-and-transfer carries fields exactly") {
  Problem prob = coalescence_problem();
  auto mesh = std::make_shared<Mesh>(build_uniform(4, 4));
  auto space = build_problem_space(mesh, 2, prob);

  SUBCASE("empty marks change nothing") {
    State s = build_initial_state(space, prob);
    TimeHistory h;
    h.states = {s};
    h.bdf = bdf_coeffs(1, prob.params.dt);
    auto out = refine_and_transfer(s, h, MarkSet{});
    CHECK(out.space.get() == space.get());
    CHECK(out.state.coef == s.coef);
  }

  SUBCASE("constants stay constant") {
    State s = zero_state(space);
    for (int node = 0; node < space->n_scalar_nodes(); ++node)
      s.coef[space->dof(node, kPhi)] = 1.0;
    TimeHistory h;
    h.states = {s};
    h.bdf = bdf_coeffs(1, prob.params.dt);
    auto out = refine_and_transfer(s, h, MarkSet{*mesh->leaves().begin()});
    for (int node = 0; node < out.space->n_scalar_nodes(); ++node)
      CHECK(out.state.coef[out.space->dof(node, kPhi)] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(out.history.states[0].space.get() == out.space.get());
  }

  SUBCASE("functional of the transferred state matches") {
    // Fields that enter the residual linearly (and phi = u = B = 0, which
    // silences the product terms) keep the squared residual inside the
    // rule's exactness degree, so the functional must transfer exactly.
    std::mt19937 rng(3);
    std::normal_distribution<double> G(0.0, 0.5);
    State s = zero_state(space);
    for (int node = 0; node < space->n_scalar_nodes(); ++node) {
      for (int c : {int(kV11), int(kV12), int(kV21), int(kPres)})
        s.coef[space->dof(node, c)] = G(rng);
    }
    space->distribute_constraints(s.coef);
    TimeHistory h;
    h.states = {s};
    h.bdf = bdf_coeffs(1, prob.params.dt);

    const double g_before = nonlinear_functional(s, h, prob.params).total;
    MarkSet marks{mesh->leaves()[3], mesh->leaves()[7]};
    auto out = refine_and_transfer(s, h, marks);
    const double g_after = nonlinear_functional(out.state, out.history, prob.params).total;
    CHECK(g_after == doctest::Approx(g_before).epsilon(1e-10));

    // The smooth nonlinear case transfers to quadrature accuracy.
    State sm = zero_state(space);
    auto smooth = interpolate_functions(
        *space, [] {
          std::vector<std::function<double(Point)>> f(kNumComps);
          for (int c = 0; c < kNumComps; ++c)
            f[c] = [c](Point p) {
              return 0.3 * std::sin(2.0 * p.x + 0.3 * c) * std::cos(1.7 * p.y - 0.1 * c);
            };
          return f;
        }());
    sm.coef = smooth;
    TimeHistory hs;
    hs.states = {sm};
    hs.bdf = bdf_coeffs(1, prob.params.dt);
    const double gs_before = nonlinear_functional(sm, hs, prob.params).total;
    auto outs = refine_and_transfer(sm, hs, marks);
    const double gs_after = nonlinear_functional(outs.state, outs.history, prob.params).total;
    CHECK(gs_after == doctest::Approx(gs_before).epsilon(1e-5));
  }
}
