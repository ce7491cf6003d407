#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fosls/fespace.hpp"
#include "fosls/sparse.hpp"

namespace fosls {

// Scalar unknowns of the first-order system. The second diagonal entry of
// the velocity gradient is never stored: V22 = -V11 enforces a trace-free
// gradient, which is the divergence constraint.
enum Comp : int { kU1 = 0, kU2, kV11, kV12, kV21, kPres, kPhi, kB1, kB2 };
inline constexpr int kNumComps = 9;

// Equations: 4 gradient rows (V - grad u, with the V22 row eliminated), two
// columnwise curls of V, the divergence of u, two momentum rows, two
// B - grad(phi) rows, curl of B, and the phase equation.
inline constexpr int kNumEquations = 13;

enum class TimeScheme { kBdf1, kBdf2 };

struct Params {
  double mu = 1.0;      // viscosity
  double lambda = 1e-4; // mixing-energy parameter
  double gamma = 0.01;  // elastic relaxation time
  double eps = 0.01;    // mixing-layer width
  double dt = 0.01;
  TimeScheme scheme = TimeScheme::kBdf2;
  bool include_advection = true;
  std::array<double, kNumEquations> ls_weights{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  // Body forcing appended to the residual as -f_k(x); null means zero.
  std::function<void(const Point&, double* f)> forcing;

  void validate() const;
};

// Weights of the implicit backward difference: d/dt u ~ alpha0 u^n + sum_m
// history[m] u^{n-1-m}.
struct BdfCoeffs {
  double alpha0 = 0.0;
  std::vector<double> history;
};

// step_index 1 gives the first-order startup difference, >= 2 the
// second-order one.
BdfCoeffs bdf_coeffs(int step_index, double dt);

// Coefficient vectors of the nine unknowns on one space, interleaved by
// component (dof = node * 9 + comp), constraint-consistent.
struct State {
  std::shared_ptr<const Space> space;
  std::vector<double> coef;
  double time = 0.0;
};

State zero_state(std::shared_ptr<const Space> space, double time = 0.0);

// Previous time-step solutions, most recent first, with the difference
// weights that pair with them. States may live on other (typically finer)
// meshes; they are evaluated as FE functions wherever values are needed.
struct TimeHistory {
  std::vector<State> states;
  BdfCoeffs bdf;
};

// Fields, weighted history values, and forcing at one point: the complete
// input of the pointwise residual.
struct PointSample {
  std::array<double, kNumComps> value{}, ddx{}, ddy{};
  double hist_u1 = 0.0, hist_u2 = 0.0, hist_phi = 0.0;
  std::array<double, kNumEquations> force{};
};

// The 13 equation residuals at one point.
void residual_at(const PointSample& s, const Params& p, double alpha0,
                 double out[kNumEquations]);

// One term of a linearized equation row: coefficient times (value | d/dx |
// d/dy) of one component of the increment.
struct LinTerm {
  int comp;
  int mode;  // 0 value, 1 d/dx, 2 d/dy
  double coef;
};

struct LinRows {
  std::array<std::array<LinTerm, 12>, kNumEquations> term{};
  std::array<int, kNumEquations> count{};
};

// Rows of the Frechet derivative at the frozen sample.
void linearized_rows_at(const PointSample& frozen, const Params& p, double alpha0, LinRows& out);

// Weighted history sums at every quadrature point of every leaf, cached so
// repeated functional evaluations during a Newton loop stay cheap.
struct HistoryTable {
  int n_qpts = 0;
  std::vector<double> data;  // (leaf_index * n_qpts + q) * 3 -> u1, u2, phi
};

HistoryTable build_history_table(const Space& space, const TimeHistory& history,
                                 const Params& params);

// Frozen-coefficient data of one Newton linearization: the samples hold the
// frozen fields, `rhs` holds f - L(state) per equation and point. `base`
// keeps the linearization state so the operator can also be applied at
// arbitrary points.
struct LinearizedSystem {
  std::shared_ptr<const Space> space;
  Params params;
  double alpha0 = 0.0;
  int n_qpts = 0;
  std::vector<PointSample> samples;  // leaf-major
  std::vector<double> rhs;           // (leaf_index * n_qpts + q) * 13
  State base;
};

// The 13 residuals of the semi-discrete system at point x.
std::array<double, kNumEquations> residual_fields(const State& state, const TimeHistory& history,
                                                  const Params& params, const Point& x);

struct FunctionalResult {
  double total = 0.0;
  std::vector<double> per_element;  // by leaf index
};

// Least-squares functional of the nonlinear residual, global and per leaf.
FunctionalResult nonlinear_functional(const State& state, const TimeHistory& history,
                                      const Params& params, const HistoryTable* table = nullptr);

LinearizedSystem linearize(const State& state, const TimeHistory& history, const Params& params,
                           const HistoryTable* table = nullptr);

// Frechet derivative of the residual at the linearization point, applied to
// a direction state and evaluated at x. Used by derivative checks.
std::array<double, kNumEquations> apply_linearized(const LinearizedSystem& lin,
                                                   const State& direction, const Point& x);

// Sparsity pattern and scatter plan reused across assemblies on one space.
class AssemblyPlan {
 public:
  explicit AssemblyPlan(const Space& space);
  const Space& space() const { return *space_; }

  struct MatEntry {
    std::int64_t base;    // value index of (row_node, comp 0; col_node, comp 0)
    std::int64_t stride;  // value-index step per row component
    double weight;
    std::uint8_t a, b;  // local node pair
  };
  struct RhsEntry {
    int row;  // dof of (master node, comp 0)
    double weight;
    std::uint8_t a;
  };

  const std::vector<int>& rowptr() const { return rowptr_; }
  const std::vector<int>& colidx() const { return col_; }
  std::span<const MatEntry> mat_entries(int leaf_index) const;
  std::span<const RhsEntry> rhs_entries(int leaf_index) const;

 private:
  const Space* space_;
  std::vector<int> rowptr_, col_;
  std::vector<MatEntry> mat_;
  std::vector<std::size_t> mat_offsets_;
  std::vector<RhsEntry> rhs_;
  std::vector<std::size_t> rhs_offsets_;
  friend SparseSystem assemble(const LinearizedSystem&, const Space&, const AssemblyPlan*);
};

// Normal equations of the linearized least-squares problem: A is the Gram
// matrix of the linearized rows, b pairs the rows with the residual data.
// Hanging dofs are condensed onto their masters and left as decoupled unit
// rows. Boundary conditions are not applied here; see apply_bcs.
SparseSystem assemble(const LinearizedSystem& lin, const Space& space,
                      const AssemblyPlan* plan = nullptr);

// Eliminate Dirichlet rows and columns (moving prescribed values, zero by
// default, to the right-hand side) and attach the constant-mode deflation
// vector for zero-mean components.
void apply_bcs(const Space& space, SparseSystem& sys,
               const std::vector<double>* boundary_values = nullptr);

// Quadrature evaluation of || L'(state) inc - (f - L(state)) ||^2.
double linearized_functional(const std::vector<double>& increment, const LinearizedSystem& lin,
                             const Space& space);

// Initial phase fields of the two bubble experiments.
double ic_coalescence(const Point& x, double eta);
double ic_square(const Point& x);

}  // namespace fosls
