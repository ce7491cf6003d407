#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fosls/adapt.hpp"
#include "fosls/energy.hpp"
#include "fosls/linsolve.hpp"
#include "fosls/problems.hpp"

namespace fosls {

enum class RefinementMode { kUniform, kAdaptive };
enum class MarkerKind { kAce, kDorfler };

struct DriverConfig {
  int max_time_steps = 1;
  double dt = 0.01;
  int levels = 4;  // grids per time step, coarsest included
  int coarse_nx = 2, coarse_ny = 2;
  int coarse_degree = 1, fine_degree = 2;

  int max_newton = 12;
  double newton_rel_tol = 0.1;     // |G_lin - G_nl| / G_nl exit test
  double newton_abs_floor = 1e-26; // functional below this is converged
  int max_halvings = 5;

  double solver_tol = 1e-8;
  int solver_max_cycles = 50;
  double solver_gain_floor = 0.1;  // stop cycling below this relative gain

  RefinementMode refinement = RefinementMode::kUniform;
  MarkerKind marker = MarkerKind::kAce;
  double dorfler_theta = 0.6;
  double ace_work_exponent = 1.0;
  double functional_tol = 0.0;  // stop refining early when G_nl falls below (0 = off)
  bool warm_start = false;      // jump straight to the finest grid after step 1

  void validate() const;
};

struct NewtonRecord {
  int step = 0;
  int level = 0;
  int iteration = 0;
  long elements = 0;
  double g_before = 0.0, g_after = 0.0, g_lin = 0.0;
  int solver_iterations = 0;
  double conv_factor = 1.0;
  double raw_work = 0.0;  // nonzero-weighted operations of this solve
  double damping = 1.0;
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  int finest_level = 0;
  long finest_elements = 0;
  std::size_t finest_nnz = 0;
  double wu = 0.0;  // step work in finest-matrix passes
  double avg_conv_factor = 1.0;
  double g_final = 0.0;
  double element_ratio = 0.0;  // finest elements / uniform finest elements
};

struct RunLog {
  std::vector<NewtonRecord> newton;
  std::vector<StepRecord> steps;
};

// Multigrid ladder backing one grid's Newton solves.
struct GridLadder {
  std::vector<CsrMatrix> transfers;            // between consecutive aux spaces
  std::vector<std::vector<double>> kernels;    // per coarse level
  const AssemblyPlan* plan = nullptr;          // cached plan of the solve space
};

// Transfer matrix of the exact nested embedding between spaces (same
// component count; the fine space may be finer in mesh and/or degree).
// Rows of eliminated fine dofs are empty; columns of Dirichlet coarse dofs
// are dropped.
CsrMatrix build_transfer(const Space& coarse, const Space& fine);

// Deflation vector of the zero-mean components (empty when none).
std::vector<double> zero_mean_kernel(const Space& space);

struct NewtonOutcome {
  State state;
  FunctionalResult functional;  // at the accepted state
  int iterations = 0;
  std::size_t nnz = 0;  // of the last assembled system
};

// Newton loop on one grid: linearize, assemble, solve with MG-preconditioned
// CG, update, until the linearized and nonlinear functionals agree to
// newton_rel_tol (or the cap). Damps by halving when the functional would
// grow; throws NonconvergenceError when damping cannot restore descent.
NewtonOutcome newton_on_grid(const State& state, const TimeHistory& history,
                             const Params& params, const DriverConfig& config,
                             const GridLadder& ladder, int step, int level, RunLog* log,
                             WorkLedger* step_work);

// The driver: per time step, nested iteration from the coarsest grid to the
// finest with prolonged starting guesses and optional adaptive refinement.
class NestedDriver {
 public:
  NestedDriver(Problem problem, DriverConfig config);

  // Advance one time step; returns the finest-grid state.
  const State& advance();

  // Full time loop; on_step (when set) runs after every step with the
  // finest state and the per-element functional of its last Newton exit.
  void run(const std::function<void(const State&, const FunctionalResult&, int)>& on_step = {});

  const RunLog& log() const { return log_; }
  const std::vector<EnergyRecord>& energy() const { return energy_; }
  const State& current() const { return current_; }
  const Problem& problem() const { return problem_; }
  const DriverConfig& config() const { return config_; }
  const FunctionalResult& last_functional() const { return last_functional_; }
  int steps_taken() const { return step_; }

 private:
  void build_uniform_ladder();
  const Space& ensure_aux_space(int level);
  GridLadder make_ladder(int level);

  Problem problem_;
  DriverConfig config_;
  Params params_;

  std::vector<std::shared_ptr<const Mesh>> meshes_;
  std::vector<std::shared_ptr<const Space>> spaces_;      // solve spaces per level
  std::vector<std::shared_ptr<const Space>> aux_spaces_;  // fine-degree ladder for MG
  std::vector<std::unique_ptr<AssemblyPlan>> plans_;
  std::vector<CsrMatrix> transfers_;
  bool ladder_fixed_ = false;  // uniform mode reuses the whole ladder

  TimeHistory history_;
  State current_;
  FunctionalResult last_functional_;
  RunLog log_;
  std::vector<EnergyRecord> energy_;
  int step_ = 0;
};

}  // namespace fosls
