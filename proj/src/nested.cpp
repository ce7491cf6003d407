#include "fosls/nested.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fosls/errors.hpp"

namespace fosls {

void DriverConfig::validate() const {
  if (max_time_steps < 0) throw std::invalid_argument("DriverConfig: negative step count");
  if (!(dt > 0.0)) throw std::invalid_argument("DriverConfig: dt must be positive");
  if (levels < 1) throw std::invalid_argument("DriverConfig: need at least one level");
  if (coarse_nx < 1 || coarse_ny < 1)
    throw std::invalid_argument("DriverConfig: coarse grid counts must be positive");
  if (max_newton < 1) throw std::invalid_argument("DriverConfig: max_newton must be at least 1");
  for (double tol : {newton_rel_tol, solver_tol, solver_gain_floor})
    if (!(tol > 0.0) || tol >= 1.0)
      throw std::invalid_argument("DriverConfig: tolerances must lie in (0, 1)");
  if (solver_max_cycles < 1)
    throw std::invalid_argument("DriverConfig: solver_max_cycles must be at least 1");
  if (!(dorfler_theta > 0.0) || dorfler_theta > 1.0)
    throw std::invalid_argument("DriverConfig: dorfler_theta must lie in (0, 1]");
}

std::vector<double> zero_mean_kernel(const Space& space) {
  if (space.zero_mean_components().empty()) return {};
  std::vector<double> k(space.n_dofs(), 0.0);
  for (int node = 0; node < space.n_scalar_nodes(); ++node)
    for (int c : space.zero_mean_components()) {
      const int d = space.dof(node, c);
      if (space.dof_state(d) == DofState::kFree) k[d] = 1.0;
    }
  return k;
}

CsrMatrix build_transfer(const Space& coarse, const Space& fine) {
  if (coarse.n_components() != fine.n_components())
    throw std::invalid_argument("build_transfer: component counts differ");
  const Mesh& cm = coarse.mesh();
  const int nc = fine.n_components();
  const int nloc = coarse.nodes_per_element();

  std::vector<int> leaf_row(cm.elements().size(), -1);
  for (int li = 0; li < cm.n_leaves(); ++li) leaf_row[cm.leaves()[li]] = li;

  CsrMatrix P;
  P.rows = fine.n_dofs();
  P.cols = coarse.n_dofs();
  P.rowptr.assign(P.rows + 1, 0);

  std::vector<int> cols;
  std::vector<double> vals;
  std::map<int, double> entries;
  for (int node = 0; node < fine.n_scalar_nodes(); ++node) {
    const LatPoint lp = fine.node_lat(node);
    const int leaf = cm.leaf_containing(lp);
    const LatPoint lo = cm.lower_corner_lat(leaf);
    const std::int64_t w = cm.lat_width(leaf);
    const double xi = 2.0 * double(lp.x - lo.x) / double(w) - 1.0;
    const double eta = 2.0 * double(lp.y - lo.y) / double(w) - 1.0;
    const BasisEval b = coarse.eval_basis(xi, eta);
    const auto cnodes = coarse.element_nodes(leaf_row[leaf]);

    for (int c = 0; c < nc; ++c) {
      const int row = fine.dof(node, c);
      if (fine.dof_state(row) == DofState::kFree) {
        entries.clear();
        for (int a = 0; a < nloc; ++a) {
          if (std::abs(b.value[a]) < 1e-14) continue;
          const int cn = cnodes[a];
          const int ci = coarse.constraint_of(cn);
          if (ci < 0) {
            entries[cn] += b.value[a];
          } else {
            for (const auto& [m, mw] : coarse.constraints()[ci].masters)
              entries[m] += b.value[a] * mw;
          }
        }
        for (const auto& [cn, wgt] : entries) {
          if (std::abs(wgt) < 1e-14) continue;
          const int cd = coarse.dof(cn, c);
          if (coarse.dof_state(cd) == DofState::kDirichlet) continue;
          cols.push_back(cd);
          vals.push_back(wgt);
        }
      }
      P.rowptr[row + 1] = int(cols.size());
    }
  }
  P.col = std::move(cols);
  P.val = std::move(vals);
  return P;
}

namespace {

void subtract_pressure_mean(const Space& space, std::vector<double>& coef) {
  if (space.zero_mean_components().empty()) return;
  const double area = space.mesh().domain().area();
  for (int c : space.zero_mean_components()) {
    const double mean = space.integral_of(coef, c) / area;
    for (int node = 0; node < space.n_scalar_nodes(); ++node) coef[space.dof(node, c)] -= mean;
  }
}

}  // namespace

NewtonOutcome newton_on_grid(const State& state, const TimeHistory& history,
                             const Params& params, const DriverConfig& config,
                             const GridLadder& ladder, int step, int level, RunLog* log,
                             WorkLedger* step_work) {
  const Space& space = *state.space;
  const HistoryTable table = build_history_table(space, history, params);

  NewtonOutcome out;
  out.state = state;
  out.functional = nonlinear_functional(out.state, history, params, &table);

  for (int it = 1; it <= config.max_newton; ++it) {
    if (out.functional.total <= config.newton_abs_floor) break;

    LinearizedSystem lin = linearize(out.state, history, params, &table);
    SparseSystem sys = assemble(lin, space, ladder.plan);
    apply_bcs(space, sys);

    Hierarchy hier = build_hierarchy(sys, ladder.transfers, ladder.kernels);
    WorkLedger solve_work;
    std::vector<double> x;
    PcgOptions opt;
    opt.tol = config.solver_tol;
    opt.maxit = config.solver_max_cycles;
    opt.gain_floor = config.solver_gain_floor;
    opt.g_nonlinear = out.functional.total;
    SolveStats stats = pcg(sys, x, &hier, opt, &solve_work);

    // Quadratic pieces of the linearized functional at the raw increment.
    const auto Ax = sys.A.matvec(x);
    solve_work.add(sys.A.nnz());
    double xAx = 0.0, bx = 0.0;
    for (int i = 0; i < sys.A.rows; ++i) {
      xAx += x[i] * Ax[i];
      bx += sys.b[i] * x[i];
    }
    space.distribute_constraints(x);

    const double g_before = out.functional.total;
    double damping = 1.0;
    State trial;
    trial.space = out.state.space;
    trial.time = out.state.time;
    FunctionalResult g_trial;
    bool accepted = false;
    for (int h = 0; h <= config.max_halvings; ++h) {
      trial.coef = out.state.coef;
      for (std::size_t i = 0; i < trial.coef.size(); ++i) trial.coef[i] += damping * x[i];
      subtract_pressure_mean(space, trial.coef);
      g_trial = nonlinear_functional(trial, history, params, &table);
      if (g_trial.total <= g_before * (1.0 + 1e-12)) {
        accepted = true;
        break;
      }
      damping *= 0.5;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "newton_on_grid: functional grew from " << g_before << " to " << g_trial.total
          << " despite " << config.max_halvings << " halvings (step " << step << ", level "
          << level << ", iteration " << it << ")";
      throw NonconvergenceError(msg.str());
    }

    const double g_lin = damping * damping * xAx - 2.0 * damping * bx + g_before;
    out.state = std::move(trial);
    out.functional = g_trial;
    out.iterations = it;
    out.nnz = sys.A.nnz();

    if (step_work) step_work->raw += solve_work.raw;
    if (log) {
      NewtonRecord rec;
      rec.step = step;
      rec.level = level;
      rec.iteration = it;
      rec.elements = space.mesh().n_leaves();
      rec.g_before = g_before;
      rec.g_after = g_trial.total;
      rec.g_lin = g_lin;
      rec.solver_iterations = stats.iterations;
      rec.conv_factor = stats.conv_factor;
      rec.raw_work = solve_work.raw;
      rec.damping = damping;
      log->newton.push_back(rec);
    }

    const double denom = std::max(out.functional.total, config.newton_abs_floor);
    if (std::abs(g_lin - out.functional.total) / denom < config.newton_rel_tol) break;
  }
  return out;
}

NestedDriver::NestedDriver(Problem problem, DriverConfig config)
    : problem_(std::move(problem)), config_(std::move(config)) {
  config_.validate();
  params_ = problem_.params;
  params_.dt = config_.dt;

  build_uniform_ladder();
  ladder_fixed_ = (config_.refinement == RefinementMode::kUniform);

  current_ = build_initial_state(spaces_.back(), problem_);
  current_.time = 0.0;
  history_.states = {current_};

  energy_.push_back({0.0, total_energy(current_, params_), dissipation(current_, params_), 0.0, 0.0});
}

void NestedDriver::build_uniform_ladder() {
  meshes_.clear();
  spaces_.clear();
  aux_spaces_.clear();
  transfers_.clear();
  plans_.clear();

  meshes_.push_back(std::make_shared<Mesh>(build_uniform(config_.coarse_nx, config_.coarse_ny)));
  for (int l = 1; l < config_.levels; ++l) {
    MarkSet all(meshes_.back()->leaves().begin(), meshes_.back()->leaves().end());
    meshes_.push_back(std::make_shared<Mesh>(refine(*meshes_.back(), all)));
  }
  spaces_.resize(config_.levels);
  aux_spaces_.resize(config_.levels);
  plans_.resize(config_.levels);
  transfers_.resize(std::max(config_.levels - 1, 0));
  for (int l = 0; l < config_.levels; ++l) {
    const int degree = (l == 0) ? config_.coarse_degree : config_.fine_degree;
    spaces_[l] = build_problem_space(meshes_[l], degree, problem_);
    aux_spaces_[l] = (degree == config_.fine_degree)
                         ? spaces_[l]
                         : build_problem_space(meshes_[l], config_.fine_degree, problem_);
  }
  for (int l = 0; l + 1 < config_.levels; ++l)
    transfers_[l] = build_transfer(*aux_spaces_[l], *aux_spaces_[l + 1]);
}

GridLadder NestedDriver::make_ladder(int level) {
  GridLadder lad;
  if (!plans_[level]) plans_[level] = std::make_unique<AssemblyPlan>(*spaces_[level]);
  lad.plan = plans_[level].get();
  if (level == 0) return lad;  // one-level: direct coarse solve inside pcg
  lad.transfers.assign(transfers_.begin(), transfers_.begin() + level);
  lad.kernels.resize(level);
  for (int l = 0; l < level; ++l) lad.kernels[l] = zero_mean_kernel(*aux_spaces_[l]);
  return lad;
}

const State& NestedDriver::advance() {
  ++step_;
  const int bdf_step = (params_.scheme == TimeScheme::kBdf1) ? 1 : std::min(step_, 2);
  history_.bdf = bdf_coeffs(bdf_step, config_.dt);
  while (history_.states.size() > history_.bdf.history.size()) history_.states.pop_back();
  if (history_.states.size() != history_.bdf.history.size())
    throw std::logic_error("NestedDriver: history depth mismatch");

  const double t_now = step_ * config_.dt;

  if (!ladder_fixed_ && step_ > 1) {
    // Adaptive mode rebuilds the ladder above the fixed coarsest grid.
    meshes_.resize(1);
    spaces_.resize(1);
    aux_spaces_.resize(1);
    plans_.resize(1);
    transfers_.clear();
  }

  const bool can_warm_start = config_.warm_start && ladder_fixed_ && step_ > 1;
  const int start_level = can_warm_start ? config_.levels - 1 : 0;

  State state;
  state.space = spaces_[start_level];
  state.coef = interpolate(*history_.states.front().space, history_.states.front().coef,
                           *spaces_[start_level]);
  state.time = t_now;
  spaces_[start_level]->impose_dirichlet(state.coef);
  subtract_pressure_mean(*spaces_[start_level], state.coef);

  WorkLedger step_work;
  std::size_t finest_nnz = 0;
  int finest_level = start_level;

  for (int level = start_level; level < config_.levels; ++level) {
    finest_level = level;
    GridLadder lad = make_ladder(level);
    NewtonOutcome outcome =
        newton_on_grid(state, history_, params_, config_, lad, step_, level, &log_, &step_work);
    state = std::move(outcome.state);
    last_functional_ = std::move(outcome.functional);
    if (outcome.nnz > 0) finest_nnz = outcome.nnz;

    if (level + 1 >= config_.levels) break;
    if (config_.functional_tol > 0.0 && last_functional_.total < config_.functional_tol) break;

    if (!ladder_fixed_) {
      // Grow the ladder by one adaptively refined mesh.
      ErrorField err = ErrorField::from_functional(last_functional_);
      MarkSet marks =
          (config_.marker == MarkerKind::kAce)
              ? mark_ace(err, *meshes_[level], spaces_[level]->degree(), config_.ace_work_exponent)
              : mark_dorfler(err, *meshes_[level], config_.dorfler_theta);
      if (marks.empty()) break;
      if (int(meshes_.size()) <= level + 1) {
        meshes_.resize(level + 2);
        spaces_.resize(level + 2);
        aux_spaces_.resize(level + 2);
        plans_.resize(level + 2);
        transfers_.resize(level + 1);
      }
      meshes_[level + 1] = std::make_shared<Mesh>(refine(*meshes_[level], marks));
      spaces_[level + 1] = build_problem_space(meshes_[level + 1], config_.fine_degree, problem_);
      aux_spaces_[level + 1] = spaces_[level + 1];
      plans_[level + 1].reset();
      transfers_[level] = build_transfer(*aux_spaces_[level], *aux_spaces_[level + 1]);
    }

    State next;
    next.space = spaces_[level + 1];
    next.coef = interpolate(*spaces_[level], state.coef, *spaces_[level + 1]);
    next.time = t_now;
    spaces_[level + 1]->impose_dirichlet(next.coef);
    state = std::move(next);
  }

  current_ = state;
  history_.states.insert(history_.states.begin(), current_);

  StepRecord rec;
  rec.step = step_;
  rec.t = t_now;
  rec.finest_level = finest_level;
  rec.finest_elements = current_.space->mesh().n_leaves();
  rec.finest_nnz = finest_nnz;
  rec.wu = finest_nnz > 0 ? step_work.raw / double(finest_nnz) : 0.0;
  double conv_sum = 0.0;
  int conv_count = 0;
  for (const NewtonRecord& nr : log_.newton) {
    if (nr.step == step_ && nr.solver_iterations > 0) {
      conv_sum += nr.conv_factor;
      ++conv_count;
    }
  }
  rec.avg_conv_factor = conv_count > 0 ? conv_sum / conv_count : 1.0;
  rec.g_final = last_functional_.total;
  const double uniform_finest =
      double(config_.coarse_nx) * config_.coarse_ny * std::pow(4.0, config_.levels - 1);
  rec.element_ratio = double(rec.finest_elements) / uniform_finest;
  log_.steps.push_back(rec);

  energy_.push_back({t_now, total_energy(current_, params_), dissipation(current_, params_), 0.0, 0.0});
  energy_rate(energy_, config_.dt, params_.scheme);
  return current_;
}

void NestedDriver::run(
    const std::function<void(const State&, const FunctionalResult&, int)>& on_step) {
  if (on_step && step_ == 0) on_step(current_, last_functional_, 0);
  for (int s = step_; s < config_.max_time_steps; ++s) {
    advance();
    if (on_step) on_step(current_, last_functional_, step_);
  }
}

}  // namespace fosls
