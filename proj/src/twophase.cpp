#include "fosls/twophase.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace fosls {

void Params::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("Params: mu must be positive");
  if (!(gamma > 0.0)) throw std::invalid_argument("Params: gamma must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("Params: eps must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("Params: dt must be positive");
  if (lambda < 0.0) throw std::invalid_argument("Params: lambda must be nonnegative");
  for (double w : ls_weights)
    if (!(w > 0.0)) throw std::invalid_argument("Params: least-squares weights must be positive");
}

BdfCoeffs bdf_coeffs(int step_index, double dt) {
  if (step_index < 1) throw std::invalid_argument("bdf_coeffs: step index starts at 1");
  if (!(dt > 0.0)) throw std::invalid_argument("bdf_coeffs: dt must be positive");
  if (step_index == 1) return {1.0 / dt, {-1.0 / dt}};
  return {1.5 / dt, {-2.0 / dt, 0.5 / dt}};
}

State zero_state(std::shared_ptr<const Space> space, double time) {
  State s;
  s.coef.assign(std::size_t(space->n_dofs()), 0.0);
  s.space = std::move(space);
  s.time = time;
  return s;
}

void residual_at(const PointSample& s, const Params& p, double alpha0,
                 double r[kNumEquations]) {
  const auto& v = s.value;
  const auto& dx = s.ddx;
  const auto& dy = s.ddy;
  const double div_b = dx[kB1] + dy[kB2];

  r[0] = v[kV11] - dx[kU1];
  r[1] = v[kV12] - dx[kU2];
  r[2] = v[kV21] - dy[kU1];
  r[3] = -v[kV11] - dy[kU2];  // V22 row with V22 = -V11
  r[4] = dx[kV21] - dy[kV11];
  r[5] = -dx[kV11] - dy[kV12];
  r[6] = dx[kU1] + dy[kU2];
  r[7] = alpha0 * v[kU1] + s.hist_u1 + dx[kPres] + p.lambda * v[kB1] * div_b -
         p.mu * (dx[kV11] + dy[kV21]);
  r[8] = alpha0 * v[kU2] + s.hist_u2 + dy[kPres] + p.lambda * v[kB2] * div_b -
         p.mu * (dx[kV12] - dy[kV11]);
  if (p.include_advection) {
    r[7] += v[kU1] * v[kV11] + v[kU2] * v[kV21];
    r[8] += v[kU1] * v[kV12] - v[kU2] * v[kV11];
  }
  r[9] = v[kB1] - dx[kPhi];
  r[10] = v[kB2] - dy[kPhi];
  r[11] = dx[kB2] - dy[kB1];
  const double phi = v[kPhi];
  r[12] = alpha0 * phi + s.hist_phi + v[kU1] * v[kB1] + v[kU2] * v[kB2] - p.gamma * div_b +
          p.gamma * phi * (phi * phi - 1.0) / (p.eps * p.eps);
  for (int k = 0; k < kNumEquations; ++k) r[k] -= s.force[k];
}

void linearized_rows_at(const PointSample& f, const Params& p, double alpha0, LinRows& out) {
  out.count.fill(0);
  auto add = [&out](int k, int comp, int mode, double coef) {
    for (int i = 0; i < out.count[k]; ++i) {
      LinTerm& t = out.term[k][i];
      if (t.comp == comp && t.mode == mode) {
        t.coef += coef;
        return;
      }
    }
    out.term[k][out.count[k]++] = {comp, mode, coef};
  };

  add(0, kV11, 0, 1.0);
  add(0, kU1, 1, -1.0);
  add(1, kV12, 0, 1.0);
  add(1, kU2, 1, -1.0);
  add(2, kV21, 0, 1.0);
  add(2, kU1, 2, -1.0);
  add(3, kV11, 0, -1.0);
  add(3, kU2, 2, -1.0);
  add(4, kV21, 1, 1.0);
  add(4, kV11, 2, -1.0);
  add(5, kV11, 1, -1.0);
  add(5, kV12, 2, -1.0);
  add(6, kU1, 1, 1.0);
  add(6, kU2, 2, 1.0);

  const double div_b0 = f.ddx[kB1] + f.ddy[kB2];
  add(7, kU1, 0, alpha0);
  add(7, kPres, 1, 1.0);
  add(7, kB1, 0, p.lambda * div_b0);
  add(7, kB1, 1, p.lambda * f.value[kB1]);
  add(7, kB2, 2, p.lambda * f.value[kB1]);
  add(7, kV11, 1, -p.mu);
  add(7, kV21, 2, -p.mu);

  add(8, kU2, 0, alpha0);
  add(8, kPres, 2, 1.0);
  add(8, kB2, 0, p.lambda * div_b0);
  add(8, kB1, 1, p.lambda * f.value[kB2]);
  add(8, kB2, 2, p.lambda * f.value[kB2]);
  add(8, kV12, 1, -p.mu);
  add(8, kV11, 2, p.mu);

  if (p.include_advection) {
    add(7, kU1, 0, f.value[kV11]);
    add(7, kU2, 0, f.value[kV21]);
    add(7, kV11, 0, f.value[kU1]);
    add(7, kV21, 0, f.value[kU2]);
    add(8, kU1, 0, f.value[kV12]);
    add(8, kU2, 0, -f.value[kV11]);
    add(8, kV12, 0, f.value[kU1]);
    add(8, kV11, 0, -f.value[kU2]);
  }

  add(9, kB1, 0, 1.0);
  add(9, kPhi, 1, -1.0);
  add(10, kB2, 0, 1.0);
  add(10, kPhi, 2, -1.0);
  add(11, kB2, 1, 1.0);
  add(11, kB1, 2, -1.0);

  const double phi0 = f.value[kPhi];
  add(12, kPhi, 0, alpha0 + p.gamma * (3.0 * phi0 * phi0 - 1.0) / (p.eps * p.eps));
  add(12, kU1, 0, f.value[kB1]);
  add(12, kU2, 0, f.value[kB2]);
  add(12, kB1, 0, f.value[kU1]);
  add(12, kB2, 0, f.value[kU2]);
  add(12, kB1, 1, -p.gamma);
  add(12, kB2, 2, -p.gamma);
}

namespace {

// Reference basis tables at the quadrature points of a space.
struct QuadTables {
  int nq = 0, nloc = 0;
  std::vector<double> N, Dxi, Deta;  // [q * nloc + a]
  std::vector<double> w;             // quadrature weights
  std::vector<double> xi, eta;

  explicit QuadTables(const Space& space) {
    const Quadrature& quad = space.quadrature();
    nq = int(quad.points.size());
    nloc = space.nodes_per_element();
    N.resize(std::size_t(nq) * nloc);
    Dxi.resize(std::size_t(nq) * nloc);
    Deta.resize(std::size_t(nq) * nloc);
    w.resize(nq);
    xi.resize(nq);
    eta.resize(nq);
    for (int q = 0; q < nq; ++q) {
      const auto& qp = quad.points[q];
      const BasisEval b = space.eval_basis(qp.xi, qp.eta);
      std::copy(b.value.begin(), b.value.end(), N.begin() + std::size_t(q) * nloc);
      std::copy(b.dxi.begin(), b.dxi.end(), Dxi.begin() + std::size_t(q) * nloc);
      std::copy(b.deta.begin(), b.deta.end(), Deta.begin() + std::size_t(q) * nloc);
      w[q] = qp.weight;
      xi[q] = qp.xi;
      eta[q] = qp.eta;
    }
  }
};

void gather_local(const Space& space, const std::vector<double>& coef, int leaf_index,
                  std::vector<double>& loc) {
  const auto nodes = space.element_nodes(leaf_index);
  const int nloc = int(nodes.size());
  loc.resize(std::size_t(nloc) * kNumComps);
  for (int a = 0; a < nloc; ++a)
    for (int c = 0; c < kNumComps; ++c) loc[a * kNumComps + c] = coef[space.dof(nodes[a], c)];
}

// Fields of one leaf at one quadrature point.
void fields_at_qpt(const QuadTables& qt, const std::vector<double>& loc, int q, double sx,
                   double sy, PointSample& s) {
  const int nloc = qt.nloc;
  const double* N = qt.N.data() + std::size_t(q) * nloc;
  const double* Dx = qt.Dxi.data() + std::size_t(q) * nloc;
  const double* Dy = qt.Deta.data() + std::size_t(q) * nloc;
  s.value.fill(0.0);
  s.ddx.fill(0.0);
  s.ddy.fill(0.0);
  for (int a = 0; a < nloc; ++a) {
    const double va = N[a], ga = Dx[a] * sx, ha = Dy[a] * sy;
    const double* la = loc.data() + std::size_t(a) * kNumComps;
    for (int c = 0; c < kNumComps; ++c) {
      s.value[c] += va * la[c];
      s.ddx[c] += ga * la[c];
      s.ddy[c] += ha * la[c];
    }
  }
}

Point qpt_position(const Mesh& mesh, int leaf, double xi, double eta) {
  const LatPoint lo = mesh.lower_corner_lat(leaf);
  const Point p0 = mesh.position(lo);
  const Point h = mesh.element_size(leaf);
  return {p0.x + 0.5 * (xi + 1.0) * h.x, p0.y + 0.5 * (eta + 1.0) * h.y};
}

void check_history(const TimeHistory& history) {
  if (history.states.size() != history.bdf.history.size())
    throw std::logic_error("TimeHistory: weight and state counts disagree");
  for (const State& s : history.states)
    if (!s.space) throw std::logic_error("TimeHistory: state without a space");
}

// Weighted history sums at an arbitrary point.
void history_at(const TimeHistory& history, const Point& x, double& hu1, double& hu2,
                double& hphi) {
  hu1 = hu2 = hphi = 0.0;
  for (std::size_t m = 0; m < history.states.size(); ++m) {
    const State& s = history.states[m];
    const double w = history.bdf.history[m];
    hu1 += w * s.space->eval(s.coef, kU1, x);
    hu2 += w * s.space->eval(s.coef, kU2, x);
    hphi += w * s.space->eval(s.coef, kPhi, x);
  }
}

}  // namespace

HistoryTable build_history_table(const Space& space, const TimeHistory& history,
                                 const Params& params) {
  (void)params;
  check_history(history);
  const Mesh& mesh = space.mesh();
  const QuadTables qt(space);
  HistoryTable table;
  table.n_qpts = qt.nq;
  table.data.assign(std::size_t(mesh.n_leaves()) * qt.nq * 3, 0.0);
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    for (int q = 0; q < qt.nq; ++q) {
      const Point x = qpt_position(mesh, leaf, qt.xi[q], qt.eta[q]);
      double* out = table.data.data() + (std::size_t(li) * qt.nq + q) * 3;
      history_at(history, x, out[0], out[1], out[2]);
    }
  }
  return table;
}

std::array<double, kNumEquations> residual_fields(const State& state, const TimeHistory& history,
                                                  const Params& params, const Point& x) {
  check_history(history);
  PointSample s;
  for (int c = 0; c < kNumComps; ++c)
    state.space->eval_with_gradient(state.coef, c, x, s.value[c], s.ddx[c], s.ddy[c]);
  history_at(history, x, s.hist_u1, s.hist_u2, s.hist_phi);
  if (params.forcing) params.forcing(x, s.force.data());
  std::array<double, kNumEquations> r{};
  residual_at(s, params, history.bdf.alpha0, r.data());
  return r;
}

FunctionalResult nonlinear_functional(const State& state, const TimeHistory& history,
                                      const Params& params, const HistoryTable* table) {
  check_history(history);
  const Space& space = *state.space;
  const Mesh& mesh = space.mesh();
  const QuadTables qt(space);

  HistoryTable local_table;
  if (!table && !history.states.empty()) {
    local_table = build_history_table(space, history, params);
    table = &local_table;
  }

  FunctionalResult out;
  out.per_element.assign(mesh.n_leaves(), 0.0);
  std::vector<double> loc;
  PointSample s;
  double r[kNumEquations];
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const Point h = mesh.element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    const double sx = 2.0 / h.x, sy = 2.0 / h.y;
    gather_local(space, state.coef, li, loc);
    double ge = 0.0;
    for (int q = 0; q < qt.nq; ++q) {
      fields_at_qpt(qt, loc, q, sx, sy, s);
      if (table && !table->data.empty()) {
        const double* hv = table->data.data() + (std::size_t(li) * qt.nq + q) * 3;
        s.hist_u1 = hv[0];
        s.hist_u2 = hv[1];
        s.hist_phi = hv[2];
      } else {
        s.hist_u1 = s.hist_u2 = s.hist_phi = 0.0;
      }
      if (params.forcing) {
        params.forcing(qpt_position(mesh, leaf, qt.xi[q], qt.eta[q]), s.force.data());
      }
      residual_at(s, params, history.bdf.alpha0, r);
      double sq = 0.0;
      for (int k = 0; k < kNumEquations; ++k) sq += params.ls_weights[k] * r[k] * r[k];
      ge += qt.w[q] * jac * sq;
    }
    out.per_element[li] = ge;
    out.total += ge;
  }
  return out;
}

LinearizedSystem linearize(const State& state, const TimeHistory& history, const Params& params,
                           const HistoryTable* table) {
  check_history(history);
  const Space& space = *state.space;
  const Mesh& mesh = space.mesh();
  const QuadTables qt(space);

  HistoryTable local_table;
  if (!table && !history.states.empty()) {
    local_table = build_history_table(space, history, params);
    table = &local_table;
  }

  LinearizedSystem lin;
  lin.space = state.space;
  lin.params = params;
  lin.base = state;
  lin.alpha0 = history.bdf.alpha0;
  lin.n_qpts = qt.nq;
  lin.samples.resize(std::size_t(mesh.n_leaves()) * qt.nq);
  lin.rhs.assign(std::size_t(mesh.n_leaves()) * qt.nq * kNumEquations, 0.0);

  std::vector<double> loc;
  double r[kNumEquations];
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const Point h = mesh.element_size(leaf);
    const double sx = 2.0 / h.x, sy = 2.0 / h.y;
    gather_local(space, state.coef, li, loc);
    for (int q = 0; q < qt.nq; ++q) {
      PointSample& s = lin.samples[std::size_t(li) * qt.nq + q];
      fields_at_qpt(qt, loc, q, sx, sy, s);
      if (table && !table->data.empty()) {
        const double* hv = table->data.data() + (std::size_t(li) * qt.nq + q) * 3;
        s.hist_u1 = hv[0];
        s.hist_u2 = hv[1];
        s.hist_phi = hv[2];
      }
      if (params.forcing)
        params.forcing(qpt_position(mesh, leaf, qt.xi[q], qt.eta[q]), s.force.data());
      residual_at(s, params, lin.alpha0, r);
      double* rhs = lin.rhs.data() + (std::size_t(li) * qt.nq + q) * kNumEquations;
      for (int k = 0; k < kNumEquations; ++k) rhs[k] = -r[k];
    }
  }
  return lin;
}

std::array<double, kNumEquations> apply_linearized(const LinearizedSystem& lin,
                                                   const State& direction, const Point& x) {
  PointSample frozen;
  for (int c = 0; c < kNumComps; ++c)
    lin.base.space->eval_with_gradient(lin.base.coef, c, x, frozen.value[c], frozen.ddx[c],
                                       frozen.ddy[c]);
  LinRows rows;
  linearized_rows_at(frozen, lin.params, lin.alpha0, rows);

  PointSample d;
  for (int c = 0; c < kNumComps; ++c)
    direction.space->eval_with_gradient(direction.coef, c, x, d.value[c], d.ddx[c], d.ddy[c]);

  std::array<double, kNumEquations> out{};
  for (int k = 0; k < kNumEquations; ++k) {
    double lk = 0.0;
    for (int i = 0; i < rows.count[k]; ++i) {
      const LinTerm& t = rows.term[k][i];
      const double field =
          t.mode == 0 ? d.value[t.comp] : (t.mode == 1 ? d.ddx[t.comp] : d.ddy[t.comp]);
      lk += t.coef * field;
    }
    out[k] = lk;
  }
  return out;
}

double linearized_functional(const std::vector<double>& increment, const LinearizedSystem& lin,
                             const Space& space) {
  if (int(increment.size()) != space.n_dofs())
    throw std::invalid_argument("linearized_functional: increment size mismatch");
  std::vector<double> inc = increment;
  space.distribute_constraints(inc);

  const Mesh& mesh = space.mesh();
  const QuadTables qt(space);
  if (qt.nq != lin.n_qpts)
    throw std::invalid_argument("linearized_functional: quadrature mismatch");

  std::vector<double> loc;
  PointSample d;
  LinRows rows;
  double total = 0.0;
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const Point h = mesh.element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    const double sx = 2.0 / h.x, sy = 2.0 / h.y;
    gather_local(space, inc, li, loc);
    for (int q = 0; q < qt.nq; ++q) {
      fields_at_qpt(qt, loc, q, sx, sy, d);
      const PointSample& frozen = lin.samples[std::size_t(li) * qt.nq + q];
      linearized_rows_at(frozen, lin.params, lin.alpha0, rows);
      const double* rhs = lin.rhs.data() + (std::size_t(li) * qt.nq + q) * kNumEquations;
      double sq = 0.0;
      for (int k = 0; k < kNumEquations; ++k) {
        double lk = 0.0;
        for (int i = 0; i < rows.count[k]; ++i) {
          const LinTerm& t = rows.term[k][i];
          const double field =
              t.mode == 0 ? d.value[t.comp] : (t.mode == 1 ? d.ddx[t.comp] : d.ddy[t.comp]);
          lk += t.coef * field;
        }
        const double diff = lk - rhs[k];
        sq += lin.params.ls_weights[k] * diff * diff;
      }
      total += qt.w[q] * jac * sq;
    }
  }
  return total;
}

AssemblyPlan::AssemblyPlan(const Space& space) : space_(&space) {
  const Mesh& mesh = space.mesh();
  const int n_nodes = space.n_scalar_nodes();
  const int nloc = space.nodes_per_element();

  // Expansion of each local node through hanging constraints.
  auto expand = [&space](int node) -> std::vector<std::pair<int, double>> {
    const int ci = space.constraint_of(node);
    if (ci < 0) return {{node, 1.0}};
    std::vector<std::pair<int, double>> out;
    for (const auto& [m, w] : space.constraints()[ci].masters) out.emplace_back(m, w);
    return out;
  };

  // Scalar adjacency.
  std::vector<std::vector<int>> adj(n_nodes);
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const auto nodes = space.element_nodes(li);
    std::vector<int> targets;
    for (int a = 0; a < nloc; ++a)
      for (const auto& [n, w] : expand(nodes[a])) targets.push_back(n);
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (int r : targets)
      for (int c : targets) adj[r].push_back(c);
  }
  for (int n = 0; n < n_nodes; ++n) adj[n].push_back(n);
  std::vector<int> srowptr(n_nodes + 1, 0);
  std::vector<int> scol;
  for (int n = 0; n < n_nodes; ++n) {
    auto& row = adj[n];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    srowptr[n + 1] = srowptr[n] + int(row.size());
    scol.insert(scol.end(), row.begin(), row.end());
    row.shrink_to_fit();
  }

  // Block CSR skeleton: every scalar pair carries a dense 9x9 block.
  const int ndofs = space.n_dofs();
  rowptr_.assign(ndofs + 1, 0);
  for (int n = 0; n < n_nodes; ++n) {
    const int len = (srowptr[n + 1] - srowptr[n]) * kNumComps;
    for (int c = 0; c < kNumComps; ++c) rowptr_[n * kNumComps + c + 1] = len;
  }
  for (int d = 0; d < ndofs; ++d) rowptr_[d + 1] += rowptr_[d];
  col_.resize(std::size_t(rowptr_[ndofs]));
  for (int n = 0; n < n_nodes; ++n) {
    for (int c = 0; c < kNumComps; ++c) {
      std::size_t pos = rowptr_[n * kNumComps + c];
      for (int k = srowptr[n]; k < srowptr[n + 1]; ++k)
        for (int cc = 0; cc < kNumComps; ++cc) col_[pos++] = scol[k] * kNumComps + cc;
    }
  }

  // Per-leaf scatter entries.
  mat_offsets_.assign(mesh.n_leaves() + 1, 0);
  rhs_offsets_.assign(mesh.n_leaves() + 1, 0);
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const auto nodes = space.element_nodes(li);
    std::vector<std::vector<std::pair<int, double>>> exps(nloc);
    for (int a = 0; a < nloc; ++a) exps[a] = expand(nodes[a]);
    for (int a = 0; a < nloc; ++a) {
      for (const auto& [ra, wa] : exps[a]) {
        rhs_.push_back({ra * kNumComps, wa, std::uint8_t(a)});
        for (int b = 0; b < nloc; ++b) {
          for (const auto& [rb, wb] : exps[b]) {
            const int* begin = scol.data() + srowptr[ra];
            const int* end = scol.data() + srowptr[ra + 1];
            const int pos = int(std::lower_bound(begin, end, rb) - begin);
            MatEntry e;
            e.base = std::int64_t(rowptr_[ra * kNumComps]) + std::int64_t(pos) * kNumComps;
            e.stride = std::int64_t(srowptr[ra + 1] - srowptr[ra]) * kNumComps;
            e.weight = wa * wb;
            e.a = std::uint8_t(a);
            e.b = std::uint8_t(b);
            mat_.push_back(e);
          }
        }
      }
    }
    mat_offsets_[li + 1] = mat_.size();
    rhs_offsets_[li + 1] = rhs_.size();
  }
}

std::span<const AssemblyPlan::MatEntry> AssemblyPlan::mat_entries(int leaf_index) const {
  return {mat_.data() + mat_offsets_[leaf_index],
          mat_offsets_[leaf_index + 1] - mat_offsets_[leaf_index]};
}

std::span<const AssemblyPlan::RhsEntry> AssemblyPlan::rhs_entries(int leaf_index) const {
  return {rhs_.data() + rhs_offsets_[leaf_index],
          rhs_offsets_[leaf_index + 1] - rhs_offsets_[leaf_index]};
}

SparseSystem assemble(const LinearizedSystem& lin, const Space& space, const AssemblyPlan* plan) {
  if (lin.space.get() != &space)
    throw std::invalid_argument("assemble: space does not match the linearized system");

  std::unique_ptr<AssemblyPlan> own;
  if (!plan) {
    own = std::make_unique<AssemblyPlan>(space);
    plan = own.get();
  }

  const Mesh& mesh = space.mesh();
  const QuadTables qt(space);
  const int nloc = qt.nloc;
  const int nld = nloc * kNumComps;

  SparseSystem sys;
  sys.A.rows = sys.A.cols = space.n_dofs();
  sys.A.rowptr = plan->rowptr();
  sys.A.col = plan->colidx();
  sys.A.val.assign(sys.A.col.size(), 0.0);
  sys.b.assign(space.n_dofs(), 0.0);

  // The set of (comp, mode) x (comp, mode) couplings is state independent;
  // collect it once from the rows of an arbitrary sample.
  LinRows rows;
  std::vector<std::pair<int, int>> quads;
  std::vector<int> rhs_slots;
  {
    PointSample probe{};
    linearized_rows_at(probe, lin.params, lin.alpha0, rows);
    std::vector<char> seen(27 * 27, 0), seen_r(27, 0);
    for (int k = 0; k < kNumEquations; ++k) {
      for (int i = 0; i < rows.count[k]; ++i) {
        const int ci = rows.term[k][i].comp * 3 + rows.term[k][i].mode;
        if (!seen_r[ci]) {
          seen_r[ci] = 1;
          rhs_slots.push_back(ci);
        }
        for (int j = 0; j < rows.count[k]; ++j) {
          const int cj = rows.term[k][j].comp * 3 + rows.term[k][j].mode;
          if (!seen[ci * 27 + cj]) {
            seen[ci * 27 + cj] = 1;
            quads.emplace_back(ci, cj);
          }
        }
      }
    }
    std::sort(quads.begin(), quads.end());
    std::sort(rhs_slots.begin(), rhs_slots.end());
  }

  std::vector<double> local(std::size_t(nld) * nld);
  std::vector<double> local_rhs(nld);
  std::vector<double> bx(nloc), by(nloc);
  double S[27 * 27];
  double R[27];

  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const Point h = mesh.element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    const double sx = 2.0 / h.x, sy = 2.0 / h.y;

    std::fill(local.begin(), local.end(), 0.0);
    std::fill(local_rhs.begin(), local_rhs.end(), 0.0);

    for (int q = 0; q < lin.n_qpts; ++q) {
      const PointSample& s = lin.samples[std::size_t(li) * lin.n_qpts + q];
      linearized_rows_at(s, lin.params, lin.alpha0, rows);
      const double* rhs = lin.rhs.data() + (std::size_t(li) * lin.n_qpts + q) * kNumEquations;
      const double qw = qt.w[q] * jac;

      std::memset(S, 0, sizeof(S));
      std::memset(R, 0, sizeof(R));
      for (int k = 0; k < kNumEquations; ++k) {
        const double wk = lin.params.ls_weights[k] * qw;
        const double rk = rhs[k];
        for (int i = 0; i < rows.count[k]; ++i) {
          const LinTerm& ti = rows.term[k][i];
          const int ci = ti.comp * 3 + ti.mode;
          R[ci] += wk * rk * ti.coef;
          const double wi = wk * ti.coef;
          for (int j = 0; j < rows.count[k]; ++j) {
            const LinTerm& tj = rows.term[k][j];
            S[ci * 27 + tj.comp * 3 + tj.mode] += wi * tj.coef;
          }
        }
      }

      const double* N = qt.N.data() + std::size_t(q) * nloc;
      const double* Dx = qt.Dxi.data() + std::size_t(q) * nloc;
      const double* Dy = qt.Deta.data() + std::size_t(q) * nloc;
      for (int a = 0; a < nloc; ++a) {
        bx[a] = Dx[a] * sx;
        by[a] = Dy[a] * sy;
      }
      const double* modes[3] = {N, bx.data(), by.data()};

      for (const auto& [ci, cj] : quads) {
        const double sv = S[ci * 27 + cj];
        if (sv == 0.0) continue;
        const int compi = ci / 3, modei = ci % 3;
        const int compj = cj / 3, modej = cj % 3;
        const double* Mi = modes[modei];
        const double* Mj = modes[modej];
        for (int a = 0; a < nloc; ++a) {
          const double fa = sv * Mi[a];
          double* dst = local.data() + std::size_t(a * kNumComps + compi) * nld + compj;
          for (int b = 0; b < nloc; ++b) dst[std::size_t(b) * kNumComps] += fa * Mj[b];
        }
      }
      for (int ci : rhs_slots) {
        const double rv = R[ci];
        if (rv == 0.0) continue;
        const int compi = ci / 3, modei = ci % 3;
        const double* Mi = modes[modei];
        for (int a = 0; a < nloc; ++a) local_rhs[a * kNumComps + compi] += rv * Mi[a];
      }
    }

    for (const auto& e : plan->mat_entries(li)) {
      const double w = e.weight;
      const double* src = local.data() + std::size_t(e.a * kNumComps) * nld + e.b * kNumComps;
      double* dst = sys.A.val.data() + e.base;
      for (int ci = 0; ci < kNumComps; ++ci) {
        const double* srow = src + std::size_t(ci) * nld;
        double* drow = dst + std::size_t(ci) * e.stride;
        for (int cj = 0; cj < kNumComps; ++cj) drow[cj] += w * srow[cj];
      }
    }
    for (const auto& e : plan->rhs_entries(li)) {
      const double w = e.weight;
      for (int c = 0; c < kNumComps; ++c) sys.b[e.row + c] += w * local_rhs[e.a * kNumComps + c];
    }
  }

  // Hanging dofs are decoupled unit rows; their values are recovered from
  // the masters after the solve.
  const auto diag = sys.A.diagonal_positions();
  for (int d = 0; d < space.n_dofs(); ++d) {
    if (space.dof_state(d) == DofState::kHanging) {
      sys.A.val[diag[d]] = 1.0;
      sys.b[d] = 0.0;
    }
  }
  return sys;
}

void apply_bcs(const Space& space, SparseSystem& sys, const std::vector<double>* boundary_values) {
  const int n = space.n_dofs();
  if (sys.A.rows != n) throw std::invalid_argument("apply_bcs: system size mismatch");
  std::vector<char> dir(n, 0);
  std::vector<double> g(n, 0.0);
  bool any = false;
  for (int d = 0; d < n; ++d) {
    if (space.dof_state(d) == DofState::kDirichlet) {
      dir[d] = 1;
      g[d] = boundary_values ? (*boundary_values)[d] : 0.0;
      any = true;
    }
  }
  if (any) {
    for (int r = 0; r < n; ++r) {
      if (dir[r]) {
        for (int k = sys.A.rowptr[r]; k < sys.A.rowptr[r + 1]; ++k)
          sys.A.val[k] = (sys.A.col[k] == r) ? 1.0 : 0.0;
        sys.b[r] = g[r];
      } else {
        for (int k = sys.A.rowptr[r]; k < sys.A.rowptr[r + 1]; ++k) {
          const int c = sys.A.col[k];
          if (dir[c]) {
            sys.b[r] -= sys.A.val[k] * g[c];
            sys.A.val[k] = 0.0;
          }
        }
      }
    }
  }

  sys.kernel.clear();
  if (!space.zero_mean_components().empty()) {
    sys.kernel.assign(n, 0.0);
    for (int node = 0; node < space.n_scalar_nodes(); ++node) {
      for (int c : space.zero_mean_components()) {
        const int d = space.dof(node, c);
        if (space.dof_state(d) == DofState::kFree) sys.kernel[d] = 1.0;
      }
    }
  }
}

double ic_coalescence(const Point& x, double eta) {
  const double d1 = std::sqrt((x.x - 0.38) * (x.x - 0.38) + (x.y - 0.5) * (x.y - 0.5)) - 0.11;
  const double d2 = std::sqrt((x.x - 0.62) * (x.x - 0.62) + (x.y - 0.5) * (x.y - 0.5)) - 0.11;
  return std::tanh(d1 / (2.0 * eta)) + std::tanh(d2 / (2.0 * eta)) - 1.0;
}

double ic_square(const Point& x) {
  const bool inside = x.x >= 0.25 && x.x <= 0.75 && x.y >= 0.25 && x.y <= 0.75;
  return inside ? 1.0 : -1.0;
}

}  // namespace fosls
