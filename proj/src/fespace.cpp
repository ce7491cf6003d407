#include "fosls/fespace.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <stdexcept>

namespace fosls {

namespace {

std::uint64_t key2(std::int64_t a, std::int64_t b) {
  return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint64_t(std::uint32_t(b));
}

}  // namespace

void Space::eval_basis_1d(int degree, double x, double* value, double* deriv) {
  if (degree == 1) {
    value[0] = 0.5 * (1.0 - x);
    value[1] = 0.5 * (1.0 + x);
    if (deriv) {
      deriv[0] = -0.5;
      deriv[1] = 0.5;
    }
  } else {
    value[0] = 0.5 * x * (x - 1.0);
    value[1] = 1.0 - x * x;
    value[2] = 0.5 * x * (x + 1.0);
    if (deriv) {
      deriv[0] = x - 0.5;
      deriv[1] = -2.0 * x;
      deriv[2] = x + 0.5;
    }
  }
}

BasisEval Space::eval_basis(double xi, double eta) const {
  const int n1 = degree_ + 1;
  double vx[3], dx[3], vy[3], dy[3];
  eval_basis_1d(degree_, xi, vx, dx);
  eval_basis_1d(degree_, eta, vy, dy);
  BasisEval out;
  const int nl = n1 * n1;
  out.value.resize(nl);
  out.dxi.resize(nl);
  out.deta.resize(nl);
  for (int j = 0; j < n1; ++j) {
    for (int i = 0; i < n1; ++i) {
      const int a = j * n1 + i;
      out.value[a] = vx[i] * vy[j];
      out.dxi[a] = dx[i] * vy[j];
      out.deta[a] = vx[i] * dy[j];
    }
  }
  return out;
}

Space::Space(std::shared_ptr<const Mesh> mesh, int degree, int n_components, BCSpec bcs)
    : mesh_(std::move(mesh)), degree_(degree), nc_(n_components), bcs_(std::move(bcs)) {
  if (degree_ != 1 && degree_ != 2) throw std::invalid_argument("Space: degree must be 1 or 2");
  if (nc_ < 1) throw std::invalid_argument("Space: need at least one component");
  if (int(bcs_.comps.size()) != nc_)
    throw std::invalid_argument("Space: BCSpec must list exactly one entry per component");
  quad_ = tensor_gauss(degree_ + 2);
  build_nodes();
  build_constraints();
  build_bc_tags();
}

void Space::build_nodes() {
  const Mesh& m = *mesh_;
  const int n1 = degree_ + 1;
  leaf_row_.assign(m.elements().size(), -1);
  enodes_.reserve(std::size_t(m.n_leaves()) * n1 * n1);
  for (int li = 0; li < m.n_leaves(); ++li) {
    const int e = m.leaves()[li];
    leaf_row_[e] = li;
    const LatPoint lo = m.lower_corner_lat(e);
    const std::int64_t step = m.lat_width(e) / degree_;
    for (int j = 0; j < n1; ++j) {
      for (int i = 0; i < n1; ++i) {
        const LatPoint p{lo.x + i * step, lo.y + j * step};
        auto [it, inserted] = node_map_.try_emplace(key2(p.x, p.y), int(node_lat_.size()));
        if (inserted) node_lat_.push_back(p);
        enodes_.push_back(it->second);
      }
    }
  }
}

void Space::build_constraints() {
  const Mesh& m = *mesh_;
  const int p = degree_;
  const int n1 = p + 1;
  constraint_of_.assign(n_scalar_nodes(), -1);

  // Local edge nodes (tensor indices) per edge, in the direction of
  // increasing lattice coordinate along that edge.
  auto local_on_edge = [&](int edge, int k) -> int {
    switch (edge) {
      case kWest: return k * n1;
      case kEast: return k * n1 + p;
      case kSouth: return k;
      default: return p * n1 + k;  // kNorth
    }
  };
  static constexpr int opposite[4] = {kEast, kWest, kNorth, kSouth};

  for (int li = 0; li < m.n_leaves(); ++li) {
    const int e = m.leaves()[li];
    const int level = m.level_of(e);
    for (int edge = 0; edge < 4; ++edge) {
      const auto nbs = m.edge_neighbors(e, edge);
      if (nbs.size() != 1 || m.level_of(nbs[0]) != level - 1) continue;
      const int nb = nbs[0];
      const int nli = leaf_row_[nb];
      const bool vertical = (edge == kWest || edge == kEast);
      const LatPoint nb_lo = m.lower_corner_lat(nb);
      const std::int64_t nb_w = m.lat_width(nb);
      const std::int64_t edge_origin = vertical ? nb_lo.y : nb_lo.x;

      // Master nodes: the coarse side of the shared edge.
      std::array<int, 3> masters{};
      for (int k = 0; k <= p; ++k)
        masters[k] = enodes_[std::size_t(nli) * n1 * n1 + local_on_edge(opposite[edge], k)];

      for (int k = 0; k <= p; ++k) {
        const int node = enodes_[std::size_t(li) * n1 * n1 + local_on_edge(edge, k)];
        const LatPoint lp = node_lat_[node];
        const std::int64_t t = (vertical ? lp.y : lp.x) - edge_origin;
        if ((t * p) % nb_w == 0) continue;  // coincides with a master node
        if (constraint_of_[node] >= 0) continue;

        const double s = double(t) / double(nb_w);
        double w[3];
        eval_basis_1d(p, 2.0 * s - 1.0, w, nullptr);
        NodeConstraint c;
        c.node = node;
        for (int a = 0; a <= p; ++a) c.masters.emplace_back(masters[a], w[a]);
        constraint_of_[node] = int(constraints_.size());
        constraints_.push_back(std::move(c));
      }
    }
  }

  // Resolve constraint chains: a master that is itself constrained is
  // replaced by its own masters until only unconstrained masters remain.
  for (int pass = 0; pass < 16; ++pass) {
    bool changed = false;
    for (NodeConstraint& c : constraints_) {
      bool has_chained = false;
      for (const auto& [mnode, mw] : c.masters)
        has_chained |= (constraint_of_[mnode] >= 0);
      if (!has_chained) continue;
      changed = true;
      std::map<int, double> merged;
      for (const auto& [mnode, mw] : c.masters) {
        const int ci = constraint_of_[mnode];
        if (ci < 0) {
          merged[mnode] += mw;
        } else {
          for (const auto& [gm, gw] : constraints_[ci].masters) merged[gm] += mw * gw;
        }
      }
      c.masters.assign(merged.begin(), merged.end());
    }
    if (!changed) break;
    if (pass == 15) throw std::logic_error("Space: unresolved hanging-node constraint chain");
  }

  for (const NodeConstraint& c : constraints_) {
    double sum = 0.0;
    for (const auto& [mnode, mw] : c.masters) {
      sum += mw;
      assert(constraint_of_[mnode] < 0);
    }
    assert(std::abs(sum - 1.0) < 1e-12);
    (void)sum;
  }
}

void Space::build_bc_tags() {
  const std::int64_t lx = mesh_->lat_nx(), ly = mesh_->lat_ny();
  dof_state_.assign(n_dofs(), DofState::kFree);
  dirichlet_value_.assign(n_dofs(), 0.0);

  for (int node = 0; node < n_scalar_nodes(); ++node) {
    const LatPoint lp = node_lat_[node];
    const bool on_x = (lp.x == 0 || lp.x == lx);
    const bool on_y = (lp.y == 0 || lp.y == ly);
    const bool hanging = constraint_of_[node] >= 0;
    if (hanging && (on_x || on_y))
      throw std::logic_error("Space: hanging node on the domain boundary");

    for (int c = 0; c < nc_; ++c) {
      const int d = dof(node, c);
      if (hanging) {
        dof_state_[d] = DofState::kHanging;
        continue;
      }
      const ComponentBC& bc = bcs_.comps[c];
      bool fix = false;
      switch (bc.kind) {
        case BCKind::kDirichlet: fix = on_x || on_y; break;
        case BCKind::kTangential: fix = (bc.vector_axis == 0) ? on_y : on_x; break;
        default: break;
      }
      if (fix) {
        dof_state_[d] = DofState::kDirichlet;
        dirichlet_value_[d] = bc.trace ? bc.trace(node_position(node)) : 0.0;
      }
    }
  }

  for (int c = 0; c < nc_; ++c)
    if (bcs_.comps[c].kind == BCKind::kZeroMean) zero_mean_comps_.push_back(c);
}

void Space::distribute_constraints(std::vector<double>& coef) const {
  for (const NodeConstraint& c : constraints_) {
    for (int comp = 0; comp < nc_; ++comp) {
      double v = 0.0;
      for (const auto& [mnode, w] : c.masters) v += w * coef[dof(mnode, comp)];
      coef[dof(c.node, comp)] = v;
    }
  }
}

void Space::impose_dirichlet(std::vector<double>& coef) const {
  for (int d = 0; d < n_dofs(); ++d)
    if (dof_state_[d] == DofState::kDirichlet) coef[d] = dirichlet_value_[d];
  distribute_constraints(coef);
}

int Space::locate(const Point& p, double& xi, double& eta) const {
  const int leaf = mesh_->leaf_containing(p);
  const LatPoint lo = mesh_->lower_corner_lat(leaf);
  const Point p0 = mesh_->position(lo);
  const Point h = mesh_->element_size(leaf);
  xi = std::clamp(2.0 * (p.x - p0.x) / h.x - 1.0, -1.0, 1.0);
  eta = std::clamp(2.0 * (p.y - p0.y) / h.y - 1.0, -1.0, 1.0);
  return leaf;
}

double Space::eval(const std::vector<double>& coef, int comp, const Point& p) const {
  double xi, eta;
  const int leaf = locate(p, xi, eta);
  const BasisEval b = eval_basis(xi, eta);
  const auto nodes = element_nodes(leaf_row_[leaf]);
  double v = 0.0;
  for (int a = 0; a < int(nodes.size()); ++a) v += b.value[a] * coef[dof(nodes[a], comp)];
  return v;
}

void Space::eval_with_gradient(const std::vector<double>& coef, int comp, const Point& p,
                               double& value, double& ddx, double& ddy) const {
  double xi, eta;
  const int leaf = locate(p, xi, eta);
  const BasisEval b = eval_basis(xi, eta);
  const Point h = mesh_->element_size(leaf);
  const auto nodes = element_nodes(leaf_row_[leaf]);
  value = ddx = ddy = 0.0;
  for (int a = 0; a < int(nodes.size()); ++a) {
    const double c = coef[dof(nodes[a], comp)];
    value += b.value[a] * c;
    ddx += b.dxi[a] * c * (2.0 / h.x);
    ddy += b.deta[a] * c * (2.0 / h.y);
  }
}

double Space::integrate(const std::function<double(Point)>& f, int points_per_axis) const {
  const Quadrature q = points_per_axis > 0 ? tensor_gauss(points_per_axis) : quad_;
  double total = 0.0;
  for (int leaf : mesh_->leaves()) {
    const LatPoint lo = mesh_->lower_corner_lat(leaf);
    const Point p0 = mesh_->position(lo);
    const Point h = mesh_->element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    for (const auto& qp : q.points) {
      const Point x{p0.x + 0.5 * (qp.xi + 1.0) * h.x, p0.y + 0.5 * (qp.eta + 1.0) * h.y};
      total += qp.weight * jac * f(x);
    }
  }
  return total;
}

double Space::integral_of(const std::vector<double>& coef, int comp) const {
  double total = 0.0;
  const int nl = nodes_per_element();
  for (int li = 0; li < mesh_->n_leaves(); ++li) {
    const int leaf = mesh_->leaves()[li];
    const Point h = mesh_->element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    const auto nodes = element_nodes(li);
    for (const auto& qp : quad_.points) {
      const BasisEval b = eval_basis(qp.xi, qp.eta);
      double v = 0.0;
      for (int a = 0; a < nl; ++a) v += b.value[a] * coef[dof(nodes[a], comp)];
      total += qp.weight * jac * v;
    }
  }
  return total;
}

bool meshes_nested(const Mesh& coarse, const Mesh& fine) {
  if (coarse.nx() != fine.nx() || coarse.ny() != fine.ny()) return false;
  const Domain &a = coarse.domain(), &b = fine.domain();
  if (a.xmin != b.xmin || a.xmax != b.xmax || a.ymin != b.ymin || a.ymax != b.ymax) return false;
  for (int leaf : coarse.leaves()) {
    const LatPoint lo = coarse.lower_corner_lat(leaf);
    const std::int64_t w = coarse.lat_width(leaf);
    const int f = fine.leaf_containing(LatPoint{lo.x + w / 2, lo.y + w / 2});
    if (fine.level_of(f) < coarse.level_of(leaf)) return false;
  }
  return true;
}

std::vector<double> interpolate(const Space& from, const std::vector<double>& coef,
                                const Space& to) {
  if (from.n_components() != to.n_components())
    throw std::invalid_argument("interpolate: component counts differ");
  if (int(coef.size()) != from.n_dofs())
    throw std::invalid_argument("interpolate: coefficient vector size mismatch");

  const Mesh& fm = from.mesh();
  const int nc = from.n_components();
  const int nl = from.nodes_per_element();
  std::vector<double> out(std::size_t(to.n_dofs()), 0.0);

  std::vector<int> leaf_row(fm.elements().size(), -1);
  for (int li = 0; li < fm.n_leaves(); ++li) leaf_row[fm.leaves()[li]] = li;

  for (int node = 0; node < to.n_scalar_nodes(); ++node) {
    const LatPoint lp = to.node_lat(node);
    const int leaf = fm.leaf_containing(lp);
    const LatPoint lo = fm.lower_corner_lat(leaf);
    const std::int64_t w = fm.lat_width(leaf);
    const double xi = 2.0 * double(lp.x - lo.x) / double(w) - 1.0;
    const double eta = 2.0 * double(lp.y - lo.y) / double(w) - 1.0;
    const BasisEval b = from.eval_basis(xi, eta);
    const auto nodes = from.element_nodes(leaf_row[leaf]);
    for (int c = 0; c < nc; ++c) {
      double v = 0.0;
      for (int a = 0; a < nl; ++a) v += b.value[a] * coef[from.dof(nodes[a], c)];
      out[to.dof(node, c)] = v;
    }
  }
  return out;
}

std::vector<double> prolong(const Space& coarse, const Space& fine,
                            const std::vector<double>& coef) {
  if (coarse.degree() != fine.degree())
    throw std::invalid_argument("prolong: degrees differ");
  if (coarse.n_components() != fine.n_components())
    throw std::invalid_argument("prolong: component counts differ");
  if (!meshes_nested(coarse.mesh(), fine.mesh()))
    throw std::invalid_argument("prolong: meshes are not nested");
  return interpolate(coarse, coef, fine);
}

std::vector<double> interpolate_functions(
    const Space& space, const std::vector<std::function<double(Point)>>& fields) {
  if (int(fields.size()) != space.n_components())
    throw std::invalid_argument("interpolate_functions: one function per component required");
  std::vector<double> coef(std::size_t(space.n_dofs()), 0.0);
  for (int node = 0; node < space.n_scalar_nodes(); ++node) {
    const Point p = space.node_position(node);
    for (int c = 0; c < space.n_components(); ++c)
      if (fields[c]) coef[space.dof(node, c)] = fields[c](p);
  }
  space.distribute_constraints(coef);
  return coef;
}

}  // namespace fosls
