#include "fosls/energy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fosls {

double mixing_energy_density(double phi, double gx, double gy, double eps) {
  const double well = phi * phi - 1.0;
  return 0.5 * (gx * gx + gy * gy) + well * well / (4.0 * eps * eps);
}

namespace {

// Integrate a pointwise function of the sampled fields over the mesh.
template <class F>
double integrate_fields(const State& s, F&& f) {
  const Space& sp = *s.space;
  const Mesh& mesh = sp.mesh();
  const Quadrature& quad = sp.quadrature();
  const int nloc = sp.nodes_per_element();
  double total = 0.0;
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const Point h = mesh.element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    const auto nodes = sp.element_nodes(li);
    for (const auto& qp : quad.points) {
      const BasisEval b = sp.eval_basis(qp.xi, qp.eta);
      double val[kNumComps] = {0}, ddx[kNumComps] = {0}, ddy[kNumComps] = {0};
      for (int a = 0; a < nloc; ++a) {
        for (int c = 0; c < kNumComps; ++c) {
          const double cv = s.coef[sp.dof(nodes[a], c)];
          val[c] += b.value[a] * cv;
          ddx[c] += b.dxi[a] * cv * (2.0 / h.x);
          ddy[c] += b.deta[a] * cv * (2.0 / h.y);
        }
      }
      total += qp.weight * jac * f(val, ddx, ddy);
    }
  }
  return total;
}

}  // namespace

double total_energy(const State& s, const Params& p) {
  return integrate_fields(s, [&p](const double* v, const double*, const double*) {
    const double kinetic = 0.5 * (v[kU1] * v[kU1] + v[kU2] * v[kU2]);
    return kinetic + p.lambda * mixing_energy_density(v[kPhi], v[kB1], v[kB2], p.eps);
  });
}

double dissipation(const State& s, const Params& p) {
  return integrate_fields(s, [&p](const double* v, const double* dx, const double* dy) {
    // |grad u|^2 through the first-order variable, V22 = -V11.
    const double grad2 = 2.0 * v[kV11] * v[kV11] + v[kV12] * v[kV12] + v[kV21] * v[kV21];
    const double div_b = dx[kB1] + dy[kB2];
    const double curv = div_b - v[kPhi] * (v[kPhi] * v[kPhi] - 1.0) / (p.eps * p.eps);
    return p.mu * grad2 + p.lambda * p.gamma * curv * curv;
  });
}

void energy_rate(std::vector<EnergyRecord>& series, double dt, TimeScheme scheme) {
  if (series.size() < 2) throw std::invalid_argument("energy_rate: need at least two records");
  series[0].dEdt = 0.0;
  series[0].mismatch = 0.0;
  for (std::size_t n = 1; n < series.size(); ++n) {
    const bool second_order = (scheme == TimeScheme::kBdf2) && n >= 2;
    double rate;
    if (second_order) {
      rate = (3.0 * series[n].E - 4.0 * series[n - 1].E + series[n - 2].E) / (2.0 * dt);
    } else {
      rate = (series[n].E - series[n - 1].E) / dt;
    }
    series[n].dEdt = rate;
    series[n].mismatch = rate + series[n].D;
  }
}

EnergyLawReport energy_law_report(const std::vector<EnergyRecord>& series) {
  EnergyLawReport rep;
  for (std::size_t n = 1; n < series.size(); ++n)
    rep.max_dissipation = std::max(rep.max_dissipation, series[n].D);
  const double denom = std::max(rep.max_dissipation, 1e-30);
  double sum = 0.0;
  int count = 0;
  for (std::size_t n = 2; n < series.size(); ++n) {
    const double rel = std::abs(series[n].mismatch) / denom;
    rep.max_rel_mismatch = std::max(rep.max_rel_mismatch, rel);
    sum += rel;
    ++count;
    if (n >= 3 && series[n].E > series[n - 1].E + 1e-12 * std::abs(series[1].E))
      rep.energy_nonincreasing = false;
  }
  rep.mean_rel_mismatch = count > 0 ? sum / count : 0.0;
  return rep;
}

TopologyReport interface_topology(const State& s, bool positive_phase) {
  const Space& sp = *s.space;
  const Mesh& mesh = sp.mesh();
  const int n_leaves = mesh.n_leaves();

  // Sign of phi at each leaf centroid.
  std::vector<char> in_region(n_leaves, 0);
  std::vector<double> centroid_phi(n_leaves, 0.0);
  for (int li = 0; li < n_leaves; ++li) {
    const int leaf = mesh.leaves()[li];
    const double phi = sp.eval(s.coef, kPhi, mesh.centroid(leaf));
    centroid_phi[li] = phi;
    in_region[li] = positive_phase ? (phi > 0.0) : (phi < 0.0);
  }

  std::vector<int> leaf_row(mesh.elements().size(), -1);
  for (int li = 0; li < n_leaves; ++li) leaf_row[mesh.leaves()[li]] = li;

  // Union-find over edge-adjacent leaves inside the region.
  std::vector<int> parent(n_leaves);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  TopologyReport rep;
  for (int li = 0; li < n_leaves; ++li) {
    if (!in_region[li]) continue;
    const int leaf = mesh.leaves()[li];
    rep.area += mesh.element_area(leaf);
    for (int edge = 0; edge < 4; ++edge) {
      for (int nb : mesh.edge_neighbors(leaf, edge)) {
        const int nli = leaf_row[nb];
        if (!in_region[nli]) continue;
        const int ra = find(li), rb = find(nli);
        if (ra != rb) parent[ra] = rb;
      }
    }
  }
  for (int li = 0; li < n_leaves; ++li)
    if (in_region[li] && find(li) == li) ++rep.components;

  // Extents of the positive-phase centroid cloud.
  {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0, smin = 0, smax = 0, dmin = 0, dmax = 0;
    bool any = false;
    for (int li = 0; li < n_leaves; ++li) {
      if (centroid_phi[li] <= 0.0) continue;
      const Point c = mesh.centroid(mesh.leaves()[li]);
      const double sdiag = (c.x + c.y) / std::sqrt(2.0);
      const double ddiag = (c.x - c.y) / std::sqrt(2.0);
      if (!any) {
        xmin = xmax = c.x;
        ymin = ymax = c.y;
        smin = smax = sdiag;
        dmin = dmax = ddiag;
        any = true;
      } else {
        xmin = std::min(xmin, c.x);
        xmax = std::max(xmax, c.x);
        ymin = std::min(ymin, c.y);
        ymax = std::max(ymax, c.y);
        smin = std::min(smin, sdiag);
        smax = std::max(smax, sdiag);
        dmin = std::min(dmin, ddiag);
        dmax = std::max(dmax, ddiag);
      }
    }
    if (any) {
      rep.axis_extent = std::max(xmax - xmin, ymax - ymin);
      rep.diag_extent = std::max(smax - smin, dmax - dmin);
      rep.axis_diag_ratio = rep.diag_extent > 0.0 ? rep.axis_extent / rep.diag_extent : 0.0;
    }
  }

  // Marching squares on element corners for the zero level set.
  for (int li = 0; li < n_leaves; ++li) {
    const int leaf = mesh.leaves()[li];
    const Element& e = mesh.elements()[leaf];
    const auto& verts = mesh.vertices();
    // Corner order: SW, SE, NW, NE.
    const double c0 = sp.eval(s.coef, kPhi, verts[e.corner[0]]);
    const double c1 = sp.eval(s.coef, kPhi, verts[e.corner[1]]);
    const double c2 = sp.eval(s.coef, kPhi, verts[e.corner[2]]);
    const double c3 = sp.eval(s.coef, kPhi, verts[e.corner[3]]);
    const Point p0 = verts[e.corner[0]];
    const Point h = mesh.element_size(leaf);

    auto crossing = [](double a, double b) { return a / (a - b); };
    std::vector<Point> pts;
    std::vector<int> which;  // 0 S, 1 E, 2 N, 3 W
    if ((c0 > 0) != (c1 > 0)) {
      pts.push_back({p0.x + crossing(c0, c1) * h.x, p0.y});
      which.push_back(0);
    }
    if ((c1 > 0) != (c3 > 0)) {
      pts.push_back({p0.x + h.x, p0.y + crossing(c1, c3) * h.y});
      which.push_back(1);
    }
    if ((c2 > 0) != (c3 > 0)) {
      pts.push_back({p0.x + crossing(c2, c3) * h.x, p0.y + h.y});
      which.push_back(2);
    }
    if ((c0 > 0) != (c2 > 0)) {
      pts.push_back({p0.x, p0.y + crossing(c0, c2) * h.y});
      which.push_back(3);
    }
    auto seg = [&](const Point& a, const Point& b) {
      rep.perimeter += std::hypot(b.x - a.x, b.y - a.y);
    };
    if (pts.size() == 2) {
      seg(pts[0], pts[1]);
    } else if (pts.size() == 4) {
      // Saddle: pair the crossings by the center sign.
      const bool center_pos = centroid_phi[li] > 0.0;
      const bool sw_pos = c0 > 0;
      // Order in pts: S, E, N, W.
      if (center_pos == sw_pos) {
        seg(pts[0], pts[1]);  // S-E
        seg(pts[2], pts[3]);  // N-W
      } else {
        seg(pts[0], pts[3]);  // S-W
        seg(pts[1], pts[2]);  // E-N
      }
    }
  }
  return rep;
}

}  // namespace fosls
