#include "fosls/problems.hpp"

#include <cmath>
#include <stdexcept>

namespace fosls {

namespace {

constexpr double kPi = 3.14159265358979323846;

BCSpec bubble_bcs(std::function<double(Point)> phi_trace) {
  BCSpec bcs;
  bcs.comps.resize(kNumComps);
  bcs.comps[kU1].kind = BCKind::kDirichlet;
  bcs.comps[kU2].kind = BCKind::kDirichlet;
  bcs.comps[kPres].kind = BCKind::kZeroMean;
  bcs.comps[kPhi].kind = BCKind::kDirichlet;
  bcs.comps[kPhi].trace = std::move(phi_trace);
  bcs.comps[kB1].kind = BCKind::kTangential;
  bcs.comps[kB1].vector_axis = 0;
  bcs.comps[kB2].kind = BCKind::kTangential;
  bcs.comps[kB2].vector_axis = 1;
  return bcs;
}

// Exact manufactured fields. The stream function U0 sin^2(pi x) sin^2(pi y)
// gives a solenoidal velocity vanishing on the boundary; phi has constant
// boundary trace so the tangential gradient vanishes there too.
struct Manufactured {
  double u0 = 0.25, a = 0.8, phibar = -0.3;

  double u1(Point p) const { return u0 * kPi * s2(p.x) * std::sin(2 * kPi * p.y); }
  double u2(Point p) const { return -u0 * kPi * std::sin(2 * kPi * p.x) * s2(p.y); }
  double u1x(Point p) const {
    return u0 * kPi * kPi * std::sin(2 * kPi * p.x) * std::sin(2 * kPi * p.y);
  }
  double u1y(Point p) const { return 2 * u0 * kPi * kPi * s2(p.x) * std::cos(2 * kPi * p.y); }
  double u2x(Point p) const { return -2 * u0 * kPi * kPi * std::cos(2 * kPi * p.x) * s2(p.y); }
  double u2y(Point p) const { return -u1x(p); }
  double lap_u1(Point p) const {
    return 2 * u0 * kPi * kPi * kPi *
           (std::cos(2 * kPi * p.x) * std::sin(2 * kPi * p.y) -
            2.0 * s2(p.x) * std::sin(2 * kPi * p.y));
  }
  double lap_u2(Point p) const {
    return 2 * u0 * kPi * kPi * kPi *
           (2.0 * std::sin(2 * kPi * p.x) * s2(p.y) -
            std::sin(2 * kPi * p.x) * std::cos(2 * kPi * p.y));
  }
  double pres(Point p) const {
    return std::sin(kPi * p.x) * std::sin(kPi * p.y) - 4.0 / (kPi * kPi);
  }
  double px(Point p) const { return kPi * std::cos(kPi * p.x) * std::sin(kPi * p.y); }
  double py(Point p) const { return kPi * std::sin(kPi * p.x) * std::cos(kPi * p.y); }
  double phi(Point p) const { return phibar + a * s2(p.x) * s2(p.y); }
  double phix(Point p) const { return a * kPi * std::sin(2 * kPi * p.x) * s2(p.y); }
  double phiy(Point p) const { return a * kPi * s2(p.x) * std::sin(2 * kPi * p.y); }
  double lap_phi(Point p) const {
    return 2 * a * kPi * kPi *
           (std::cos(2 * kPi * p.x) * s2(p.y) + s2(p.x) * std::cos(2 * kPi * p.y));
  }

  static double s2(double t) {
    const double s = std::sin(kPi * t);
    return s * s;
  }
};

}  // namespace

Problem coalescence_problem() {
  Problem prob;
  prob.name = "coalescence";
  prob.params.mu = 1.0;
  prob.params.lambda = 1e-4;
  prob.params.gamma = 0.01;
  prob.params.eps = 0.01;
  prob.params.dt = 0.01;
  prob.params.scheme = TimeScheme::kBdf2;
  const double eta = 0.01;
  prob.phi0 = [eta](Point p) { return ic_coalescence(p, eta); };
  prob.bcs = bubble_bcs(prob.phi0);
  return prob;
}

Problem square_problem() {
  Problem prob;
  prob.name = "square";
  prob.params.mu = 0.1;
  prob.params.lambda = 0.1;
  prob.params.gamma = 0.01;
  prob.params.eps = 0.02;
  prob.params.dt = 0.01;
  prob.params.scheme = TimeScheme::kBdf2;
  prob.phi0 = [](Point p) { return ic_square(p); };
  prob.bcs = bubble_bcs(prob.phi0);
  return prob;
}

Problem manufactured_problem() {
  Problem prob;
  prob.name = "manufactured";
  prob.params.mu = 1.0;
  prob.params.lambda = 0.1;
  prob.params.gamma = 1.0;
  prob.params.eps = 0.5;
  prob.params.dt = 1.0;
  prob.params.scheme = TimeScheme::kBdf1;
  prob.params.include_advection = true;

  // The manufactured fields are constant in time, so the backward
  // difference contributes only the interpolation error of the history and
  // the forcing carries the spatial terms alone.
  const Manufactured m;
  const Params pr = prob.params;  // coefficients the forcing must match
  prob.params.forcing = [m, pr](const Point& x, double* f) {
    for (int k = 0; k < kNumEquations; ++k) f[k] = 0.0;
    const double div_b = m.lap_phi(x);
    f[7] = m.px(x) + pr.lambda * m.phix(x) * div_b - pr.mu * m.lap_u1(x) +
           (m.u1(x) * m.u1x(x) + m.u2(x) * m.u1y(x));
    f[8] = m.py(x) + pr.lambda * m.phiy(x) * div_b - pr.mu * m.lap_u2(x) +
           (m.u1(x) * m.u2x(x) + m.u2(x) * m.u2y(x));
    const double phi = m.phi(x);
    f[12] = m.u1(x) * m.phix(x) + m.u2(x) * m.phiy(x) -
            pr.gamma * (div_b - phi * (phi * phi - 1.0) / (pr.eps * pr.eps));
  };

  prob.phi0 = [m](Point p) { return m.phi(p); };
  prob.exact.resize(kNumComps);
  prob.exact[kU1] = [m](Point p) { return m.u1(p); };
  prob.exact[kU2] = [m](Point p) { return m.u2(p); };
  prob.exact[kV11] = [m](Point p) { return m.u1x(p); };
  prob.exact[kV12] = [m](Point p) { return m.u2x(p); };
  prob.exact[kV21] = [m](Point p) { return m.u1y(p); };
  prob.exact[kPres] = [m](Point p) { return m.pres(p); };
  prob.exact[kPhi] = [m](Point p) { return m.phi(p); };
  prob.exact[kB1] = [m](Point p) { return m.phix(p); };
  prob.exact[kB2] = [m](Point p) { return m.phiy(p); };

  prob.bcs = bubble_bcs(prob.exact[kPhi]);
  prob.bcs.comps[kU1].trace = prob.exact[kU1];
  prob.bcs.comps[kU2].trace = prob.exact[kU2];
  return prob;
}

std::shared_ptr<Space> build_problem_space(std::shared_ptr<const Mesh> mesh, int degree,
                                           const Problem& problem) {
  return std::make_shared<Space>(std::move(mesh), degree, kNumComps, problem.bcs);
}

State build_initial_state(std::shared_ptr<const Space> space, const Problem& problem) {
  const Space& sp = *space;
  if (!problem.exact.empty()) {
    State s = exact_state(space, problem);
    sp.impose_dirichlet(s.coef);
    return s;
  }
  State s = zero_state(space);
  for (int node = 0; node < sp.n_scalar_nodes(); ++node)
    s.coef[sp.dof(node, kPhi)] = problem.phi0(sp.node_position(node));
  sp.distribute_constraints(s.coef);

  // Recover B = grad(phi_h) by averaging element gradients at each node.
  const Mesh& mesh = sp.mesh();
  const int n1 = sp.degree() + 1;
  std::vector<double> gx(sp.n_scalar_nodes(), 0.0), gy(sp.n_scalar_nodes(), 0.0);
  std::vector<int> cnt(sp.n_scalar_nodes(), 0);
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const Point h = mesh.element_size(leaf);
    const auto nodes = sp.element_nodes(li);
    for (int j = 0; j < n1; ++j) {
      for (int i = 0; i < n1; ++i) {
        const double xi = -1.0 + 2.0 * double(i) / sp.degree();
        const double eta = -1.0 + 2.0 * double(j) / sp.degree();
        const BasisEval b = sp.eval_basis(xi, eta);
        double dx = 0.0, dy = 0.0;
        for (int a = 0; a < int(nodes.size()); ++a) {
          const double c = s.coef[sp.dof(nodes[a], kPhi)];
          dx += b.dxi[a] * c * (2.0 / h.x);
          dy += b.deta[a] * c * (2.0 / h.y);
        }
        const int node = nodes[j * n1 + i];
        gx[node] += dx;
        gy[node] += dy;
        cnt[node] += 1;
      }
    }
  }
  for (int node = 0; node < sp.n_scalar_nodes(); ++node) {
    s.coef[sp.dof(node, kB1)] = gx[node] / cnt[node];
    s.coef[sp.dof(node, kB2)] = gy[node] / cnt[node];
  }
  sp.distribute_constraints(s.coef);
  sp.impose_dirichlet(s.coef);
  return s;
}

State exact_state(std::shared_ptr<const Space> space, const Problem& problem) {
  if (problem.exact.empty())
    throw std::invalid_argument("exact_state: problem has no exact solution");
  State s = zero_state(space);
  s.coef = interpolate_functions(*space, problem.exact);
  return s;
}

double h1_error_squared(const State& s, const Problem& problem) {
  if (problem.exact.empty())
    throw std::invalid_argument("h1_error_squared: problem has no exact solution");
  const Space& sp = *s.space;
  const Mesh& mesh = sp.mesh();
  const Quadrature& quad = sp.quadrature();
  const double fd = 1e-6;

  double total = 0.0;
  for (int li = 0; li < mesh.n_leaves(); ++li) {
    const int leaf = mesh.leaves()[li];
    const LatPoint lo = mesh.lower_corner_lat(leaf);
    const Point p0 = mesh.position(lo);
    const Point h = mesh.element_size(leaf);
    const double jac = 0.25 * h.x * h.y;
    const auto nodes = sp.element_nodes(li);
    for (const auto& qp : quad.points) {
      const Point x{p0.x + 0.5 * (qp.xi + 1.0) * h.x, p0.y + 0.5 * (qp.eta + 1.0) * h.y};
      const BasisEval b = sp.eval_basis(qp.xi, qp.eta);
      for (int c = 0; c < kNumComps; ++c) {
        double v = 0.0, dx = 0.0, dy = 0.0;
        for (int a = 0; a < int(nodes.size()); ++a) {
          const double cv = s.coef[sp.dof(nodes[a], c)];
          v += b.value[a] * cv;
          dx += b.dxi[a] * cv * (2.0 / h.x);
          dy += b.deta[a] * cv * (2.0 / h.y);
        }
        const auto& f = problem.exact[c];
        const double ev = v - f(x);
        const double ex = dx - (f({x.x + fd, x.y}) - f({x.x - fd, x.y})) / (2.0 * fd);
        const double ey = dy - (f({x.x, x.y + fd}) - f({x.x, x.y - fd})) / (2.0 * fd);
        total += qp.weight * jac * (ev * ev + ex * ex + ey * ey);
      }
    }
  }
  return total;
}

}  // namespace fosls
