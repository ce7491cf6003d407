#include "fosls/linsolve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fosls/errors.hpp"

namespace fosls {

double wu_account(const std::vector<std::size_t>& nnz_per_level,
                  const std::vector<double>& op_counts, std::size_t finest_nnz) {
  if (finest_nnz == 0) throw std::invalid_argument("wu_account: finest_nnz must be positive");
  if (nnz_per_level.size() != op_counts.size())
    throw std::invalid_argument("wu_account: per-level lists differ in length");
  double raw = 0.0;
  for (std::size_t l = 0; l < nnz_per_level.size(); ++l)
    raw += double(nnz_per_level[l]) * op_counts[l];
  return raw / double(finest_nnz);
}

Hierarchy build_hierarchy(const SparseSystem& fine, const std::vector<CsrMatrix>& transfers,
                          const std::vector<std::vector<double>>& coarse_kernels) {
  Hierarchy h;
  const int nl = int(transfers.size()) + 1;
  if (!coarse_kernels.empty() && int(coarse_kernels.size()) != nl - 1)
    throw std::invalid_argument("build_hierarchy: need one kernel per coarse level");
  h.levels.resize(nl);
  h.levels[nl - 1].A = fine.A;
  h.levels[nl - 1].kernel = fine.kernel;
  for (int l = nl - 1; l > 0; --l) {
    h.levels[l].P = transfers[l - 1];
    const CsrMatrix& P = h.levels[l].P;
    if (P.rows != h.levels[l].A.rows)
      throw std::invalid_argument("build_hierarchy: transfer row count mismatch");
    h.levels[l - 1].A = galerkin_product(P, h.levels[l].A);
    // Decoupled rows (eliminated coarse dofs) need a unit diagonal.
    {
      CsrMatrix& A = h.levels[l - 1].A;
      // Ensure every row has a diagonal entry; Galerkin can drop empty rows.
      CsrMatrix fixed;
      fixed.rows = A.rows;
      fixed.cols = A.cols;
      fixed.rowptr.assign(A.rows + 1, 0);
      std::vector<int> cols;
      std::vector<double> vals;
      for (int r = 0; r < A.rows; ++r) {
        bool has_diag = false;
        for (int k = A.rowptr[r]; k < A.rowptr[r + 1]; ++k)
          if (A.col[k] == r) has_diag = true;
        if (has_diag && A.rowptr[r + 1] > A.rowptr[r]) {
          for (int k = A.rowptr[r]; k < A.rowptr[r + 1]; ++k) {
            cols.push_back(A.col[k]);
            vals.push_back(A.val[k]);
          }
        } else {
          // Insert (or create) the diagonal in sorted position.
          bool inserted = false;
          for (int k = A.rowptr[r]; k < A.rowptr[r + 1]; ++k) {
            if (!inserted && A.col[k] > r) {
              cols.push_back(r);
              vals.push_back(1.0);
              inserted = true;
            }
            cols.push_back(A.col[k]);
            vals.push_back(A.val[k]);
          }
          if (!inserted) {
            cols.push_back(r);
            vals.push_back(1.0);
          }
        }
        fixed.rowptr[r + 1] = int(cols.size());
      }
      fixed.col = std::move(cols);
      fixed.val = std::move(vals);
      A = std::move(fixed);
    }
    if (!coarse_kernels.empty()) {
      h.levels[l - 1].kernel = coarse_kernels[l - 1];
    } else if (!h.levels[l].kernel.empty()) {
      // Fallback: the coarse kernel is the coarse constant mode, recovered
      // as the support of P^T k.
      const CsrMatrix Pt = h.levels[l].P.transpose();
      std::vector<double> kc = Pt.matvec(h.levels[l].kernel);
      for (double& v : kc) v = (std::abs(v) > 1e-12) ? 1.0 : 0.0;
      h.levels[l - 1].kernel = std::move(kc);
    }
  }
  for (auto& lev : h.levels) lev.diag = lev.A.diagonal_positions();
  h.coarse = DenseSolver(h.levels[0].A, h.levels[0].kernel);
  return h;
}

namespace {

void deflate(const std::vector<double>& kernel, std::vector<double>& v) {
  if (kernel.empty()) return;
  double dot = 0.0, nrm2 = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    dot += kernel[i] * v[i];
    nrm2 += kernel[i] * kernel[i];
  }
  if (nrm2 > 0.0) {
    const double c = dot / nrm2;
    for (std::size_t i = 0; i < kernel.size(); ++i) v[i] -= c * kernel[i];
  }
}

}  // namespace

void vcycle(const Hierarchy& h, int level, const std::vector<double>& rhs,
            std::vector<double>& x, WorkLedger* work) {
  const Hierarchy::Level& lev = h.levels[level];
  if (level == 0) {
    h.coarse.solve(rhs, x);
    if (work) work->add(lev.A.nnz());
    return;
  }

  for (int s = 0; s < h.pre_smooth; ++s) {
    lev.A.gs_forward(rhs, x, lev.diag);
    lev.A.gs_backward(rhs, x, lev.diag);
    if (work) work->add(lev.A.nnz(), 2.0);
  }

  std::vector<double> r;
  lev.A.residual(rhs, x, r);
  if (work) work->add(lev.A.nnz());

  // Restrict with P^T.
  const CsrMatrix& P = lev.P;
  std::vector<double> rc(P.cols, 0.0);
  for (int i = 0; i < P.rows; ++i)
    for (int k = P.rowptr[i]; k < P.rowptr[i + 1]; ++k) rc[P.col[k]] += P.val[k] * r[i];
  if (work) work->add(P.nnz());

  std::vector<double> ec(P.cols, 0.0);
  vcycle(h, level - 1, rc, ec, work);

  for (int i = 0; i < P.rows; ++i) {
    double s = 0.0;
    for (int k = P.rowptr[i]; k < P.rowptr[i + 1]; ++k) s += P.val[k] * ec[P.col[k]];
    x[i] += s;
  }
  if (work) work->add(P.nnz());

  for (int s = 0; s < h.post_smooth; ++s) {
    lev.A.gs_forward(rhs, x, lev.diag);
    lev.A.gs_backward(rhs, x, lev.diag);
    if (work) work->add(lev.A.nnz(), 2.0);
  }
}

SolveStats pcg(const SparseSystem& sys, std::vector<double>& x, const Hierarchy* precond,
               const PcgOptions& opt, WorkLedger* work) {
  const CsrMatrix& A = sys.A;
  const int n = A.rows;
  x.resize(n, 0.0);

  std::vector<double> b = sys.b;
  deflate(sys.kernel, b);
  deflate(sys.kernel, x);

  SolveStats stats;
  WorkLedger local;
  WorkLedger* wl = work ? work : &local;

  std::vector<double> r;
  A.residual(b, x, r);
  wl->add(A.nnz());
  deflate(sys.kernel, r);

  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };
  const double bnorm = std::max(norm(b), 1e-300);
  double rnorm = norm(r);
  const double r0 = rnorm;
  if (rnorm / bnorm <= opt.tol) {
    stats.rel_residual = rnorm / bnorm;
    stats.raw_work = wl->raw;
    stats.wu = wl->raw / double(A.nnz());
    return stats;
  }

  std::vector<double> z(n), p(n), Ap(n);
  auto apply_precond = [&](const std::vector<double>& rin, std::vector<double>& zout) {
    if (precond) {
      zout.assign(n, 0.0);
      vcycle(*precond, precond->finest(), rin, zout, wl);
    } else {
      zout = rin;
    }
    deflate(sys.kernel, zout);
  };

  apply_precond(r, z);
  p = z;
  double rz = 0.0;
  for (int i = 0; i < n; ++i) rz += r[i] * z[i];

  // Quadratic objective tracking for the functional-stall stopping rule:
  // q(x) = x^T A x - 2 b^T x decreases by alpha * rz each iteration.
  double g_lin = opt.g_nonlinear;

  for (int it = 1; it <= opt.maxit; ++it) {
    A.matvec(p.data(), Ap.data());
    wl->add(A.nnz());
    double pAp = 0.0;
    for (int i = 0; i < n; ++i) pAp += p[i] * Ap[i];
    if (pAp <= 0.0)
      throw NotSpdError("pcg: nonpositive curvature direction; matrix is not SPD");
    const double alpha = rz / pAp;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    deflate(sys.kernel, r);
    rnorm = norm(r);
    stats.iterations = it;
    if (rnorm / bnorm <= opt.tol) break;

    if (opt.gain_floor > 0.0 && g_lin > 0.0) {
      const double drop = alpha * rz;
      const double g_next = std::max(g_lin - drop, 0.0);
      const bool stalled = drop < opt.gain_floor * std::max(g_lin, 1e-300);
      g_lin = g_next;
      if (stalled && it >= 1) break;
    }

    apply_precond(r, z);
    double rz_new = 0.0;
    for (int i = 0; i < n; ++i) rz_new += r[i] * z[i];
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }

  deflate(sys.kernel, x);
  stats.rel_residual = rnorm / bnorm;
  stats.conv_factor =
      stats.iterations > 0 ? std::pow(rnorm / std::max(r0, 1e-300), 1.0 / stats.iterations) : 1.0;
  stats.raw_work = wl->raw;
  stats.wu = wl->raw / double(A.nnz());
  return stats;
}

}  // namespace fosls
