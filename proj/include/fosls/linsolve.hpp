#pragma once

#include <cstddef>
#include <vector>

#include "fosls/sparse.hpp"

namespace fosls {

struct SolveStats {
  int iterations = 0;
  double rel_residual = 0.0;
  double conv_factor = 1.0;  // geometric mean residual reduction per iteration
  double wu = 0.0;           // work relative to the finest matrix of this solve
  double raw_work = 0.0;     // sum over operations of touched nonzeros
};

// Accumulates nonzero-weighted operation counts so multilevel work can be
// expressed in equivalent finest-grid matrix passes.
struct WorkLedger {
  double raw = 0.0;
  void add(std::size_t nnz, double count = 1.0) { raw += double(nnz) * count; }
};

// wu = sum_l op_counts[l] * nnz_per_level[l] / finest_nnz.
double wu_account(const std::vector<std::size_t>& nnz_per_level,
                  const std::vector<double>& op_counts, std::size_t finest_nnz);

// Geometric multigrid hierarchy over nested spaces. Level 0 is the coarsest;
// each finer level holds the Galerkin matrix and the transfer from the level
// below. The coarsest level is factored directly.
class Hierarchy {
 public:
  struct Level {
    CsrMatrix A;
    CsrMatrix P;  // transfer from the previous (coarser) level; empty on level 0
    std::vector<double> kernel;
    std::vector<int> diag;
  };

  std::vector<Level> levels;
  DenseSolver coarse;
  int pre_smooth = 1, post_smooth = 1;

  int n_levels() const { return int(levels.size()); }
  int finest() const { return n_levels() - 1; }
  std::size_t finest_nnz() const { return levels.back().A.nnz(); }
};

// Build the hierarchy for `fine` using the given inter-level transfers
// (transfers[l] maps level l to level l+1, so there are n_levels-1 of them).
// Coarse matrices are Galerkin products. `coarse_kernels[l]` supplies the
// deflation vector of level l < finest (empty vectors when the matrix is
// definite); when the list is empty the kernels are restricted from the fine
// one through the transfers.
Hierarchy build_hierarchy(const SparseSystem& fine, const std::vector<CsrMatrix>& transfers,
                          const std::vector<std::vector<double>>& coarse_kernels = {});

// One V(pre,post) cycle with symmetric Gauss-Seidel smoothing on `level`,
// updating x in place. A one-level hierarchy reduces to the direct solve.
void vcycle(const Hierarchy& h, int level, const std::vector<double>& rhs,
            std::vector<double>& x, WorkLedger* work = nullptr);

struct PcgOptions {
  double tol = 1e-8;  // relative residual target
  int maxit = 200;
  // When positive (and paired with `g_nonlinear`), stop once the quadratic
  // least-squares functional drops by less than this fraction per iteration.
  double gain_floor = 0.0;
  double g_nonlinear = 0.0;
};

// Preconditioned conjugate gradients; precond == nullptr runs plain CG,
// otherwise one V-cycle of `precond` per iteration. Deflates sys.kernel.
// Throws NotSpdError when a direction of nonpositive curvature appears.
SolveStats pcg(const SparseSystem& sys, std::vector<double>& x, const Hierarchy* precond,
               const PcgOptions& opt = {}, WorkLedger* work = nullptr);

}  // namespace fosls
