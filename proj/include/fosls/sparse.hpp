#pragma once

#include <cstddef>
#include <vector>

namespace fosls {

// Compressed sparse row matrix with sorted column indices per row.
struct CsrMatrix {
  int rows = 0, cols = 0;
  std::vector<int> rowptr;  // size rows+1
  std::vector<int> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }

  void matvec(const double* x, double* y) const;
  std::vector<double> matvec(const std::vector<double>& x) const;
  // r = b - A x
  void residual(const std::vector<double>& b, const std::vector<double>& x,
                std::vector<double>& r) const;

  // One Gauss-Seidel sweep solving (L+D) / (U+D) updates in place.
  void gs_forward(const std::vector<double>& b, std::vector<double>& x,
                  const std::vector<int>& diag) const;
  void gs_backward(const std::vector<double>& b, std::vector<double>& x,
                   const std::vector<int>& diag) const;

  // Position of the diagonal entry in each row; -1 when absent.
  std::vector<int> diagonal_positions() const;

  CsrMatrix transpose() const;

  // max |A - A^T| over all entries.
  double symmetry_error() const;

  double max_abs() const;
};

// C = A * B with deterministic (sorted) column order.
CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b);

// Galerkin product P^T A P.
CsrMatrix galerkin_product(const CsrMatrix& p, const CsrMatrix& a);

// Assembled SPD least-squares system. `kernel` is an optional deflation
// vector spanning the known nullspace (constant pressure mode); empty when
// the matrix is definite.
struct SparseSystem {
  CsrMatrix A;
  std::vector<double> b;
  std::vector<double> kernel;
};

// Dense Cholesky factorization used for the coarsest level; a rank-one
// kernel augmentation makes singular-but-consistent systems solvable.
class DenseSolver {
 public:
  DenseSolver() = default;
  DenseSolver(const CsrMatrix& a, const std::vector<double>& kernel);
  void solve(const std::vector<double>& rhs, std::vector<double>& x) const;
  int size() const { return n_; }

 private:
  int n_ = 0;
  std::vector<double> chol_;  // lower triangle of the factor
  std::vector<double> kernel_;
};

}  // namespace fosls
