#include "fosls/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fosls {

void CsrMatrix::matvec(const double* x, double* y) const {
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = rowptr[r]; k < rowptr[r + 1]; ++k) s += val[k] * x[col[k]];
    y[r] = s;
  }
}

std::vector<double> CsrMatrix::matvec(const std::vector<double>& x) const {
  std::vector<double> y(rows, 0.0);
  matvec(x.data(), y.data());
  return y;
}

void CsrMatrix::residual(const std::vector<double>& b, const std::vector<double>& x,
                         std::vector<double>& r) const {
  r.resize(rows);
  for (int i = 0; i < rows; ++i) {
    double s = b[i];
    for (int k = rowptr[i]; k < rowptr[i + 1]; ++k) s -= val[k] * x[col[k]];
    r[i] = s;
  }
}

void CsrMatrix::gs_forward(const std::vector<double>& b, std::vector<double>& x,
                           const std::vector<int>& diag) const {
  for (int r = 0; r < rows; ++r) {
    double s = b[r];
    for (int k = rowptr[r]; k < rowptr[r + 1]; ++k) s -= val[k] * x[col[k]];
    const int d = diag[r];
    x[r] += s / val[d];
  }
}

void CsrMatrix::gs_backward(const std::vector<double>& b, std::vector<double>& x,
                            const std::vector<int>& diag) const {
  for (int r = rows - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = rowptr[r]; k < rowptr[r + 1]; ++k) s -= val[k] * x[col[k]];
    const int d = diag[r];
    x[r] += s / val[d];
  }
}

std::vector<int> CsrMatrix::diagonal_positions() const {
  std::vector<int> diag(rows, -1);
  for (int r = 0; r < rows; ++r) {
    for (int k = rowptr[r]; k < rowptr[r + 1]; ++k) {
      if (col[k] == r) {
        diag[r] = k;
        break;
      }
    }
  }
  return diag;
}

CsrMatrix CsrMatrix::transpose() const {
  CsrMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.rowptr.assign(cols + 1, 0);
  for (int c : col) ++t.rowptr[c + 1];
  for (int r = 0; r < cols; ++r) t.rowptr[r + 1] += t.rowptr[r];
  t.col.resize(nnz());
  t.val.resize(nnz());
  std::vector<int> next(t.rowptr.begin(), t.rowptr.end() - 1);
  for (int r = 0; r < rows; ++r) {
    for (int k = rowptr[r]; k < rowptr[r + 1]; ++k) {
      const int pos = next[col[k]]++;
      t.col[pos] = r;
      t.val[pos] = val[k];
    }
  }
  return t;  // column order within rows is ascending by construction
}

double CsrMatrix::symmetry_error() const {
  const CsrMatrix t = transpose();
  double err = 0.0;
  for (int r = 0; r < rows; ++r) {
    int ka = rowptr[r], kb = t.rowptr[r];
    const int ea = rowptr[r + 1], eb = t.rowptr[r + 1];
    while (ka < ea || kb < eb) {
      const int ca = ka < ea ? col[ka] : cols;
      const int cb = kb < eb ? t.col[kb] : cols;
      if (ca == cb) {
        err = std::max(err, std::abs(val[ka] - t.val[kb]));
        ++ka;
        ++kb;
      } else if (ca < cb) {
        err = std::max(err, std::abs(val[ka]));
        ++ka;
      } else {
        err = std::max(err, std::abs(t.val[kb]));
        ++kb;
      }
    }
  }
  return err;
}

double CsrMatrix::max_abs() const {
  double m = 0.0;
  for (double v : val) m = std::max(m, std::abs(v));
  return m;
}

CsrMatrix multiply(const CsrMatrix& a, const CsrMatrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("multiply: dimension mismatch");
  CsrMatrix c;
  c.rows = a.rows;
  c.cols = b.cols;
  c.rowptr.assign(a.rows + 1, 0);

  std::vector<double> work(b.cols, 0.0);
  std::vector<int> mark(b.cols, -1);
  std::vector<int> touched;
  touched.reserve(256);

  std::vector<int> cols_out;
  std::vector<double> vals_out;
  for (int r = 0; r < a.rows; ++r) {
    touched.clear();
    for (int ka = a.rowptr[r]; ka < a.rowptr[r + 1]; ++ka) {
      const int m = a.col[ka];
      const double av = a.val[ka];
      for (int kb = b.rowptr[m]; kb < b.rowptr[m + 1]; ++kb) {
        const int cc = b.col[kb];
        if (mark[cc] != r) {
          mark[cc] = r;
          work[cc] = 0.0;
          touched.push_back(cc);
        }
        work[cc] += av * b.val[kb];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (int cc : touched) {
      cols_out.push_back(cc);
      vals_out.push_back(work[cc]);
    }
    c.rowptr[r + 1] = int(cols_out.size());
  }
  c.col = std::move(cols_out);
  c.val = std::move(vals_out);
  return c;
}

CsrMatrix galerkin_product(const CsrMatrix& p, const CsrMatrix& a) {
  return multiply(p.transpose(), multiply(a, p));
}

DenseSolver::DenseSolver(const CsrMatrix& a, const std::vector<double>& kernel) : n_(a.rows) {
  chol_.assign(std::size_t(n_) * n_, 0.0);
  for (int r = 0; r < n_; ++r)
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k)
      chol_[std::size_t(r) * n_ + a.col[k]] = a.val[k];

  if (!kernel.empty()) {
    kernel_ = kernel;
    double nrm2 = 0.0, diag_mean = 0.0;
    for (double v : kernel_) nrm2 += v * v;
    for (int r = 0; r < n_; ++r) diag_mean += chol_[std::size_t(r) * n_ + r];
    diag_mean /= std::max(1, n_);
    if (nrm2 > 0.0) {
      const double sigma = diag_mean / nrm2;
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j)
          chol_[std::size_t(i) * n_ + j] += sigma * kernel_[i] * kernel_[j];
    }
  }

  // In-place lower Cholesky.
  for (int j = 0; j < n_; ++j) {
    double d = chol_[std::size_t(j) * n_ + j];
    for (int k = 0; k < j; ++k) d -= chol_[std::size_t(j) * n_ + k] * chol_[std::size_t(j) * n_ + k];
    if (d <= 0.0) throw std::runtime_error("DenseSolver: matrix is not positive definite");
    d = std::sqrt(d);
    chol_[std::size_t(j) * n_ + j] = d;
    for (int i = j + 1; i < n_; ++i) {
      double s = chol_[std::size_t(i) * n_ + j];
      for (int k = 0; k < j; ++k)
        s -= chol_[std::size_t(i) * n_ + k] * chol_[std::size_t(j) * n_ + k];
      chol_[std::size_t(i) * n_ + j] = s / d;
    }
  }
}

void DenseSolver::solve(const std::vector<double>& rhs, std::vector<double>& x) const {
  x = rhs;
  for (int i = 0; i < n_; ++i) {
    double s = x[i];
    for (int k = 0; k < i; ++k) s -= chol_[std::size_t(i) * n_ + k] * x[k];
    x[i] = s / chol_[std::size_t(i) * n_ + i];
  }
  for (int i = n_ - 1; i >= 0; --i) {
    double s = x[i];
    for (int k = i + 1; k < n_; ++k) s -= chol_[std::size_t(k) * n_ + i] * x[k];
    x[i] = s / chol_[std::size_t(i) * n_ + i];
  }
  if (!kernel_.empty()) {
    double dot = 0.0, nrm2 = 0.0;
    for (int i = 0; i < n_; ++i) {
      dot += kernel_[i] * x[i];
      nrm2 += kernel_[i] * kernel_[i];
    }
    if (nrm2 > 0.0)
      for (int i = 0; i < n_; ++i) x[i] -= (dot / nrm2) * kernel_[i];
  }
}

}  // namespace fosls
