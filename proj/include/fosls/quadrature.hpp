#pragma once

#include <vector>

namespace fosls {

// Tensor Gauss-Legendre rule on the reference square [-1,1]^2.
struct Quadrature {
  struct QPoint {
    double xi, eta, weight;
  };
  std::vector<QPoint> points;
  int points_per_axis = 0;

  // Exact for polynomials of degree 2n-1 per axis.
  int exact_degree() const { return 2 * points_per_axis - 1; }
};

// n-by-n tensor rule, 1 <= n <= 8.
Quadrature tensor_gauss(int n);

// 1D Gauss-Legendre nodes and weights on [-1,1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace fosls
