#include "fosls/quadrature.hpp"

#include <stdexcept>

namespace fosls {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  switch (n) {
    case 1:
      nodes = {0.0};
      weights = {2.0};
      break;
    case 2:
      nodes = {-0.57735026918962576, 0.57735026918962576};
      weights = {1.0, 1.0};
      break;
    case 3:
      nodes = {-0.77459666924148338, 0.0, 0.77459666924148338};
      weights = {0.55555555555555556, 0.88888888888888889, 0.55555555555555556};
      break;
    case 4:
      nodes = {-0.86113631159405258, -0.33998104358485626, 0.33998104358485626,
               0.86113631159405258};
      weights = {0.34785484513745386, 0.65214515486254614, 0.65214515486254614,
                 0.34785484513745386};
      break;
    case 5:
      nodes = {-0.90617984593866399, -0.53846931010568309, 0.0, 0.53846931010568309,
               0.90617984593866399};
      weights = {0.23692688505618909, 0.47862867049936647, 0.56888888888888889,
                 0.47862867049936647, 0.23692688505618909};
      break;
    case 6:
      nodes = {-0.93246951420315203, -0.66120938646626451, -0.23861918608319691,
               0.23861918608319691, 0.66120938646626451, 0.93246951420315203};
      weights = {0.17132449237917035, 0.36076157304813860, 0.46791393457269105,
                 0.46791393457269105, 0.36076157304813860, 0.17132449237917035};
      break;
    case 7:
      nodes = {-0.94910791234275852, -0.74153118559939444, -0.40584515137739717, 0.0,
               0.40584515137739717, 0.74153118559939444, 0.94910791234275852};
      weights = {0.12948496616886969, 0.27970539148927666, 0.38183005050511894,
                 0.41795918367346939, 0.38183005050511894, 0.27970539148927666,
                 0.12948496616886969};
      break;
    case 8:
      nodes = {-0.96028985649753623, -0.79666647741362674, -0.52553240991632899,
               -0.18343464249564980, 0.18343464249564980, 0.52553240991632899,
               0.79666647741362674, 0.96028985649753623};
      weights = {0.10122853629037626, 0.22238103445337447, 0.31370664587788729,
                 0.36268378337836198, 0.36268378337836198, 0.31370664587788729,
                 0.22238103445337447, 0.10122853629037626};
      break;
    default:
      throw std::invalid_argument("gauss_legendre: supported orders are 1..8");
  }
}

Quadrature tensor_gauss(int n) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  Quadrature q;
  q.points_per_axis = n;
  q.points.reserve(std::size_t(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) q.points.push_back({x[i], x[j], w[i] * w[j]});
  return q;
}

}  // namespace fosls
