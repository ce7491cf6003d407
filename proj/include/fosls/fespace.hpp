#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fosls/mesh.hpp"
#include "fosls/quadrature.hpp"

namespace fosls {

enum class BCKind {
  kFree,
  kDirichlet,   // full trace prescribed
  kZeroMean,    // scalar determined up to a constant; mean fixed after solve
  kTangential,  // trace prescribed on boundary edges the component is tangential to
};

struct ComponentBC {
  BCKind kind = BCKind::kFree;
  // Trace value for kDirichlet / kTangential; null means zero.
  std::function<double(Point)> trace;
  // For kTangential: 0 if this is the x-component of a vector field (clamped
  // on y-normal boundary edges), 1 for the y-component.
  int vector_axis = 0;
};

struct BCSpec {
  std::vector<ComponentBC> comps;  // exactly one entry per scalar unknown

  static BCSpec all_free(int n_components) { return {std::vector<ComponentBC>(n_components)}; }
};

// Interpolation of a hanging scalar node from master nodes on the coarse
// side of its edge. Weights sum to one; masters are never constrained.
struct NodeConstraint {
  int node = -1;
  std::vector<std::pair<int, double>> masters;
};

enum class DofState : unsigned char { kFree, kHanging, kDirichlet };

// Values and reference gradients of all local scalar basis functions.
struct BasisEval {
  std::vector<double> value, dxi, deta;
};

// Nodal tensor-product Lagrange space (degree 1 or 2) on a quadtree mesh,
// holding the global scalar node numbering, hanging-node constraint table,
// and per-component boundary-condition tags for `n_components` unknowns that
// share the scalar numbering. Immutable after construction.
class Space {
 public:
  Space(std::shared_ptr<const Mesh> mesh, int degree, int n_components, BCSpec bcs);

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  int degree() const { return degree_; }
  int n_components() const { return nc_; }
  int nodes_per_element() const { return (degree_ + 1) * (degree_ + 1); }

  int n_scalar_nodes() const { return int(node_lat_.size()); }
  int n_dofs() const { return n_scalar_nodes() * nc_; }
  int dof(int node, int comp) const { return node * nc_ + comp; }

  Point node_position(int node) const { return mesh_->position(node_lat_[node]); }
  const LatPoint& node_lat(int node) const { return node_lat_[node]; }

  // Scalar node ids of the k-th leaf (mesh().leaves()[k]), tensor order with
  // x running fastest.
  std::span<const int> element_nodes(int leaf_index) const {
    const int nl = nodes_per_element();
    return {enodes_.data() + std::size_t(leaf_index) * nl, std::size_t(nl)};
  }

  const std::vector<NodeConstraint>& constraints() const { return constraints_; }
  // -1 if the scalar node is unconstrained, else index into constraints().
  int constraint_of(int node) const { return constraint_of_[node]; }

  DofState dof_state(int d) const { return dof_state_[d]; }
  double dirichlet_value(int d) const { return dirichlet_value_[d]; }
  const BCSpec& bcs() const { return bcs_; }
  // Components whose BC kind is kZeroMean.
  const std::vector<int>& zero_mean_components() const { return zero_mean_comps_; }

  // Nodal values and reference gradients at a reference point.
  BasisEval eval_basis(double xi, double eta) const;
  static void eval_basis_1d(int degree, double x, double* value, double* deriv);

  // Overwrite constrained entries of a coefficient vector with their master
  // interpolation, per component.
  void distribute_constraints(std::vector<double>& coef) const;
  // Overwrite Dirichlet/tangential-trace entries with the BC trace values.
  void impose_dirichlet(std::vector<double>& coef) const;

  // Point evaluation of the FE function of one component. The coefficient
  // vector must be constraint-consistent.
  double eval(const std::vector<double>& coef, int comp, const Point& p) const;
  void eval_with_gradient(const std::vector<double>& coef, int comp, const Point& p, double& value,
                          double& ddx, double& ddy) const;

  // Quadrature of f over the domain on this mesh.
  double integrate(const std::function<double(Point)>& f, int points_per_axis = 0) const;
  // Integral of the FE function of one component.
  double integral_of(const std::vector<double>& coef, int comp) const;

  // Default rule: (degree + 2)^2 points.
  const Quadrature& quadrature() const { return quad_; }

 private:
  void build_nodes();
  void build_constraints();
  void build_bc_tags();
  int locate(const Point& p, double& xi, double& eta) const;

  std::shared_ptr<const Mesh> mesh_;
  int degree_;
  int nc_;
  BCSpec bcs_;
  Quadrature quad_;

  std::vector<LatPoint> node_lat_;
  std::unordered_map<std::uint64_t, int> node_map_;
  std::vector<int> enodes_;       // n_leaves * nodes_per_element
  std::vector<int> leaf_row_;     // element id -> leaf index (-1 for non-leaves)
  std::vector<NodeConstraint> constraints_;
  std::vector<int> constraint_of_;
  std::vector<DofState> dof_state_;
  std::vector<double> dirichlet_value_;
  std::vector<int> zero_mean_comps_;
};

// Nodal interpolation of a coarse FE function onto another space on a nested
// finer mesh (and equal or higher degree): exact embedding. Works
// per-component for all shared components.
std::vector<double> interpolate(const Space& from, const std::vector<double>& coef,
                                const Space& to);

// Spec'd transfer between same-degree spaces on nested meshes; throws
// std::invalid_argument when the meshes are not nested or degrees differ.
std::vector<double> prolong(const Space& coarse, const Space& fine,
                            const std::vector<double>& coef);

// True when every leaf of `coarse` exists in `fine` (same root grid).
bool meshes_nested(const Mesh& coarse, const Mesh& fine);

// Interpolate per-component functions into a coefficient vector.
std::vector<double> interpolate_functions(
    const Space& space, const std::vector<std::function<double(Point)>>& fields);

}  // namespace fosls
