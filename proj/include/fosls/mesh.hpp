#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace fosls {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Node coordinates on the integer refinement lattice. Every vertex and FE
// node created by dyadic refinement of the root grid has exact integer
// coordinates here, so geometric identity is a pure integer comparison.
struct LatPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool operator==(const LatPoint&) const = default;
};

struct Domain {
  double xmin = 0.0, xmax = 1.0;
  double ymin = 0.0, ymax = 1.0;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
};

// Edge numbering used throughout: west, east, south, north.
enum Edge : int { kWest = 0, kEast = 1, kSouth = 2, kNorth = 3 };

struct Element {
  int level = 0;
  std::int64_t ix = 0, iy = 0;  // cell index within the level-l virtual grid
  int parent = -1;
  std::array<int, 4> children{-1, -1, -1, -1};  // SW, SE, NW, NE
  std::array<int, 4> corner{0, 0, 0, 0};        // vertex ids: SW, SE, NW, NE
  bool is_leaf() const { return children[0] < 0; }
};

// Hanging vertex at the midpoint of a coarse leaf edge; `edge` holds the
// vertex ids of that edge's endpoints.
struct HangingVertex {
  int vertex = -1;
  std::array<int, 2> edge{-1, -1};
};

// Leaf element ids selected for refinement. Ordered so all traversals are
// deterministic.
using MarkSet = std::set<int>;

// Hierarchical quadrilateral mesh of a rectangle: a forest of quadtrees
// rooted at an nx-by-ny grid. Leaves tile the domain; adjacent leaves differ
// by at most one level (1-irregular). Immutable after construction; refine()
// returns a new mesh that keeps the full parent history.
class Mesh {
 public:
  // Deepest refinement level representable on the integer lattice.
  static constexpr int kMaxDepth = 21;
  static constexpr std::int64_t kUnit = std::int64_t(1) << kMaxDepth;

  const Domain& domain() const { return domain_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  const std::vector<Element>& elements() const { return elems_; }
  const std::vector<Point>& vertices() const { return verts_; }
  const std::vector<LatPoint>& vertex_lattice() const { return vlat_; }
  const std::vector<HangingVertex>& hanging_vertices() const { return hanging_; }
  const std::vector<int>& leaves() const { return leaves_; }

  int level_of(int elem) const { return elems_[elem].level; }
  bool is_leaf(int elem) const { return elems_[elem].is_leaf(); }
  int n_leaves() const { return static_cast<int>(leaves_.size()); }

  // Lattice extent of one element edge.
  std::int64_t lat_width(int elem) const {
    return kUnit >> elems_[elem].level;
  }
  LatPoint lower_corner_lat(int elem) const {
    const Element& e = elems_[elem];
    const std::int64_t w = lat_width(elem);
    return {e.ix * w, e.iy * w};
  }
  std::int64_t lat_nx() const { return std::int64_t(nx_) * kUnit; }
  std::int64_t lat_ny() const { return std::int64_t(ny_) * kUnit; }

  Point position(const LatPoint& p) const {
    return {domain_.xmin + domain_.width() * double(p.x) / double(lat_nx()),
            domain_.ymin + domain_.height() * double(p.y) / double(lat_ny())};
  }
  double element_area(int elem) const {
    const double hx = domain_.width() / double(nx_ << elems_[elem].level);
    const double hy = domain_.height() / double(ny_ << elems_[elem].level);
    return hx * hy;
  }
  Point element_size(int elem) const {
    return {domain_.width() / double(nx_ << elems_[elem].level),
            domain_.height() / double(ny_ << elems_[elem].level)};
  }
  Point centroid(int elem) const {
    const LatPoint lo = lower_corner_lat(elem);
    const std::int64_t h = lat_width(elem) / 2;
    return position({lo.x + h, lo.y + h});
  }

  // Leaf neighbors of leaf `elem` across `edge`: zero (boundary), one
  // (conforming or coarser), or two (finer pair).
  std::vector<int> edge_neighbors(int elem, int edge) const;

  // All-edge variant: neighbors[edge] as above.
  std::array<std::vector<int>, 4> leaf_neighbors(int elem) const;

  // Leaf whose closed cell contains the lattice point (points on shared
  // edges resolve to the east/north side where possible).
  int leaf_containing(const LatPoint& p) const;
  // Same for an arbitrary physical point, clamped to the domain.
  int leaf_containing(const Point& p) const;

  int vertex_at(const LatPoint& p) const;  // -1 if no vertex there

  // Invariant checks (tiling, 1-irregularity, hanging-vertex placement).
  // Returns an empty string when the mesh is consistent, else a diagnostic.
  std::string check_invariants() const;

  friend Mesh build_uniform(int nx, int ny, const Domain& domain);
  friend Mesh refine(const Mesh& mesh, const MarkSet& marks);

 private:
  int find_cell(int level, std::int64_t ix, std::int64_t iy) const;
  int add_vertex(const LatPoint& p);
  void split(int elem);
  void rebuild_leaves_and_hanging();

  Domain domain_;
  int nx_ = 0, ny_ = 0;
  std::vector<Element> elems_;
  std::vector<Point> verts_;
  std::vector<LatPoint> vlat_;
  std::vector<int> leaves_;
  std::vector<HangingVertex> hanging_;
  std::unordered_map<std::uint64_t, int> vmap_;               // lattice -> vertex
  std::vector<std::unordered_map<std::uint64_t, int>> cmap_;  // per level: cell -> element
};

// Uniform nx-by-ny grid of congruent rectangles.
Mesh build_uniform(int nx, int ny, const Domain& domain = {});

// Split every marked leaf into its four children, adding closure marks until
// the result is 1-irregular again.
Mesh refine(const Mesh& mesh, const MarkSet& marks);

}  // namespace fosls
