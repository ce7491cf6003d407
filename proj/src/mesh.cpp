#include "fosls/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fosls {

namespace {

std::uint64_t key2(std::int64_t a, std::int64_t b) {
  return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint64_t(std::uint32_t(b));
}

}  // namespace

int Mesh::find_cell(int level, std::int64_t ix, std::int64_t iy) const {
  if (level < 0 || level >= int(cmap_.size())) return -1;
  if (ix < 0 || iy < 0 || ix >= std::int64_t(nx_) << level || iy >= std::int64_t(ny_) << level)
    return -1;
  auto it = cmap_[level].find(key2(ix, iy));
  return it == cmap_[level].end() ? -1 : it->second;
}

int Mesh::vertex_at(const LatPoint& p) const {
  auto it = vmap_.find(key2(p.x, p.y));
  return it == vmap_.end() ? -1 : it->second;
}

int Mesh::add_vertex(const LatPoint& p) {
  auto [it, inserted] = vmap_.try_emplace(key2(p.x, p.y), int(verts_.size()));
  if (inserted) {
    vlat_.push_back(p);
    verts_.push_back(position(p));
  }
  return it->second;
}

std::vector<int> Mesh::edge_neighbors(int elem, int edge) const {
  const Element& e = elems_[elem];
  if (!e.is_leaf()) throw std::invalid_argument("edge_neighbors: element is not a leaf");

  // Cell coordinates of the would-be neighbor at the same level.
  std::int64_t nix = e.ix, niy = e.iy;
  switch (edge) {
    case kWest: nix -= 1; break;
    case kEast: nix += 1; break;
    case kSouth: niy -= 1; break;
    case kNorth: niy += 1; break;
    default: throw std::invalid_argument("edge_neighbors: bad edge");
  }
  if (nix < 0 || niy < 0 || nix >= std::int64_t(nx_) << e.level || niy >= std::int64_t(ny_) << e.level)
    return {};  // domain boundary

  int level = e.level;
  std::int64_t cx = nix, cy = niy;
  int found = find_cell(level, cx, cy);
  while (found < 0 && level > 0) {
    --level;
    cx >>= 1;
    cy >>= 1;
    found = find_cell(level, cx, cy);
  }
  if (found < 0) return {};  // cannot happen on a consistent mesh

  const Element& n = elems_[found];
  if (n.is_leaf()) return {found};

  // Same-level neighbor that is refined: return its two children that touch
  // our edge. They are leaves on a 1-irregular mesh.
  // Children order: SW, SE, NW, NE.
  static constexpr int facing[4][2] = {
      {1, 3},  // our west edge -> neighbor's east children (SE, NE)
      {0, 2},  // east -> west children (SW, NW)
      {2, 3},  // south -> north children (NW, NE)
      {0, 1},  // north -> south children (SW, SE)
  };
  std::vector<int> out;
  for (int k : facing[edge]) out.push_back(n.children[k]);
  return out;
}

std::array<std::vector<int>, 4> Mesh::leaf_neighbors(int elem) const {
  return {edge_neighbors(elem, kWest), edge_neighbors(elem, kEast),
          edge_neighbors(elem, kSouth), edge_neighbors(elem, kNorth)};
}

int Mesh::leaf_containing(const LatPoint& p) const {
  std::int64_t cx = p.x >> kMaxDepth;
  std::int64_t cy = p.y >> kMaxDepth;
  cx = std::min<std::int64_t>(std::max<std::int64_t>(cx, 0), nx_ - 1);
  cy = std::min<std::int64_t>(std::max<std::int64_t>(cy, 0), ny_ - 1);
  int cur = find_cell(0, cx, cy);
  while (!elems_[cur].is_leaf()) {
    const Element& e = elems_[cur];
    const std::int64_t w = lat_width(cur);
    const std::int64_t midx = e.ix * w + w / 2;
    const std::int64_t midy = e.iy * w + w / 2;
    const int child = (p.x >= midx ? 1 : 0) + (p.y >= midy ? 2 : 0);
    cur = e.children[child];
  }
  return cur;
}

int Mesh::leaf_containing(const Point& p) const {
  double fx = (p.x - domain_.xmin) / domain_.width() * double(lat_nx());
  double fy = (p.y - domain_.ymin) / domain_.height() * double(lat_ny());
  fx = std::min(std::max(fx, 0.0), double(lat_nx()));
  fy = std::min(std::max(fy, 0.0), double(lat_ny()));
  std::int64_t cx = std::min<std::int64_t>(std::int64_t(fx) >> kMaxDepth, nx_ - 1);
  std::int64_t cy = std::min<std::int64_t>(std::int64_t(fy) >> kMaxDepth, ny_ - 1);
  int cur = find_cell(0, cx, cy);
  while (!elems_[cur].is_leaf()) {
    const Element& e = elems_[cur];
    const std::int64_t w = lat_width(cur);
    const double midx = double(e.ix * w + w / 2);
    const double midy = double(e.iy * w + w / 2);
    const int child = (fx >= midx ? 1 : 0) + (fy >= midy ? 2 : 0);
    cur = e.children[child];
  }
  return cur;
}

void Mesh::split(int elem) {
  Element& e = elems_[elem];
  const std::int64_t w = lat_width(elem);
  const std::int64_t h = w / 2;
  const std::int64_t x0 = e.ix * w, y0 = e.iy * w;

  const int vs = add_vertex({x0 + h, y0});          // south midpoint
  const int vw = add_vertex({x0, y0 + h});          // west
  const int vc = add_vertex({x0 + h, y0 + h});      // center
  const int ve = add_vertex({x0 + w, y0 + h});      // east
  const int vn = add_vertex({x0 + h, y0 + w});      // north

  const std::array<int, 4> c = elems_[elem].corner;  // SW, SE, NW, NE
  const int level = elems_[elem].level + 1;
  const std::int64_t cix = elems_[elem].ix * 2, ciy = elems_[elem].iy * 2;

  const std::array<std::array<int, 4>, 4> corners = {{
      {c[0], vs, vw, vc},  // SW child
      {vs, c[1], vc, ve},  // SE
      {vw, vc, c[2], vn},  // NW
      {vc, ve, vn, c[3]},  // NE
  }};
  for (int k = 0; k < 4; ++k) {
    Element child;
    child.level = level;
    child.ix = cix + (k & 1);
    child.iy = ciy + (k >> 1);
    child.parent = elem;
    child.corner = corners[k];
    const int id = int(elems_.size());
    elems_.push_back(child);
    elems_[elem].children[k] = id;
    if (int(cmap_.size()) <= level) cmap_.resize(level + 1);
    cmap_[level].emplace(key2(child.ix, child.iy), id);
  }
}

void Mesh::rebuild_leaves_and_hanging() {
  leaves_.clear();
  for (int i = 0; i < int(elems_.size()); ++i)
    if (elems_[i].is_leaf()) leaves_.push_back(i);

  hanging_.clear();
  // A vertex hangs at the midpoint of a coarse leaf edge whenever the
  // neighbors across that edge are a finer pair.
  static constexpr int edge_corners[4][2] = {
      {0, 2},  // west: SW, NW
      {1, 3},  // east
      {0, 1},  // south
      {2, 3},  // north
  };
  for (int leaf : leaves_) {
    const Element& e = elems_[leaf];
    const std::int64_t w = lat_width(leaf);
    const std::int64_t x0 = e.ix * w, y0 = e.iy * w, h = w / 2;
    for (int edge = 0; edge < 4; ++edge) {
      if (edge_neighbors(leaf, edge).size() != 2) continue;
      LatPoint mid;
      switch (edge) {
        case kWest: mid = {x0, y0 + h}; break;
        case kEast: mid = {x0 + w, y0 + h}; break;
        case kSouth: mid = {x0 + h, y0}; break;
        case kNorth: mid = {x0 + h, y0 + w}; break;
      }
      const int v = vertex_at(mid);
      hanging_.push_back({v, {e.corner[edge_corners[edge][0]], e.corner[edge_corners[edge][1]]}});
    }
  }
}

std::string Mesh::check_invariants() const {
  std::ostringstream err;
  double area = 0.0;
  for (int leaf : leaves_) area += element_area(leaf);
  if (std::abs(area - domain_.area()) > 1e-12 * domain_.area())
    err << "leaf areas sum to " << area << ", domain area " << domain_.area() << "\n";

  for (int leaf : leaves_) {
    for (int edge = 0; edge < 4; ++edge) {
      for (int nb : edge_neighbors(leaf, edge)) {
        if (!elems_[nb].is_leaf()) err << "neighbor " << nb << " of leaf " << leaf << " is not a leaf\n";
        if (std::abs(elems_[nb].level - elems_[leaf].level) > 1)
          err << "leaves " << leaf << " and " << nb << " differ by more than one level\n";
      }
    }
  }

  for (const HangingVertex& hv : hanging_) {
    const LatPoint a = vlat_[hv.edge[0]], b = vlat_[hv.edge[1]], m = vlat_[hv.vertex];
    if (m.x * 2 != a.x + b.x || m.y * 2 != a.y + b.y)
      err << "hanging vertex " << hv.vertex << " is not the midpoint of its edge\n";
  }
  return err.str();
}

Mesh build_uniform(int nx, int ny, const Domain& domain) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_uniform: nx and ny must be positive");
  if (!(domain.xmax > domain.xmin) || !(domain.ymax > domain.ymin))
    throw std::invalid_argument("build_uniform: empty domain");

  Mesh m;
  m.domain_ = domain;
  m.nx_ = nx;
  m.ny_ = ny;
  m.cmap_.resize(1);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.add_vertex({std::int64_t(i) * Mesh::kUnit, std::int64_t(j) * Mesh::kUnit});

  auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      Element e;
      e.level = 0;
      e.ix = i;
      e.iy = j;
      e.corner = {vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)};
      const int id = int(m.elems_.size());
      m.elems_.push_back(e);
      m.cmap_[0].emplace(key2(i, j), id);
    }
  }
  m.rebuild_leaves_and_hanging();
  return m;
}

Mesh refine(const Mesh& mesh, const MarkSet& marks) {
  for (int id : marks) {
    if (id < 0 || id >= int(mesh.elements().size()) || !mesh.is_leaf(id))
      throw std::invalid_argument("refine: mark is not a current leaf");
  }

  Mesh m = mesh;
  MarkSet work = marks;

  // Closure: a marked leaf must not leave a neighbor two levels behind.
  bool changed = true;
  while (changed) {
    changed = false;
    MarkSet add;
    for (int id : work) {
      const int level = m.level_of(id);
      if (level + 1 > Mesh::kMaxDepth)
        throw std::invalid_argument("refine: maximum refinement depth exceeded");
      for (int edge = 0; edge < 4; ++edge) {
        for (int nb : m.edge_neighbors(id, edge)) {
          if (m.level_of(nb) < level && !work.count(nb)) add.insert(nb);
        }
      }
    }
    for (int id : add) {
      work.insert(id);
      changed = true;
    }
  }

  for (int id : work) m.split(id);
  m.rebuild_leaves_and_hanging();
  return m;
}

}  // namespace fosls
