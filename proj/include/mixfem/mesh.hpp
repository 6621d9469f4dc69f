#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace mixfem {

using index_t = std::int32_t;

// Sentinel for "no counterpart" in view mappings and inverse lookups.
inline constexpr index_t absent_index = -1;

enum class CellKind { point = 0, interval = 1, triangle = 2, tetrahedron = 3 };

inline int cell_dim(CellKind k) { return static_cast<int>(k); }

inline CellKind cell_kind_of_dim(int dim) {
  if (dim < 0 || dim > 3) throw InvalidArgumentError("no simplex cell of dimension " + std::to_string(dim));
  return static_cast<CellKind>(dim);
}

inline int cell_num_vertices(CellKind k) { return cell_dim(k) + 1; }

// Local sub-entities of a reference simplex of dimension `dim`, as tuples of
// local vertex indices. Convention:
//   - d == dim-1 (facets): facet i is the tuple omitting vertex i, i ascending;
//   - otherwise: all (d+1)-subsets of {0..dim} in lexicographic order.
// Every tuple is ascending.
inline std::vector<std::vector<int>> local_sub_entities(int dim, int d) {
  if (d < 0 || d >= dim) throw InvalidArgumentError("sub-entity dimension out of range");
  std::vector<std::vector<int>> out;
  if (d == dim - 1) {
    for (int i = 0; i <= dim; ++i) {
      std::vector<int> t;
      for (int j = 0; j <= dim; ++j)
        if (j != i) t.push_back(j);
      out.push_back(std::move(t));
    }
    return out;
  }
  // lexicographic (d+1)-subsets of {0..dim}
  std::vector<int> idx(d + 1);
  for (int i = 0; i <= d; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    int i = d;
    while (i >= 0 && idx[i] == dim - d + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j <= d; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

// Adjacency lists in CSR layout.
struct Connectivity {
  std::vector<index_t> offsets;  // size: num_source + 1
  std::vector<index_t> indices;

  index_t num_source() const { return static_cast<index_t>(offsets.size()) - 1; }

  std::span<const index_t> operator()(index_t i) const {
    return {indices.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
};

class MeshViewMapping;  // meshview.hpp

// Simplicial mesh: geometry (vertex coordinates, gdim) plus topology (cells as
// sorted vertex tuples, tdim <= gdim). Intermediate entities and connectivity
// relations are computed on demand and cached; cached relations never change.
//
// Entity numbering: vertices and cells keep construction order; entities of
// dimension 0 < d < tdim are enumerated as sorted vertex tuples in lexicographic
// order. In particular facet ids are reproducible across runs.
class Mesh {
public:
  Mesh(int tdim, int gdim, std::vector<double> coords, std::vector<index_t> cells)
      : id_(next_id()), tdim_(tdim), gdim_(gdim), coords_(std::move(coords)), cells_(std::move(cells)) {
    if (tdim_ < 1 || tdim_ > 3 || gdim_ < tdim_ || gdim_ > 3)
      throw InvalidArgumentError("unsupported mesh dimensions tdim=" + std::to_string(tdim_) +
                                 " gdim=" + std::to_string(gdim_));
    if (coords_.size() % gdim_ != 0) throw InvalidArgumentError("coordinate array size not divisible by gdim");
    const int nv = tdim_ + 1;
    if (cells_.size() % nv != 0) throw InvalidArgumentError("cell array size not divisible by tdim+1");
    num_vertices_ = static_cast<index_t>(coords_.size() / gdim_);
    num_cells_ = static_cast<index_t>(cells_.size() / nv);
    for (index_t c = 0; c < num_cells_; ++c) {
      index_t* t = cells_.data() + static_cast<std::size_t>(c) * nv;
      std::sort(t, t + nv);
      for (int i = 0; i < nv; ++i)
        if (t[i] < 0 || t[i] >= num_vertices_)
          throw InvalidArgumentError("cell " + std::to_string(c) + " references vertex out of range");
      for (int i = 0; i + 1 < nv; ++i)
        if (t[i] == t[i + 1]) throw InvalidArgumentError("cell " + std::to_string(c) + " repeats a vertex");
      if (cell_volume(c) <= 0.0) throw InvalidArgumentError("cell " + std::to_string(c) + " is degenerate");
    }
  }

  std::uint64_t id() const { return id_; }
  int tdim() const { return tdim_; }
  int gdim() const { return gdim_; }
  index_t num_vertices() const { return num_vertices_; }
  index_t num_cells() const { return num_cells_; }
  CellKind cell_kind() const { return cell_kind_of_dim(tdim_); }

  std::span<const index_t> cell_vertices(index_t c) const {
    return {cells_.data() + static_cast<std::size_t>(c) * (tdim_ + 1), static_cast<std::size_t>(tdim_ + 1)};
  }

  std::span<const double> vertex_coords(index_t v) const {
    return {coords_.data() + static_cast<std::size_t>(v) * gdim_, static_cast<std::size_t>(gdim_)};
  }

  const std::vector<double>& coords() const { return coords_; }
  const std::vector<index_t>& cells() const { return cells_; }

  index_t num_entities(int d) const {
    if (d == 0) return num_vertices_;
    if (d == tdim_) return num_cells_;
    if (d < 0 || d > tdim_) throw InvalidArgumentError("entity dimension out of range");
    build_entities(d);
    return static_cast<index_t>(entities_.at(d).size() / (d + 1));
  }

  // Vertex tuple of entity (d, i); ascending. For d == 0 the tuple is {i}.
  std::span<const index_t> entity_vertices(int d, index_t i) const {
    if (d == 0) {
      check_range(i, num_vertices_, "vertex");
      if (vertex_ids_.empty()) {
        vertex_ids_.resize(num_vertices_);
        for (index_t v = 0; v < num_vertices_; ++v) vertex_ids_[v] = v;
      }
      return {vertex_ids_.data() + i, 1};
    }
    if (d == tdim_) {
      check_range(i, num_cells_, "cell");
      return cell_vertices(i);
    }
    build_entities(d);
    const auto& e = entities_.at(d);
    check_range(i, static_cast<index_t>(e.size() / (d + 1)), "entity");
    return {e.data() + static_cast<std::size_t>(i) * (d + 1), static_cast<std::size_t>(d + 1)};
  }

  // Entity index of a sorted vertex tuple of dimension d, or absent_index.
  index_t entity_index(int d, std::span<const index_t> tuple) const {
    if (d == 0) return tuple[0];
    build_entities(d);
    const auto& e = entities_.at(d);
    const int nv = d + 1;
    const index_t n = static_cast<index_t>(e.size() / nv);
    index_t lo = 0, hi = n;
    while (lo < hi) {
      index_t mid = lo + (hi - lo) / 2;
      const index_t* t = e.data() + static_cast<std::size_t>(mid) * nv;
      if (std::lexicographical_compare(t, t + nv, tuple.begin(), tuple.end()))
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < n) {
      const index_t* t = e.data() + static_cast<std::size_t>(lo) * nv;
      if (std::equal(t, t + nv, tuple.begin())) return lo;
    }
    return absent_index;
  }

  // Incidence relation d1 -> d2, cached. For d1 > d2 the per-entity list follows
  // local_sub_entities() order (so conn(tdim, tdim-1) lists facet i opposite
  // vertex i). For d1 < d2 it is the transpose, each list ascending. d1 == d2 is
  // the identity.
  const Connectivity& connectivity(int d1, int d2) const {
    if (d1 < 0 || d1 > tdim_ || d2 < 0 || d2 > tdim_) throw InvalidArgumentError("connectivity dimension out of range");
    auto key = std::make_pair(d1, d2);
    auto it = conn_.find(key);
    if (it != conn_.end()) return it->second;
    Connectivity c;
    if (d1 == d2) {
      const index_t n = num_entities(d1);
      c.offsets.resize(n + 1);
      c.indices.resize(n);
      for (index_t i = 0; i < n; ++i) {
        c.offsets[i] = i;
        c.indices[i] = i;
      }
      c.offsets[n] = n;
    } else if (d1 > d2) {
      c = build_down(d1, d2);
    } else {
      c = transpose(connectivity(d2, d1), num_entities(d1));
    }
    return conn_.emplace(key, std::move(c)).first->second;
  }

  std::array<double, 3> entity_midpoint(int d, index_t i) const {
    auto vs = entity_vertices(d, i);
    std::array<double, 3> m{0.0, 0.0, 0.0};
    for (index_t v : vs) {
      auto x = vertex_coords(v);
      for (int k = 0; k < gdim_; ++k) m[k] += x[k];
    }
    for (int k = 0; k < gdim_; ++k) m[k] /= static_cast<double>(vs.size());
    return m;
  }

  // Facets with exactly one adjacent cell.
  std::vector<index_t> exterior_facets() const {
    const auto& f2c = connectivity(tdim_ - 1, tdim_);
    std::vector<index_t> out;
    for (index_t f = 0; f < f2c.num_source(); ++f)
      if (f2c(f).size() == 1) out.push_back(f);
    return out;
  }

  double cell_volume(index_t c) const {
    const int nv = tdim_ + 1;
    const index_t* t = cells_.data() + static_cast<std::size_t>(c) * nv;
    // Gram determinant of the edge matrix, valid for tdim <= gdim.
    double ej[3][3] = {};
    for (int j = 0; j < tdim_; ++j) {
      auto a = vertex_coords(t[0]);
      auto b = vertex_coords(t[j + 1]);
      for (int k = 0; k < gdim_; ++k) ej[j][k] = b[k] - a[k];
    }
    double g[3][3] = {};
    for (int a = 0; a < tdim_; ++a)
      for (int b = 0; b < tdim_; ++b) {
        g[a][b] = 0.0;
        for (int k = 0; k < gdim_; ++k) g[a][b] += ej[a][k] * ej[b][k];
      }
    double det = 1.0;
    if (tdim_ == 1)
      det = g[0][0];
    else if (tdim_ == 2)
      det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    else
      det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
            g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    if (det <= 0.0) return 0.0;
    double fact = (tdim_ == 1) ? 1.0 : (tdim_ == 2 ? 2.0 : 6.0);
    return std::sqrt(det) / fact;
  }

  // --- view registry ------------------------------------------------------
  // Mappings from this mesh to others, keyed by target mesh id. Lazily filled;
  // single-writer (no internal locking).

  void register_view(std::uint64_t target_id, std::shared_ptr<const MeshViewMapping> m) const {
    views_[target_id] = std::move(m);
  }

  std::shared_ptr<const MeshViewMapping> find_view(std::uint64_t target_id) const {
    auto it = views_.find(target_id);
    return it == views_.end() ? nullptr : it->second;
  }

  void set_parent(std::uint64_t parent_id) const { parent_id_ = parent_id; }
  bool is_view() const { return parent_id_ != 0; }
  std::uint64_t parent_id() const { return parent_id_; }

private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  static void check_range(index_t i, index_t n, const char* what) {
    if (i < 0 || i >= n) throw InvalidArgumentError(std::string(what) + " index out of range");
  }

  void build_entities(int d) const {
    if (d <= 0 || d >= tdim_ || entities_.count(d)) return;
    const auto locals = local_sub_entities(tdim_, d);
    const int nv = d + 1;
    std::vector<index_t> all;
    all.reserve(static_cast<std::size_t>(num_cells_) * locals.size() * nv);
    for (index_t c = 0; c < num_cells_; ++c) {
      auto cv = cell_vertices(c);
      for (const auto& loc : locals)
        for (int j : loc) all.push_back(cv[j]);
    }
    // sort tuples lexicographically, then dedupe
    const index_t ntup = static_cast<index_t>(all.size() / nv);
    std::vector<index_t> order(ntup);
    for (index_t i = 0; i < ntup; ++i) order[i] = i;
    auto tup = [&](index_t i) { return all.data() + static_cast<std::size_t>(i) * nv; };
    std::sort(order.begin(), order.end(), [&](index_t a, index_t b) {
      return std::lexicographical_compare(tup(a), tup(a) + nv, tup(b), tup(b) + nv);
    });
    std::vector<index_t> ents;
    ents.reserve(all.size());
    for (index_t k = 0; k < ntup; ++k) {
      const index_t* t = tup(order[k]);
      if (!ents.empty() && std::equal(t, t + nv, ents.end() - nv)) continue;
      ents.insert(ents.end(), t, t + nv);
    }
    entities_[d] = std::move(ents);
  }

  Connectivity build_down(int d1, int d2) const {
    const auto locals = local_sub_entities(d1, d2);
    const index_t n1 = num_entities(d1);
    if (d2 > 0) build_entities(d2);
    Connectivity c;
    c.offsets.resize(n1 + 1);
    c.indices.resize(static_cast<std::size_t>(n1) * locals.size());
    std::vector<index_t> t(d2 + 1);
    for (index_t i = 0; i < n1; ++i) {
      auto vs = entity_vertices(d1, i);
      c.offsets[i] = static_cast<index_t>(i * locals.size());
      for (std::size_t l = 0; l < locals.size(); ++l) {
        for (int j = 0; j <= d2; ++j) t[j] = vs[locals[l][j]];
        index_t e = (d2 == 0) ? t[0] : entity_index(d2, t);
        c.indices[i * locals.size() + l] = e;
      }
    }
    c.offsets[n1] = static_cast<index_t>(c.indices.size());
    return c;
  }

  static Connectivity transpose(const Connectivity& in, index_t num_target) {
    Connectivity out;
    out.offsets.assign(num_target + 1, 0);
    for (index_t e : in.indices) out.offsets[e + 1]++;
    for (index_t i = 0; i < num_target; ++i) out.offsets[i + 1] += out.offsets[i];
    out.indices.resize(in.indices.size());
    std::vector<index_t> cursor(out.offsets.begin(), out.offsets.end() - 1);
    for (index_t s = 0; s < in.num_source(); ++s)
      for (index_t e : in(s)) out.indices[cursor[e]++] = s;
    return out;
  }

  std::uint64_t id_;
  int tdim_, gdim_;
  index_t num_vertices_ = 0, num_cells_ = 0;
  std::vector<double> coords_;
  std::vector<index_t> cells_;

  mutable std::vector<index_t> vertex_ids_;
  mutable std::map<int, std::vector<index_t>> entities_;
  mutable std::map<std::pair<int, int>, Connectivity> conn_;
  mutable std::map<std::uint64_t, std::shared_ptr<const MeshViewMapping>> views_;
  mutable std::uint64_t parent_id_ = 0;
};

using MeshPtr = std::shared_ptr<const Mesh>;

// Integer tags over all entities of one dimension; default tag 0.
class MeshFunction {
public:
  MeshFunction(MeshPtr mesh, int dim, int init = 0)
      : mesh_(std::move(mesh)), dim_(dim), values_(static_cast<std::size_t>(mesh_->num_entities(dim)), init) {}

  const MeshPtr& mesh() const { return mesh_; }
  int dim() const { return dim_; }
  int& operator[](index_t i) { return values_[static_cast<std::size_t>(i)]; }
  int operator[](index_t i) const { return values_[static_cast<std::size_t>(i)]; }
  index_t size() const { return static_cast<index_t>(values_.size()); }
  const std::vector<int>& values() const { return values_; }

  std::vector<index_t> where(int tag) const {
    std::vector<index_t> out;
    for (index_t i = 0; i < size(); ++i)
      if (values_[static_cast<std::size_t>(i)] == tag) out.push_back(i);
    return out;
  }

private:
  MeshPtr mesh_;
  int dim_;
  std::vector<int> values_;
};

// Tag every entity of dimension `dim` whose midpoint satisfies `pred`.
// Midpoints are padded with zeros to three components.
inline MeshFunction mark_entities(const MeshPtr& mesh, int dim,
                                  const std::function<bool(const std::array<double, 3>&)>& pred, int tag = 1) {
  MeshFunction mf(mesh, dim);
  for (index_t i = 0; i < mf.size(); ++i)
    if (pred(mesh->entity_midpoint(dim, i))) mf[i] = tag;
  return mf;
}

// --- structured generators -------------------------------------------------

inline MeshPtr unit_interval_mesh(index_t n) {
  if (n < 1) throw InvalidArgumentError("unit_interval_mesh: n must be >= 1");
  std::vector<double> x(n + 1);
  for (index_t i = 0; i <= n; ++i) x[i] = static_cast<double>(i) / n;
  std::vector<index_t> cells;
  cells.reserve(2 * static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) {
    cells.push_back(i);
    cells.push_back(i + 1);
  }
  return std::make_shared<Mesh>(1, 1, std::move(x), std::move(cells));
}

// n x n squares, each split along the diagonal from the lower-left to the
// upper-right corner. Vertex (i,j) has index j*(n+1)+i at (i/n, j/n).
inline MeshPtr unit_square_mesh(index_t n) {
  if (n < 1) throw InvalidArgumentError("unit_square_mesh: n must be >= 1");
  std::vector<double> coords;
  coords.reserve(2 * static_cast<std::size_t>(n + 1) * (n + 1));
  for (index_t j = 0; j <= n; ++j)
    for (index_t i = 0; i <= n; ++i) {
      coords.push_back(static_cast<double>(i) / n);
      coords.push_back(static_cast<double>(j) / n);
    }
  std::vector<index_t> cells;
  cells.reserve(6 * static_cast<std::size_t>(n) * n);
  for (index_t j = 0; j < n; ++j)
    for (index_t i = 0; i < n; ++i) {
      const index_t v00 = j * (n + 1) + i, v10 = v00 + 1, v01 = v00 + (n + 1), v11 = v01 + 1;
      cells.insert(cells.end(), {v00, v10, v11});
      cells.insert(cells.end(), {v00, v01, v11});
    }
  return std::make_shared<Mesh>(2, 2, std::move(coords), std::move(cells));
}

// n x n x n cubes, each split into six tetrahedra sharing the main diagonal
// (one tetrahedron per axis permutation), which is conforming across cubes.
// Vertex (i,j,k) has index (k*(n+1)+j)*(n+1)+i at (i/n, j/n, k/n).
inline MeshPtr unit_cube_mesh(index_t n) {
  if (n < 1) throw InvalidArgumentError("unit_cube_mesh: n must be >= 1");
  std::vector<double> coords;
  coords.reserve(3 * static_cast<std::size_t>(n + 1) * (n + 1) * (n + 1));
  for (index_t k = 0; k <= n; ++k)
    for (index_t j = 0; j <= n; ++j)
      for (index_t i = 0; i <= n; ++i) {
        coords.push_back(static_cast<double>(i) / n);
        coords.push_back(static_cast<double>(j) / n);
        coords.push_back(static_cast<double>(k) / n);
      }
  auto vid = [n](index_t i, index_t j, index_t k) { return (k * (n + 1) + j) * (n + 1) + i; };
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<index_t> cells;
  cells.reserve(24 * static_cast<std::size_t>(n) * n * n);
  for (index_t k = 0; k < n; ++k)
    for (index_t j = 0; j < n; ++j)
      for (index_t i = 0; i < n; ++i)
        for (const auto& p : perms) {
          index_t d[3] = {0, 0, 0};
          cells.push_back(vid(i, j, k));
          for (int s = 0; s < 3; ++s) {
            d[p[s]] = 1;
            cells.push_back(vid(i + d[0], j + d[1], k + d[2]));
          }
        }
  return std::make_shared<Mesh>(3, 3, std::move(coords), std::move(cells));
}

}  // namespace mixfem
