#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include "mesh.hpp"

namespace mixfem {

// Mapping from entities of a source mesh to entities of a target mesh.
//
// cell_map: source cell -> target cell index when dimensions match, or target
// FACET index when the source is one dimension lower (codim() == 1).
// vertex_map: source vertex -> target vertex; empty for sibling maps.
// absent_index marks cells/vertices with no counterpart.
class MeshViewMapping {
public:
  MeshViewMapping(MeshPtr source, MeshPtr target, std::vector<index_t> cell_map, std::vector<index_t> vertex_map,
                  int codim, bool parent_link)
      : source_(std::move(source)), target_(std::move(target)), cell_map_(std::move(cell_map)),
        vertex_map_(std::move(vertex_map)), codim_(codim), parent_link_(parent_link) {}

  const MeshPtr& source() const { return source_; }
  const MeshPtr& mesh() const { return target_; }  // target mesh
  std::uint64_t target_mesh_id() const { return target_->id(); }
  const std::vector<index_t>& cell_map() const { return cell_map_; }
  const std::vector<index_t>& vertex_map() const { return vertex_map_; }
  int codim() const { return codim_; }
  bool is_parent_link() const { return parent_link_; }

  // True when no cell has a counterpart (fully disjoint views).
  bool empty() const {
    for (index_t v : cell_map_)
      if (v != absent_index) return false;
    return true;
  }

private:
  MeshPtr source_, target_;
  std::vector<index_t> cell_map_, vertex_map_;
  int codim_;
  bool parent_link_;
};

using MappingPtr = std::shared_ptr<const MeshViewMapping>;

// Build the mesh of all entities carrying `tag` in `marker`. Supported entity
// dimensions: parent tdim (codim 0) and parent tdim - 1 (codim 1). The new
// mesh's registry holds the child-to-parent mapping; child vertices are the
// tagged entities' vertices in ascending parent order, so child cell vertex
// order is inherited from the parent entity's (sorted) vertex order.
inline MeshPtr create_submesh(const MeshFunction& marker, int tag) {
  const MeshPtr& parent = marker.mesh();
  const int d = marker.dim();
  const int tdim = parent->tdim();
  if (parent->is_view())
    throw NotSupportedError("create_submesh: parent is itself a view; only one generation of views is supported");
  if (d != tdim && d != tdim - 1)
    throw ViewError("unsupported-codimension",
                    "create_submesh: entity dimension " + std::to_string(d) + " on a mesh of tdim " + std::to_string(tdim));
  if (d < 1) throw NotSupportedError("create_submesh: zero-dimensional submeshes are not supported");

  std::vector<index_t> selected = marker.where(tag);
  if (selected.empty()) throw ViewError("empty-selection", "create_submesh: no entity carries tag " + std::to_string(tag));

  // vertex union, ascending parent index
  std::vector<index_t> vertex_map;
  for (index_t e : selected) {
    auto vs = parent->entity_vertices(d, e);
    vertex_map.insert(vertex_map.end(), vs.begin(), vs.end());
  }
  std::sort(vertex_map.begin(), vertex_map.end());
  vertex_map.erase(std::unique(vertex_map.begin(), vertex_map.end()), vertex_map.end());

  std::unordered_map<index_t, index_t> to_child;
  to_child.reserve(vertex_map.size());
  for (index_t i = 0; i < static_cast<index_t>(vertex_map.size()); ++i) to_child[vertex_map[i]] = i;

  const int gdim = parent->gdim();
  std::vector<double> coords(vertex_map.size() * gdim);
  for (std::size_t i = 0; i < vertex_map.size(); ++i) {
    auto x = parent->vertex_coords(vertex_map[i]);
    for (int k = 0; k < gdim; ++k) coords[i * gdim + k] = x[k];
  }

  std::vector<index_t> cells;
  cells.reserve(selected.size() * (d + 1));
  for (index_t e : selected) {
    auto vs = parent->entity_vertices(d, e);
    for (index_t v : vs) cells.push_back(to_child.at(v));
  }

  auto child = std::make_shared<Mesh>(d, gdim, std::move(coords), std::move(cells));
  child->set_parent(parent->id());
  auto link = std::make_shared<MeshViewMapping>(child, parent, std::move(selected), std::move(vertex_map),
                                                tdim - d, /*parent_link=*/true);
  child->register_view(parent->id(), link);
  return child;
}

namespace detail {

inline std::unordered_map<index_t, index_t> invert(const std::vector<index_t>& map) {
  std::unordered_map<index_t, index_t> inv;
  inv.reserve(map.size());
  for (index_t i = 0; i < static_cast<index_t>(map.size()); ++i)
    if (map[i] != absent_index) inv[map[i]] = i;
  return inv;
}

}  // namespace detail

// Construct (or fetch from mesh_i's registry) the mapping M^{i,j} from mesh_i
// onto mesh_j. Supported relations: identity, child -> parent (cached at
// creation), parent -> same-dim child, and siblings under a common parent with
// d^i == d^j or d^i == d^j - 1. In the codim-1 sibling case cell_map carries
// facet indices of mesh_j.
inline MappingPtr build_mapping(const MeshPtr& mesh_i, const MeshPtr& mesh_j) {
  if (auto cached = mesh_i->find_view(mesh_j->id())) return cached;

  auto finish = [&](std::vector<index_t> cell_map, std::vector<index_t> vertex_map, int codim) {
    auto m = std::make_shared<MeshViewMapping>(mesh_i, mesh_j, std::move(cell_map), std::move(vertex_map), codim,
                                               /*parent_link=*/false);
    mesh_i->register_view(mesh_j->id(), m);
    return m;
  };

  if (mesh_i->id() == mesh_j->id()) {
    std::vector<index_t> cmap(mesh_i->num_cells()), vmap(mesh_i->num_vertices());
    for (index_t c = 0; c < mesh_i->num_cells(); ++c) cmap[c] = c;
    for (index_t v = 0; v < mesh_i->num_vertices(); ++v) vmap[v] = v;
    return finish(std::move(cmap), std::move(vmap), 0);
  }

  // parent -> child (inverse of the child's parent link)
  if (mesh_j->is_view() && mesh_j->parent_id() == mesh_i->id()) {
    auto link_j = mesh_j->find_view(mesh_i->id());
    if (mesh_i->tdim() != mesh_j->tdim())
      throw NotSupportedError("build_mapping: mapping a mesh onto a lower-dimensional view; build the opposite direction");
    std::vector<index_t> cmap(mesh_i->num_cells(), absent_index), vmap(mesh_i->num_vertices(), absent_index);
    const auto& jc = link_j->cell_map();
    const auto& jv = link_j->vertex_map();
    for (index_t c = 0; c < static_cast<index_t>(jc.size()); ++c) cmap[jc[c]] = c;
    for (index_t v = 0; v < static_cast<index_t>(jv.size()); ++v) vmap[jv[v]] = v;
    return finish(std::move(cmap), std::move(vmap), 0);
  }

  if (!mesh_i->is_view() || !mesh_j->is_view() || mesh_i->parent_id() != mesh_j->parent_id())
    throw ViewError("no-common-parent", "build_mapping: meshes do not share a parent");

  auto link_i = mesh_i->find_view(mesh_i->parent_id());
  auto link_j = mesh_j->find_view(mesh_j->parent_id());
  const MeshPtr& parent = link_i->mesh();
  const int di = mesh_i->tdim(), dj = mesh_j->tdim();

  if (di == dj) {
    // (M^j)^-1 ∘ M^i on whatever lies in mesh_j's image; works for codim-0
    // pairs (parent cells) and codim-1 pairs (parent facets) alike.
    auto inv_c = detail::invert(link_j->cell_map());
    std::vector<index_t> cmap(mesh_i->num_cells(), absent_index);
    for (index_t c = 0; c < mesh_i->num_cells(); ++c) {
      auto it = inv_c.find(link_i->cell_map()[c]);
      if (it != inv_c.end()) cmap[c] = it->second;
    }
    return finish(std::move(cmap), {}, 0);
  }

  if (di == dj - 1) {
    // codim-1 sibling: child cell -> parent facet -> facet index in mesh_j,
    // identified by its vertex set pulled through (M_v^j)^-1.
    auto inv_v = detail::invert(link_j->vertex_map());
    std::vector<index_t> cmap(mesh_i->num_cells(), absent_index);
    std::vector<index_t> tuple(di + 1);
    for (index_t c = 0; c < mesh_i->num_cells(); ++c) {
      const index_t fp = link_i->cell_map()[c];
      auto vs = parent->entity_vertices(parent->tdim() - 1, fp);
      bool ok = true;
      for (int k = 0; k <= di; ++k) {
        auto it = inv_v.find(vs[k]);
        if (it == inv_v.end()) {
          ok = false;
          break;
        }
        tuple[k] = it->second;
      }
      if (!ok) continue;
      std::sort(tuple.begin(), tuple.end());
      cmap[c] = mesh_j->entity_index(dj - 1, tuple);
    }
    return finish(std::move(cmap), {}, 1);
  }

  if (di == dj + 1)
    throw NotSupportedError("build_mapping: mapping a mesh onto a lower-dimensional sibling; build the opposite direction");
  throw NotSupportedError("build_mapping: |d^i - d^j| must be at most 1");
}

}  // namespace mixfem
