#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "element.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "mesh.hpp"
#include "meshview.hpp"

namespace mixfem {

// Global dof layout: entity-dimension-major (all vertex dofs, then edge dofs,
// then face/cell dofs), entity index ascending, slots along an edge ascending
// from its lower-index vertex, value components innermost.
struct DofMap {
  int value_size = 1;
  int n_local = 0;                 // per-cell dof count (blocked)
  index_t global_dim = 0;          // N, blocked
  index_t num_scalar_dofs = 0;     // N / value_size
  std::vector<index_t> cell_dofs;  // [n_cells x n_local]
  std::vector<double> coords;      // [num_scalar_dofs x gdim]
  int gdim = 0;

  std::span<const index_t> dofs(index_t cell) const {
    return {cell_dofs.data() + static_cast<std::size_t>(cell) * n_local, static_cast<std::size_t>(n_local)};
  }

  // Physical coordinates of (blocked) dof i.
  std::span<const double> dof_coords(index_t dof) const {
    const index_t s = dof / value_size;
    return {coords.data() + static_cast<std::size_t>(s) * gdim, static_cast<std::size_t>(gdim)};
  }
};

class FunctionSpace {
public:
  FunctionSpace(MeshPtr mesh, ReferenceElement element, DofMap dofmap)
      : mesh_(std::move(mesh)), element_(std::move(element)), dofmap_(std::move(dofmap)) {
    if (element_.cell_kind() != mesh_->cell_kind())
      throw InvalidArgumentError("element cell kind does not match mesh cell type");
  }

  const MeshPtr& mesh() const { return mesh_; }
  const ReferenceElement& element() const { return element_; }
  const DofMap& dofmap() const { return dofmap_; }
  index_t dim() const { return dofmap_.global_dim; }
  int value_size() const { return element_.value_size(); }

private:
  MeshPtr mesh_;
  ReferenceElement element_;
  DofMap dofmap_;
};

using SpacePtr = std::shared_ptr<const FunctionSpace>;

// Number of dofs interior to an entity of dimension d for Lagrange degree k.
inline int dofs_per_entity(int d, int k) {
  switch (d) {
    case 0:
      return 1;
    case 1:
      return k - 1;
    case 2:
      return (k - 1) * (k - 2) / 2;
    default:
      return (k - 1) * (k - 2) * (k - 3) / 6;
  }
}

inline SpacePtr build_function_space(const MeshPtr& mesh, const std::string& family, int degree, int value_size = 1) {
  std::string fam = family;
  std::transform(fam.begin(), fam.end(), fam.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (fam != "lagrange" && fam != "cg" && fam != "p")
    throw NotSupportedError("unsupported element family '" + family + "'");

  ReferenceElement element(mesh->cell_kind(), degree, value_size);
  const int tdim = mesh->tdim();
  const int k = degree;

  // entity-dimension-major scalar numbering
  index_t offsets[4] = {0, 0, 0, 0};
  index_t acc = 0;
  for (int d = 0; d <= tdim; ++d) {
    offsets[d] = acc;
    acc += mesh->num_entities(d) * dofs_per_entity(d, k);
  }

  DofMap dm;
  dm.value_size = value_size;
  dm.n_local = element.n_local();
  dm.num_scalar_dofs = acc;
  dm.global_dim = acc * value_size;
  dm.gdim = mesh->gdim();
  dm.cell_dofs.resize(static_cast<std::size_t>(mesh->num_cells()) * element.n_local());
  dm.coords.resize(static_cast<std::size_t>(acc) * dm.gdim);

  const int nsn = element.num_scalar_nodes();
  std::vector<int> slot_of_node(nsn);
  for (int n = 0; n < nsn; ++n) {
    auto ent = element.dof_entity(n * value_size);
    int s = 0;
    for (int p = 0; p < n; ++p)
      if (element.dof_entity(p * value_size) == ent) ++s;
    slot_of_node[n] = s;
  }

  for (index_t c = 0; c < mesh->num_cells(); ++c) {
    auto cv = mesh->cell_vertices(c);
    const CellGeometry geo = cell_geometry(*mesh, c);
    for (int n = 0; n < nsn; ++n) {
      auto [edim, eidx] = element.dof_entity(n * value_size);
      index_t entity;
      if (edim == 0)
        entity = cv[eidx];
      else if (edim == tdim)
        entity = c;
      else
        entity = mesh->connectivity(tdim, edim)(c)[eidx];
      const index_t scalar = offsets[edim] + entity * dofs_per_entity(edim, k) + slot_of_node[n];
      for (int v = 0; v < value_size; ++v)
        dm.cell_dofs[static_cast<std::size_t>(c) * dm.n_local + n * value_size + v] =
            scalar * value_size + v;
      double phys[3];
      geo.map_to_physical(element.node_point(n).data(), phys);
      for (int g = 0; g < dm.gdim; ++g) dm.coords[static_cast<std::size_t>(scalar) * dm.gdim + g] = phys[g];
    }
  }

  return std::make_shared<FunctionSpace>(mesh, std::move(element), std::move(dm));
}

// Resolve a foreign cell through `view` onto space_i's mesh and return that
// cell's global dofs. The caller is responsible for star resolution in the
// codim-1 case; here the view must land on cells of space_i's mesh.
inline std::span<const index_t> transfer_cell_dofs(const FunctionSpace& space_i, const MeshViewMapping& view,
                                                   index_t foreign_cell) {
  if (view.mesh()->id() != space_i.mesh()->id())
    throw InvalidArgumentError("transfer_cell_dofs: view does not target the space's mesh");
  if (view.codim() != 0) throw InvalidArgumentError("transfer_cell_dofs: view must be same-dimension");
  const index_t resolved = view.cell_map().at(static_cast<std::size_t>(foreign_cell));
  if (resolved == absent_index)
    throw ViewError("absent-mapping", "transfer_cell_dofs: cell " + std::to_string(foreign_cell) + " has no counterpart");
  return space_i.dofmap().dofs(resolved);
}

// Discrete function: coefficients in the nodal basis of `space`.
class Function {
public:
  explicit Function(SpacePtr space) : space_(std::move(space)), coeffs_(space_->dim(), 0.0) {}

  const SpacePtr& space() const { return space_; }
  std::vector<double>& coefficients() { return coeffs_; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  // Nodal interpolation; f fills value_size entries.
  void interpolate(const std::function<void(const double*, double*)>& f) {
    const auto& dm = space_->dofmap();
    const int vs = dm.value_size;
    std::vector<double> val(vs);
    for (index_t s = 0; s < dm.num_scalar_dofs; ++s) {
      f(dm.coords.data() + static_cast<std::size_t>(s) * dm.gdim, val.data());
      for (int v = 0; v < vs; ++v) coeffs_[static_cast<std::size_t>(s) * vs + v] = val[v];
    }
  }

  // Point evaluation by brute-force cell location (intended for tests and
  // small inspection tasks, not assembly).
  void evaluate(const double* x, double* out) const {
    const auto& mesh = *space_->mesh();
    const auto& el = space_->element();
    const int tdim = mesh.tdim();
    const int vs = el.value_size();
    constexpr double tol = 1e-10;
    for (index_t c = 0; c < mesh.num_cells(); ++c) {
      const CellGeometry geo = cell_geometry(mesh, c);
      if (!geo.square) throw NotSupportedError("evaluate: embedded meshes not supported");
      double ref[3];
      geo.map_to_reference(x, ref);
      double bsum = 0.0;
      bool inside = true;
      for (int d = 0; d < tdim; ++d) {
        if (ref[d] < -tol) inside = false;
        bsum += ref[d];
      }
      if (!inside || bsum > 1.0 + tol) continue;
      for (int d = 0; d < tdim; ++d) ref[d] = std::min(1.0, std::max(0.0, ref[d]));
      auto tab = el.tabulate_scalar(std::span<const double>(ref, tdim));
      auto dofs = space_->dofmap().dofs(c);
      for (int v = 0; v < vs; ++v) out[v] = 0.0;
      for (int n = 0; n < el.num_scalar_nodes(); ++n)
        for (int v = 0; v < vs; ++v) out[v] += coeffs_[dofs[n * vs + v]] * tab[n];
      return;
    }
    throw InvalidArgumentError("evaluate: point lies outside the mesh");
  }

private:
  SpacePtr space_;
  std::vector<double> coeffs_;
};

// Ordered tuple of function spaces; block index = list position.
class MixedFunctionSpace {
public:
  explicit MixedFunctionSpace(std::vector<SpacePtr> subspaces) : subspaces_(std::move(subspaces)), id_(next_id()) {
    if (subspaces_.empty()) throw InvalidArgumentError("mixed space needs at least one subspace");
    offsets_.push_back(0);
    for (const auto& s : subspaces_) offsets_.push_back(offsets_.back() + s->dim());
  }

  std::size_t size() const { return subspaces_.size(); }
  const SpacePtr& operator[](std::size_t i) const { return subspaces_.at(i); }
  const std::vector<index_t>& offsets() const { return offsets_; }
  std::uint64_t id() const { return id_; }

private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }
  std::vector<SpacePtr> subspaces_;
  std::vector<index_t> offsets_;
  std::uint64_t id_;
};

using MixedSpacePtr = std::shared_ptr<const MixedFunctionSpace>;

inline MixedSpacePtr make_mixed_space(std::vector<SpacePtr> subspaces) {
  return std::make_shared<MixedFunctionSpace>(std::move(subspaces));
}

// Dirichlet data on a boundary region selected by a facet-midpoint predicate.
struct DirichletBC {
  SpacePtr space;
  std::function<void(const double*, double*)> value;  // fills value_size entries
  std::function<bool(const std::array<double, 3>&)> region;

  static DirichletBC constant(SpacePtr V, double v,
                              std::function<bool(const std::array<double, 3>&)> region) {
    const int vs = V->value_size();
    return DirichletBC{std::move(V), [v, vs](const double*, double* out) {
                         for (int i = 0; i < vs; ++i) out[i] = v;
                       },
                       std::move(region)};
  }
};

// Dofs whose owning entity lies in the closure of an exterior facet whose
// midpoint satisfies bc.region, with values evaluated at dof coordinates.
// Sorted by dof index.
inline std::vector<std::pair<index_t, double>> collect_bc_dofs(const DirichletBC& bc) {
  const auto& space = *bc.space;
  const auto& mesh = *space.mesh();
  const auto& el = space.element();
  const int tdim = mesh.tdim();
  const int vs = el.value_size();
  const auto& f2c = mesh.connectivity(tdim - 1, tdim);
  const auto& c2f = mesh.connectivity(tdim, tdim - 1);
  const auto facet_locals = local_sub_entities(tdim, tdim - 1);
  const auto edge_locals = (tdim == 3) ? local_sub_entities(tdim, 1) : std::vector<std::vector<int>>{};

  std::vector<std::pair<index_t, double>> out;
  std::vector<char> seen(space.dim(), 0);
  std::vector<double> val(vs);

  for (index_t f = 0; f < mesh.num_entities(tdim - 1); ++f) {
    auto cells = f2c(f);
    if (cells.size() != 1) continue;  // exterior facets only
    if (!bc.region(mesh.entity_midpoint(tdim - 1, f))) continue;
    const index_t c = cells[0];
    auto facets = c2f(c);
    int lf = -1;
    for (std::size_t i = 0; i < facets.size(); ++i)
      if (facets[i] == f) lf = static_cast<int>(i);

    auto in_closure = [&](std::pair<int, int> ent) {
      const auto& fl = facet_locals[lf];
      if (ent.first == 0) return std::find(fl.begin(), fl.end(), ent.second) != fl.end();
      if (ent.first == tdim - 1) return ent.second == lf;
      if (ent.first == 1 && tdim == 3) {
        const auto& ev = edge_locals[ent.second];
        return std::find(fl.begin(), fl.end(), ev[0]) != fl.end() &&
               std::find(fl.begin(), fl.end(), ev[1]) != fl.end();
      }
      return false;
    };

    auto dofs = space.dofmap().dofs(c);
    for (int i = 0; i < el.n_local(); ++i) {
      if (!in_closure(el.dof_entity(i))) continue;
      const index_t dof = dofs[i];
      if (seen[dof]) continue;
      seen[dof] = 1;
      bc.value(space.dofmap().dof_coords(dof).data(), val.data());
      out.emplace_back(dof, val[el.dof_component(i)]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// CSV export: dof_index, x, y[, z], value
inline void export_function_csv(const Function& u, std::ostream& os) {
  const auto& dm = u.space()->dofmap();
  os << "dof_index,x,y";
  if (dm.gdim > 2) os << ",z";
  os << ",value\n";
  os.precision(17);
  for (index_t i = 0; i < u.space()->dim(); ++i) {
    auto x = dm.dof_coords(i);
    os << i;
    for (int g = 0; g < dm.gdim; ++g) os << ',' << x[g];
    if (dm.gdim == 1) os << ",0";
    os << ',' << u.coefficients()[i] << '\n';
  }
}

}  // namespace mixfem
