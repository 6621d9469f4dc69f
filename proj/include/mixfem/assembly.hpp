#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mixfem/errors.hpp"
#include "mixfem/forms.hpp"
#include "mixfem/geometry.hpp"
#include "mixfem/linalg.hpp"
#include "mixfem/meshview.hpp"
#include "mixfem/quadrature.hpp"
#include "mixfem/space.hpp"

namespace mixfem {

// Quadrature degree used for one integral: the estimate from the integrand,
// or the override when nonnegative, clamped to the supported maximum.
inline int integral_quadrature_degree(const Integral& integral, int override_degree = -1) {
  const int q = override_degree >= 0 ? override_degree : estimate_degree(integral);
  return std::min(q, max_quadrature_degree);
}

namespace detail {

inline constexpr double degenerate_scale_tol = 1e-14;

// Small dense value produced by expression evaluation. Scalars use rank 0,
// vectors rank 1 (d0 entries), matrices rank 2 (d0 x d1 row major).
struct Value {
  int rank = 0;
  int d0 = 1, d1 = 1;
  double data[9] = {};

  int size() const { return d0 * d1; }
};

// Per-argument basis tables at the integration points of the current cell
// context. `values` is [np x n_local x vs]; `grads` is [np x n_local x vs x
// gdim] with physical derivatives.
struct ArgTable {
  int n_local = 0;
  int vs = 1;
  int gdim = 0;
  const double* values = nullptr;
  const double* grads = nullptr;
};

struct EvalEnv {
  int q = 0;
  int idx[2] = {0, 0};
  ArgTable args[2];
  const double* xq = nullptr;  // physical coordinates, 3 entries
  const std::unordered_map<const ExprNode*, std::vector<double>>* point_values = nullptr;
  const std::unordered_map<const ExprNode*, std::vector<double>>* point_grads = nullptr;
};

inline Value eval_expr(const ExprNode* n, const EvalEnv& env) {
  Value out;
  switch (n->kind) {
    case ExprKind::constant:
      out.data[0] = n->value;
      return out;
    case ExprKind::spatial: {
      out.rank = 1;
      out.d0 = n->gdim;
      for (int k = 0; k < n->gdim; ++k) out.data[k] = env.xq[k];
      return out;
    }
    case ExprKind::analytic:
    case ExprKind::coefficient: {
      const int vs = n->shape.empty() ? 1 : n->shape[0];
      const auto& tab = env.point_values->at(n);
      out.rank = n->shape.empty() ? 0 : 1;
      out.d0 = vs;
      for (int k = 0; k < vs; ++k) out.data[k] = tab[static_cast<std::size_t>(env.q) * vs + k];
      return out;
    }
    case ExprKind::argument: {
      const ArgTable& t = env.args[n->arg_number];
      const double* src =
          t.values + (static_cast<std::size_t>(env.q) * t.n_local + env.idx[n->arg_number]) * t.vs;
      out.rank = n->shape.empty() ? 0 : 1;
      out.d0 = t.vs;
      for (int k = 0; k < t.vs; ++k) out.data[k] = src[k];
      return out;
    }
    case ExprKind::grad:
    case ExprKind::div: {
      const ExprNode* c = n->a.get();
      int vs = 0, gd = 0;
      const double* g = nullptr;
      if (c->kind == ExprKind::argument) {
        const ArgTable& t = env.args[c->arg_number];
        vs = t.vs;
        gd = t.gdim;
        g = t.grads +
            (static_cast<std::size_t>(env.q) * t.n_local + env.idx[c->arg_number]) * t.vs * gd;
      } else {
        vs = c->shape.empty() ? 1 : c->shape[0];
        gd = c->gdim;
        g = env.point_grads->at(n).data() + static_cast<std::size_t>(env.q) * vs * gd;
      }
      if (n->kind == ExprKind::div) {
        double s = 0.0;
        for (int k = 0; k < vs; ++k) s += g[k * gd + k];
        out.data[0] = s;
        return out;
      }
      if (vs == 1) {
        out.rank = 1;
        out.d0 = gd;
      } else {
        out.rank = 2;
        out.d0 = vs;
        out.d1 = gd;
      }
      for (int k = 0; k < vs * gd; ++k) out.data[k] = g[k];
      return out;
    }
    case ExprKind::inner: {
      const Value a = eval_expr(n->a.get(), env);
      const Value b = eval_expr(n->b.get(), env);
      double s = 0.0;
      for (int k = 0; k < a.size(); ++k) s += a.data[k] * b.data[k];
      out.data[0] = s;
      return out;
    }
    case ExprKind::product: {
      const Value a = eval_expr(n->a.get(), env);
      const Value b = eval_expr(n->b.get(), env);
      out.data[0] = a.data[0] * b.data[0];
      return out;
    }
    case ExprKind::component_mul: {
      const Value a = eval_expr(n->a.get(), env);
      Value b = eval_expr(n->b.get(), env);
      for (int k = 0; k < b.size(); ++k) b.data[k] *= a.data[0];
      return b;
    }
    case ExprKind::sum: {
      Value a = eval_expr(n->a.get(), env);
      const Value b = eval_expr(n->b.get(), env);
      for (int k = 0; k < a.size(); ++k) a.data[k] += b.data[k];
      return a;
    }
  }
  throw InvalidArgumentError("eval_expr: unknown expression node");
}

// Scan one integrand for the tables the evaluator will need: which arguments
// require gradients, which analytic/coefficient nodes need pointwise values,
// and which grad/div nodes sit on coefficients.
struct TermPlan {
  bool arg_present[2] = {false, false};
  bool arg_grad[2] = {false, false};
  std::vector<const ExprNode*> value_nodes;
  std::vector<const ExprNode*> grad_nodes;
};

inline void scan_term(const ExprNodePtr& n, TermPlan& plan) {
  if (!n) return;
  switch (n->kind) {
    case ExprKind::argument:
      plan.arg_present[n->arg_number] = true;
      return;
    case ExprKind::analytic:
    case ExprKind::coefficient:
      if (std::find(plan.value_nodes.begin(), plan.value_nodes.end(), n.get()) ==
          plan.value_nodes.end())
        plan.value_nodes.push_back(n.get());
      return;
    case ExprKind::grad:
    case ExprKind::div:
      if (n->a->kind == ExprKind::argument) {
        plan.arg_present[n->a->arg_number] = true;
        plan.arg_grad[n->a->arg_number] = true;
      } else {
        if (std::find(plan.grad_nodes.begin(), plan.grad_nodes.end(), n.get()) ==
            plan.grad_nodes.end())
          plan.grad_nodes.push_back(n.get());
      }
      return;
    default:
      scan_term(n->a, plan);
      scan_term(n->b, plan);
      return;
  }
}

// A known (mesh, cell, reference points) context usable to tabulate
// coefficients that live on that mesh.
struct CoefContext {
  std::uint64_t mesh_id = 0;
  index_t cell = absent_index;
  const double* ref_pts = nullptr;
  int np = 0;
  int tdim = 0;
  const CellGeometry* geo = nullptr;
};

inline void compute_pointwise(const TermPlan& plan, const std::vector<CoefContext>& contexts,
                              const std::vector<double>& xphys, int np,
                              std::unordered_map<const ExprNode*, std::vector<double>>& values,
                              std::unordered_map<const ExprNode*, std::vector<double>>& grads) {
  values.clear();
  grads.clear();
  for (const ExprNode* n : plan.value_nodes) {
    const int vs = n->shape.empty() ? 1 : n->shape[0];
    std::vector<double> out(static_cast<std::size_t>(np) * vs, 0.0);
    if (n->kind == ExprKind::analytic) {
      for (int q = 0; q < np; ++q) n->fn(xphys.data() + 3 * q, out.data() + q * vs);
      values.emplace(n, std::move(out));
      continue;
    }
    const Function& u = *n->function;
    const FunctionSpace& S = *u.space();
    const CoefContext* ctx = nullptr;
    for (const auto& c : contexts)
      if (c.mesh_id == S.mesh()->id()) {
        ctx = &c;
        break;
      }
    if (ctx) {
      const auto tab = S.element().tabulate(
          std::span<const double>(ctx->ref_pts, static_cast<std::size_t>(np) * ctx->tdim));
      const auto dofs = S.dofmap().dofs(ctx->cell);
      const int nl = S.dofmap().n_local;
      for (int q = 0; q < np; ++q)
        for (int i = 0; i < nl; ++i) {
          const double ci = u.coefficients()[dofs[i]];
          for (int k = 0; k < vs; ++k)
            out[static_cast<std::size_t>(q) * vs + k] +=
                ci * tab[(static_cast<std::size_t>(q) * nl + i) * vs + k];
        }
    } else {
      for (int q = 0; q < np; ++q) u.evaluate(xphys.data() + 3 * q, out.data() + q * vs);
    }
    values.emplace(n, std::move(out));
  }
  for (const ExprNode* n : plan.grad_nodes) {
    const ExprNode* c = n->a.get();
    const Function& u = *c->function;
    const FunctionSpace& S = *u.space();
    const int vs = c->shape.empty() ? 1 : c->shape[0];
    const int gd = c->gdim;
    const CoefContext* ctx = nullptr;
    for (const auto& cc : contexts)
      if (cc.mesh_id == S.mesh()->id()) {
        ctx = &cc;
        break;
      }
    if (!ctx)
      throw NotSupportedError(
          "coefficient derivatives require the coefficient mesh to participate in the "
          "integration domain");
    if (!ctx->geo->square)
      throw NotSupportedError("coefficient derivatives on an embedded mesh are not supported");
    const auto gtab = S.element().tabulate_gradient(
        std::span<const double>(ctx->ref_pts, static_cast<std::size_t>(np) * ctx->tdim));
    const auto dofs = S.dofmap().dofs(ctx->cell);
    const int nl = S.dofmap().n_local;
    const int td = ctx->tdim;
    std::vector<double> out(static_cast<std::size_t>(np) * vs * gd, 0.0);
    double gphys[3];
    for (int q = 0; q < np; ++q)
      for (int i = 0; i < nl; ++i) {
        const double ci = u.coefficients()[dofs[i]];
        if (ci == 0.0) continue;
        for (int k = 0; k < vs; ++k) {
          const double* gref = gtab.data() + ((static_cast<std::size_t>(q) * nl + i) * vs + k) * td;
          ctx->geo->push_gradient(gref, gphys);
          for (int d = 0; d < gd; ++d)
            out[(static_cast<std::size_t>(q) * vs + k) * gd + d] += ci * gphys[d];
        }
      }
    grads.emplace(n, std::move(out));
  }
}

enum class SideKind { direct, mapped, star };

struct Side {
  bool active = false;
  SpacePtr space;
  SideKind kind = SideKind::direct;
  MappingPtr mapping;
  bool need_grad = false;
  int n_local = 0, vs = 1, gdim = 0;
  // reference tabulation at the integration points (direct/mapped sides only)
  std::vector<double> ref_vals;
  std::vector<double> ref_grads;
};

inline void push_gradient_table(const CellGeometry& geo, const std::vector<double>& ref,
                                int np, int n_local, int vs, int tdim, int gdim,
                                std::vector<double>& phys) {
  phys.resize(static_cast<std::size_t>(np) * n_local * vs * gdim);
  for (std::size_t e = 0; e < static_cast<std::size_t>(np) * n_local * vs; ++e)
    geo.push_gradient(ref.data() + e * tdim, phys.data() + e * gdim);
}

// Scatter one member's local tensor. When `star` names a star-resolved side,
// rows (or columns) whose global dof already appeared for this integration
// cell are skipped so facet-shared dofs contribute exactly once.
inline void scatter_local(const std::vector<double>& T, std::span<const index_t> rows,
                          std::span<const index_t> cols, int star_side,
                          std::unordered_set<index_t>& seen, std::vector<Triplet>* mat,
                          std::vector<double>* vec) {
  const int n0 = static_cast<int>(rows.size());
  const int n1 = cols.empty() ? 1 : static_cast<int>(cols.size());
  if (vec) {
    for (int i = 0; i < n0; ++i) {
      if (star_side == 0 && !seen.insert(rows[i]).second) continue;
      (*vec)[rows[i]] += T[i];
    }
    return;
  }
  if (star_side == 1) {
    std::vector<char> keep(n1, 1);
    for (int j = 0; j < n1; ++j) keep[j] = seen.insert(cols[j]).second ? 1 : 0;
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j)
        if (keep[j]) mat->push_back({rows[i], cols[j], T[static_cast<std::size_t>(i) * n1 + j]});
    return;
  }
  for (int i = 0; i < n0; ++i) {
    if (star_side == 0 && !seen.insert(rows[i]).second) continue;
    for (int j = 0; j < n1; ++j)
      mat->push_back({rows[i], cols[j], T[static_cast<std::size_t>(i) * n1 + j]});
  }
}

// Assembly over a cell measure. Handles arguments living on the integration
// mesh itself, on a geometrically aligned same-dimension mesh, and on a mesh
// one dimension higher (resolved through facet stars).
inline void assemble_cell_integral(const Integral& integral, const SpacePtr& test_space,
                                   const SpacePtr& trial_space, int qdeg,
                                   std::vector<Triplet>* mat, std::vector<double>* vec) {
  const MeshPtr& M = integral.measure.domain;
  const int tdim = M->tdim();
  const QuadratureRule rule = quadrature_rule(M->cell_kind(), qdeg);
  const int np = static_cast<int>(rule.num_points());

  TermPlan plan;
  scan_term(integral.integrand.node(), plan);

  const int arity = trial_space ? 2 : 1;
  Side sides[2];
  int star_side = -1;
  for (int r = 0; r < arity; ++r) {
    Side& s = sides[r];
    s.space = r == 0 ? test_space : trial_space;
    s.active = true;
    s.need_grad = plan.arg_grad[r];
    const MeshPtr& am = s.space->mesh();
    s.n_local = s.space->dofmap().n_local;
    s.vs = s.space->value_size();
    s.gdim = am->gdim();
    if (am->id() == M->id()) {
      s.kind = SideKind::direct;
    } else if (am->tdim() == tdim) {
      s.kind = SideKind::mapped;
      s.mapping = build_mapping(M, am);
    } else if (am->tdim() == tdim + 1) {
      s.kind = SideKind::star;
      s.mapping = build_mapping(M, am);
      if (star_side >= 0)
        throw NotSupportedError("at most one argument may couple through a facet star");
      star_side = r;
    } else {
      throw FormError("coupling-measure", "argument mesh is not reachable from the measure domain");
    }
    if (s.kind != SideKind::star) {
      s.ref_vals = s.space->element().tabulate({rule.points.data(), rule.points.size()});
      if (s.need_grad)
        s.ref_grads = s.space->element().tabulate_gradient({rule.points.data(), rule.points.size()});
    }
  }

  std::vector<index_t> cells;
  if (integral.measure.tag) {
    cells = integral.measure.subdomain_data->where(*integral.measure.tag);
  } else {
    cells.resize(static_cast<std::size_t>(M->num_entities(tdim)));
    for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = static_cast<index_t>(c);
  }

  std::vector<double> xphys(static_cast<std::size_t>(np) * 3, 0.0);
  std::vector<double> wscale(np);
  std::vector<double> grad_buf[2];
  std::vector<double> star_pts;
  std::vector<double> star_vals, star_grads_ref, star_grads;
  std::vector<double> T;
  std::unordered_map<const ExprNode*, std::vector<double>> pv, pg;
  std::unordered_set<index_t> seen;

  for (index_t c : cells) {
    const CellGeometry geo = cell_geometry(*M, c);
    if (!(geo.scale > degenerate_scale_tol))
      throw NumericalError("degenerate-cell",
                           "cell " + std::to_string(c) + " has vanishing measure");
    for (int q = 0; q < np; ++q) {
      geo.map_to_physical(rule.point(q), xphys.data() + 3 * q);
      wscale[q] = rule.weights[q] * geo.scale;
    }

    index_t side_cell[2] = {absent_index, absent_index};
    std::span<const index_t> star_members;
    const Mesh* H = nullptr;
    CellGeometry geoH;
    for (int r = 0; r < arity; ++r) {
      Side& s = sides[r];
      if (s.kind == SideKind::direct) {
        side_cell[r] = c;
      } else if (s.kind == SideKind::mapped) {
        const index_t mc = s.mapping->cell_map()[static_cast<std::size_t>(c)];
        if (mc == absent_index)
          throw ViewError("absent-mapping",
                          "cell " + std::to_string(c) + " has no counterpart in the mapped mesh");
        side_cell[r] = mc;
      } else {
        const index_t f = s.mapping->cell_map()[static_cast<std::size_t>(c)];
        if (f == absent_index)
          throw ViewError("absent-mapping",
                          "cell " + std::to_string(c) + " has no facet in the coupled mesh");
        H = s.space->mesh().get();
        star_members = H->connectivity(tdim, tdim + 1)(f);
        if (star_members.empty())
          throw ViewError("inconsistent-view",
                          "facet " + std::to_string(f) + " has no adjacent cells");
      }
      if (s.need_grad && s.kind != SideKind::star) {
        if (!geo.square)
          throw NotSupportedError("derivatives on an embedded mesh are not supported");
        push_gradient_table(geo, s.ref_grads, np, s.n_local, s.vs, tdim, s.gdim, grad_buf[r]);
      }
    }

    const int n_members = star_side >= 0 ? static_cast<int>(star_members.size()) : 1;
    seen.clear();
    for (int m = 0; m < n_members; ++m) {
      EvalEnv env;
      std::vector<CoefContext> contexts;
      contexts.push_back({M->id(), c, rule.points.data(), np, tdim, &geo});
      for (int r = 0; r < arity; ++r) {
        Side& s = sides[r];
        if (s.kind == SideKind::star) continue;
        env.args[r] = {s.n_local, s.vs, s.gdim, s.ref_vals.data(),
                       s.need_grad ? grad_buf[r].data() : nullptr};
        if (s.kind == SideKind::mapped)
          contexts.push_back({s.space->mesh()->id(), side_cell[r], rule.points.data(), np, tdim,
                              &geo});
      }
      if (star_side >= 0) {
        Side& s = sides[star_side];
        const index_t mc = star_members[m];
        side_cell[star_side] = mc;
        geoH = cell_geometry(*H, mc);
        if (!geoH.square)
          throw NotSupportedError("facet coupling into an embedded mesh is not supported");
        star_pts.resize(static_cast<std::size_t>(np) * (tdim + 1));
        for (int q = 0; q < np; ++q)
          geoH.map_to_reference(xphys.data() + 3 * q, star_pts.data() + q * (tdim + 1));
        star_vals = s.space->element().tabulate({star_pts.data(), star_pts.size()});
        if (s.need_grad) {
          star_grads_ref = s.space->element().tabulate_gradient({star_pts.data(), star_pts.size()});
          push_gradient_table(geoH, star_grads_ref, np, s.n_local, s.vs, tdim + 1, s.gdim,
                              star_grads);
        }
        env.args[star_side] = {s.n_local, s.vs, s.gdim, star_vals.data(),
                               s.need_grad ? star_grads.data() : nullptr};
        contexts.push_back({H->id(), mc, star_pts.data(), np, tdim + 1, &geoH});
      }
      compute_pointwise(plan, contexts, xphys, np, pv, pg);
      env.point_values = &pv;
      env.point_grads = &pg;

      const int n0 = sides[0].n_local;
      const int n1 = arity == 2 ? sides[1].n_local : 1;
      T.assign(static_cast<std::size_t>(n0) * n1, 0.0);
      const ExprNode* root = integral.integrand.node().get();
      for (int q = 0; q < np; ++q) {
        env.q = q;
        env.xq = xphys.data() + 3 * q;
        for (int i = 0; i < n0; ++i) {
          env.idx[0] = i;
          for (int j = 0; j < n1; ++j) {
            env.idx[1] = j;
            T[static_cast<std::size_t>(i) * n1 + j] += wscale[q] * eval_expr(root, env).data[0];
          }
        }
      }

      const auto rows = sides[0].space->dofmap().dofs(side_cell[0]);
      const auto cols = arity == 2 ? sides[1].space->dofmap().dofs(side_cell[1])
                                   : std::span<const index_t>{};
      scatter_local(T, rows, cols, star_side, seen, mat, vec);
    }
  }
}

// Assembly over the exterior facets of the measure domain. All arguments must
// live on the domain mesh itself.
inline void assemble_exterior_facet_integral(const Integral& integral, const SpacePtr& test_space,
                                             const SpacePtr& trial_space, int qdeg,
                                             std::vector<Triplet>* mat, std::vector<double>* vec) {
  const MeshPtr& M = integral.measure.domain;
  const int tdim = M->tdim();
  const CellKind kind = M->cell_kind();

  QuadratureRule rule;
  if (tdim == 1) {
    rule.degree = qdeg;
    rule.dim = 0;
    rule.weights.assign(1, 1.0);
  } else {
    rule = quadrature_rule(cell_kind_of_dim(tdim - 1), qdeg);
  }
  const int np = static_cast<int>(rule.num_points());

  TermPlan plan;
  scan_term(integral.integrand.node(), plan);

  const int arity = trial_space ? 2 : 1;
  Side sides[2];
  for (int r = 0; r < arity; ++r) {
    Side& s = sides[r];
    s.space = r == 0 ? test_space : trial_space;
    s.active = true;
    s.need_grad = plan.arg_grad[r];
    if (s.space->mesh()->id() != M->id())
      throw FormError("coupling-measure",
                      "exterior facet integrals require arguments on the measure domain");
    s.n_local = s.space->dofmap().n_local;
    s.vs = s.space->value_size();
    s.gdim = s.space->mesh()->gdim();
  }

  // Embed the facet rule into the cell reference simplex, once per local facet.
  const int nlf = tdim + 1;
  std::vector<std::vector<double>> facet_pts(nlf);
  std::vector<std::vector<double>> facet_vals[2], facet_grads[2];
  for (int lf = 0; lf < nlf; ++lf) {
    const FacetEmbedding emb = facet_embedding(kind, lf);
    auto& pts = facet_pts[lf];
    pts.resize(static_cast<std::size_t>(np) * tdim);
    for (int q = 0; q < np; ++q) emb.apply(rule.point(q), pts.data() + q * tdim);
    for (int r = 0; r < arity; ++r) {
      facet_vals[r].resize(nlf);
      facet_grads[r].resize(nlf);
      facet_vals[r][lf] = sides[r].space->element().tabulate({pts.data(), pts.size()});
      if (sides[r].need_grad)
        facet_grads[r][lf] = sides[r].space->element().tabulate_gradient({pts.data(), pts.size()});
    }
  }

  const auto& f2c = M->connectivity(tdim - 1, tdim);
  const auto& c2f = M->connectivity(tdim, tdim - 1);

  std::vector<double> xphys(static_cast<std::size_t>(np) * 3, 0.0);
  std::vector<double> wscale(np);
  std::vector<double> grad_buf[2];
  std::vector<double> T;
  std::unordered_map<const ExprNode*, std::vector<double>> pv, pg;
  std::unordered_set<index_t> seen;

  for (index_t f : M->exterior_facets()) {
    if (integral.measure.tag && (*integral.measure.subdomain_data)[f] != *integral.measure.tag)
      continue;
    const index_t c = f2c(f)[0];
    const auto cf = c2f(c);
    int lf = -1;
    for (std::size_t k = 0; k < cf.size(); ++k)
      if (cf[k] == f) lf = static_cast<int>(k);
    const CellGeometry geo = cell_geometry(*M, c);
    const double fscale = tdim == 1 ? 1.0 : entity_geometry(*M, tdim - 1, f).scale;
    if (!(fscale > degenerate_scale_tol))
      throw NumericalError("degenerate-cell",
                           "facet " + std::to_string(f) + " has vanishing measure");
    for (int q = 0; q < np; ++q) {
      geo.map_to_physical(facet_pts[lf].data() + q * tdim, xphys.data() + 3 * q);
      wscale[q] = rule.weights[q] * fscale;
    }

    EvalEnv env;
    std::vector<CoefContext> contexts;
    contexts.push_back({M->id(), c, facet_pts[lf].data(), np, tdim, &geo});
    for (int r = 0; r < arity; ++r) {
      Side& s = sides[r];
      if (s.need_grad)
        push_gradient_table(geo, facet_grads[r][lf], np, s.n_local, s.vs, tdim, s.gdim,
                            grad_buf[r]);
      env.args[r] = {s.n_local, s.vs, s.gdim, facet_vals[r][lf].data(),
                     s.need_grad ? grad_buf[r].data() : nullptr};
    }
    compute_pointwise(plan, contexts, xphys, np, pv, pg);
    env.point_values = &pv;
    env.point_grads = &pg;

    const int n0 = sides[0].n_local;
    const int n1 = arity == 2 ? sides[1].n_local : 1;
    T.assign(static_cast<std::size_t>(n0) * n1, 0.0);
    const ExprNode* root = integral.integrand.node().get();
    for (int q = 0; q < np; ++q) {
      env.q = q;
      env.xq = xphys.data() + 3 * q;
      for (int i = 0; i < n0; ++i) {
        env.idx[0] = i;
        for (int j = 0; j < n1; ++j) {
          env.idx[1] = j;
          T[static_cast<std::size_t>(i) * n1 + j] += wscale[q] * eval_expr(root, env).data[0];
        }
      }
    }

    const auto rows = sides[0].space->dofmap().dofs(c);
    const auto cols =
        arity == 2 ? sides[1].space->dofmap().dofs(c) : std::span<const index_t>{};
    seen.clear();
    scatter_local(T, rows, cols, -1, seen, mat, vec);
  }
}

inline void assemble_integral(const Integral& integral, const SpacePtr& test_space,
                              const SpacePtr& trial_space, int qdeg_override,
                              std::vector<Triplet>* mat, std::vector<double>* vec) {
  const int qdeg = integral_quadrature_degree(integral, qdeg_override);
  if (integral.measure.kind == MeasureKind::exterior_facet)
    assemble_exterior_facet_integral(integral, test_space, trial_space, qdeg, mat, vec);
  else
    assemble_cell_integral(integral, test_space, trial_space, qdeg, mat, vec);
}

}  // namespace detail

// Assemble one bilinear block subform (single test space, single trial space)
// into a CSR matrix. Empty subforms produce a zero matrix of the right shape.
inline CsrMatrix assemble_matrix_block(const Form& subform, int quadrature_degree = -1) {
  if (subform.num_blocks(test_argument) != 1 || subform.num_blocks(trial_argument) != 1)
    throw InvalidArgumentError("assemble_matrix_block: subform is not a single bilinear block");
  const SpacePtr& V0 = subform.argument_space(test_argument, 0);
  const SpacePtr& V1 = subform.argument_space(trial_argument, 0);
  std::vector<Triplet> trips;
  for (const auto& it : subform.integrals())
    detail::assemble_integral(it, V0, V1, quadrature_degree, &trips, nullptr);
  return csr_from_triplets(V0->dim(), V1->dim(), std::move(trips));
}

// Assemble one linear block subform into a dense vector.
inline std::vector<double> assemble_vector_block(const Form& subform, int quadrature_degree = -1) {
  if (subform.num_blocks(test_argument) != 1)
    throw InvalidArgumentError("assemble_vector_block: subform is not a single linear block");
  const SpacePtr& V0 = subform.argument_space(test_argument, 0);
  std::vector<double> out(static_cast<std::size_t>(V0->dim()), 0.0);
  for (const auto& it : subform.integrals())
    detail::assemble_integral(it, V0, nullptr, quadrature_degree, nullptr, &out);
  return out;
}

// Symmetric Dirichlet elimination on an assembled block system. For every
// constrained dof d with value g: the row is replaced by the identity row,
// the column is folded into the right-hand side (b_m -= A_md * g), and b_d is
// set to g. Applying the same constraints twice leaves the system unchanged.
inline void apply_dirichlet(BlockNestMatrix& A, BlockVector& b,
                            const std::vector<std::vector<std::pair<index_t, double>>>& bc_rows) {
  const std::size_t nb = A.block_rows();
  if (A.block_cols() != nb)
    throw InvalidArgumentError("apply_dirichlet: block structure must be square");
  if (bc_rows.size() != nb)
    throw InvalidArgumentError("apply_dirichlet: one constraint list per block row required");
  for (std::size_t i = 0; i < nb; ++i)
    if (A.row_dims()[i] != A.col_dims()[i])
      throw InvalidArgumentError("apply_dirichlet: diagonal blocks must be square");

  std::vector<std::unordered_map<index_t, double>> values(nb);
  for (std::size_t i = 0; i < nb; ++i)
    for (const auto& [d, g] : bc_rows[i]) values[i][d] = g;

  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const auto& blk = A.block(i, j);
      if (!blk && !(i == j && !bc_rows[i].empty())) continue;
      std::vector<Triplet> kept;
      auto& bi = b.segment(i);
      if (blk) {
        for (index_t r = 0; r < blk->n_rows(); ++r) {
          for (index_t k = blk->row_offsets()[static_cast<std::size_t>(r)];
               k < blk->row_offsets()[static_cast<std::size_t>(r) + 1]; ++k) {
            const index_t col = blk->col_indices()[static_cast<std::size_t>(k)];
            const double v = blk->values()[static_cast<std::size_t>(k)];
            if (values[i].count(r)) continue;
            const auto it = values[j].find(col);
            if (it != values[j].end()) {
              bi[static_cast<std::size_t>(r)] -= v * it->second;
              continue;
            }
            kept.push_back({r, col, v});
          }
        }
      }
      if (i == j)
        for (const auto& [d, g] : bc_rows[i]) kept.push_back({d, d, 1.0});
      if (blk || !kept.empty())
        A.set_block(i, j, csr_from_triplets(A.row_dims()[i], A.col_dims()[j], std::move(kept)));
    }
  }
  for (std::size_t i = 0; i < nb; ++i)
    for (const auto& [d, g] : bc_rows[i]) b.segment(i)[static_cast<std::size_t>(d)] = g;
}

struct AssembledSystem {
  BlockNestMatrix A;
  BlockVector b;
};

// Assemble the full block system for a bilinear form, a linear form, and a
// set of Dirichlet conditions. Blocks are extracted per argument block pair;
// structurally empty blocks stay absent in the nest.
inline AssembledSystem assemble_system(const Form& a, const Form& L,
                                       const std::vector<DirichletBC>& bcs = {},
                                       int quadrature_degree = -1) {
  validate_or_throw(a);
  validate_or_throw(L);
  if (a.arity() != 2) throw InvalidArgumentError("assemble_system: first form must be bilinear");
  if (L.arity() != 1) throw InvalidArgumentError("assemble_system: second form must be linear");

  const BlockForms BA = extract_blocks(a);
  const BlockForms BL = extract_blocks(L);
  if (BL.rows != BA.rows)
    throw InvalidArgumentError("assemble_system: test space block counts differ");

  std::vector<index_t> row_dims(BA.rows), col_dims(BA.cols);
  for (int i = 0; i < BA.rows; ++i) {
    const SpacePtr& Vi = BA(i, 0).argument_space(test_argument, 0);
    if (Vi != BL(i).argument_space(test_argument, 0))
      throw InvalidArgumentError("assemble_system: bilinear and linear test spaces differ");
    row_dims[static_cast<std::size_t>(i)] = Vi->dim();
  }
  for (int j = 0; j < BA.cols; ++j)
    col_dims[static_cast<std::size_t>(j)] = BA(0, j).argument_space(trial_argument, 0)->dim();

  BlockNestMatrix A(row_dims, col_dims);
  BlockVector b(row_dims);
  for (int i = 0; i < BA.rows; ++i) {
    for (int j = 0; j < BA.cols; ++j) {
      const Form& blk = BA(i, j);
      if (blk.empty()) continue;
      A.set_block(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                  assemble_matrix_block(blk, quadrature_degree));
    }
    if (!BL(i).empty()) b.segment(static_cast<std::size_t>(i)) = assemble_vector_block(BL(i), quadrature_degree);
  }

  std::vector<std::vector<std::pair<index_t, double>>> bc_rows(
      static_cast<std::size_t>(BA.rows));
  for (const auto& bc : bcs) {
    int found = -1;
    for (int i = 0; i < BA.rows; ++i)
      if (BA(i, 0).argument_space(test_argument, 0) == bc.space) found = i;
    if (found < 0)
      throw InvalidArgumentError("assemble_system: boundary condition space is not a test space");
    if (BA.cols <= found || BA(found, found).argument_space(trial_argument, 0) != bc.space)
      throw InvalidArgumentError(
          "assemble_system: boundary conditions require matching trial and test spaces");
    auto dofs = collect_bc_dofs(bc);
    auto& dst = bc_rows[static_cast<std::size_t>(found)];
    dst.insert(dst.end(), dofs.begin(), dofs.end());
  }
  for (auto& rows : bc_rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    rows.erase(std::unique(rows.begin(), rows.end(),
                           [](const auto& x, const auto& y) { return x.first == y.first; }),
               rows.end());
  }
  apply_dirichlet(A, b, bc_rows);
  return {std::move(A), std::move(b)};
}

}  // namespace mixfem
