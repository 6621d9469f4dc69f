#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mixfem/errors.hpp"
#include "mixfem/geometry.hpp"
#include "mixfem/quadrature.hpp"
#include "mixfem/space.hpp"

namespace mixfem {

using PointFn = std::function<void(const double*, double*)>;

struct ErrorNorms {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double h1 = 0.0;
};

// Quadrature-based error norms of a discrete function against callbacks for
// the exact solution. `exact` fills value_size entries at a physical point;
// `exact_grad` fills value_size * gdim entries, component major. Pass a null
// `exact_grad` to skip the H1 terms (they stay zero). Gradients require a
// non-embedded mesh.
inline ErrorNorms error_norms(const Function& u, const PointFn& exact, const PointFn& exact_grad,
                              int quadrature_degree) {
  const auto& space = *u.space();
  const auto& mesh = *space.mesh();
  const auto& el = space.element();
  const int tdim = mesh.tdim();
  const int gdim = mesh.gdim();
  const int vs = el.value_size();
  const int nsn = el.num_scalar_nodes();

  const auto rule = quadrature_rule(cell_kind_of_dim(tdim), std::min(quadrature_degree, max_quadrature_degree));
  const std::size_t np = rule.num_points();
  const auto vals = el.tabulate_scalar(std::span<const double>(rule.points.data(), np * tdim));
  std::vector<double> grads_ref;
  if (exact_grad)
    grads_ref = el.tabulate_scalar_gradient(std::span<const double>(rule.points.data(), np * tdim));

  const auto& coeffs = u.coefficients();
  double l2_acc = 0.0;
  double h1_acc = 0.0;
  std::vector<double> uh(vs), ev(vs), eg(static_cast<std::size_t>(vs) * gdim),
      uhg(static_cast<std::size_t>(vs) * gdim);
  double x[3], gp[3];

  for (index_t c = 0; c < mesh.num_cells(); ++c) {
    const CellGeometry geo = cell_geometry(mesh, c);
    if (exact_grad && !geo.square)
      throw NotSupportedError("error_norms: gradients on embedded meshes are not supported");
    const auto dofs = space.dofmap().dofs(c);
    for (std::size_t q = 0; q < np; ++q) {
      geo.map_to_physical(rule.point(q), x);
      const double w = rule.weights[q] * geo.scale;

      exact(x, ev.data());
      std::fill(uh.begin(), uh.end(), 0.0);
      for (int n = 0; n < nsn; ++n) {
        const double phi = vals[q * nsn + n];
        for (int k = 0; k < vs; ++k) uh[k] += coeffs[dofs[n * vs + k]] * phi;
      }
      for (int k = 0; k < vs; ++k) {
        const double d = uh[k] - ev[k];
        l2_acc += w * d * d;
      }

      if (!exact_grad) continue;
      exact_grad(x, eg.data());
      std::fill(uhg.begin(), uhg.end(), 0.0);
      for (int n = 0; n < nsn; ++n) {
        geo.push_gradient(grads_ref.data() + (q * nsn + n) * tdim, gp);
        for (int k = 0; k < vs; ++k) {
          const double cn = coeffs[dofs[n * vs + k]];
          for (int d = 0; d < gdim; ++d) uhg[static_cast<std::size_t>(k) * gdim + d] += cn * gp[d];
        }
      }
      for (int k = 0; k < vs * gdim; ++k) {
        const double d = uhg[k] - eg[k];
        h1_acc += w * d * d;
      }
    }
  }

  ErrorNorms out;
  out.l2 = std::sqrt(l2_acc);
  out.h1_semi = std::sqrt(h1_acc);
  out.h1 = std::sqrt(l2_acc + h1_acc);
  return out;
}

// L2 norm of the divergence of a vector-valued discrete function.
inline double divergence_l2(const Function& u, int quadrature_degree) {
  const auto& space = *u.space();
  const auto& mesh = *space.mesh();
  const auto& el = space.element();
  const int tdim = mesh.tdim();
  const int gdim = mesh.gdim();
  const int vs = el.value_size();
  const int nsn = el.num_scalar_nodes();
  if (vs != gdim) throw InvalidArgumentError("divergence_l2: function must be a vector field");

  const auto rule = quadrature_rule(cell_kind_of_dim(tdim), std::min(quadrature_degree, max_quadrature_degree));
  const std::size_t np = rule.num_points();
  const auto grads_ref = el.tabulate_scalar_gradient(std::span<const double>(rule.points.data(), np * tdim));
  const auto& coeffs = u.coefficients();

  double acc = 0.0;
  double gp[3];
  for (index_t c = 0; c < mesh.num_cells(); ++c) {
    const CellGeometry geo = cell_geometry(mesh, c);
    if (!geo.square) throw NotSupportedError("divergence_l2: embedded meshes are not supported");
    const auto dofs = space.dofmap().dofs(c);
    for (std::size_t q = 0; q < np; ++q) {
      double div = 0.0;
      for (int n = 0; n < nsn; ++n) {
        geo.push_gradient(grads_ref.data() + (q * nsn + n) * tdim, gp);
        for (int k = 0; k < vs; ++k) div += coeffs[dofs[n * vs + k]] * gp[k];
      }
      acc += rule.weights[q] * geo.scale * div * div;
    }
  }
  return std::sqrt(acc);
}

}  // namespace mixfem
