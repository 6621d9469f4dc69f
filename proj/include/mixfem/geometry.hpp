#pragma once

#include <cmath>
#include <cstddef>

#include "errors.hpp"
#include "mesh.hpp"

namespace mixfem {

// Affine geometry of a single simplex entity: x(xi) = x0 + J xi with J of
// shape gdim x edim. `scale` is the integration factor sqrt(det(J^T J)) (equal
// to |det J| when edim == gdim); `Jinv` is populated only in the square case.
struct CellGeometry {
  int edim = 0, gdim = 0;
  double x0[3] = {};
  double J[9] = {};     // [gdim][edim] row major
  double Jinv[9] = {};  // [edim][gdim] row major, square case only
  double detJ = 0.0;    // signed, square case only
  double scale = 0.0;
  bool square = false;

  void map_to_physical(const double* ref, double* phys) const {
    for (int g = 0; g < gdim; ++g) {
      double s = x0[g];
      for (int e = 0; e < edim; ++e) s += J[g * edim + e] * ref[e];
      phys[g] = s;
    }
  }

  // Valid only when square; exact affine inverse.
  void map_to_reference(const double* phys, double* ref) const {
    for (int e = 0; e < edim; ++e) {
      double s = 0.0;
      for (int g = 0; g < gdim; ++g) s += Jinv[e * gdim + g] * (phys[g] - x0[g]);
      ref[e] = s;
    }
  }

  // Push a reference gradient (edim entries) to a physical gradient (gdim
  // entries): grad_x = J^{-T} grad_xi. Square case only.
  void push_gradient(const double* gref, double* gphys) const {
    for (int g = 0; g < gdim; ++g) {
      double s = 0.0;
      for (int e = 0; e < edim; ++e) s += Jinv[e * gdim + g] * gref[e];
      gphys[g] = s;
    }
  }
};

// Geometry of entity (d, e) of a mesh; d == tdim gives cell geometry.
inline CellGeometry entity_geometry(const Mesh& mesh, int d, index_t e) {
  CellGeometry geo;
  geo.edim = d;
  geo.gdim = mesh.gdim();
  auto vs = mesh.entity_vertices(d, e);
  auto a = mesh.vertex_coords(vs[0]);
  for (int g = 0; g < geo.gdim; ++g) geo.x0[g] = a[g];
  for (int c = 0; c < d; ++c) {
    auto b = mesh.vertex_coords(vs[c + 1]);
    for (int g = 0; g < geo.gdim; ++g) geo.J[g * d + c] = b[g] - a[g];
  }
  geo.square = (d == geo.gdim);
  if (geo.square) {
    const double* J = geo.J;
    double det = 0.0;
    if (d == 1)
      det = J[0];
    else if (d == 2)
      det = J[0] * J[3] - J[1] * J[2];
    else
      det = J[0] * (J[4] * J[8] - J[5] * J[7]) - J[1] * (J[3] * J[8] - J[5] * J[6]) +
            J[2] * (J[3] * J[7] - J[4] * J[6]);
    geo.detJ = det;
    geo.scale = std::abs(det);
    if (geo.scale == 0.0) throw InvalidArgumentError("degenerate cell geometry");
    const double id = 1.0 / det;
    double* I = geo.Jinv;
    if (d == 1)
      I[0] = id;
    else if (d == 2) {
      I[0] = J[3] * id;
      I[1] = -J[1] * id;
      I[2] = -J[2] * id;
      I[3] = J[0] * id;
    } else {
      I[0] = (J[4] * J[8] - J[5] * J[7]) * id;
      I[1] = (J[2] * J[7] - J[1] * J[8]) * id;
      I[2] = (J[1] * J[5] - J[2] * J[4]) * id;
      I[3] = (J[5] * J[6] - J[3] * J[8]) * id;
      I[4] = (J[0] * J[8] - J[2] * J[6]) * id;
      I[5] = (J[2] * J[3] - J[0] * J[5]) * id;
      I[6] = (J[3] * J[7] - J[4] * J[6]) * id;
      I[7] = (J[1] * J[6] - J[0] * J[7]) * id;
      I[8] = (J[0] * J[4] - J[1] * J[3]) * id;
    }
  } else {
    // Gram determinant for embedded entities
    double g2[9] = {};
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        double s = 0.0;
        for (int g = 0; g < geo.gdim; ++g) s += geo.J[g * d + r] * geo.J[g * d + c];
        g2[r * d + c] = s;
      }
    double det = (d == 1) ? g2[0] : g2[0] * g2[3] - g2[1] * g2[2];
    if (det <= 0.0) throw InvalidArgumentError("degenerate entity geometry");
    geo.scale = std::sqrt(det);
  }
  return geo;
}

inline CellGeometry cell_geometry(const Mesh& mesh, index_t cell) { return entity_geometry(mesh, mesh.tdim(), cell); }

}  // namespace mixfem
