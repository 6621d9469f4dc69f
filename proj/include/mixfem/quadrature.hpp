#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "mesh.hpp"

namespace mixfem {

// Quadrature on the reference simplex. `points` is num_points x dim, row major.
struct QuadratureRule {
  int dim = 0;
  int degree = 0;
  std::vector<double> points;
  std::vector<double> weights;

  std::size_t num_points() const { return weights.size(); }
  const double* point(std::size_t q) const { return points.data() + q * dim; }
};

inline constexpr int max_quadrature_degree = 24;

// Gauss-Legendre nodes/weights on [0,1], exact for polynomials of degree 2n-1.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre_01(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    // Newton on P_n, Chebyshev initial guess
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      if (n == 1) p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double pn = (n == 1) ? t : p1;
      double pm = (n == 1) ? 1.0 : p0;
      dp = n * (t * pn - pm) / (t * t - 1.0);
      double dt = pn / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[i] = (1.0 - t) / 2.0;  // ascending on [0,1]
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
  return {x, w};
}

// Gauss-Legendre tensor-collapsed (Duffy) rules on reference simplices.
// Exactness for total degree <= q is arranged by padding the per-direction
// order by the collapse Jacobian's polynomial degree.
inline QuadratureRule quadrature_rule(CellKind kind, int degree) {
  if (degree < 0) throw InvalidArgumentError("quadrature degree must be nonnegative");
  if (degree > max_quadrature_degree)
    throw Error("unsupported-degree", "quadrature degree " + std::to_string(degree) + " exceeds the supported maximum " +
                                          std::to_string(max_quadrature_degree));
  QuadratureRule rule;
  rule.degree = degree;
  const int q = degree;
  auto n_for = [](int exact) { return exact / 2 + 1; };  // GL with n points is exact to 2n-1

  // centroid rule for q <= 1 on simplices of dimension >= 2
  if (q <= 1 && kind != CellKind::interval) {
    const int d = cell_dim(kind);
    rule.dim = d;
    rule.points.assign(d, 1.0 / (d + 1));
    rule.weights.assign(1, d == 2 ? 0.5 : 1.0 / 6.0);
    return rule;
  }

  switch (kind) {
    case CellKind::interval: {
      rule.dim = 1;
      auto [x, w] = gauss_legendre_01(n_for(q));
      rule.points = x;
      rule.weights = w;
      break;
    }
    case CellKind::triangle: {
      rule.dim = 2;
      auto [xa, wa] = gauss_legendre_01(n_for(q + 1));  // collapse factor (1-xi)
      auto [xb, wb] = gauss_legendre_01(n_for(q));
      for (std::size_t a = 0; a < xa.size(); ++a)
        for (std::size_t b = 0; b < xb.size(); ++b) {
          const double xi = xa[a], eta = xb[b];
          rule.points.push_back(xi);
          rule.points.push_back(eta * (1.0 - xi));
          rule.weights.push_back(wa[a] * wb[b] * (1.0 - xi));
        }
      break;
    }
    case CellKind::tetrahedron: {
      rule.dim = 3;
      auto [xa, wa] = gauss_legendre_01(n_for(q + 2));  // (1-xi)^2
      auto [xb, wb] = gauss_legendre_01(n_for(q + 1));  // (1-eta)
      auto [xc, wc] = gauss_legendre_01(n_for(q));
      for (std::size_t a = 0; a < xa.size(); ++a)
        for (std::size_t b = 0; b < xb.size(); ++b)
          for (std::size_t c = 0; c < xc.size(); ++c) {
            const double xi = xa[a], eta = xb[b], zeta = xc[c];
            rule.points.push_back(xi);
            rule.points.push_back(eta * (1.0 - xi));
            rule.points.push_back(zeta * (1.0 - xi) * (1.0 - eta));
            rule.weights.push_back(wa[a] * wb[b] * wc[c] * (1.0 - xi) * (1.0 - xi) * (1.0 - eta));
          }
      break;
    }
    default:
      throw InvalidArgumentError("quadrature_rule: unsupported cell kind");
  }
  return rule;
}

}  // namespace mixfem
