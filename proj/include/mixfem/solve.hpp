#pragma once

// Linear solvers: sparse direct LU (partial pivoting, fill-reducing column
// ordering) and unpreconditioned Krylov methods (CG, MINRES, full GMRES).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "mixfem/linalg.hpp"

namespace mixfem {

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace detail

inline std::vector<double> solve_direct(const CsrMatrix& A, const std::vector<double>& b) {
  if (A.n_rows() != A.n_cols()) throw InvalidArgumentError("solve_direct: matrix must be square");
  if (static_cast<index_t>(b.size()) != A.n_rows())
    throw InvalidArgumentError("solve_direct: right-hand side size mismatch");
  const index_t n = A.n_rows();
  if (n == 0) return {};

  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  std::vector<Eigen::Triplet<double, int>> entries;
  entries.reserve(static_cast<std::size_t>(A.nnz()));
  for (index_t r = 0; r < n; ++r)
    for (index_t k = A.row_offsets()[static_cast<std::size_t>(r)];
         k < A.row_offsets()[static_cast<std::size_t>(r) + 1]; ++k)
      entries.emplace_back(r, A.col_indices()[static_cast<std::size_t>(k)],
                           A.values()[static_cast<std::size_t>(k)]);
  SpMat M(n, n);
  M.setFromTriplets(entries.begin(), entries.end());
  M.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(M);
  lu.factorize(M);
  if (lu.info() != Eigen::Success) throw SingularMatrixError("sparse LU factorization failed");
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), n);
  Eigen::VectorXd sol = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw SingularMatrixError("sparse LU back-substitution failed");

  std::vector<double> x(sol.data(), sol.data() + n);
  std::vector<double> r = A.matvec(x);
  for (index_t i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] -= b[static_cast<std::size_t>(i)];
  const double bound = 1e-10 * (A.frobenius_norm() * detail::norm2(x) + detail::norm2(b));
  if (detail::norm2(r) > bound)
    throw NumericalError("direct solve residual exceeds the accuracy bound");
  return x;
}

enum class KrylovMethod { cg, minres, gmres };

inline KrylovMethod krylov_method_from_string(const std::string& name) {
  if (name == "cg") return KrylovMethod::cg;
  if (name == "minres") return KrylovMethod::minres;
  if (name == "gmres") return KrylovMethod::gmres;
  throw InvalidArgumentError("unknown Krylov method: " + name);
}

struct KrylovResult {
  std::vector<double> x;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // relative to the right-hand side norm
};

namespace detail {

inline KrylovResult solve_cg(const CsrMatrix& A, const std::vector<double>& b, double tol, int maxit) {
  const std::size_t n = b.size();
  KrylovResult out;
  out.x.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  std::vector<double> r = b, p = b, Ap(n);
  double rs = dot(r, r);
  for (int k = 1; k <= maxit; ++k) {
    A.matvec(p.data(), Ap.data());
    const double pAp = dot(p, Ap);
    if (pAp <= 0.0) {
      out.iterations = k;
      out.residual = std::sqrt(rs) / bnorm;
      return out;  // not positive definite along p; report honestly
    }
    const double alpha = rs / pAp;
    axpy(alpha, p, out.x);
    axpy(-alpha, Ap, r);
    const double rs_new = dot(r, r);
    out.iterations = k;
    out.residual = std::sqrt(rs_new) / bnorm;
    if (out.residual <= tol) {
      out.converged = true;
      return out;
    }
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return out;
}

inline KrylovResult solve_minres(const CsrMatrix& A, const std::vector<double>& b, double tol, int maxit) {
  const std::size_t n = b.size();
  KrylovResult out;
  out.x.assign(n, 0.0);
  const double beta1 = norm2(b);
  if (beta1 == 0.0) {
    out.converged = true;
    return out;
  }

  std::vector<double> r1 = b, r2 = b, v(n), y = b;
  std::vector<double> w(n, 0.0), w1(n, 0.0), w2(n, 0.0);
  double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0;

  for (int k = 1; k <= maxit; ++k) {
    const double s = 1.0 / beta;
    for (std::size_t i = 0; i < n; ++i) v[i] = y[i] * s;
    A.matvec(v.data(), y.data());
    if (k >= 2) axpy(-beta / oldb, r1, y);
    const double alfa = dot(v, y);
    axpy(-alfa / beta, r2, y);
    r1 = r2;
    r2 = y;
    oldb = beta;
    beta = norm2(r2);

    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;

    const double gamma = std::max(std::sqrt(gbar * gbar + beta * beta), 1e-300);
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    w1 = w2;
    w2 = w;
    for (std::size_t i = 0; i < n; ++i) w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
    axpy(phi, w, out.x);

    out.iterations = k;
    out.residual = phibar / beta1;
    if (out.residual <= tol) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

inline KrylovResult solve_gmres(const CsrMatrix& A, const std::vector<double>& b, double tol, int maxit) {
  const std::size_t n = b.size();
  KrylovResult out;
  out.x.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }

  const int m = std::min<int>(maxit, static_cast<int>(n));
  std::vector<std::vector<double>> V;
  V.push_back(b);
  for (double& vi : V[0]) vi /= bnorm;
  std::vector<std::vector<double>> H;  // H[j] holds column j, length j+2
  std::vector<double> g{bnorm}, cs, sn;

  auto form_solution = [&](int cols) {
    std::vector<double> yk(static_cast<std::size_t>(cols));
    for (int i = cols - 1; i >= 0; --i) {
      double s = g[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < cols; ++j)
        s -= H[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] * yk[static_cast<std::size_t>(j)];
      yk[static_cast<std::size_t>(i)] = s / H[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    }
    for (int j = 0; j < cols; ++j) axpy(yk[static_cast<std::size_t>(j)], V[static_cast<std::size_t>(j)], out.x);
  };

  for (int j = 0; j < m; ++j) {
    std::vector<double> wv(n);
    A.matvec(V[static_cast<std::size_t>(j)].data(), wv.data());
    std::vector<double> col(static_cast<std::size_t>(j) + 2, 0.0);
    for (int i = 0; i <= j; ++i) {
      col[static_cast<std::size_t>(i)] = dot(V[static_cast<std::size_t>(i)], wv);
      axpy(-col[static_cast<std::size_t>(i)], V[static_cast<std::size_t>(i)], wv);
    }
    const double hnext = norm2(wv);
    col[static_cast<std::size_t>(j) + 1] = hnext;

    for (int i = 0; i < j; ++i) {
      const double t = cs[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i)] +
                       sn[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i) + 1];
      col[static_cast<std::size_t>(i) + 1] = -sn[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i)] +
                                             cs[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(i) + 1];
      col[static_cast<std::size_t>(i)] = t;
    }
    const double d = std::sqrt(col[static_cast<std::size_t>(j)] * col[static_cast<std::size_t>(j)] + hnext * hnext);
    if (d == 0.0) break;  // degenerate column; fall back to the columns so far
    cs.push_back(col[static_cast<std::size_t>(j)] / d);
    sn.push_back(hnext / d);
    col[static_cast<std::size_t>(j)] = d;
    col[static_cast<std::size_t>(j) + 1] = 0.0;
    H.push_back(col);
    g.push_back(-sn.back() * g[static_cast<std::size_t>(j)]);
    g[static_cast<std::size_t>(j)] *= cs.back();

    out.iterations = j + 1;
    out.residual = std::abs(g[static_cast<std::size_t>(j) + 1]) / bnorm;
    if (out.residual <= tol) {
      form_solution(j + 1);
      out.converged = true;
      return out;
    }
    if (hnext == 0.0) break;  // exact solution in the current Krylov space
    std::vector<double> vnext = wv;
    for (double& vi : vnext) vi /= hnext;
    V.push_back(std::move(vnext));
  }
  form_solution(out.iterations);
  std::vector<double> r = A.matvec(out.x);
  for (std::size_t i = 0; i < n; ++i) r[i] -= b[i];
  out.residual = norm2(r) / bnorm;
  out.converged = out.residual <= tol;
  return out;
}

}  // namespace detail

// Unpreconditioned Krylov solve from a zero initial guess; stops when the
// residual norm relative to ‖b‖ reaches tol. Exceeding maxit is reported
// through `converged`, not an exception.
inline KrylovResult solve_krylov(const CsrMatrix& A, const std::vector<double>& b, KrylovMethod method,
                                 double tol = 1e-10, int maxit = 10000) {
  if (A.n_rows() != A.n_cols()) throw InvalidArgumentError("solve_krylov: matrix must be square");
  if (static_cast<index_t>(b.size()) != A.n_rows())
    throw InvalidArgumentError("solve_krylov: right-hand side size mismatch");
  if (tol <= 0.0 || maxit < 1) throw InvalidArgumentError("solve_krylov: bad tolerance or iteration cap");
  switch (method) {
    case KrylovMethod::cg:
      return detail::solve_cg(A, b, tol, maxit);
    case KrylovMethod::minres:
      return detail::solve_minres(A, b, tol, maxit);
    case KrylovMethod::gmres:
      return detail::solve_gmres(A, b, tol, maxit);
  }
  throw InvalidArgumentError("solve_krylov: unknown method");
}

}  // namespace mixfem
