#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mixfem/assembly.hpp"
#include "mixfem/forms.hpp"
#include "mixfem/meshview.hpp"
#include "mixfem/norms.hpp"
#include "mixfem/solve.hpp"

namespace mixfem {

struct SolverOptions {
  std::string method = "direct";  // direct | cg | minres | gmres
  double tol = 1e-10;
  int maxit = 20000;
};

struct ColumnEntry {
  std::string variable;
  std::string norm;
  double error = 0.0;
  std::optional<double> rate;  // against the previous row, absent on the first
};

struct ConvergenceRow {
  int n = 0;
  double h = 0.0;
  std::vector<ColumnEntry> entries;
};

struct StudyOptions {
  int quadrature_degree = -1;  // assembly override, -1 keeps the estimate
  SolverOptions solver;
  std::string dump_matrix_path;      // monolithic matrix at the largest resolution
  std::string export_solution_path;  // primary variable at the largest resolution
};

struct StudyResult {
  std::vector<ConvergenceRow> rows;
  std::vector<double> constraint_violation;  // per row, interface constraint residual
  std::vector<double> divergence;            // per row, L2 norm of div u_h
};

namespace detail {

inline std::vector<double> solve_monolithic(const CsrMatrix& A, const std::vector<double>& b,
                                            const SolverOptions& opt, int n) {
  if (opt.method == "direct") return solve_direct(A, b);
  KrylovMethod method;
  if (opt.method == "cg")
    method = KrylovMethod::cg;
  else if (opt.method == "minres")
    method = KrylovMethod::minres;
  else if (opt.method == "gmres")
    method = KrylovMethod::gmres;
  else
    throw InvalidArgumentError("unknown solver '" + opt.method + "'");
  auto r = solve_krylov(A, b, method, opt.tol, opt.maxit);
  if (!r.converged)
    throw NumericalError("solver-divergence", opt.method + " did not converge within " +
                                                  std::to_string(opt.maxit) + " iterations at resolution n=" +
                                                  std::to_string(n));
  return std::move(r.x);
}

inline void append_rates(std::vector<ConvergenceRow>& rows) {
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const double scale = std::log(static_cast<double>(rows[r].n) / static_cast<double>(rows[r - 1].n));
    for (auto& e : rows[r].entries) {
      for (const auto& p : rows[r - 1].entries) {
        if (p.variable != e.variable || p.norm != e.norm) continue;
        if (p.error > 0.0 && e.error > 0.0) e.rate = std::log(p.error / e.error) / scale;
        break;
      }
    }
  }
}

inline std::vector<int> sorted_resolutions(std::vector<int> resolutions) {
  if (resolutions.empty()) throw InvalidArgumentError("at least one resolution is required");
  for (int n : resolutions)
    if (n < 1) throw InvalidArgumentError("resolutions must be positive");
  std::sort(resolutions.begin(), resolutions.end());
  resolutions.erase(std::unique(resolutions.begin(), resolutions.end()), resolutions.end());
  return resolutions;
}

inline void maybe_write_outputs(const StudyOptions& opt, const CsrMatrix& A, const Function& primary) {
  if (!opt.dump_matrix_path.empty()) write_matrix_market(A, opt.dump_matrix_path);
  if (!opt.export_solution_path.empty()) {
    std::ofstream os(opt.export_solution_path);
    if (!os) throw IoError("cannot open '" + opt.export_solution_path + "' for writing");
    export_function_csv(primary, os);
  }
}

}  // namespace detail

// Poisson problem on the unit square/cube with the constraint u = 0.25 on the
// x = 0.5 interface plane enforced by a Lagrange multiplier living on a
// submesh of the interface facets. Exact solution u = x(1-x), multiplier 0.
inline StudyResult run_poisson_lm(int dim, const std::vector<int>& resolutions, int degree = 1,
                                  const StudyOptions& opt = {}) {
  if (dim != 2 && dim != 3) throw InvalidArgumentError("run_poisson_lm: dim must be 2 or 3");
  if (degree < 1) throw InvalidArgumentError("run_poisson_lm: degree must be >= 1");
  const auto ns = detail::sorted_resolutions(resolutions);

  StudyResult out;
  for (std::size_t ri = 0; ri < ns.size(); ++ri) {
    const int n = ns[ri];
    MeshPtr parent = dim == 2 ? unit_square_mesh(n) : unit_cube_mesh(n);
    auto marker = mark_entities(parent, dim - 1,
                                [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < 1e-12; });
    MeshPtr gamma = create_submesh(marker, 1);

    auto V = build_function_space(parent, "lagrange", degree);
    auto Q = build_function_space(gamma, "lagrange", degree);
    auto W = make_mixed_space({V, Q});
    auto trial = mixed_arguments(W, trial_argument);
    auto test = mixed_arguments(W, test_argument);

    Form a = inner(grad(trial[0]), grad(test[0])) * dx(parent) + (trial[1] * test[0]) * dx(gamma) +
             (test[1] * trial[0]) * dx(gamma);
    auto f = analytic_coefficient([](const double*, double* o) { o[0] = 2.0; }, 1, 0);
    Form L = (f * test[0]) * dx(parent) + (constant(0.25) * test[1]) * dx(gamma);
    std::vector<DirichletBC> bcs = {DirichletBC::constant(V, 0.0, [](const std::array<double, 3>& x) {
      return x[0] < 1e-12 || x[0] > 1.0 - 1e-12;
    })};

    auto sys = assemble_system(a, L, bcs, opt.quadrature_degree);
    const CsrMatrix A = convert_to_monolithic(sys.A);
    const std::vector<double> x = detail::solve_monolithic(A, sys.b.flatten(), opt.solver, n);

    Function uh(V);
    std::copy(x.begin(), x.begin() + V->dim(), uh.coefficients().begin());

    auto exact = [](const double* p, double* o) { o[0] = p[0] * (1.0 - p[0]); };
    auto exact_grad = [dim](const double* p, double* o) {
      o[0] = 1.0 - 2.0 * p[0];
      for (int d = 1; d < dim; ++d) o[d] = 0.0;
    };
    const ErrorNorms e = error_norms(uh, exact, exact_grad, 2 * degree + 2);

    ConvergenceRow row;
    row.n = n;
    row.h = 1.0 / static_cast<double>(n);
    row.entries = {{"u", "l2", e.l2, {}}, {"u", "h1semi", e.h1_semi, {}}, {"u", "h1", e.h1, {}}};
    out.rows.push_back(std::move(row));

    double violation = 0.0;
    const auto& dm = V->dofmap();
    for (index_t d = 0; d < V->dim(); ++d) {
      const auto c = dm.dof_coords(d);
      if (std::abs(c[0] - 0.5) < 1e-12)
        violation = std::max(violation, std::abs(uh.coefficients()[static_cast<std::size_t>(d)] - 0.25));
    }
    out.constraint_violation.push_back(violation);

    if (ri + 1 == ns.size()) detail::maybe_write_outputs(opt, A, uh);
  }
  detail::append_rates(out.rows);
  return out;
}

// Stokes-Brinkman flow on the unit square: -lap(u) + u - grad(p) = f,
// div(u) = 0, inflow data on x = 0 enforced weakly by a vector multiplier on
// an interface submesh, natural outflow data on x = 1, and exact natural
// conditions on y = 0 and y = 1. Taylor-Hood style spaces: vector P_{k+1}
// velocity, P_k pressure, vector P_k multiplier; `degree` is k.
inline StudyResult run_stokes_brinkman(const std::vector<int>& resolutions, int degree = 1,
                                       const StudyOptions& opt = {}) {
  if (degree < 1 || degree > 2)
    throw InvalidArgumentError("run_stokes_brinkman: degree must be 1 or 2");
  const auto ns = detail::sorted_resolutions(resolutions);
  const double pi = std::acos(-1.0);

  auto u_exact = [pi](const double* x, double* o) {
    o[0] = std::cos(pi * x[1]) * std::sin(pi * x[0]);
    o[1] = -std::cos(pi * x[0]) * std::sin(pi * x[1]);
  };
  auto u_grad_exact = [pi](const double* x, double* o) {
    o[0] = pi * std::cos(pi * x[0]) * std::cos(pi * x[1]);
    o[1] = -pi * std::sin(pi * x[0]) * std::sin(pi * x[1]);
    o[2] = pi * std::sin(pi * x[0]) * std::sin(pi * x[1]);
    o[3] = -pi * std::cos(pi * x[0]) * std::cos(pi * x[1]);
  };
  auto p_exact = [pi](const double* x, double* o) { o[0] = pi * std::cos(pi * x[0]) * std::cos(pi * x[1]); };
  auto p_grad_exact = [pi](const double* x, double* o) {
    o[0] = -pi * pi * std::sin(pi * x[0]) * std::cos(pi * x[1]);
    o[1] = -pi * pi * std::cos(pi * x[0]) * std::sin(pi * x[1]);
  };

  StudyResult out;
  for (std::size_t ri = 0; ri < ns.size(); ++ri) {
    const int n = ns[ri];
    MeshPtr mesh = unit_square_mesh(n);
    auto inflow = mark_entities(mesh, 1, [](const std::array<double, 3>& x) { return x[0] < 1e-12; });
    auto outflow = mark_entities(mesh, 1, [](const std::array<double, 3>& x) { return x[0] > 1.0 - 1e-12; });
    MeshPtr gamma = create_submesh(inflow, 1);

    auto V = build_function_space(mesh, "lagrange", degree + 1, 2);
    auto P = build_function_space(mesh, "lagrange", degree);
    auto M = build_function_space(gamma, "lagrange", degree, 2);
    auto W = make_mixed_space({V, P, M});
    auto trial = mixed_arguments(W, trial_argument);
    auto test = mixed_arguments(W, test_argument);
    const Expr &u = trial[0], &p = trial[1], &lam = trial[2];
    const Expr &v = test[0], &q = test[1], &eta = test[2];

    Form a = inner(grad(u), grad(v)) * dx(mesh) + inner(u, v) * dx(mesh) + (p * div(v)) * dx(mesh) +
             (q * div(u)) * dx(mesh) + inner(lam, v) * dx(gamma) + inner(eta, u) * dx(gamma);

    auto f = analytic_coefficient(
        [pi](const double* x, double* o) {
          o[0] = (3.0 * pi * pi + 1.0) * std::sin(pi * x[0]) * std::cos(pi * x[1]);
          o[1] = -(pi * pi + 1.0) * std::cos(pi * x[0]) * std::sin(pi * x[1]);
        },
        2, degree + 4);
    auto h = analytic_coefficient(
        [pi](const double* x, double* o) {
          o[0] = -2.0 * pi * std::cos(pi * x[1]);
          o[1] = 0.0;
        },
        2, degree + 4);
    auto g = analytic_coefficient(
        [pi](const double* x, double* o) {
          o[0] = 0.0;
          o[1] = -std::sin(pi * x[1]);
        },
        2, degree + 3);
    Form L = inner(f, v) * dx(mesh) + inner(h, v) * ds(mesh, outflow, 1) + inner(eta, g) * dx(gamma);

    auto sys = assemble_system(a, L, {}, opt.quadrature_degree);
    const CsrMatrix A = convert_to_monolithic(sys.A);
    const std::vector<double> x = detail::solve_monolithic(A, sys.b.flatten(), opt.solver, n);

    Function uh(V);
    std::copy(x.begin(), x.begin() + V->dim(), uh.coefficients().begin());
    Function ph(P);
    std::copy(x.begin() + V->dim(), x.begin() + V->dim() + P->dim(), ph.coefficients().begin());

    const ErrorNorms eu = error_norms(uh, u_exact, u_grad_exact, 2 * (degree + 1) + 2);
    const ErrorNorms ep = error_norms(ph, p_exact, p_grad_exact, 2 * degree + 2);
    const double divu = divergence_l2(uh, 2 * (degree + 1) + 2);

    ConvergenceRow row;
    row.n = n;
    row.h = 1.0 / static_cast<double>(n);
    row.entries = {{"u", "l2", eu.l2, {}},
                   {"u", "h1semi", eu.h1_semi, {}},
                   {"u", "h1", eu.h1, {}},
                   {"p", "l2", ep.l2, {}},
                   {"p", "h1semi", ep.h1_semi, {}},
                   {"p", "h1", ep.h1, {}}};
    out.rows.push_back(std::move(row));
    out.divergence.push_back(divu);

    if (ri + 1 == ns.size()) detail::maybe_write_outputs(opt, A, uh);
  }
  detail::append_rates(out.rows);
  return out;
}

// Least-squares slope of log(error) against log(h) over all rows carrying the
// requested entry. Positive values mean the error shrinks like h^rate.
inline double least_squares_rate(const StudyResult& res, const std::string& variable, const std::string& norm) {
  std::vector<double> lh, le;
  for (const auto& row : res.rows) {
    for (const auto& e : row.entries) {
      if (e.variable != variable || e.norm != norm || !(e.error > 0.0)) continue;
      lh.push_back(std::log(row.h));
      le.push_back(std::log(e.error));
    }
  }
  if (lh.size() < 2) throw InvalidArgumentError("least_squares_rate: need at least two usable rows");
  const double k = static_cast<double>(lh.size());
  double mh = 0.0, me = 0.0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    mh += lh[i];
    me += le[i];
  }
  mh /= k;
  me /= k;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    num += (lh[i] - mh) * (le[i] - me);
    den += (lh[i] - mh) * (lh[i] - mh);
  }
  return num / den;
}

// Flat table with columns n,h,var,norm,error,rate. The rate cell is empty on
// rows without one.
inline void write_study_csv(const StudyResult& res, std::ostream& os) {
  os << "n,h,var,norm,error,rate\n";
  os.precision(17);
  for (const auto& row : res.rows)
    for (const auto& e : row.entries) {
      os << row.n << ',' << row.h << ',' << e.variable << ',' << e.norm << ',' << e.error << ',';
      if (e.rate) os << *e.rate;
      os << '\n';
    }
}

// Same table as a JSON array of objects; rate is null where absent.
inline void write_study_json(const StudyResult& res, std::ostream& os) {
  os.precision(17);
  os << "[";
  bool first = true;
  for (const auto& row : res.rows)
    for (const auto& e : row.entries) {
      if (!first) os << ",";
      first = false;
      os << "\n  {\"n\": " << row.n << ", \"h\": " << row.h << ", \"var\": \"" << e.variable
         << "\", \"norm\": \"" << e.norm << "\", \"error\": " << e.error << ", \"rate\": ";
      if (e.rate)
        os << *e.rate;
      else
        os << "null";
      os << "}";
    }
  os << "\n]\n";
}

}  // namespace mixfem
