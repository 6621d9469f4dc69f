#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "mixfem/problems.hpp"

namespace {

std::vector<int> parse_resolutions(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    const std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--resolutions", "'" + tok + "' is not an integer");
    }
    if (used != tok.size() || n < 1)
      throw CLI::ValidationError("--resolutions", "'" + tok + "' is not a positive integer");
    out.push_back(n);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixed-dimensional finite element demo driver"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a convergence study for a demo problem");
  std::string problem;
  run->add_option("problem", problem, "problem to run")
      ->required()
      ->check(CLI::IsMember({"poisson-lm", "stokes-brinkman"}));

  int dim = 2;
  run->add_option("--dim", dim, "spatial dimension")->check(CLI::IsMember({2, 3}));
  std::string resolutions;
  run->add_option("--resolutions", resolutions, "comma-separated mesh resolutions");
  int degree = 1;
  run->add_option("--degree", degree, "polynomial degree")->check(CLI::PositiveNumber);
  mixfem::StudyOptions opt;
  run->add_option("--solver", opt.solver.method, "linear solver")
      ->check(CLI::IsMember({"direct", "cg", "minres", "gmres"}));
  run->add_option("--tol", opt.solver.tol, "iterative solver tolerance")->check(CLI::PositiveNumber);
  run->add_option("--maxit", opt.solver.maxit, "iterative solver iteration cap")->check(CLI::PositiveNumber);
  run->add_option("--quadrature-degree", opt.quadrature_degree, "assembly quadrature degree override");
  std::string format = "csv";
  run->add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--dump-matrix", opt.dump_matrix_path, "write the monolithic matrix (MatrixMarket)");
  run->add_option("--export-solution", opt.export_solution_path, "write the primary solution (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::vector<int> ns;
  try {
    if (resolutions.empty())
      ns = problem == "poisson-lm" ? std::vector<int>{4, 8, 16, 32} : std::vector<int>{8, 16, 32};
    else
      ns = parse_resolutions(resolutions);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  mixfem::StudyResult result;
  try {
    if (problem == "poisson-lm") {
      result = mixfem::run_poisson_lm(dim, ns, degree, opt);
    } else {
      if (dim != 2) {
        std::cerr << "error: stokes-brinkman is a 2d problem\n";
        return 2;
      }
      result = mixfem::run_stokes_brinkman(ns, degree, opt);
    }
  } catch (const mixfem::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mixfem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  if (format == "json")
    mixfem::write_study_json(result, std::cout);
  else
    mixfem::write_study_csv(result, std::cout);
  return 0;
}
