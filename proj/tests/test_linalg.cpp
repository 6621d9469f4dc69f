#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "mixfem/linalg.hpp"
#include "mixfem/meshview.hpp"
#include "mixfem/solve.hpp"
#include "mixfem/space.hpp"

using namespace mixfem;

TEST_CASE("csr construction sums duplicates and sorts columns") {
  auto A = csr_from_triplets(3, 4, {{2, 1, 5.0}, {0, 3, 1.0}, {0, 0, 2.0}, {2, 1, -1.5}, {1, 2, 4.0}});
  CHECK(A.n_rows() == 3);
  CHECK(A.n_cols() == 4);
  CHECK(A.nnz() == 4);
  CHECK(A.row_offsets() == std::vector<index_t>{0, 2, 3, 4});
  CHECK(A.col_indices() == std::vector<index_t>{0, 3, 2, 1});
  CHECK(A.entry(0, 0) == 2.0);
  CHECK(A.entry(2, 1) == 3.5);
  CHECK(A.entry(1, 0) == 0.0);
  for (std::size_t r = 0; r < 3; ++r) {
    auto lo = A.row_offsets()[r], hi = A.row_offsets()[r + 1];
    for (index_t k = lo; k + 1 < hi; ++k) CHECK(A.col_indices()[k] < A.col_indices()[k + 1]);
  }
  CHECK_THROWS_AS(csr_from_triplets(2, 2, {{2, 0, 1.0}}), InvalidArgumentError);
}

TEST_CASE("matvec and transpose agree with a dense oracle") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const index_t n = 7, m = 5;
  std::vector<std::vector<double>> D(n, std::vector<double>(m, 0.0));
  std::vector<Triplet> trips;
  for (int k = 0; k < 18; ++k) {
    index_t i = static_cast<index_t>(rng() % n), j = static_cast<index_t>(rng() % m);
    double v = uni(rng);
    D[i][j] += v;
    trips.push_back({i, j, v});
  }
  auto A = csr_from_triplets(n, m, trips);
  std::vector<double> x(m);
  for (auto& xi : x) xi = uni(rng);
  auto y = A.matvec(x);
  for (index_t i = 0; i < n; ++i) {
    double want = 0.0;
    for (index_t j = 0; j < m; ++j) want += D[i][j] * x[j];
    CHECK(std::abs(y[i] - want) < 1e-14);
  }
  auto At = A.transpose();
  REQUIRE(At.n_rows() == m);
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j < m; ++j) CHECK(At.entry(j, i) == A.entry(i, j));
}

TEST_CASE("block nest assembles into a monolithic matrix") {
  SECTION("single block is copied verbatim") {
    auto A = csr_from_triplets(3, 3, {{0, 0, 1.0}, {1, 2, 2.0}, {2, 1, -1.0}});
    BlockNestMatrix nest({3}, {3});
    nest.set_block(0, 0, A);
    auto mono = convert_to_monolithic(nest);
    CHECK(mono.row_offsets() == A.row_offsets());
    CHECK(mono.col_indices() == A.col_indices());
    CHECK(mono.values() == A.values());
  }

  SECTION("absent off-diagonal blocks give a block-diagonal matrix") {
    BlockNestMatrix nest({2, 2}, {2, 2});
    nest.set_block(0, 0, csr_from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, 2.0}}));
    nest.set_block(1, 1, csr_from_triplets(2, 2, {{0, 1, 3.0}}));
    auto mono = convert_to_monolithic(nest);
    CHECK(mono.n_rows() == 4);
    CHECK(mono.nnz() == 3);
    CHECK(mono.entry(0, 0) == 1.0);
    CHECK(mono.entry(1, 1) == 2.0);
    CHECK(mono.entry(2, 3) == 3.0);
  }

  SECTION("placement uses block offsets") {
    BlockNestMatrix nest({2, 3}, {2, 3});
    nest.set_block(1, 0, csr_from_triplets(3, 2, {{2, 1, 7.0}}));
    nest.set_block(0, 1, csr_from_triplets(2, 3, {{0, 2, -4.0}}));
    auto mono = convert_to_monolithic(nest);
    CHECK(mono.entry(4, 1) == 7.0);
    CHECK(mono.entry(0, 4) == -4.0);
    CHECK_THROWS_AS(nest.set_block(0, 0, csr_from_triplets(3, 2, {})), InvalidArgumentError);
  }

  SECTION("interface-problem dimensions from the function spaces") {
    auto mesh = unit_square_mesh(2);
    auto marker = mark_entities(mesh, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < 1e-12; });
    auto gamma = create_submesh(marker, 1);
    auto V = build_function_space(mesh, "lagrange", 1);
    auto Q = build_function_space(gamma, "lagrange", 1);
    BlockNestMatrix nest({V->dim(), Q->dim()}, {V->dim(), Q->dim()});
    std::vector<Triplet> diag;
    for (index_t i = 0; i < V->dim(); ++i) diag.push_back({i, i, 1.0});
    nest.set_block(0, 0, csr_from_triplets(V->dim(), V->dim(), diag));
    auto mono = convert_to_monolithic(nest);
    CHECK(mono.n_rows() == 12);
    CHECK(mono.n_cols() == 12);
    for (index_t i = 9; i < 12; ++i)
      for (index_t j = 9; j < 12; ++j) CHECK(mono.entry(i, j) == 0.0);
  }

  SECTION("conversion moves values without arithmetic") {
    BlockNestMatrix nest({2, 2}, {2, 2});
    nest.set_block(0, 0, csr_from_triplets(2, 2, {{0, 0, 0.1}, {1, 0, 0.7}}));
    nest.set_block(0, 1, csr_from_triplets(2, 2, {{1, 1, -0.3}}));
    nest.set_block(1, 0, csr_from_triplets(2, 2, {{0, 1, 1e-17}}));
    auto mono = convert_to_monolithic(nest);
    std::vector<double> from_blocks, from_mono = mono.values();
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        if (nest.block(i, j))
          for (double v : nest.block(i, j)->values()) from_blocks.push_back(v);
    std::sort(from_blocks.begin(), from_blocks.end());
    std::sort(from_mono.begin(), from_mono.end());
    CHECK(from_blocks == from_mono);
  }
}

TEST_CASE("block vectors flatten and unflatten") {
  BlockVector v({3, 2});
  v.segment(0) = {1.0, 2.0, 3.0};
  v.segment(1) = {4.0, 5.0};
  CHECK(v.flatten() == std::vector<double>{1, 2, 3, 4, 5});
  BlockVector w({3, 2});
  w.unflatten({5, 4, 3, 2, 1});
  CHECK(w.segment(1) == std::vector<double>{2, 1});
  CHECK_THROWS_AS(w.unflatten({1.0, 2.0}), InvalidArgumentError);
}

TEST_CASE("direct solver") {
  SECTION("identity and a 2x2 system") {
    auto I2 = csr_from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, 1.0}});
    auto x = solve_direct(I2, {3.0, -4.0});
    CHECK(x == std::vector<double>{3.0, -4.0});

    auto A = csr_from_triplets(2, 2, {{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 3.0}});
    auto y = solve_direct(A, {3.0, 4.0});
    CHECK(std::abs(y[0] - 1.0) < 1e-14);
    CHECK(std::abs(y[1] - 1.0) < 1e-14);
  }

  SECTION("saddle point with zero diagonal block") {
    // [I B^T; B 0] with B = [1 1]
    auto K = csr_from_triplets(
        3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}, {2, 1, 1.0}});
    std::vector<double> b{1.0, 2.0, 1.0};
    auto x = solve_direct(K, b);
    // eliminate: x0 + x2 = 1, x1 + x2 = 2, x0 + x1 = 1 -> x2 = 1, x0 = 0, x1 = 1
    CHECK(std::abs(x[0] - 0.0) < 1e-13);
    CHECK(std::abs(x[1] - 1.0) < 1e-13);
    CHECK(std::abs(x[2] - 1.0) < 1e-13);
  }

  SECTION("singular matrix is reported") {
    auto S = csr_from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}});
    CHECK_THROWS_AS(solve_direct(S, {1.0, 1.0}), SingularMatrixError);
    auto R = csr_from_triplets(2, 3, {{0, 0, 1.0}});
    CHECK_THROWS_AS(solve_direct(R, {1.0, 1.0}), InvalidArgumentError);
  }
}

namespace {

CsrMatrix laplacian_1d(index_t n) {
  std::vector<Triplet> t;
  for (index_t i = 0; i < n; ++i) {
    t.push_back({i, i, 2.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  return csr_from_triplets(n, n, t);
}

}  // namespace

TEST_CASE("krylov solvers") {
  SECTION("cg finite termination on a diagonal SPD matrix") {
    auto D = csr_from_triplets(4, 4, {{0, 0, 1.0}, {1, 1, 2.0}, {2, 2, 3.0}, {3, 3, 4.0}});
    auto res = solve_krylov(D, {1.0, 1.0, 1.0, 1.0}, KrylovMethod::cg, 1e-12, 10);
    CHECK(res.converged);
    CHECK(res.iterations <= 4);
    CHECK(std::abs(res.x[2] - 1.0 / 3.0) < 1e-12);
  }

  SECTION("minres handles a symmetric indefinite matrix") {
    auto A = csr_from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, -1.0}});
    auto res = solve_krylov(A, {2.0, 3.0}, KrylovMethod::minres, 1e-12, 50);
    CHECK(res.converged);
    CHECK(std::abs(res.x[0] - 2.0) < 1e-10);
    CHECK(std::abs(res.x[1] + 3.0) < 1e-10);

    auto saddle = csr_from_triplets(
        3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}, {2, 1, 1.0}});
    auto sres = solve_krylov(saddle, {1.0, 2.0, 1.0}, KrylovMethod::minres, 1e-12, 100);
    CHECK(sres.converged);
    CHECK(std::abs(sres.x[2] - 1.0) < 1e-9);
  }

  SECTION("gmres handles nonsymmetric systems") {
    auto A = csr_from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, -1.0}});
    auto res = solve_krylov(A, {1.0, 1.0}, KrylovMethod::gmres, 1e-12, 10);
    CHECK(res.converged);
    CHECK(std::abs(res.x[0] + 1.0) < 1e-12);
    CHECK(std::abs(res.x[1] - 1.0) < 1e-12);
  }

  SECTION("iteration cap reports non-convergence without throwing") {
    auto A = laplacian_1d(50);
    std::vector<double> b(50, 1.0);
    auto res = solve_krylov(A, b, KrylovMethod::cg, 1e-14, 3);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 3);
    CHECK(res.residual > 0.0);
  }

  SECTION("direct and krylov agree on an SPD system") {
    auto A = laplacian_1d(40);
    std::vector<double> b(40);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::sin(0.3 * static_cast<double>(i + 1));
    auto xd = solve_direct(A, b);
    for (auto method : {KrylovMethod::cg, KrylovMethod::minres, KrylovMethod::gmres}) {
      auto res = solve_krylov(A, b, method, 1e-12, 500);
      CHECK(res.converged);
      double diff = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < b.size(); ++i) {
        diff += (res.x[i] - xd[i]) * (res.x[i] - xd[i]);
        norm += xd[i] * xd[i];
      }
      CHECK(std::sqrt(diff / norm) < 1e-8);
    }
  }

  SECTION("method names parse") {
    CHECK(krylov_method_from_string("cg") == KrylovMethod::cg);
    CHECK(krylov_method_from_string("minres") == KrylovMethod::minres);
    CHECK(krylov_method_from_string("gmres") == KrylovMethod::gmres);
    CHECK_THROWS_AS(krylov_method_from_string("bicg"), InvalidArgumentError);
  }
}

TEST_CASE("matrix market round trip") {
  auto A = csr_from_triplets(3, 2, {{0, 0, 1.25}, {2, 1, -3.5e-7}, {1, 0, 2.0}});
  std::ostringstream os;
  write_matrix_market(A, os);
  std::istringstream is(os.str());
  auto B = read_matrix_market(is);
  CHECK(B.n_rows() == A.n_rows());
  CHECK(B.n_cols() == A.n_cols());
  CHECK(B.row_offsets() == A.row_offsets());
  CHECK(B.col_indices() == A.col_indices());
  CHECK(B.values() == A.values());

  std::istringstream first(os.str());
  std::string header;
  std::getline(first, header);
  CHECK(header == "%%MatrixMarket matrix coordinate real general");

  std::istringstream bad("%%MatrixMarket matrix array real general\n2 2\n");
  CHECK_THROWS_AS(read_matrix_market(bad), IoError);
  std::istringstream trunc("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 5.0\n");
  CHECK_THROWS_AS(read_matrix_market(trunc), IoError);
}

TEST_CASE("vector text round trip") {
  std::vector<double> x{1.0, -2.5, 3.25e-11};
  std::ostringstream os;
  write_vector_text(x, os);
  std::istringstream is(os.str());
  CHECK(read_vector_text(is) == x);
}
