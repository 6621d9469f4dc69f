#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <set>

#include "mixfem/mesh.hpp"
#include "mixfem/meshview.hpp"

using namespace mixfem;

namespace {
constexpr double eps = 1e-10;

bool near(double a, double b, double tol = 1e-14) { return std::abs(a - b) <= tol; }

double total_volume(const MeshPtr& m) {
  double v = 0.0;
  for (index_t c = 0; c < m->num_cells(); ++c) v += m->cell_volume(c);
  return v;
}
}  // namespace

TEST_CASE("unit interval mesh counts and volumes") {
  auto m = unit_interval_mesh(4);
  CHECK(m->num_vertices() == 5);
  CHECK(m->num_cells() == 4);
  CHECK(near(total_volume(m), 1.0));
  for (index_t c = 0; c < 4; ++c) CHECK(near(m->cell_volume(c), 0.25));
}

TEST_CASE("unit square mesh entity counts") {
  auto m = unit_square_mesh(2);
  CHECK(m->num_vertices() == 9);
  CHECK(m->num_cells() == 8);
  CHECK(m->num_entities(1) == 16);
  CHECK(m->exterior_facets().size() == 8);
  CHECK(near(total_volume(m), 1.0));

  auto m5 = unit_square_mesh(5);
  CHECK(m5->num_vertices() == 36);
  CHECK(m5->num_cells() == 50);
  CHECK(m5->num_entities(1) == 3 * 25 + 2 * 5);
  CHECK(m5->exterior_facets().size() == 20);
  CHECK(near(total_volume(m5), 1.0));
}

TEST_CASE("unit cube mesh entity counts") {
  auto m1 = unit_cube_mesh(1);
  CHECK(m1->num_vertices() == 8);
  CHECK(m1->num_cells() == 6);
  // Euler characteristic of a triangulated ball: V - E + F - T = 1
  CHECK(m1->num_entities(1) == 19);
  CHECK(m1->num_entities(2) == 18);
  CHECK(m1->exterior_facets().size() == 12);
  CHECK(near(total_volume(m1), 1.0));

  auto m2 = unit_cube_mesh(2);
  CHECK(m2->num_vertices() == 27);
  CHECK(m2->num_cells() == 48);
  CHECK(m2->exterior_facets().size() == 12 * 4);
  CHECK(near(total_volume(m2), 1.0));
  const index_t V = m2->num_vertices(), E = m2->num_entities(1), F = m2->num_entities(2), T = m2->num_cells();
  CHECK(V - E + F - T == 1);
}

TEST_CASE("facet enumeration is lexicographic over sorted vertex tuples") {
  auto m = unit_square_mesh(2);
  const index_t nf = m->num_entities(1);
  for (index_t f = 0; f + 1 < nf; ++f) {
    auto a = m->entity_vertices(1, f);
    auto b = m->entity_vertices(1, f + 1);
    CHECK(std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()));
  }
  // the two x=0.5 interface facets for n=2 (pinned ids used elsewhere)
  auto f4 = m->entity_vertices(1, 4);
  CHECK((f4[0] == 1 && f4[1] == 4));
  auto f11 = m->entity_vertices(1, 11);
  CHECK((f11[0] == 4 && f11[1] == 7));
}

TEST_CASE("cell-facet connectivity follows the opposite-vertex convention") {
  for (auto m : {unit_square_mesh(3), unit_cube_mesh(2)}) {
    const int tdim = m->tdim();
    const auto& c2f = m->connectivity(tdim, tdim - 1);
    for (index_t c = 0; c < m->num_cells(); ++c) {
      auto cv = m->cell_vertices(c);
      auto facets = c2f(c);
      REQUIRE(facets.size() == static_cast<std::size_t>(tdim + 1));
      for (int lf = 0; lf <= tdim; ++lf) {
        auto fv = m->entity_vertices(tdim - 1, facets[lf]);
        std::set<index_t> expect(cv.begin(), cv.end());
        expect.erase(cv[lf]);
        std::set<index_t> got(fv.begin(), fv.end());
        CHECK(expect == got);
      }
    }
  }
}

TEST_CASE("facet-cell adjacency is the transpose and has arity 1 or 2") {
  auto m = unit_square_mesh(3);
  const auto& f2c = m->connectivity(1, 2);
  const auto& c2f = m->connectivity(2, 1);
  auto boundary = m->exterior_facets();
  for (index_t f = 0; f < m->num_entities(1); ++f) {
    auto cells = f2c(f);
    const bool ext = std::binary_search(boundary.begin(), boundary.end(), f);
    CHECK(cells.size() == (ext ? 1u : 2u));
    for (index_t c : cells) {
      auto fs = c2f(c);
      CHECK(std::find(fs.begin(), fs.end(), f) != fs.end());
    }
  }
}

TEST_CASE("tetrahedron edge connectivity is lexicographic pairs") {
  auto m = unit_cube_mesh(1);
  const auto& c2e = m->connectivity(3, 1);
  const auto locals = local_sub_entities(3, 1);
  REQUIRE(locals.size() == 6);
  for (index_t c = 0; c < m->num_cells(); ++c) {
    auto cv = m->cell_vertices(c);
    auto edges = c2e(c);
    for (std::size_t e = 0; e < 6; ++e) {
      auto ev = m->entity_vertices(1, edges[e]);
      CHECK(ev[0] == cv[locals[e][0]]);
      CHECK(ev[1] == cv[locals[e][1]]);
    }
  }
}

TEST_CASE("entity midpoints") {
  auto m = unit_square_mesh(2);
  auto mid = m->entity_midpoint(1, 4);  // facet (1,4): (0.5,0)-(0.5,0.5)
  CHECK(near(mid[0], 0.5));
  CHECK(near(mid[1], 0.25));
  auto cm = m->entity_midpoint(2, 0);
  CHECK(near(cm[0], (0.0 + 0.5 + 0.5) / 3.0));
}

TEST_CASE("mark_entities tags by midpoint predicate") {
  auto m = unit_square_mesh(4);
  auto left = mark_entities(m, 1, [](const std::array<double, 3>& x) { return x[0] < eps; });
  CHECK(left.where(1).size() == 4);
  auto interface = mark_entities(m, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < eps; });
  CHECK(interface.where(1).size() == 4);
  auto cells_left = mark_entities(m, 2, [](const std::array<double, 3>& x) { return x[0] < 0.5; });
  CHECK(cells_left.where(1).size() == 16);
}

TEST_CASE("mesh validation rejects bad input") {
  CHECK_THROWS_AS(Mesh(2, 2, {0, 0, 1, 0, 0, 1}, {0, 1, 3}), InvalidArgumentError);
  CHECK_THROWS_AS(Mesh(2, 2, {0, 0, 1, 0, 0, 1}, {0, 1, 1}), InvalidArgumentError);
  // collinear triangle
  CHECK_THROWS_AS(Mesh(2, 2, {0, 0, 1, 0, 2, 0}, {0, 1, 2}), InvalidArgumentError);
  CHECK_THROWS_AS(unit_square_mesh(0), InvalidArgumentError);
}

TEST_CASE("mesh ids are unique and increasing") {
  auto a = unit_interval_mesh(2);
  auto b = unit_interval_mesh(2);
  CHECK(a->id() < b->id());
}

// --- mesh views -------------------------------------------------------------

TEST_CASE("codim-1 submesh of the n=2 square reproduces the reference mapping") {
  auto parent = unit_square_mesh(2);
  auto marker = mark_entities(parent, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < eps; });
  auto sub = create_submesh(marker, 1);

  CHECK(sub->tdim() == 1);
  CHECK(sub->gdim() == 2);
  CHECK(sub->num_vertices() == 3);
  CHECK(sub->num_cells() == 2);

  auto link = sub->find_view(parent->id());
  REQUIRE(link);
  CHECK(link->codim() == 1);
  CHECK(link->vertex_map() == std::vector<index_t>{1, 4, 7});
  CHECK(link->cell_map() == std::vector<index_t>{4, 11});

  // coordinate identity, independent of any numbering convention
  for (index_t v = 0; v < sub->num_vertices(); ++v) {
    auto xs = sub->vertex_coords(v);
    auto xp = parent->vertex_coords(link->vertex_map()[v]);
    CHECK(xs[0] == xp[0]);
    CHECK(xs[1] == xp[1]);
  }
  for (index_t c = 0; c < sub->num_cells(); ++c) {
    auto cv = sub->cell_vertices(c);
    auto fv = parent->entity_vertices(1, link->cell_map()[c]);
    for (int k = 0; k < 2; ++k) CHECK(link->vertex_map()[cv[k]] == fv[k]);
  }
}

TEST_CASE("codim-0 submesh: left half of the n=2 square") {
  auto parent = unit_square_mesh(2);
  auto marker = mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[0] < 0.5; });
  auto sub = create_submesh(marker, 1);
  CHECK(sub->num_cells() == 4);
  CHECK(sub->num_vertices() == 6);

  auto link = sub->find_view(parent->id());
  REQUIRE(link);
  CHECK(link->codim() == 0);
  for (index_t c = 0; c < sub->num_cells(); ++c) {
    auto cv = sub->cell_vertices(c);
    auto pv = parent->cell_vertices(link->cell_map()[c]);
    for (int k = 0; k < 3; ++k) {
      auto xs = sub->vertex_coords(cv[k]);
      auto xp = parent->vertex_coords(pv[k]);
      CHECK(xs[0] == xp[0]);  // bitwise
      CHECK(xs[1] == xp[1]);
    }
  }
}

TEST_CASE("all-cells submesh is isomorphic to the parent") {
  auto parent = unit_square_mesh(3);
  auto marker = MeshFunction(parent, 2, 1);
  auto sub = create_submesh(marker, 1);
  CHECK(sub->num_cells() == parent->num_cells());
  CHECK(sub->num_vertices() == parent->num_vertices());
  auto link = sub->find_view(parent->id());
  for (index_t c = 0; c < sub->num_cells(); ++c) CHECK(link->cell_map()[c] == c);
}

TEST_CASE("create_submesh error cases") {
  auto parent = unit_square_mesh(2);
  MeshFunction untagged(parent, 2, 0);
  try {
    create_submesh(untagged, 1);
    FAIL("expected empty-selection");
  } catch (const ViewError& e) {
    CHECK(e.kind() == "empty-selection");
  }
  MeshFunction verts(parent, 0, 1);
  try {
    create_submesh(verts, 1);
    FAIL("expected unsupported-codimension");
  } catch (const ViewError& e) {
    CHECK(e.kind() == "unsupported-codimension");
  }
  // one generation only
  auto cells = MeshFunction(parent, 2, 1);
  auto sub = create_submesh(cells, 1);
  MeshFunction again(sub, 2, 1);
  CHECK_THROWS_AS(create_submesh(again, 1), NotSupportedError);
}

TEST_CASE("same-dim sibling mapping composes to the identity") {
  auto parent = unit_square_mesh(4);
  auto lower = mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[1] < 0.5; });
  auto a = create_submesh(lower, 1);
  auto b = create_submesh(lower, 1);
  auto ab = build_mapping(a, b);
  auto ba = build_mapping(b, a);
  REQUIRE(ab->cell_map().size() == static_cast<std::size_t>(a->num_cells()));
  for (index_t c = 0; c < a->num_cells(); ++c) {
    CHECK(ab->cell_map()[c] == c);  // identical selections
    CHECK(ba->cell_map()[ab->cell_map()[c]] == c);
  }
  // cached on second request
  CHECK(build_mapping(a, b).get() == ab.get());
}

TEST_CASE("partially overlapping same-dim siblings use the absent sentinel") {
  auto parent = unit_square_mesh(4);
  auto left = create_submesh(mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[0] < 0.5; }), 1);
  auto bottom = create_submesh(mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[1] < 0.5; }), 1);
  auto m = build_mapping(left, bottom);
  int mapped = 0, missing = 0;
  for (index_t c = 0; c < left->num_cells(); ++c) {
    if (m->cell_map()[c] == absent_index)
      ++missing;
    else
      ++mapped;
  }
  CHECK(mapped == 8);   // lower-left quadrant
  CHECK(missing == 8);  // upper-left quadrant
  CHECK(!m->empty());
}

TEST_CASE("disjoint same-dim siblings give an empty mapping") {
  auto parent = unit_square_mesh(4);
  auto left = create_submesh(mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[0] < 0.25; }), 1);
  auto right = create_submesh(mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[0] > 0.75; }), 1);
  auto m = build_mapping(left, right);
  CHECK(m->empty());
  for (index_t c = 0; c < left->num_cells(); ++c) CHECK(m->cell_map()[c] == absent_index);
}

TEST_CASE("codim-1 sibling mapping targets facets of the codim-0 view") {
  auto parent = unit_square_mesh(4);
  auto interface =
      create_submesh(mark_entities(parent, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < eps; }), 1);
  auto left = create_submesh(mark_entities(parent, 2, [](const std::array<double, 3>& x) { return x[0] < 0.5; }), 1);

  auto m = build_mapping(interface, left);
  CHECK(m->codim() == 1);
  REQUIRE(m->cell_map().size() == 4);
  const auto& f2c = left->connectivity(1, 2);
  for (index_t c = 0; c < interface->num_cells(); ++c) {
    const index_t f = m->cell_map()[c];
    REQUIRE(f != absent_index);
    // the target facet has the same coordinates as the interface cell
    auto fv = left->entity_vertices(1, f);
    auto cv = interface->cell_vertices(c);
    for (int k = 0; k < 2; ++k) {
      auto xa = interface->vertex_coords(cv[k]);
      auto xb = left->vertex_coords(fv[k]);
      CHECK(near(xa[0], xb[0]));
      CHECK(near(xa[1], xb[1]));
    }
    // interface facets are on the boundary of the left half: one adjacent cell
    CHECK(f2c(f).size() == 1);
  }
}

TEST_CASE("codim-1 view of the parent keeps parent facet indices") {
  auto parent = unit_square_mesh(4);
  auto marker = mark_entities(parent, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < eps; });
  auto interface = create_submesh(marker, 1);
  auto m = build_mapping(interface, parent);
  CHECK(m->codim() == 1);
  auto tagged = marker.where(1);
  for (index_t c = 0; c < interface->num_cells(); ++c) {
    CHECK(m->cell_map()[c] == tagged[c]);
    // each interface facet of the parent is interior: star of two cells
    CHECK(parent->connectivity(1, 2)(m->cell_map()[c]).size() == 2);
  }
}

TEST_CASE("mapping requires a common parent") {
  auto p1 = unit_square_mesh(2);
  auto p2 = unit_square_mesh(2);
  auto s1 = create_submesh(MeshFunction(p1, 2, 1), 1);
  auto s2 = create_submesh(MeshFunction(p2, 2, 1), 1);
  try {
    build_mapping(s1, s2);
    FAIL("expected no-common-parent");
  } catch (const ViewError& e) {
    CHECK(e.kind() == "no-common-parent");
  }
}

TEST_CASE("marker tag relabeling does not change the submesh") {
  auto parent = unit_square_mesh(4);
  auto m1 = mark_entities(parent, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < eps; }, 1);
  auto m7 = mark_entities(parent, 1, [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < eps; }, 7);
  for (index_t f = 0; f < m7.size(); ++f)
    if (m7[f] == 0) m7[f] = 3;  // noise tags elsewhere
  auto a = create_submesh(m1, 1);
  auto b = create_submesh(m7, 7);
  REQUIRE(a->num_cells() == b->num_cells());
  REQUIRE(a->num_vertices() == b->num_vertices());
  CHECK(a->cells() == b->cells());
  CHECK(a->coords() == b->coords());
  auto la = a->find_view(parent->id());
  auto lb = b->find_view(parent->id());
  CHECK(la->cell_map() == lb->cell_map());
  CHECK(la->vertex_map() == lb->vertex_map());
}

TEST_CASE("submesh extraction cost scales linearly in tagged entities") {
  // coarse guard against superlinear behavior: up to 16x tagged entities must
  // not cost more than ~128x (quadratic would be ~256x)
  auto time_of = [](index_t n) {
    auto parent = unit_square_mesh(n);
    auto marker = MeshFunction(parent, 2, 1);
    create_submesh(marker, 1);  // warm caches
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < 3; ++r) create_submesh(marker, 1);
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / 3;
  };
  const double t32 = time_of(32), t128 = time_of(128);
  CHECK(t128 <= 128.0 * std::max(t32, 1e-4));
}
