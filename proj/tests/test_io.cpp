#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "mixfem/mesh_io.hpp"

using namespace mixfem;

TEST_CASE("mesh json round trip preserves geometry and topology") {
  auto m = unit_square_mesh(2);
  std::stringstream buf;
  save_mesh_json(*m, buf);
  auto r = load_mesh_json(buf);

  REQUIRE(r->tdim() == m->tdim());
  REQUIRE(r->gdim() == m->gdim());
  REQUIRE(r->num_vertices() == m->num_vertices());
  REQUIRE(r->num_cells() == m->num_cells());
  for (index_t v = 0; v < m->num_vertices(); ++v) {
    auto a = m->vertex_coords(v);
    auto b = r->vertex_coords(v);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
  }
  for (index_t c = 0; c < m->num_cells(); ++c) {
    auto a = m->cell_vertices(c);
    auto b = r->cell_vertices(c);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
  }
  CHECK(r->num_entities(1) == m->num_entities(1));
}

TEST_CASE("mesh json loads a handwritten interval mesh") {
  std::istringstream src(R"({"tdim": 1, "gdim": 1,
    "vertices": [[0.0], [0.5], [1.0]],
    "cells": [[0, 1], [1, 2]]})");
  auto m = load_mesh_json(src);
  CHECK(m->tdim() == 1);
  CHECK(m->num_vertices() == 3);
  CHECK(m->num_cells() == 2);
  CHECK(m->vertex_coords(1)[0] == 0.5);
}

TEST_CASE("malformed mesh json is rejected") {
  SECTION("not json") {
    std::istringstream src("not json at all");
    CHECK_THROWS_AS(load_mesh_json(src), IoError);
  }
  SECTION("missing fields") {
    std::istringstream src(R"({"tdim": 2, "gdim": 2, "vertices": []})");
    CHECK_THROWS_AS(load_mesh_json(src), IoError);
  }
  SECTION("ragged vertex row") {
    std::istringstream src(R"({"tdim": 1, "gdim": 2,
      "vertices": [[0.0, 0.0], [1.0]], "cells": [[0, 1]]})");
    CHECK_THROWS_AS(load_mesh_json(src), IoError);
  }
  SECTION("wrong cell arity") {
    std::istringstream src(R"({"tdim": 2, "gdim": 2,
      "vertices": [[0,0],[1,0],[0,1]], "cells": [[0, 1]]})");
    CHECK_THROWS_AS(load_mesh_json(src), IoError);
  }
  SECTION("missing file") { CHECK_THROWS_AS(load_mesh_json(std::string("no_such_file.json")), IoError); }
}

TEST_CASE("mapping json carries the parallel index arrays") {
  auto parent = unit_square_mesh(2);
  auto marker = mark_entities(parent, 1,
                              [](const std::array<double, 3>& x) { return std::abs(x[0] - 0.5) < 1e-12; });
  auto sub = create_submesh(marker, 1);
  auto link = sub->find_view(parent->id());
  REQUIRE(link);

  std::stringstream buf;
  save_mapping_json(*link, buf);
  auto j = nlohmann::json::parse(buf.str());
  CHECK(j.at("cell_map").get<std::vector<index_t>>() == link->cell_map());
  CHECK(j.at("vertex_map").get<std::vector<index_t>>() == link->vertex_map());
}
