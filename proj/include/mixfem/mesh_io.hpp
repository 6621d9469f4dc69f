#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixfem/errors.hpp"
#include "mixfem/mesh.hpp"
#include "mixfem/meshview.hpp"

namespace mixfem {

// Schema: {"tdim": int, "gdim": int, "vertices": [[x,...],...],
// "cells": [[v0,...],...]}, both arrays index-ordered.
inline void save_mesh_json(const Mesh& mesh, std::ostream& os) {
  nlohmann::json j;
  j["tdim"] = mesh.tdim();
  j["gdim"] = mesh.gdim();
  auto& verts = j["vertices"] = nlohmann::json::array();
  for (index_t v = 0; v < mesh.num_vertices(); ++v) {
    const auto x = mesh.vertex_coords(v);
    nlohmann::json row = nlohmann::json::array();
    for (int g = 0; g < mesh.gdim(); ++g) row.push_back(x[g]);
    verts.push_back(std::move(row));
  }
  auto& cells = j["cells"] = nlohmann::json::array();
  for (index_t c = 0; c < mesh.num_cells(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (index_t v : mesh.cell_vertices(c)) row.push_back(v);
    cells.push_back(std::move(row));
  }
  os << j.dump(2) << '\n';
}

inline void save_mesh_json(const Mesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_mesh_json(mesh, os);
}

inline MeshPtr load_mesh_json(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed mesh JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("tdim") || !j.contains("gdim") || !j.contains("vertices") ||
      !j.contains("cells"))
    throw IoError("mesh JSON needs tdim, gdim, vertices, and cells fields");
  try {
    const int tdim = j.at("tdim").get<int>();
    const int gdim = j.at("gdim").get<int>();
    const auto& jv = j.at("vertices");
    const auto& jc = j.at("cells");
    if (!jv.is_array() || !jc.is_array()) throw IoError("vertices and cells must be arrays");
    std::vector<double> coords;
    coords.reserve(jv.size() * static_cast<std::size_t>(gdim));
    for (const auto& row : jv) {
      if (!row.is_array() || static_cast<int>(row.size()) != gdim)
        throw IoError("each vertex needs gdim coordinates");
      for (const auto& x : row) coords.push_back(x.get<double>());
    }
    std::vector<index_t> cells;
    cells.reserve(jc.size() * static_cast<std::size_t>(tdim + 1));
    for (const auto& row : jc) {
      if (!row.is_array() || static_cast<int>(row.size()) != tdim + 1)
        throw IoError("each cell needs tdim+1 vertex indices");
      for (const auto& v : row) cells.push_back(v.get<index_t>());
    }
    return std::make_shared<Mesh>(tdim, gdim, std::move(coords), std::move(cells));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed mesh JSON: ") + e.what());
  }
}

inline MeshPtr load_mesh_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return load_mesh_json(is);
}

// Debug dump of a view's parallel index arrays; absent entries stay -1.
inline void save_mapping_json(const MeshViewMapping& mapping, std::ostream& os) {
  nlohmann::json j;
  j["cell_map"] = mapping.cell_map();
  j["vertex_map"] = mapping.vertex_map();
  os << j.dump(2) << '\n';
}

}  // namespace mixfem
