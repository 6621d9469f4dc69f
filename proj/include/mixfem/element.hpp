#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "mesh.hpp"

namespace mixfem {

inline int reference_dim(CellKind k) { return cell_dim(k); }

// Reference vertices: interval (0),(1); triangle (0,0),(1,0),(0,1);
// tetrahedron (0,0,0),(1,0,0),(0,1,0),(0,0,1).
inline std::array<double, 3> reference_vertex(CellKind k, int i) {
  std::array<double, 3> v{0.0, 0.0, 0.0};
  if (i > 0) v[i - 1] = 1.0;
  (void)k;
  return v;
}

// Affine map from the facet reference cell into the cell reference cell.
// Columns of A span the facet; b is the image of the facet's first vertex.
struct FacetEmbedding {
  int cell_dim = 0;
  int facet_dim = 0;
  std::array<double, 9> A{};  // cell_dim x facet_dim, row major
  std::array<double, 3> b{};

  void apply(const double* facet_pt, double* cell_pt) const {
    for (int r = 0; r < cell_dim; ++r) {
      double s = b[r];
      for (int c = 0; c < facet_dim; ++c) s += A[r * facet_dim + c] * facet_pt[c];
      cell_pt[r] = s;
    }
  }
};

// Embedding of local facet `lf`. Facet vertices follow the cell's local facet
// order (facet i omits vertex i, remaining vertices ascending).
inline FacetEmbedding facet_embedding(CellKind kind, int lf) {
  const int dim = cell_dim(kind);
  if (dim < 1) throw InvalidArgumentError("facet_embedding: cell has no facets");
  if (lf < 0 || lf > dim) throw InvalidArgumentError("facet_embedding: local facet out of range");
  const auto locals = local_sub_entities(dim, dim - 1);
  FacetEmbedding emb;
  emb.cell_dim = dim;
  emb.facet_dim = dim - 1;
  const auto v0 = reference_vertex(kind, locals[lf][0]);
  for (int r = 0; r < dim; ++r) emb.b[r] = v0[r];
  for (int c = 0; c < dim - 1; ++c) {
    const auto vc = reference_vertex(kind, locals[lf][c + 1]);
    for (int r = 0; r < dim; ++r) emb.A[r * (dim - 1) + c] = vc[r] - v0[r];
  }
  return emb;
}

// Continuous Lagrange element on a reference simplex. Vector-valued variants
// are blocked scalar elements: local dof = node * value_size + component.
//
// Scalar node layout (and hence dof order): vertex nodes first, then nodes on
// dimension-1 entities, then higher, entity index ascending; within an edge
// (a,b), a < b local, nodes run from a toward b. Entity indexing matches
// local_sub_entities(), so facet i of a triangle is the edge opposite vertex i
// and tetrahedron edges are vertex pairs in lexicographic order.
class ReferenceElement {
public:
  ReferenceElement(CellKind kind, int degree, int value_size = 1)
      : kind_(kind), dim_(cell_dim(kind)), degree_(degree), value_size_(value_size) {
    if (degree_ < 1) throw NotSupportedError("Lagrange degree must be >= 1");
    const int max_degree = (kind == CellKind::tetrahedron) ? 2 : 3;
    if (degree_ > max_degree)
      throw NotSupportedError("Lagrange degree " + std::to_string(degree_) + " not supported on this cell");
    if (value_size_ != 1 && value_size_ != dim_ && value_size_ != 2 && value_size_ != 3)
      throw NotSupportedError("value_size must be 1 or a spatial dimension");
    build_nodes();
    build_coefficients();
  }

  CellKind cell_kind() const { return kind_; }
  int dim() const { return dim_; }
  int degree() const { return degree_; }
  int value_size() const { return value_size_; }
  int num_scalar_nodes() const { return nsn_; }
  int n_local() const { return nsn_ * value_size_; }

  // Reference coordinates of scalar node n.
  std::span<const double> node_point(int n) const { return {points_.data() + n * dim_, static_cast<std::size_t>(dim_)}; }

  // Owning (entity_dim, local_entity_index) of local dof i.
  std::pair<int, int> dof_entity(int i) const { return node_entity_[i / value_size_]; }
  int dof_component(int i) const { return i % value_size_; }
  int dof_node(int i) const { return i / value_size_; }

  // Scalar basis values, [n_points x num_scalar_nodes] row major.
  std::vector<double> tabulate_scalar(std::span<const double> points) const {
    const std::size_t np = check_points(points);
    std::vector<double> out(np * nsn_);
    std::vector<double> m(monos_.size());
    for (std::size_t p = 0; p < np; ++p) {
      eval_monomials(points.data() + p * dim_, m.data());
      for (int i = 0; i < nsn_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < monos_.size(); ++j) s += coeff_[i * monos_.size() + j] * m[j];
        out[p * nsn_ + i] = s;
      }
    }
    return out;
  }

  // Scalar basis reference gradients, [n_points x num_scalar_nodes x dim].
  std::vector<double> tabulate_scalar_gradient(std::span<const double> points) const {
    const std::size_t np = check_points(points);
    std::vector<double> out(np * nsn_ * dim_);
    std::vector<double> dm(monos_.size() * dim_);
    for (std::size_t p = 0; p < np; ++p) {
      eval_monomial_gradients(points.data() + p * dim_, dm.data());
      for (int i = 0; i < nsn_; ++i)
        for (int d = 0; d < dim_; ++d) {
          double s = 0.0;
          for (std::size_t j = 0; j < monos_.size(); ++j) s += coeff_[i * monos_.size() + j] * dm[j * dim_ + d];
          out[(p * nsn_ + i) * dim_ + d] = s;
        }
    }
    return out;
  }

  // Blocked values, [n_points x n_local x value_size].
  std::vector<double> tabulate(std::span<const double> points) const {
    const auto scal = tabulate_scalar(points);
    const std::size_t np = scal.size() / nsn_;
    std::vector<double> out(np * n_local() * value_size_, 0.0);
    for (std::size_t p = 0; p < np; ++p)
      for (int n = 0; n < nsn_; ++n)
        for (int c = 0; c < value_size_; ++c)
          out[(p * n_local() + n * value_size_ + c) * value_size_ + c] = scal[p * nsn_ + n];
    return out;
  }

  // Blocked reference gradients, [n_points x n_local x value_size x dim].
  std::vector<double> tabulate_gradient(std::span<const double> points) const {
    const auto grad = tabulate_scalar_gradient(points);
    const std::size_t np = grad.size() / (static_cast<std::size_t>(nsn_) * dim_);
    std::vector<double> out(np * n_local() * value_size_ * dim_, 0.0);
    for (std::size_t p = 0; p < np; ++p)
      for (int n = 0; n < nsn_; ++n)
        for (int c = 0; c < value_size_; ++c)
          for (int d = 0; d < dim_; ++d)
            out[((p * n_local() + n * value_size_ + c) * value_size_ + c) * dim_ + d] =
                grad[(p * nsn_ + n) * dim_ + d];
    return out;
  }

private:
  std::size_t check_points(std::span<const double> points) const {
    if (points.size() % dim_ != 0) throw InvalidArgumentError("tabulate: point array size not divisible by dim");
    const std::size_t np = points.size() / dim_;
    constexpr double tol = 1e-12;
    for (std::size_t p = 0; p < np; ++p) {
      double sum = 0.0;
      for (int d = 0; d < dim_; ++d) {
        const double x = points[p * dim_ + d];
        if (x < -tol) throw InvalidArgumentError("tabulate: point outside the reference cell");
        sum += x;
      }
      if (sum > 1.0 + tol) throw InvalidArgumentError("tabulate: point outside the reference cell");
    }
    return np;
  }

  void add_node(double x, double y, double z, int edim, int eidx) {
    points_.push_back(x);
    if (dim_ > 1) points_.push_back(y);
    if (dim_ > 2) points_.push_back(z);
    node_entity_.emplace_back(edim, eidx);
  }

  void build_nodes() {
    const int k = degree_;
    // vertices
    for (int v = 0; v <= dim_; ++v) {
      auto p = reference_vertex(kind_, v);
      add_node(p[0], p[1], p[2], 0, v);
    }
    if (k >= 2 && dim_ >= 2) {
      // dimension-1 entity nodes (triangle: facets; tetrahedron: edges)
      const auto edges = local_sub_entities(dim_, 1);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto a = reference_vertex(kind_, edges[e][0]);
        const auto b = reference_vertex(kind_, edges[e][1]);
        for (int s = 1; s < k; ++s) {
          const double t = static_cast<double>(s) / k;
          add_node(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2]), 1,
                   static_cast<int>(e));
        }
      }
    }
    if (k >= 2 && dim_ == 1)
      for (int s = 1; s < k; ++s) add_node(static_cast<double>(s) / k, 0, 0, 1, 0);
    if (k == 3 && dim_ == 2) add_node(1.0 / 3.0, 1.0 / 3.0, 0, 2, 0);  // triangle interior
    nsn_ = static_cast<int>(node_entity_.size());
  }

  void build_monomials() {
    const int k = degree_;
    for (int a = 0; a <= k; ++a)
      for (int b = 0; b <= (dim_ >= 2 ? k - a : 0); ++b)
        for (int c = 0; c <= (dim_ >= 3 ? k - a - b : 0); ++c)
          monos_.push_back({a, b, c});
  }

  void eval_monomials(const double* x, double* out) const {
    for (std::size_t j = 0; j < monos_.size(); ++j) {
      double v = 1.0;
      for (int d = 0; d < dim_; ++d)
        for (int e = 0; e < monos_[j][d]; ++e) v *= x[d];
      out[j] = v;
    }
  }

  void eval_monomial_gradients(const double* x, double* out) const {
    for (std::size_t j = 0; j < monos_.size(); ++j)
      for (int d = 0; d < dim_; ++d) {
        const int e = monos_[j][d];
        if (e == 0) {
          out[j * dim_ + d] = 0.0;
          continue;
        }
        double v = static_cast<double>(e);
        for (int dd = 0; dd < dim_; ++dd) {
          const int ee = monos_[j][dd] - (dd == d ? 1 : 0);
          for (int r = 0; r < ee; ++r) v *= x[dd];
        }
        out[j * dim_ + d] = v;
      }
  }

  // Invert the generalized Vandermonde so the basis is nodal.
  void build_coefficients() {
    build_monomials();
    const int n = nsn_;
    if (static_cast<std::size_t>(n) != monos_.size())
      throw Error("internal", "Lagrange node/monomial count mismatch");
    // V[l][j] = mono_j(P_l); solve C V^T = I, i.e. V C_i = e_i per basis row.
    std::vector<double> V(static_cast<std::size_t>(n) * n);
    for (int l = 0; l < n; ++l) eval_monomials(points_.data() + l * dim_, V.data() + static_cast<std::size_t>(l) * n);
    // Gauss-Jordan with partial pivoting on [V | I]; solution X = V^{-1} gives
    // basis_i coefficients as column i of X, i.e. coeff_[i][j] = X[j][i].
    std::vector<double> aug(static_cast<std::size_t>(n) * 2 * n, 0.0);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) aug[r * 2 * n + c] = V[static_cast<std::size_t>(r) * n + c];
      aug[r * 2 * n + n + r] = 1.0;
    }
    for (int col = 0; col < n; ++col) {
      int piv = col;
      for (int r = col + 1; r < n; ++r)
        if (std::abs(aug[r * 2 * n + col]) > std::abs(aug[piv * 2 * n + col])) piv = r;
      if (std::abs(aug[piv * 2 * n + col]) < 1e-14) throw Error("internal", "singular Vandermonde matrix");
      if (piv != col)
        for (int c = 0; c < 2 * n; ++c) std::swap(aug[piv * 2 * n + c], aug[col * 2 * n + c]);
      const double d = aug[col * 2 * n + col];
      for (int c = 0; c < 2 * n; ++c) aug[col * 2 * n + c] /= d;
      for (int r = 0; r < n; ++r) {
        if (r == col) continue;
        const double f = aug[r * 2 * n + col];
        if (f == 0.0) continue;
        for (int c = 0; c < 2 * n; ++c) aug[r * 2 * n + c] -= f * aug[col * 2 * n + c];
      }
    }
    coeff_.resize(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) coeff_[static_cast<std::size_t>(i) * n + j] = aug[j * 2 * n + n + i];
  }

  CellKind kind_;
  int dim_, degree_, value_size_;
  int nsn_ = 0;
  std::vector<double> points_;
  std::vector<std::pair<int, int>> node_entity_;
  std::vector<std::array<int, 3>> monos_;
  std::vector<double> coeff_;
};

}  // namespace mixfem
