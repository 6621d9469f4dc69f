#pragma once

// Sparse CSR matrices, block-nest containers, monolithic conversion, and
// Matrix Market / plain-text vector I/O.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mixfem/errors.hpp"
#include "mixfem/mesh.hpp"

namespace mixfem {

struct Triplet {
  index_t row;
  index_t col;
  double value;
};

class CsrMatrix {
public:
  CsrMatrix() = default;
  CsrMatrix(index_t n_rows, index_t n_cols, std::vector<index_t> offsets, std::vector<index_t> cols,
            std::vector<double> values)
      : n_rows_(n_rows), n_cols_(n_cols), offsets_(std::move(offsets)), cols_(std::move(cols)),
        values_(std::move(values)) {}

  index_t n_rows() const { return n_rows_; }
  index_t n_cols() const { return n_cols_; }
  index_t nnz() const { return static_cast<index_t>(cols_.size()); }
  const std::vector<index_t>& row_offsets() const { return offsets_; }
  const std::vector<index_t>& col_indices() const { return cols_; }
  const std::vector<double>& values() const { return values_; }

  double entry(index_t i, index_t j) const {
    auto first = cols_.begin() + offsets_[static_cast<std::size_t>(i)];
    auto last = cols_.begin() + offsets_[static_cast<std::size_t>(i) + 1];
    auto it = std::lower_bound(first, last, j);
    if (it == last || *it != j) return 0.0;
    return values_[static_cast<std::size_t>(it - cols_.begin())];
  }

  void matvec(const double* x, double* y) const {
    for (index_t i = 0; i < n_rows_; ++i) {
      double s = 0.0;
      for (index_t k = offsets_[static_cast<std::size_t>(i)]; k < offsets_[static_cast<std::size_t>(i) + 1]; ++k)
        s += values_[static_cast<std::size_t>(k)] * x[cols_[static_cast<std::size_t>(k)]];
      y[i] = s;
    }
  }

  std::vector<double> matvec(const std::vector<double>& x) const {
    if (static_cast<index_t>(x.size()) != n_cols_) throw InvalidArgumentError("matvec: size mismatch");
    std::vector<double> y(static_cast<std::size_t>(n_rows_));
    matvec(x.data(), y.data());
    return y;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  CsrMatrix transpose() const;

private:
  index_t n_rows_ = 0, n_cols_ = 0;
  std::vector<index_t> offsets_{0};
  std::vector<index_t> cols_;
  std::vector<double> values_;
};

// Sums duplicate entries; column indices come out sorted and unique per row.
inline CsrMatrix csr_from_triplets(index_t n_rows, index_t n_cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets)
    if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
      throw InvalidArgumentError("triplet index out of range");
  std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<index_t> offsets(static_cast<std::size_t>(n_rows) + 1, 0);
  std::vector<index_t> cols;
  std::vector<double> values;
  cols.reserve(triplets.size());
  values.reserve(triplets.size());
  std::size_t i = 0;
  while (i < triplets.size()) {
    std::size_t j = i;
    double s = 0.0;
    while (j < triplets.size() && triplets[j].row == triplets[i].row && triplets[j].col == triplets[i].col)
      s += triplets[j++].value;
    cols.push_back(triplets[i].col);
    values.push_back(s);
    ++offsets[static_cast<std::size_t>(triplets[i].row) + 1];
    i = j;
  }
  for (std::size_t r = 0; r < static_cast<std::size_t>(n_rows); ++r) offsets[r + 1] += offsets[r];
  return CsrMatrix(n_rows, n_cols, std::move(offsets), std::move(cols), std::move(values));
}

inline CsrMatrix CsrMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nnz()));
  for (index_t r = 0; r < n_rows_; ++r)
    for (index_t k = offsets_[static_cast<std::size_t>(r)]; k < offsets_[static_cast<std::size_t>(r) + 1]; ++k)
      t.push_back({cols_[static_cast<std::size_t>(k)], r, values_[static_cast<std::size_t>(k)]});
  return csr_from_triplets(n_cols_, n_rows_, std::move(t));
}

// ---------------------------------------------------------------------------
// Block containers

class BlockNestMatrix {
public:
  BlockNestMatrix(std::vector<index_t> row_dims, std::vector<index_t> col_dims)
      : row_dims_(std::move(row_dims)), col_dims_(std::move(col_dims)),
        blocks_(row_dims_.size() * col_dims_.size()) {
    for (index_t d : row_dims_)
      if (d < 0) throw InvalidArgumentError("negative block dimension");
    for (index_t d : col_dims_)
      if (d < 0) throw InvalidArgumentError("negative block dimension");
  }

  std::size_t block_rows() const { return row_dims_.size(); }
  std::size_t block_cols() const { return col_dims_.size(); }
  const std::vector<index_t>& row_dims() const { return row_dims_; }
  const std::vector<index_t>& col_dims() const { return col_dims_; }

  void set_block(std::size_t i, std::size_t j, CsrMatrix block) {
    if (i >= block_rows() || j >= block_cols()) throw InvalidArgumentError("block index out of range");
    if (block.n_rows() != row_dims_[i] || block.n_cols() != col_dims_[j])
      throw InvalidArgumentError("block dimensions do not match the nest layout");
    blocks_[i * block_cols() + j] = std::move(block);
  }

  // Absent blocks are semantically zero.
  const std::optional<CsrMatrix>& block(std::size_t i, std::size_t j) const {
    return blocks_.at(i * block_cols() + j);
  }

  std::vector<index_t> row_offsets() const {
    std::vector<index_t> out{0};
    for (index_t d : row_dims_) out.push_back(out.back() + d);
    return out;
  }

  std::vector<index_t> col_offsets() const {
    std::vector<index_t> out{0};
    for (index_t d : col_dims_) out.push_back(out.back() + d);
    return out;
  }

private:
  std::vector<index_t> row_dims_, col_dims_;
  std::vector<std::optional<CsrMatrix>> blocks_;
};

class BlockVector {
public:
  explicit BlockVector(const std::vector<index_t>& dims) {
    for (index_t d : dims) segments_.emplace_back(static_cast<std::size_t>(d), 0.0);
  }

  std::size_t num_blocks() const { return segments_.size(); }
  std::vector<double>& segment(std::size_t i) { return segments_.at(i); }
  const std::vector<double>& segment(std::size_t i) const { return segments_.at(i); }

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& s : segments_) out.insert(out.end(), s.begin(), s.end());
    return out;
  }

  void unflatten(const std::vector<double>& x) {
    std::size_t pos = 0;
    for (auto& s : segments_) {
      if (pos + s.size() > x.size()) throw InvalidArgumentError("unflatten: vector too short");
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(pos), x.begin() + static_cast<std::ptrdiff_t>(pos + s.size()),
                s.begin());
      pos += s.size();
    }
    if (pos != x.size()) throw InvalidArgumentError("unflatten: vector too long");
  }

private:
  std::vector<std::vector<double>> segments_;
};

inline CsrMatrix convert_to_monolithic(const BlockNestMatrix& nest) {
  const auto roff = nest.row_offsets();
  const auto coff = nest.col_offsets();
  std::vector<Triplet> triplets;
  for (std::size_t i = 0; i < nest.block_rows(); ++i)
    for (std::size_t j = 0; j < nest.block_cols(); ++j) {
      const auto& blk = nest.block(i, j);
      if (!blk) continue;
      for (index_t r = 0; r < blk->n_rows(); ++r)
        for (index_t k = blk->row_offsets()[static_cast<std::size_t>(r)];
             k < blk->row_offsets()[static_cast<std::size_t>(r) + 1]; ++k)
          triplets.push_back({roff[i] + r, coff[j] + blk->col_indices()[static_cast<std::size_t>(k)],
                              blk->values()[static_cast<std::size_t>(k)]});
    }
  return csr_from_triplets(roff.back(), coff.back(), std::move(triplets));
}

// ---------------------------------------------------------------------------
// Matrix Market coordinate format (real general, 1-based)

inline void write_matrix_market(const CsrMatrix& A, std::ostream& os) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << A.n_rows() << " " << A.n_cols() << " " << A.nnz() << "\n";
  os << std::setprecision(17);
  for (index_t r = 0; r < A.n_rows(); ++r)
    for (index_t k = A.row_offsets()[static_cast<std::size_t>(r)];
         k < A.row_offsets()[static_cast<std::size_t>(r) + 1]; ++k)
      os << r + 1 << " " << A.col_indices()[static_cast<std::size_t>(k)] + 1 << " "
         << A.values()[static_cast<std::size_t>(k)] << "\n";
}

inline void write_matrix_market(const CsrMatrix& A, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_matrix_market(A, os);
}

inline CsrMatrix read_matrix_market(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("matrix market: empty stream");
  {
    std::istringstream hs(line);
    std::string banner, object, fmt, field, symmetry;
    hs >> banner >> object >> fmt >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix" || fmt != "coordinate" || field != "real" ||
        symmetry != "general")
      throw IoError("matrix market: unsupported header: " + line);
  }
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '%') break;
  index_t n_rows = 0, n_cols = 0;
  long long nnz = -1;
  {
    std::istringstream ls(line);
    if (!(ls >> n_rows >> n_cols >> nnz) || n_rows < 0 || n_cols < 0 || nnz < 0)
      throw IoError("matrix market: malformed size line");
  }
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    index_t r, c;
    double v;
    if (!(is >> r >> c >> v)) throw IoError("matrix market: truncated entry list");
    if (r < 1 || r > n_rows || c < 1 || c > n_cols) throw IoError("matrix market: entry out of range");
    triplets.push_back({r - 1, c - 1, v});
  }
  return csr_from_triplets(n_rows, n_cols, std::move(triplets));
}

inline CsrMatrix read_matrix_market(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path + " for reading");
  return read_matrix_market(is);
}

// ---------------------------------------------------------------------------
// Dense vector text format: one value per line

inline void write_vector_text(const std::vector<double>& x, std::ostream& os) {
  os << std::setprecision(17);
  for (double v : x) os << v << "\n";
}

inline std::vector<double> read_vector_text(std::istream& is) {
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  return out;
}

}  // namespace mixfem
