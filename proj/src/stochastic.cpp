#include "rhomp/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "rhomp/parallel.hpp"
#include "rhomp/text_io.hpp"

namespace rhomp {

SparseColumnMatrix::SparseColumnMatrix(std::size_t dim, std::vector<std::size_t> col_ptr,
                                       std::vector<StateId> rows, std::vector<double> values)
    : dim_(dim), col_ptr_(std::move(col_ptr)), rows_(std::move(rows)), values_(std::move(values)) {
  if (col_ptr_.size() != dim_ + 1 || col_ptr_.front() != 0 || col_ptr_.back() != rows_.size() ||
      rows_.size() != values_.size())
    throw DataError("inconsistent sparse column layout");
  for (std::size_t c = 0; c < dim_; ++c) {
    if (col_ptr_[c] > col_ptr_[c + 1]) throw DataError("column pointers not monotone");
    for (std::size_t p = col_ptr_[c]; p < col_ptr_[c + 1]; ++p) {
      if (rows_[p] >= dim_) throw DataError(fmt::format("row {} outside [0, {})", rows_[p], dim_));
      if (p > col_ptr_[c] && rows_[p] <= rows_[p - 1])
        throw DataError(fmt::format("rows of column {} not strictly increasing", c));
    }
  }
}

SparseColumnMatrix SparseColumnMatrix::from_triplets(std::size_t dim, std::vector<Triplet> triplets) {
  for (const auto& t : triplets)
    if (t.col >= dim || t.row >= dim)
      throw DataError(fmt::format("entry ({}, {}) outside dimension {}", t.row, t.col, dim));
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  std::vector<std::size_t> col_ptr(dim + 1, 0);
  std::vector<StateId> rows;
  std::vector<double> values;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (k > 0 && triplets[k - 1].col == t.col && triplets[k - 1].row == t.row) {
      values.back() += t.value;
      continue;
    }
    rows.push_back(t.row);
    values.push_back(t.value);
    ++col_ptr[t.col + 1];
  }
  std::partial_sum(col_ptr.begin(), col_ptr.end(), col_ptr.begin());
  return SparseColumnMatrix(dim, std::move(col_ptr), std::move(rows), std::move(values));
}

double SparseColumnMatrix::column_sum(StateId col) const {
  auto v = values(col);
  return std::accumulate(v.begin(), v.end(), 0.0);
}

std::size_t SparseColumnMatrix::position(StateId row, StateId col) const {
  if (col >= dim_) return nnz();
  auto r = rows(col);
  auto it = std::lower_bound(r.begin(), r.end(), row);
  if (it == r.end() || *it != row) return nnz();
  return col_ptr_[col] + static_cast<std::size_t>(it - r.begin());
}

double SparseColumnMatrix::at(StateId row, StateId col) const {
  const std::size_t p = position(row, col);
  return p == nnz() ? 0.0 : values_[p];
}

ColumnStochasticMatrix::ColumnStochasticMatrix(SparseColumnMatrix m) : m_(std::move(m)) {
  for (StateId c = 0; c < m_.dim(); ++c) {
    if (m_.column_empty(c)) continue;
    for (double v : m_.values(c))
      if (!(v >= 0.0)) throw DataError(fmt::format("column {} has negative or NaN entry {}", c, v));
    const double s = m_.column_sum(c);
    if (std::abs(s - 1.0) > kSumTolerance)
      throw DataError(fmt::format("column {} sums to {:.17g}, not 1", c, s));
  }
}

void project_to_simplex_inplace(std::span<double> w, std::vector<double>& scratch) {
  scratch.clear();
  for (double x : w)
    if (x != 0.0) scratch.push_back(x);
  if (scratch.empty()) throw DataError("simplex projection of a vector with no nonzero entry");

  std::sort(scratch.begin(), scratch.end(), std::greater<>());
  double prefix = 0.0;
  double theta = 0.0;
  for (std::size_t r = 0; r < scratch.size(); ++r) {
    prefix += scratch[r];
    const double candidate = (prefix - 1.0) / static_cast<double>(r + 1);
    // u_1 - (u_1 - 1) = 1 > 0, so the first candidate is always taken.
    if (scratch[r] - candidate > 0.0) theta = candidate;
  }
  for (double& x : w)
    if (x != 0.0) x = std::max(x - theta, 0.0);
}

std::vector<double> project_to_simplex(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  std::vector<double> scratch;
  project_to_simplex_inplace(out, scratch);
  return out;
}

ColumnStochasticMatrix project_columns(SparseColumnMatrix m, unsigned threads) {
  parallel_for(m.dim(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scratch;
    for (std::size_t c = begin; c < end; ++c) {
      const auto col = static_cast<StateId>(c);
      if (m.column_empty(col)) continue;
      try {
        project_to_simplex_inplace(m.values(col), scratch);
      } catch (const DataError& e) {
        throw DataError(fmt::format("column {}: {}", c, e.what()));
      }
    }
  });
  return ColumnStochasticMatrix(std::move(m));
}

void write_matrix(std::ostream& out, const SparseColumnMatrix& m) {
  for (StateId c = 0; c < m.dim(); ++c) {
    auto rows = m.rows(c);
    auto vals = m.values(c);
    for (std::size_t k = 0; k < rows.size(); ++k)
      out << c << '\t' << rows[k] << '\t' << format_real(vals[k]) << '\n';
  }
}

}  // namespace rhomp
