#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "rhomp/types.hpp"

namespace rhomp {

struct Triplet {
  StateId col;
  StateId row;
  double value;
};

/// N x N matrix in compressed sparse column form. The support (which
/// (row, col) pairs are stored) never changes after construction; only the
/// stored values are mutable.
class SparseColumnMatrix {
 public:
  SparseColumnMatrix() = default;
  SparseColumnMatrix(std::size_t dim, std::vector<std::size_t> col_ptr, std::vector<StateId> rows,
                     std::vector<double> values);
  /// Duplicate (col, row) pairs are summed. Explicit zeros are kept.
  static SparseColumnMatrix from_triplets(std::size_t dim, std::vector<Triplet> triplets);

  std::size_t dim() const { return dim_; }
  std::size_t nnz() const { return rows_.size(); }

  std::span<const StateId> rows(StateId col) const {
    return {rows_.data() + col_ptr_[col], col_ptr_[col + 1] - col_ptr_[col]};
  }
  std::span<const double> values(StateId col) const {
    return {values_.data() + col_ptr_[col], col_ptr_[col + 1] - col_ptr_[col]};
  }
  std::span<double> values(StateId col) {
    return {values_.data() + col_ptr_[col], col_ptr_[col + 1] - col_ptr_[col]};
  }
  bool column_empty(StateId col) const { return col_ptr_[col] == col_ptr_[col + 1]; }
  double column_sum(StateId col) const;

  /// Zero when (row, col) is outside the support.
  double at(StateId row, StateId col) const;
  /// Position of (row, col) in the flat value array, or nnz() when absent.
  std::size_t position(StateId row, StateId col) const;

  std::span<const std::size_t> col_ptr() const { return col_ptr_; }
  std::span<const StateId> row_indices() const { return rows_; }
  std::span<const double> flat_values() const { return values_; }
  std::span<double> flat_values() { return values_; }

  bool same_support(const SparseColumnMatrix& other) const {
    return dim_ == other.dim_ && col_ptr_ == other.col_ptr_ && rows_ == other.rows_;
  }
  bool operator==(const SparseColumnMatrix&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<StateId> rows_;
  std::vector<double> values_;
};

/// Sparse matrix whose stored values are nonnegative and whose nonempty
/// columns each sum to one. Column j holds the next-state distribution
/// from state j.
class ColumnStochasticMatrix {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ColumnStochasticMatrix() = default;
  /// Throws DataError when a value is negative or a nonempty column does not
  /// sum to one within kSumTolerance.
  explicit ColumnStochasticMatrix(SparseColumnMatrix m);

  const SparseColumnMatrix& data() const { return m_; }
  std::size_t dim() const { return m_.dim(); }
  std::size_t nnz() const { return m_.nnz(); }
  std::span<const StateId> rows(StateId col) const { return m_.rows(col); }
  std::span<const double> values(StateId col) const { return m_.values(col); }
  bool column_empty(StateId col) const { return m_.column_empty(col); }
  double at(StateId row, StateId col) const { return m_.at(row, col); }

  bool operator==(const ColumnStochasticMatrix&) const = default;

 private:
  SparseColumnMatrix m_;
};

/// Euclidean projection of `w` onto the probability simplex restricted to
/// the nonzero entries of `w`; zero entries stay zero. Throws DataError
/// when `w` has no nonzero entry.
std::vector<double> project_to_simplex(std::span<const double> w);

/// In-place variant of project_to_simplex. `scratch` is reused between
/// calls to avoid allocation.
void project_to_simplex_inplace(std::span<double> w, std::vector<double>& scratch);

/// Projects every nonempty column independently. Throws DataError naming
/// the column when one has no nonzero entry.
ColumnStochasticMatrix project_columns(SparseColumnMatrix m, unsigned threads = 1);

/// "col<TAB>row<TAB>value" per stored entry, column-major.
void write_matrix(std::ostream& out, const SparseColumnMatrix& m);

}  // namespace rhomp
