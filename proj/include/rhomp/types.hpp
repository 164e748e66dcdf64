#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rhomp {

using StateId = std::uint32_t;
using Trail = std::vector<StateId>;

/// Sparse vector with strictly increasing indices.
struct SparseVector {
  std::vector<StateId> index;
  std::vector<double> value;

  std::size_t size() const { return index.size(); }
  bool empty() const { return index.empty(); }
  double sum() const;
  /// Value at `i`, zero when `i` is not stored.
  double at(StateId i) const;
};

/// Ranked (state, score) list, best first.
using Ranking = std::vector<std::pair<StateId, double>>;

// Error hierarchy. The CLI maps each kind onto a distinct exit code.

/// Malformed input, invalid arguments, violated model invariants.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimization stalls and non-convergence that cannot be recovered.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rhomp
