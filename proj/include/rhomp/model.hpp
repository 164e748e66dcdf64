#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rhomp/stochastic.hpp"
#include "rhomp/types.hpp"

namespace rhomp {

/// Retrospective higher-order Markov process of order m.
///
/// Given history (h_0, ..., h_{m-1}), most recent first, the process picks
/// slot r with probability weights()[r] and then moves first-order from h_r
/// using matrix(r):
///
///     P(i | h) = sum_r weights()[r] * matrix(r)(i, h_r)
///
/// For m = 2 the weights are (alpha, 1 - alpha) and the matrices (R, Q).
class RhompModel {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  RhompModel() = default;
  /// Throws DataError unless weights are nonnegative, sum to one within
  /// kWeightTolerance, and all matrices share one dimension.
  RhompModel(std::vector<double> weights, std::vector<ColumnStochasticMatrix> matrices);

  std::size_t order() const { return weights_.size(); }
  std::size_t num_states() const { return matrices_.empty() ? 0 : matrices_.front().dim(); }
  std::span<const double> weights() const { return weights_; }
  /// Matrix for history slot `slot` (0 = most recent state).
  const ColumnStochasticMatrix& matrix(std::size_t slot) const { return matrices_.at(slot); }
  const std::vector<ColumnStochasticMatrix>& matrices() const { return matrices_; }

  bool operator==(const RhompModel&) const = default;

 private:
  std::vector<double> weights_;
  std::vector<ColumnStochasticMatrix> matrices_;
};

/// Next-state distribution for a full history (most recent first).
///
/// When a slot's column has no observed support the remaining slots are
/// reweighted proportionally. Throws DataError when the history length is
/// not the model order, a state is out of range, or no weighted slot has
/// support.
SparseVector transition_distribution(const RhompModel& model, std::span<const StateId> history);

/// Top-k states by probability, ties broken by ascending state index.
/// Zero-probability states are never ranked. Throws DataError when k < 1.
Ranking predict_topk(const RhompModel& model, std::span<const StateId> history, std::size_t k);

/// Truncated-geometric slot weights: alpha_r proportional to beta^(r-1).
/// beta = 0 gives (1, 0, ..., 0). Throws DataError unless 0 <= beta < 1.
std::vector<double> weights_from_beta(double beta, std::size_t order);

/// beta = (1 - alpha) / alpha, the inverse of weights_from_beta at order 2.
/// Throws DataError unless 1/2 < alpha < 1; pick beta explicitly otherwise.
double beta_from_alpha(double alpha);

struct StationaryResult {
  std::vector<double> distribution;
  /// ||x - Px||_1 at return.
  double residual = 0.0;
  std::size_t iterations = 0;
  /// False when the support graph of P is not strongly connected; the
  /// returned distribution is then one of several.
  bool irreducible = true;
  /// True when plain power iteration stalled (periodic chain) and the
  /// averaged iteration x <- (x + Px) / 2 produced the result.
  bool averaged = false;
};

/// Solves x = Px with P = sum_r alpha_r R^(r), starting from uniform.
/// Columns of P are reweighted the same way as transition_distribution.
/// Throws DataError when some column of P is empty and NumericalError when
/// neither iteration reaches `tolerance` within `max_iterations` each.
StationaryResult stationary_distribution(const RhompModel& model, double tolerance = 1e-10,
                                         std::size_t max_iterations = 100000);

/// Samples a trail of `length` states. The first m states are `warm_start`
/// (oldest first). Each step draws from transition_distribution's mixture,
/// so slots with an empty column are skipped. Throws DataError when no
/// weighted slot has a column, when warm_start does not hold m valid
/// states, or when length < m.
Trail sample_trail(const RhompModel& model, std::size_t length, std::uint64_t seed,
                   std::span<const StateId> warm_start);

struct FactorPair {
  double alpha = 0.0;
  ColumnStochasticMatrix r;
  ColumnStochasticMatrix q;
};

/// Rescales nonnegative factors with constant column sums r~ and q~
/// satisfying alpha~ r~ + (1 - alpha~) q~ = 1 into (alpha~ r~, R~/r~, Q~/q~),
/// which leaves every mixture alpha R_ij + (1 - alpha) Q_ik unchanged.
/// Throws DataError when column sums are unequal, zero, or violate the
/// constraint (tolerance 1e-9).
FactorPair normalize_factor_pair(const SparseColumnMatrix& r_tilde,
                                 const SparseColumnMatrix& q_tilde, double alpha_tilde);

/// Ranks the support of `scores` by descending score then ascending index,
/// keeping at most k entries and skipping zero scores.
Ranking rank_scores(const SparseVector& scores, std::size_t k);

}  // namespace rhomp
