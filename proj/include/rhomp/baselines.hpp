#pragma once

#include <map>
#include <span>
#include <vector>

#include "rhomp/corpus.hpp"
#include "rhomp/types.hpp"

namespace rhomp {

/// Maximum-likelihood Markov chain of order m. Keeps every order 1..m so
/// that unseen contexts fall back to shorter ones and finally to the
/// unigram state frequencies.
class MarkovModel {
 public:
  MarkovModel() = default;
  MarkovModel(std::size_t num_states, std::vector<std::map<std::vector<StateId>, SparseVector>> levels,
              SparseVector unigram);

  std::size_t order() const { return levels_.size(); }
  std::size_t num_states() const { return num_states_; }
  /// Stored distribution for a context of length 1..order, or null.
  const SparseVector* lookup(std::span<const StateId> context) const;
  const SparseVector& unigram() const { return unigram_; }

 private:
  std::size_t num_states_ = 0;
  std::vector<std::map<std::vector<StateId>, SparseVector>> levels_;
  SparseVector unigram_;
};

/// P(i | ctx) = c(i, ctx) / sum_l c(l, ctx) for every observed context of
/// length 1..order. Throws DataError when counts.order() < order or the
/// counts hold no state occurrences.
MarkovModel fit_mc(const TransitionCounts& counts, std::size_t order);

/// Distribution for the first model.order() states of `history` (most
/// recent first), backing off to shorter contexts and then the unigram.
/// Throws DataError when the history is shorter than the model order.
SparseVector mc_predict(const MarkovModel& model, std::span<const StateId> history);

/// Interpolated Kneser-Ney with a single absolute discount per level.
///
/// Level m uses raw counts c(i, ctx); level r < m uses continuation counts
/// N1+(. i ctx): the number of distinct older states x with c(i, ctx, x) > 0.
/// The recursion bottoms out at the continuation unigram
/// N1+(. i) / N1+(. .) taken from first-order types.
class KneserNeyModel {
 public:
  struct ContextStats {
    std::vector<std::pair<StateId, double>> successors;  ///< sorted by state
    double total = 0.0;
  };
  struct Level {
    double discount = 0.0;
    std::map<std::vector<StateId>, ContextStats> contexts;
  };

  KneserNeyModel() = default;
  KneserNeyModel(std::size_t num_states, std::vector<Level> levels, std::vector<double> continuation_unigram);

  std::size_t order() const { return levels_.size(); }
  std::size_t num_states() const { return num_states_; }
  /// Discount of level r in [1, order].
  double discount(std::size_t r) const { return levels_.at(r - 1).discount; }
  const Level& level(std::size_t r) const { return levels_.at(r - 1); }
  std::span<const double> continuation_unigram() const { return continuation_unigram_; }

 private:
  std::size_t num_states_ = 0;
  std::vector<Level> levels_;
  std::vector<double> continuation_unigram_;
};

/// n1 / (n1 + 2 n2) from counts of types seen exactly once and twice, or 0
/// when n1 + 2 n2 = 0.
double kneser_ney_discount(std::uint64_t n1, std::uint64_t n2);

/// Throws DataError when counts are empty or counts.order() < order.
KneserNeyModel fit_kneser_ney(const TransitionCounts& counts, std::size_t order);

/// Dense distribution over all states for the first min(order, |history|)
/// history states. Throws DataError when the history is empty.
std::vector<double> kn_predict(const KneserNeyModel& model, std::span<const StateId> history);

}  // namespace rhomp
