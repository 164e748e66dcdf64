#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rhomp/types.hpp"

namespace rhomp {

/// Bijection between raw state tokens and dense indices [0, N).
class StateSpace {
 public:
  StateSpace() = default;
  /// Throws DataError on duplicate tokens.
  explicit StateSpace(std::vector<std::string> tokens);

  /// Index of `token`, appending it when unseen.
  StateId intern(std::string_view token);
  std::optional<StateId> find(std::string_view token) const;
  const std::string& token(StateId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  /// Space holding only `kept` (old indices), re-indexed in that order.
  StateSpace subset(std::span<const StateId> kept) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, StateId> index_;
};

/// Trails over a state space of `num_states` states.
struct TrailCorpus {
  std::size_t num_states = 0;
  std::vector<Trail> trails;

  std::size_t size() const { return trails.size(); }
  bool empty() const { return trails.empty(); }
  /// Number of consecutive pairs over all trails.
  std::size_t num_transitions() const;
  /// Throws DataError when an index is out of range or a trail is empty.
  void validate() const;

  bool operator==(const TrailCorpus&) const = default;
};

enum class TrailFormat { Whitespace, Comma };

struct ParsedCorpus {
  StateSpace states;
  TrailCorpus corpus;
};

/// Reads one trail per line, indexing tokens by first appearance. Blank
/// lines are skipped. Throws DataError naming the line for invalid UTF-8 or
/// empty comma fields, and DataError when no trail is found.
ParsedCorpus parse_trails(std::istream& in, TrailFormat format);

/// Reads trails against a fixed vocabulary. Unknown tokens split the trail
/// at that point (the token itself is dropped), as for pruned states.
TrailCorpus parse_trails(std::istream& in, TrailFormat format, const StateSpace& vocabulary);

void write_trails(std::ostream& out, const StateSpace& states, const TrailCorpus& corpus,
                  TrailFormat format);

struct PreprocessOptions {
  /// States occurring at most this many times are removed.
  std::uint64_t min_state_count = 20;
  bool drop_self_loops = true;
};

/// Collapses repeated consecutive states, removes rare states by splitting
/// trails around them, drops trails shorter than two states and re-indexes.
/// Rare-state removal is repeated until no remaining state falls at or
/// below the threshold, so the result is a fixed point.
ParsedCorpus preprocess(const StateSpace& states, const TrailCorpus& corpus,
                        const PreprocessOptions& options);

/// Seeded shuffle of whole trails; round(fraction * size) trails (clamped to
/// [1, size - 1]) go to the training side. Both sides keep input order.
std::pair<TrailCorpus, TrailCorpus> split_train_test(const TrailCorpus& corpus,
                                                     double train_fraction, std::uint64_t seed);

/// Count table for one history length r. Entries are keyed by
/// (i, ctx_1, ..., ctx_r): next state followed by the history, most recent
/// first. Keys are kept sorted and unique.
class CountTable {
 public:
  CountTable() = default;
  /// `keys` is flattened with stride r + 1; duplicate keys are summed.
  CountTable(std::size_t history, std::vector<StateId> keys, std::vector<std::uint64_t> counts);

  std::size_t history() const { return history_; }
  std::size_t size() const { return counts_.size(); }
  bool empty() const { return counts_.empty(); }

  std::span<const StateId> key(std::size_t e) const {
    return {keys_.data() + e * (history_ + 1), history_ + 1};
  }
  StateId next_state(std::size_t e) const { return keys_[e * (history_ + 1)]; }
  std::span<const StateId> context(std::size_t e) const { return key(e).subspan(1); }
  std::uint64_t count(std::size_t e) const { return counts_[e]; }

  /// Zero when the key is absent.
  std::uint64_t count_of(std::span<const StateId> key) const;
  /// Sum over next states for this context; zero when unseen.
  std::uint64_t context_total(std::span<const StateId> context) const;
  const std::map<std::vector<StateId>, std::uint64_t>& context_totals() const {
    return context_totals_;
  }
  std::uint64_t total() const { return total_; }

  bool operator==(const CountTable& other) const {
    return history_ == other.history_ && keys_ == other.keys_ && counts_ == other.counts_;
  }

 private:
  std::size_t history_ = 0;
  std::vector<StateId> keys_;
  std::vector<std::uint64_t> counts_;
  std::map<std::vector<StateId>, std::uint64_t> context_totals_;
  std::uint64_t total_ = 0;
};

/// Count tables for every history length 1..order plus state occurrences.
class TransitionCounts {
 public:
  TransitionCounts() = default;
  TransitionCounts(std::size_t order, std::size_t num_states, std::vector<std::uint64_t> unigram,
                   std::vector<CountTable> levels);

  std::size_t order() const { return levels_.size(); }
  std::size_t num_states() const { return num_states_; }
  /// Table for history length r in [1, order].
  const CountTable& level(std::size_t r) const;
  /// Occurrences of each state over all trail positions.
  std::span<const std::uint64_t> unigram() const { return unigram_; }
  bool empty() const { return levels_.empty() || levels_.front().empty(); }
  /// Copy keeping levels 1..order only.
  TransitionCounts truncated(std::size_t order) const;

  /// Entry-wise sum; both operands must agree on order and state count.
  static TransitionCounts merge(const TransitionCounts& a, const TransitionCounts& b);

  bool operator==(const TransitionCounts&) const = default;

 private:
  std::size_t num_states_ = 0;
  std::vector<std::uint64_t> unigram_;
  std::vector<CountTable> levels_;
};

/// Counts every order 1..order in one pass. With threads > 1 trails are
/// partitioned and the partial tables merged by addition.
TransitionCounts count_transitions(const TrailCorpus& corpus, std::size_t order,
                                   unsigned threads = 1);

/// "i<TAB>j[<TAB>k...]<TAB>count", lowest level first.
void write_counts(std::ostream& out, const TransitionCounts& counts);

}  // namespace rhomp
