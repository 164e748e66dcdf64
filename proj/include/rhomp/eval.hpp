#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rhomp/baselines.hpp"
#include "rhomp/corpus.hpp"
#include "rhomp/family.hpp"
#include "rhomp/model.hpp"
#include "rhomp/trainer.hpp"

namespace rhomp {

/// A next-state scorer conditioned on exactly order() history states, most
/// recent first. States missing from the result have score zero.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t order() const = 0;
  virtual SparseVector scores(std::span<const StateId> history) const = 0;
};

class MarkovPredictor final : public Predictor {
 public:
  explicit MarkovPredictor(MarkovModel model) : model_(std::move(model)) {}
  std::size_t order() const override { return model_.order(); }
  SparseVector scores(std::span<const StateId> history) const override;
  const MarkovModel& model() const { return model_; }

 private:
  MarkovModel model_;
};

class KneserNeyPredictor final : public Predictor {
 public:
  explicit KneserNeyPredictor(KneserNeyModel model) : model_(std::move(model)) {}
  std::size_t order() const override { return model_.order(); }
  SparseVector scores(std::span<const StateId> history) const override;
  const KneserNeyModel& model() const { return model_; }

 private:
  KneserNeyModel model_;
};

/// Histories where no weighted slot has an observed column score nothing.
class RhompPredictor final : public Predictor {
 public:
  explicit RhompPredictor(RhompModel model) : model_(std::move(model)) {}
  std::size_t order() const override { return model_.order(); }
  SparseVector scores(std::span<const StateId> history) const override;
  const RhompModel& model() const { return model_; }

 private:
  RhompModel model_;
};

/// Models of orders 1..m; a history of r states is served by the member of
/// order min(r, m).
class Cascade {
 public:
  Cascade() = default;
  /// Throws DataError unless members[k] has order k + 1 for every k.
  explicit Cascade(std::vector<std::shared_ptr<const Predictor>> members);

  std::size_t order() const { return members_.size(); }
  const Predictor& member(std::size_t order) const { return *members_.at(order - 1); }
  /// `history` is most recent first and must be nonempty.
  SparseVector scores(std::span<const StateId> history) const;
  /// Cascade restricted to orders 1..order.
  Cascade prefix(std::size_t order) const;

 private:
  std::vector<std::shared_ptr<const Predictor>> members_;
};

/// 1 when `truth` is among the first k entries of `ranked`, else 0.
int precision_at_k(std::span<const StateId> ranked, StateId truth, std::size_t k);
/// 1 / (1-based position of truth), or 0 when absent.
double reciprocal_rank(std::span<const StateId> ranked, StateId truth);

/// Position of `truth` in the ranking of `scores` (descending score, then
/// ascending index, zero scores unranked); 0 when unranked.
std::size_t rank_of(const SparseVector& scores, StateId truth);

struct StateRecord {
  StateId state = 0;
  std::uint64_t train_count = 0;
  std::vector<std::uint64_t> correct;  ///< aligned with EvalReport::ks
  std::uint64_t total = 0;
};

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> precision;  ///< aligned with ks
  double mrr = 0.0;
  std::size_t n_transitions = 0;
  /// One record per state occurring as a true next state, by state index.
  std::vector<StateRecord> per_state;

  /// Throws DataError when k was not evaluated.
  double precision_at(std::size_t k) const;
};

/// Scores every transition of `test` with the cascade member matching the
/// available history. `ks` must be nonempty with entries >= 1 (they are
/// sorted and deduplicated). `train_counts`, when given, fills
/// StateRecord::train_count. Throws DataError on an empty test stream.
EvalReport evaluate(const Cascade& cascade, const TrailCorpus& test, std::span<const std::size_t> ks,
                    std::span<const std::uint64_t> train_counts = {}, unsigned threads = 1);

struct Bucket {
  std::vector<StateId> states;
  double median_train_count = 0.0;
  std::uint64_t transitions = 0;
  /// Pooled precision@k over the bucket's transitions.
  double precision = 0.0;
};

/// Groups states by descending training count (ties by index) greedily until
/// a group has at least `min_transitions` test transitions and `min_states`
/// states. A trailing group short of either threshold joins the previous
/// one. Throws DataError when k was not evaluated.
std::vector<Bucket> frequency_buckets(const EvalReport& report, std::uint64_t min_transitions,
                                      std::size_t min_states, std::size_t k);

struct FamilyOptions {
  TrainerConfig trainer;
  std::size_t n_nodes = 15;
  /// Fixed order-2 alpha; chosen by interpolation when absent.
  std::optional<double> alpha;
  /// Fixed beta for orders above 2; derived from the order-2 alpha when absent.
  std::optional<double> beta;
};

struct CascadeFit {
  Cascade cascade;
  std::optional<double> alpha;
  std::optional<double> beta;
  /// RHOMP members by order (empty for other families).
  std::vector<RhompModel> rhomp_models;
  std::vector<FitTrace> traces;
  bool stalled = false;
};

/// Trains members of orders 1..order for one family. `counts` must have
/// order >= `order`.
CascadeFit fit_cascade(Family family, const TransitionCounts& counts, std::size_t order,
                       const FamilyOptions& options);

struct SweepRow {
  Family family;
  std::size_t order;
  EvalReport report;
};

/// For each family, trains cascades at orders 1..max_order on `train` and
/// evaluates each on `test`. RHOMP orders above 2 use truncated-geometric
/// weights from the order-2 alpha (or options.beta).
std::vector<SweepRow> order_sweep(const TrailCorpus& train, const TrailCorpus& test,
                                  std::size_t max_order, std::span<const Family> families,
                                  std::span<const std::size_t> ks, const FamilyOptions& options);

}  // namespace rhomp
