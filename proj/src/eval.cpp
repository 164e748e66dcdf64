#include "rhomp/eval.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "rhomp/parallel.hpp"

namespace rhomp {

SparseVector MarkovPredictor::scores(std::span<const StateId> history) const {
  return mc_predict(model_, history);
}

SparseVector KneserNeyPredictor::scores(std::span<const StateId> history) const {
  const auto dense = kn_predict(model_, history);
  SparseVector out;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] <= 0.0) continue;
    out.index.push_back(static_cast<StateId>(i));
    out.value.push_back(dense[i]);
  }
  return out;
}

SparseVector RhompPredictor::scores(std::span<const StateId> history) const {
  bool any = false;
  for (std::size_t r = 0; r < model_.order() && r < history.size(); ++r)
    any = any || (model_.weights()[r] > 0.0 && history[r] < model_.num_states() &&
                  !model_.matrix(r).column_empty(history[r]));
  if (!any) return {};
  return transition_distribution(model_, history);
}

Cascade::Cascade(std::vector<std::shared_ptr<const Predictor>> members) : members_(std::move(members)) {
  if (members_.empty()) throw DataError("a cascade needs at least one member");
  for (std::size_t k = 0; k < members_.size(); ++k) {
    if (!members_[k]) throw DataError(fmt::format("missing cascade member of order {}", k + 1));
    if (members_[k]->order() != k + 1)
      throw DataError(fmt::format("cascade slot {} holds an order-{} model", k + 1, members_[k]->order()));
  }
}

SparseVector Cascade::scores(std::span<const StateId> history) const {
  if (history.empty()) throw DataError("cascade prediction needs at least one history state");
  if (members_.empty()) throw DataError("empty cascade");
  const std::size_t r = std::min(history.size(), members_.size());
  return members_[r - 1]->scores(history.first(r));
}

Cascade Cascade::prefix(std::size_t order) const {
  if (order < 1 || order > members_.size())
    throw DataError(fmt::format("cascade of order {} has no prefix of order {}", members_.size(), order));
  return Cascade({members_.begin(), members_.begin() + static_cast<std::ptrdiff_t>(order)});
}

// ---------------------------------------------------------------------------
// Metrics

int precision_at_k(std::span<const StateId> ranked, StateId truth, std::size_t k) {
  const std::size_t n = std::min(k, ranked.size());
  return std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), truth) !=
                 ranked.begin() + static_cast<std::ptrdiff_t>(n)
             ? 1
             : 0;
}

double reciprocal_rank(std::span<const StateId> ranked, StateId truth) {
  auto it = std::find(ranked.begin(), ranked.end(), truth);
  if (it == ranked.end()) return 0.0;
  return 1.0 / static_cast<double>(it - ranked.begin() + 1);
}

std::size_t rank_of(const SparseVector& scores, StateId truth) {
  const double target = scores.at(truth);
  if (!(target > 0.0)) return 0;
  std::size_t ahead = 0;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    const double s = scores.value[n];
    if (s > target || (s == target && scores.index[n] < truth)) ++ahead;
  }
  return ahead + 1;
}

double EvalReport::precision_at(std::size_t k) const {
  for (std::size_t n = 0; n < ks.size(); ++n)
    if (ks[n] == k) return precision[n];
  throw DataError(fmt::format("precision@{} was not evaluated", k));
}

EvalReport evaluate(const Cascade& cascade, const TrailCorpus& test, std::span<const std::size_t> ks_in,
                    std::span<const std::uint64_t> train_counts, unsigned threads) {
  std::vector<std::size_t> ks(ks_in.begin(), ks_in.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty() || ks.front() < 1) throw DataError("ks must be nonempty and at least 1");
  test.validate();

  struct Position {
    std::size_t trail;
    std::size_t t;
  };
  std::vector<Position> positions;
  for (std::size_t n = 0; n < test.trails.size(); ++n)
    for (std::size_t t = 1; t < test.trails[n].size(); ++t) positions.push_back({n, t});
  if (positions.empty()) throw DataError("test corpus has no transitions");

  const std::size_t n_states = test.num_states;
  const std::size_t m = cascade.order();
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (positions.size() + kBlock - 1) / kBlock;
  std::vector<double> rr_partial(blocks, 0.0);
  // Per-block integer tallies: state -> (hits per k, total).
  struct Tally {
    std::vector<std::uint64_t> hits;   // n_states * ks
    std::vector<std::uint64_t> total;  // n_states
  };
  std::vector<Tally> tallies(blocks);

  parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1) {
    Trail history;
    for (std::size_t b = b0; b < b1; ++b) {
      auto& tally = tallies[b];
      tally.hits.assign(n_states * ks.size(), 0);
      tally.total.assign(n_states, 0);
      double rr = 0.0;
      const std::size_t end = std::min(positions.size(), (b + 1) * kBlock);
      for (std::size_t p = b * kBlock; p < end; ++p) {
        const auto& trail = test.trails[positions[p].trail];
        const std::size_t t = positions[p].t;
        history.clear();
        for (std::size_t back = 1; back <= std::min(m, t); ++back) history.push_back(trail[t - back]);
        const StateId truth = trail[t];
        const std::size_t rank = rank_of(cascade.scores(history), truth);
        if (rank > 0) rr += 1.0 / static_cast<double>(rank);
        ++tally.total[truth];
        for (std::size_t q = 0; q < ks.size(); ++q)
          if (rank > 0 && rank <= ks[q]) ++tally.hits[truth * ks.size() + q];
      }
      rr_partial[b] = rr;
    }
  });

  EvalReport report;
  report.ks = ks;
  report.n_transitions = positions.size();
  double rr_sum = 0.0;
  for (double v : rr_partial) rr_sum += v;
  report.mrr = rr_sum / static_cast<double>(positions.size());

  std::vector<std::uint64_t> hits(n_states * ks.size(), 0), total(n_states, 0);
  for (const auto& tally : tallies) {
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += tally.hits[i];
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += tally.total[i];
  }
  std::vector<std::uint64_t> correct(ks.size(), 0);
  for (StateId s = 0; s < n_states; ++s) {
    if (total[s] == 0) continue;
    StateRecord rec;
    rec.state = s;
    rec.train_count = s < train_counts.size() ? train_counts[s] : 0;
    rec.total = total[s];
    rec.correct.assign(hits.begin() + static_cast<std::ptrdiff_t>(s * ks.size()),
                       hits.begin() + static_cast<std::ptrdiff_t>((s + 1) * ks.size()));
    for (std::size_t q = 0; q < ks.size(); ++q) correct[q] += rec.correct[q];
    report.per_state.push_back(std::move(rec));
  }
  for (std::size_t q = 0; q < ks.size(); ++q)
    report.precision.push_back(static_cast<double>(correct[q]) / static_cast<double>(positions.size()));
  return report;
}

std::vector<Bucket> frequency_buckets(const EvalReport& report, std::uint64_t min_transitions,
                                      std::size_t min_states, std::size_t k) {
  std::size_t q = report.ks.size();
  for (std::size_t n = 0; n < report.ks.size(); ++n)
    if (report.ks[n] == k) q = n;
  if (q == report.ks.size()) throw DataError(fmt::format("precision@{} was not evaluated", k));

  std::vector<const StateRecord*> order;
  for (const auto& rec : report.per_state) order.push_back(&rec);
  std::stable_sort(order.begin(), order.end(), [](const StateRecord* a, const StateRecord* b) {
    return a->train_count != b->train_count ? a->train_count > b->train_count : a->state < b->state;
  });

  std::vector<std::vector<const StateRecord*>> groups;
  std::vector<const StateRecord*> current;
  std::uint64_t transitions = 0;
  for (const auto* rec : order) {
    current.push_back(rec);
    transitions += rec->total;
    if (transitions >= min_transitions && current.size() >= min_states) {
      groups.push_back(std::move(current));
      current.clear();
      transitions = 0;
    }
  }
  if (!current.empty()) {
    if (groups.empty()) groups.push_back(std::move(current));
    else groups.back().insert(groups.back().end(), current.begin(), current.end());
  }

  std::vector<Bucket> out;
  for (const auto& g : groups) {
    Bucket b;
    std::uint64_t hits = 0;
    std::vector<double> counts;
    for (const auto* rec : g) {
      b.states.push_back(rec->state);
      b.transitions += rec->total;
      hits += rec->correct[q];
      counts.push_back(static_cast<double>(rec->train_count));
    }
    std::sort(counts.begin(), counts.end());
    const std::size_t mid = counts.size() / 2;
    b.median_train_count = counts.size() % 2 ? counts[mid] : 0.5 * (counts[mid - 1] + counts[mid]);
    b.precision = b.transitions ? static_cast<double>(hits) / static_cast<double>(b.transitions) : 0.0;
    out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training cascades and sweeps

CascadeFit fit_cascade(Family family, const TransitionCounts& counts, std::size_t order,
                       const FamilyOptions& options) {
  if (order < 1) throw DataError("cascade order must be at least 1");
  if (counts.order() < order)
    throw DataError(fmt::format("order-{} cascade needs counts of order >= {}", order, order));

  std::vector<std::shared_ptr<const Predictor>> members;
  CascadeFit fit;
  for (std::size_t r = 1; r <= order; ++r) {
    switch (family) {
      case Family::Mc:
        members.push_back(std::make_shared<MarkovPredictor>(fit_mc(counts, r)));
        break;
      case Family::Kneser:
        members.push_back(std::make_shared<KneserNeyPredictor>(fit_kneser_ney(counts, r)));
        break;
      case Family::Rhomp: {
        const auto level_counts = counts.truncated(r);
        FitResult result;
        if (r == 1) {
          const double w[] = {1.0};
          result = fit_fixed_weights(level_counts, w, options.trainer);
        } else if (r == 2) {
          if (options.alpha) {
            const double w[] = {*options.alpha, 1.0 - *options.alpha};
            result = fit_fixed_weights(level_counts, w, options.trainer);
            fit.alpha = *options.alpha;
          } else {
            auto sel = select_alpha(level_counts, options.n_nodes, options.trainer);
            fit.alpha = sel.alpha;
            result = std::move(sel.fit);
          }
        } else {
          if (!fit.beta) fit.beta = options.beta ? *options.beta : beta_from_alpha(*fit.alpha);
          result = fit_fixed_weights(level_counts, weights_from_beta(*fit.beta, r), options.trainer);
        }
        fit.stalled = fit.stalled || result.trace.stalled;
        fit.traces.push_back(result.trace);
        fit.rhomp_models.push_back(result.model);
        members.push_back(std::make_shared<RhompPredictor>(std::move(result.model)));
        break;
      }
    }
  }
  fit.cascade = Cascade(std::move(members));
  return fit;
}

std::vector<SweepRow> order_sweep(const TrailCorpus& train, const TrailCorpus& test,
                                  std::size_t max_order, std::span<const Family> families,
                                  std::span<const std::size_t> ks, const FamilyOptions& options) {
  if (max_order < 1) throw DataError("max order must be at least 1");
  const auto counts = count_transitions(train, max_order, options.trainer.threads);
  std::vector<SweepRow> rows;
  for (Family f : families) {
    const auto fit = fit_cascade(f, counts, max_order, options);
    for (std::size_t r = 1; r <= max_order; ++r)
      rows.push_back({f, r, evaluate(fit.cascade.prefix(r), test, ks, counts.unigram(), options.trainer.threads)});
  }
  return rows;
}

}  // namespace rhomp
