#include "rhomp/baselines.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace rhomp {

MarkovModel::MarkovModel(std::size_t num_states,
                         std::vector<std::map<std::vector<StateId>, SparseVector>> levels,
                         SparseVector unigram)
    : num_states_(num_states), levels_(std::move(levels)), unigram_(std::move(unigram)) {}

const SparseVector* MarkovModel::lookup(std::span<const StateId> context) const {
  if (context.empty() || context.size() > levels_.size()) return nullptr;
  const auto& level = levels_[context.size() - 1];
  auto it = level.find(std::vector<StateId>(context.begin(), context.end()));
  return it == level.end() ? nullptr : &it->second;
}

MarkovModel fit_mc(const TransitionCounts& counts, std::size_t order) {
  if (order < 1 || counts.order() < order)
    throw DataError(fmt::format("cannot fit an order-{} chain from order-{} counts", order, counts.order()));

  std::vector<std::map<std::vector<StateId>, SparseVector>> levels(order);
  for (std::size_t r = 1; r <= order; ++r) {
    const auto& table = counts.level(r);
    auto& out = levels[r - 1];
    // Entries are sorted by next state, so each context's vector is built in
    // increasing index order.
    for (std::size_t e = 0; e < table.size(); ++e) {
      auto ctx = table.context(e);
      auto& vec = out[std::vector<StateId>(ctx.begin(), ctx.end())];
      vec.index.push_back(table.next_state(e));
      vec.value.push_back(static_cast<double>(table.count(e)) /
                          static_cast<double>(table.context_total(ctx)));
    }
  }

  SparseVector unigram;
  std::uint64_t total = 0;
  for (auto c : counts.unigram()) total += c;
  if (total == 0) throw DataError("no state occurrences to fit a chain");
  for (std::size_t s = 0; s < counts.num_states(); ++s) {
    if (counts.unigram()[s] == 0) continue;
    unigram.index.push_back(static_cast<StateId>(s));
    unigram.value.push_back(static_cast<double>(counts.unigram()[s]) / static_cast<double>(total));
  }
  return MarkovModel(counts.num_states(), std::move(levels), std::move(unigram));
}

SparseVector mc_predict(const MarkovModel& model, std::span<const StateId> history) {
  if (history.size() < model.order())
    throw DataError(fmt::format("history of {} states for an order-{} chain", history.size(), model.order()));
  for (std::size_t r = model.order(); r >= 1; --r)
    if (const auto* v = model.lookup(history.first(r))) return *v;
  return model.unigram();
}

// ---------------------------------------------------------------------------

KneserNeyModel::KneserNeyModel(std::size_t num_states, std::vector<Level> levels,
                               std::vector<double> continuation_unigram)
    : num_states_(num_states), levels_(std::move(levels)),
      continuation_unigram_(std::move(continuation_unigram)) {
  for (const auto& l : levels_)
    if (!(l.discount >= 0.0 && l.discount <= 1.0))
      throw DataError(fmt::format("discount {} outside [0, 1]", l.discount));
}

double kneser_ney_discount(std::uint64_t n1, std::uint64_t n2) {
  const double denom = static_cast<double>(n1) + 2.0 * static_cast<double>(n2);
  return denom > 0.0 ? static_cast<double>(n1) / denom : 0.0;
}

namespace {

/// Builds one level from (next, context) -> count items sorted by next.
KneserNeyModel::Level make_level(const std::map<std::vector<StateId>, std::uint64_t>& items) {
  KneserNeyModel::Level level;
  std::uint64_t n1 = 0, n2 = 0;
  for (const auto& [key, c] : items) {
    if (c == 1) ++n1;
    if (c == 2) ++n2;
    auto& stats = level.contexts[std::vector<StateId>(key.begin() + 1, key.end())];
    stats.successors.emplace_back(key.front(), static_cast<double>(c));
    stats.total += static_cast<double>(c);
  }
  level.discount = kneser_ney_discount(n1, n2);
  return level;
}

}  // namespace

KneserNeyModel fit_kneser_ney(const TransitionCounts& counts, std::size_t order) {
  if (order < 1 || counts.order() < order)
    throw DataError(fmt::format("cannot fit order-{} Kneser-Ney from order-{} counts", order, counts.order()));
  if (counts.empty()) throw DataError("cannot fit Kneser-Ney to empty counts");

  std::vector<KneserNeyModel::Level> levels(order);
  for (std::size_t r = 1; r <= order; ++r) {
    std::map<std::vector<StateId>, std::uint64_t> items;
    if (r == order) {
      const auto& table = counts.level(r);
      for (std::size_t e = 0; e < table.size(); ++e) {
        auto k = table.key(e);
        items.emplace(std::vector<StateId>(k.begin(), k.end()), table.count(e));
      }
    } else {
      // Each distinct (i, ctx, x) at level r + 1 adds one continuation.
      const auto& longer = counts.level(r + 1);
      for (std::size_t e = 0; e < longer.size(); ++e) {
        auto k = longer.key(e);
        ++items[std::vector<StateId>(k.begin(), k.end() - 1)];
      }
    }
    levels[r - 1] = make_level(items);
  }

  std::vector<double> cont(counts.num_states(), 0.0);
  const auto& bigrams = counts.level(1);
  for (std::size_t e = 0; e < bigrams.size(); ++e) cont[bigrams.next_state(e)] += 1.0;
  for (double& v : cont) v /= static_cast<double>(bigrams.size());
  return KneserNeyModel(counts.num_states(), std::move(levels), std::move(cont));
}

std::vector<double> kn_predict(const KneserNeyModel& model, std::span<const StateId> history) {
  if (history.empty()) throw DataError("Kneser-Ney prediction needs at least one history state");
  std::vector<double> p(model.continuation_unigram().begin(), model.continuation_unigram().end());
  const std::size_t top = std::min(model.order(), history.size());
  for (std::size_t r = 1; r <= top; ++r) {
    const auto& level = model.level(r);
    auto it = level.contexts.find(std::vector<StateId>(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(r)));
    if (it == level.contexts.end()) continue;
    const auto& stats = it->second;
    const double d = level.discount;
    const double lambda = d * static_cast<double>(stats.successors.size()) / stats.total;
    for (double& v : p) v *= lambda;
    for (const auto& [i, c] : stats.successors) p[i] += std::max(c - d, 0.0) / stats.total;
  }
  return p;
}

}  // namespace rhomp
