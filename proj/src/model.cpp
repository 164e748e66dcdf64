#include "rhomp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "rhomp/random.hpp"

namespace rhomp {

RhompModel::RhompModel(std::vector<double> weights, std::vector<ColumnStochasticMatrix> matrices)
    : weights_(std::move(weights)), matrices_(std::move(matrices)) {
  if (weights_.empty()) throw DataError("model order must be at least 1");
  if (weights_.size() != matrices_.size())
    throw DataError(fmt::format("{} weights for {} matrices", weights_.size(), matrices_.size()));
  double total = 0.0;
  for (double a : weights_) {
    if (!(a >= 0.0)) throw DataError(fmt::format("negative slot weight {}", a));
    total += a;
  }
  if (std::abs(total - 1.0) > kWeightTolerance)
    throw DataError(fmt::format("slot weights sum to {:.17g}, not 1", total));
  for (const auto& m : matrices_)
    if (m.dim() != matrices_.front().dim()) throw DataError("matrices differ in dimension");
}

namespace {

void check_history(const RhompModel& model, std::span<const StateId> history) {
  if (history.size() > model.order())
    throw DataError(fmt::format("history of {} states exceeds order {}", history.size(), model.order()));
  if (history.size() < model.order())
    throw DataError(fmt::format("history of {} states is shorter than order {}; use the order-{} model",
                                history.size(), model.order(), history.size()));
  for (StateId s : history)
    if (s >= model.num_states())
      throw DataError(fmt::format("state {} outside [0, {})", s, model.num_states()));
}

/// Slot weights rescaled over slots whose column is nonempty.
std::vector<double> effective_weights(const RhompModel& model, std::span<const StateId> history) {
  std::vector<double> w(model.weights().begin(), model.weights().end());
  double available = 0.0;
  bool missing = false;
  for (std::size_t r = 0; r < w.size(); ++r) {
    if (model.matrix(r).column_empty(history[r])) {
      missing = missing || w[r] > 0.0;
      w[r] = 0.0;
    }
    available += w[r];
  }
  if (available <= 0.0) throw DataError("no weighted history slot has an observed column");
  if (missing)
    for (double& a : w) a /= available;
  return w;
}

}  // namespace

SparseVector transition_distribution(const RhompModel& model, std::span<const StateId> history) {
  check_history(model, history);
  const auto w = effective_weights(model, history);

  std::vector<std::pair<StateId, double>> terms;
  for (std::size_t r = 0; r < w.size(); ++r) {
    if (w[r] == 0.0) continue;
    auto rows = model.matrix(r).rows(history[r]);
    auto vals = model.matrix(r).values(history[r]);
    for (std::size_t k = 0; k < rows.size(); ++k) terms.emplace_back(rows[k], w[r] * vals[k]);
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector out;
  for (const auto& [i, p] : terms) {
    if (!out.index.empty() && out.index.back() == i) {
      out.value.back() += p;
    } else {
      out.index.push_back(i);
      out.value.push_back(p);
    }
  }
  return out;
}

Ranking rank_scores(const SparseVector& scores, std::size_t k) {
  Ranking all;
  all.reserve(scores.size());
  for (std::size_t n = 0; n < scores.size(); ++n)
    if (scores.value[n] > 0.0) all.emplace_back(scores.index[n], scores.value[n]);
  auto better = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  if (k < all.size()) {
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
    all.resize(k);
  } else {
    std::sort(all.begin(), all.end(), better);
  }
  return all;
}

Ranking predict_topk(const RhompModel& model, std::span<const StateId> history, std::size_t k) {
  if (k < 1) throw DataError("k must be at least 1");
  return rank_scores(transition_distribution(model, history), k);
}

std::vector<double> weights_from_beta(double beta, std::size_t order) {
  if (!(beta >= 0.0 && beta < 1.0)) throw DataError(fmt::format("beta {} outside [0, 1)", beta));
  if (order < 1) throw DataError("order must be at least 1");
  std::vector<double> w(order);
  double term = 1.0, total = 0.0;
  for (auto& a : w) {
    a = term;
    total += term;
    term *= beta;
  }
  // Dividing by the partial geometric sum is (1 - beta) / (1 - beta^m).
  for (auto& a : w) a /= total;
  return w;
}

double beta_from_alpha(double alpha) {
  if (!(alpha > 0.5 && alpha < 1.0))
    throw DataError(fmt::format(
        "alpha* = {} gives beta >= 1 (or is not a probability); choose beta explicitly", alpha));
  return (1.0 - alpha) / alpha;
}

// ---------------------------------------------------------------------------
// Stationary distribution

namespace {

SparseColumnMatrix mixture_matrix(const RhompModel& model) {
  const std::size_t n = model.num_states();
  std::vector<Triplet> triplets;
  std::vector<StateId> history(model.order());
  for (StateId j = 0; j < n; ++j) {
    std::fill(history.begin(), history.end(), j);
    std::vector<double> w;
    try {
      w = effective_weights(model, history);
    } catch (const DataError&) {
      throw DataError(fmt::format("state {} has no outgoing distribution in any slot", j));
    }
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (w[r] == 0.0) continue;
      auto rows = model.matrix(r).rows(j);
      auto vals = model.matrix(r).values(j);
      for (std::size_t k = 0; k < rows.size(); ++k) triplets.push_back({j, rows[k], w[r] * vals[k]});
    }
  }
  return SparseColumnMatrix::from_triplets(n, std::move(triplets));
}

void multiply(const SparseColumnMatrix& p, std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (StateId j = 0; j < p.dim(); ++j) {
    auto rows = p.rows(j);
    auto vals = p.values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) y[rows[k]] += vals[k] * x[j];
  }
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

bool strongly_connected(const SparseColumnMatrix& p) {
  const std::size_t n = p.dim();
  if (n == 0) return true;
  // Edge j -> i whenever P(i, j) > 0.
  std::vector<std::vector<StateId>> forward(n), backward(n);
  for (StateId j = 0; j < n; ++j) {
    auto rows = p.rows(j);
    auto vals = p.values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (vals[k] <= 0.0) continue;
      forward[j].push_back(rows[k]);
      backward[rows[k]].push_back(j);
    }
  }
  auto reaches_all = [n](const std::vector<std::vector<StateId>>& adj) {
    std::vector<bool> seen(n, false);
    std::vector<StateId> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
      const StateId u = stack.back();
      stack.pop_back();
      for (StateId v : adj[u])
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          stack.push_back(v);
        }
    }
    return count == n;
  };
  return reaches_all(forward) && reaches_all(backward);
}

}  // namespace

StationaryResult stationary_distribution(const RhompModel& model, double tolerance,
                                         std::size_t max_iterations) {
  if (!(tolerance > 0.0)) throw DataError("stationary tolerance must be positive");
  const std::size_t n = model.num_states();
  if (n == 0) throw DataError("empty model");
  const auto p = mixture_matrix(model);

  StationaryResult result;
  result.irreducible = strongly_connected(p);

  std::vector<double> x(n, 1.0 / static_cast<double>(n)), y(n);
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    multiply(p, x, y);
    const double diff = l1_distance(x, y);
    x.swap(y);
    result.iterations = it;
    if (diff <= tolerance) break;
  }
  multiply(p, x, y);
  result.residual = l1_distance(x, y);

  if (result.residual > tolerance) {
    // Periodic chains oscillate under plain iteration; averaging each iterate
    // with its image removes the oscillation and keeps the fixed points.
    result.averaged = true;
    std::fill(x.begin(), x.end(), 1.0 / static_cast<double>(n));
    for (std::size_t it = 1; it <= max_iterations; ++it) {
      multiply(p, x, y);
      result.residual = l1_distance(x, y);
      result.iterations = it;
      if (result.residual <= tolerance) break;
      for (std::size_t i = 0; i < n; ++i) x[i] = 0.5 * (x[i] + y[i]);
    }
    if (result.residual > tolerance)
      throw NumericalError(fmt::format("stationary iteration did not reach {} (residual {})",
                                       tolerance, result.residual));
  }
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  for (double& v : x) v /= total;
  multiply(p, x, y);
  result.residual = l1_distance(x, y);
  result.distribution = std::move(x);
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

Trail sample_trail(const RhompModel& model, std::size_t length, std::uint64_t seed,
                   std::span<const StateId> warm_start) {
  const std::size_t m = model.order();
  if (warm_start.size() != m)
    throw DataError(fmt::format("warm start has {} states, model order is {}", warm_start.size(), m));
  if (length < m) throw DataError(fmt::format("trail length {} below model order {}", length, m));
  for (StateId s : warm_start)
    if (s >= model.num_states()) throw DataError(fmt::format("warm start state {} out of range", s));

  Rng rng(seed);
  Trail trail(warm_start.begin(), warm_start.end());
  trail.reserve(length);
  const auto weights = model.weights();
  std::vector<double> live(m);
  while (trail.size() < length) {
    // Slots whose column is empty drop out, as in transition_distribution.
    double total = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const bool empty = model.matrix(r).column_empty(trail[trail.size() - 1 - r]);
      live[r] = empty ? 0.0 : weights[r];
      total += live[r];
    }
    if (!(total > 0.0))
      throw DataError(fmt::format("no weighted slot has an observed column after {} states; cannot sample",
                                  trail.size()));
    double u = rng.uniform() * total;
    std::size_t slot = 0;
    while (slot + 1 < m && u >= live[slot]) u -= live[slot++];
    // Skip zero-weight tail slots that rounding could land on.
    while (live[slot] == 0.0 && slot > 0) --slot;

    const StateId from = trail[trail.size() - 1 - slot];
    const auto& mat = model.matrix(slot);
    auto rows = mat.rows(from);
    auto vals = mat.values(from);
    double v = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < rows.size() && v >= vals[k]) v -= vals[k++];
    while (vals[k] == 0.0 && k > 0) --k;
    trail.push_back(rows[k]);
  }
  return trail;
}

// ---------------------------------------------------------------------------
// Factor normalization

namespace {

double common_column_sum(const SparseColumnMatrix& m, const char* name) {
  if (m.dim() == 0) throw DataError(fmt::format("{} is empty", name));
  const double first = m.column_sum(0);
  for (StateId c = 0; c < m.dim(); ++c) {
    for (double v : m.values(c))
      if (!(v >= 0.0)) throw DataError(fmt::format("{} has a negative entry in column {}", name, c));
    if (std::abs(m.column_sum(c) - first) > 1e-9)
      throw DataError(fmt::format("{} column sums differ ({:.12g} vs {:.12g} in column {})", name,
                                  first, m.column_sum(c), c));
  }
  if (first <= 0.0) throw DataError(fmt::format("{} has zero column sums", name));
  return first;
}

ColumnStochasticMatrix scaled(SparseColumnMatrix m, double divisor) {
  for (double& v : m.flat_values()) v /= divisor;
  return ColumnStochasticMatrix(std::move(m));
}

}  // namespace

FactorPair normalize_factor_pair(const SparseColumnMatrix& r_tilde,
                                 const SparseColumnMatrix& q_tilde, double alpha_tilde) {
  if (!(alpha_tilde >= 0.0 && alpha_tilde <= 1.0))
    throw DataError(fmt::format("alpha~ = {} outside [0, 1]", alpha_tilde));
  if (r_tilde.dim() != q_tilde.dim()) throw DataError("factor matrices differ in dimension");
  const double r_sum = common_column_sum(r_tilde, "R~");
  const double q_sum = common_column_sum(q_tilde, "Q~");
  const double constraint = alpha_tilde * r_sum + (1.0 - alpha_tilde) * q_sum;
  if (std::abs(constraint - 1.0) > 1e-9)
    throw DataError(fmt::format("alpha~ r~ + (1 - alpha~) q~ = {:.12g}, not 1", constraint));
  return {std::clamp(alpha_tilde * r_sum, 0.0, 1.0), scaled(r_tilde, r_sum), scaled(q_tilde, q_sum)};
}

}  // namespace rhomp
