#pragma once

// Helpers shared by the unit tests and the acceptance harness. Oracles here
// deliberately avoid the library's own algorithms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rhomp/corpus.hpp"
#include "rhomp/model.hpp"
#include "rhomp/random.hpp"
#include "rhomp/stochastic.hpp"

namespace rhomp::testing {

inline ColumnStochasticMatrix make_stochastic(std::size_t dim, std::vector<Triplet> entries) {
  return ColumnStochasticMatrix(SparseColumnMatrix::from_triplets(dim, std::move(entries)));
}

/// Column-stochastic matrix with `support` random rows per column.
inline ColumnStochasticMatrix random_stochastic(std::size_t n, std::size_t support, Rng& rng) {
  std::vector<Triplet> t;
  std::vector<StateId> rows(n);
  for (StateId c = 0; c < n; ++c) {
    std::iota(rows.begin(), rows.end(), 0);
    for (std::size_t k = 0; k < support; ++k) std::swap(rows[k], rows[k + rng.below(n - k)]);
    std::vector<double> w(support);
    double sum = 0.0;
    for (auto& v : w) sum += v = 0.05 + rng.uniform();
    for (std::size_t k = 0; k < support; ++k) t.push_back({c, rows[k], w[k] / sum});
  }
  return make_stochastic(n, std::move(t));
}

inline RhompModel random_model(std::size_t n, std::vector<double> weights, std::size_t support, Rng& rng) {
  std::vector<ColumnStochasticMatrix> mats;
  for (std::size_t r = 0; r < weights.size(); ++r) mats.push_back(random_stochastic(n, support, rng));
  return RhompModel(std::move(weights), std::move(mats));
}

/// `n_trails` sampled trails of `length` states with random warm starts.
inline TrailCorpus sample_corpus(const RhompModel& model, std::size_t n_trails, std::size_t length,
                                 std::uint64_t seed) {
  Rng rng(seed);
  TrailCorpus c;
  c.num_states = model.num_states();
  for (std::size_t k = 0; k < n_trails; ++k) {
    Trail warm(model.order());
    for (auto& s : warm) s = static_cast<StateId>(rng.below(model.num_states()));
    c.trails.push_back(sample_trail(model, length, rng.next(), warm));
  }
  return c;
}

/// Squared Euclidean distance.
inline double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Brute-force QP: min ||x - w||^2 s.t. x >= 0, sum x = 1, x_i = 0 where
/// w_i = 0. Enumerates every candidate active set S, solves the
/// equality-constrained problem on S in closed form and keeps the best
/// feasible point. Exponential; for up to ~16 nonzeros.
inline std::vector<double> qp_enumerate(std::span<const double> w) {
  std::vector<std::size_t> nz;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) nz.push_back(i);
  std::vector<double> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << nz.size()); ++mask) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t b = 0; b < nz.size(); ++b)
      if (mask >> b & 1) sum += w[nz[b]], ++count;
    const double shift = (sum - 1.0) / count;
    std::vector<double> x(w.size(), 0.0);
    bool feasible = true;
    for (std::size_t b = 0; b < nz.size(); ++b)
      if (mask >> b & 1) {
        x[nz[b]] = w[nz[b]] - shift;
        feasible = feasible && x[nz[b]] >= 0.0;
      }
    if (!feasible) continue;
    const double d = dist2(x, w);
    if (d < best_d) best_d = d, best = std::move(x);
  }
  return best;
}

/// QP oracle through the dual: the minimizer is max(w - t, 0) on the support
/// for the unique t with sum max(w_i - t, 0) = 1. Finds t by bisection.
inline std::vector<double> qp_bisect(std::span<const double> w) {
  double lo = -1.0, hi = 0.0;
  for (double v : w) lo = std::min(lo, v - 1.0), hi = std::max(hi, v);
  auto mass = [&](double t) {
    double s = 0.0;
    for (double v : w)
      if (v != 0.0) s += std::max(v - t, 0.0);
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  std::vector<double> x(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) x[i] = std::max(w[i] - t, 0.0);
  return x;
}

/// Dense next-state distribution computed straight from the definition.
inline std::vector<double> dense_mixture(const RhompModel& model, std::span<const StateId> history) {
  std::vector<double> p(model.num_states(), 0.0);
  for (std::size_t r = 0; r < model.order(); ++r)
    for (StateId i = 0; i < model.num_states(); ++i)
      p[i] += model.weights()[r] * model.matrix(r).at(i, history[r]);
  return p;
}

/// Mean per-transition log-likelihood of full-history transitions.
inline double heldout_loglik(const RhompModel& model, const TrailCorpus& test) {
  double sum = 0.0;
  std::size_t n = 0;
  const std::size_t m = model.order();
  Trail h(m);
  for (const auto& trail : test.trails)
    for (std::size_t t = m; t < trail.size(); ++t) {
      for (std::size_t b = 0; b < m; ++b) h[b] = trail[t - 1 - b];
      sum += std::log(std::max(dense_mixture(model, h)[trail[t]], 1e-12));
      ++n;
    }
  return sum / static_cast<double>(n);
}

using Dense = std::vector<std::vector<double>>;  // [row][col]

// Negative log-likelihood evaluated straight from dense matrices; valid off
// the simplex, which the finite-difference oracle needs.
inline double dense_nll(const std::vector<Dense>& mats, std::span<const double> w, const TransitionCounts& counts) {
  const auto& table = counts.level(counts.order());
  double f = 0.0;
  for (std::size_t e = 0; e < table.size(); ++e) {
    const StateId i = table.next_state(e);
    auto ctx = table.context(e);
    double p = 0.0;
    for (std::size_t r = 0; r < w.size(); ++r) p += w[r] * mats[r][i][ctx[r]];
    f -= static_cast<double>(table.count(e)) * std::log(std::max(p, 1e-12));
  }
  return f;
}

inline std::vector<Dense> to_dense(const RhompModel& model) {
  const std::size_t n = model.num_states();
  std::vector<Dense> out(model.order(), Dense(n, std::vector<double>(n, 0.0)));
  for (std::size_t r = 0; r < model.order(); ++r)
    for (StateId c = 0; c < n; ++c)
      for (StateId i = 0; i < n; ++i) out[r][i][c] = model.matrix(r).at(i, c);
  return out;
}

// Random feasible point with the support of `base`.
inline RhompModel random_feasible(const RhompModel& base, Rng& rng) {
  std::vector<ColumnStochasticMatrix> mats;
  for (const auto& m : base.matrices()) {
    SparseColumnMatrix d = m.data();
    for (StateId c = 0; c < d.dim(); ++c) {
      auto v = d.values(c);
      double s = 0.0;
      for (auto& x : v) s += x = 0.05 + rng.uniform();
      for (auto& x : v) x /= s;
    }
    mats.emplace_back(std::move(d));
  }
  return RhompModel({base.weights().begin(), base.weights().end()}, std::move(mats));
}

// 1-based rank of truth from a full dense sort; 0 when the score is zero.
inline std::size_t brute_rank(const SparseVector& scores, std::size_t n, StateId truth) {
  std::vector<std::pair<double, StateId>> all;
  for (StateId i = 0; i < n; ++i) all.push_back({scores.at(i), i});
  std::sort(all.begin(), all.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t k = 0; k < all.size(); ++k)
    if (all[k].second == truth) return all[k].first > 0.0 ? k + 1 : 0;
  return 0;
}

}  // namespace rhomp::testing
