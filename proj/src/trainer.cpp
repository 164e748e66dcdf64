#include "rhomp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "rhomp/parallel.hpp"

namespace rhomp {

void TrainerConfig::validate() const {
  if (!(initial_step > 0.0)) throw DataError(fmt::format("initial step {} must be positive", initial_step));
  if (!(tolerance > 0.0)) throw DataError(fmt::format("tolerance {} must be positive", tolerance));
  if (max_iterations < 1) throw DataError("max_iterations must be at least 1");
  if (!(probability_floor > 0.0 && probability_floor <= 1e-8))
    throw DataError(fmt::format("probability floor {} outside (0, 1e-8]", probability_floor));
}

std::vector<double> FitTrace::accepted_objectives() const {
  std::vector<double> out;
  for (std::size_t k = 0; k < objectives.size(); ++k)
    if (accepted[k]) out.push_back(objectives[k]);
  return out;
}

double FitTrace::final_objective() const {
  for (std::size_t k = objectives.size(); k-- > 0;)
    if (accepted[k]) return objectives[k];
  throw DataError("empty fit trace");
}

namespace {

// The stop test averages the relative improvement over this many accepted
// steps. Single steps alternate between large and tiny decreases as the step
// size oscillates, and one tiny decrease is not convergence.
constexpr std::size_t kImprovementWindow = 5;

void check_shapes(const RhompModel& model, const TransitionCounts& counts) {
  if (counts.order() != model.order())
    throw DataError(fmt::format("counts of order {} for a model of order {}", counts.order(), model.order()));
  if (counts.num_states() != model.num_states())
    throw DataError(fmt::format("counts over {} states for a model over {} states", counts.num_states(),
                                model.num_states()));
}

/// Flattened view of the order-m count entries tied to the stored matrix
/// entries they touch, so objective and gradient passes are linear in the
/// number of distinct count keys.
class Problem {
 public:
  static constexpr std::size_t kBlock = 4096;
  static constexpr std::size_t kNoPosition = std::numeric_limits<std::uint32_t>::max();

  Problem(const RhompModel& model, const TransitionCounts& counts, unsigned threads)
      : weights_(model.weights().begin(), model.weights().end()), threads_(threads) {
    check_shapes(model, counts);
    const auto& table = counts.level(counts.order());
    const std::size_t m = model.order();
    entries_ = table.size();
    count_.resize(entries_);
    for (std::size_t r = 0; r < m; ++r)
      if (model.matrix(r).nnz() >= kNoPosition || entries_ >= kNoPosition)
        throw DataError("problem too large for 32-bit entry indices");
    pos_.assign(m, std::vector<std::uint32_t>(entries_));
    nnz_.resize(m);
    for (std::size_t r = 0; r < m; ++r) nnz_[r] = model.matrix(r).nnz();
    for (std::size_t e = 0; e < entries_; ++e) {
      count_[e] = static_cast<double>(table.count(e));
      const StateId i = table.next_state(e);
      auto ctx = table.context(e);
      for (std::size_t r = 0; r < m; ++r) pos_[r][e] = static_cast<std::uint32_t>(model.matrix(r).data().position(i, ctx[r]));
    }
    // Entry order for cache locality: blocks of 2^15 slot-1 positions (a
    // 256 KiB window of values), sorted by slot-2 position inside a block,
    // so both gathers walk forward through memory.
    std::vector<std::uint64_t> key(entries_);
    for (std::size_t e = 0; e < entries_; ++e)
      key[e] = (std::uint64_t{pos_[0][e]} >> 15) << 32 | (m > 1 ? pos_[1][e] : pos_[0][e]);
    std::vector<std::size_t> order(entries_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    auto permute = [&](auto& v) {
      auto copy = v;
      for (std::size_t e = 0; e < entries_; ++e) v[e] = copy[order[e]];
    };
    permute(count_);
    for (auto& pos : pos_) permute(pos);
    // Entries grouped by the matrix position they touch, in entry order.
    seg_ptr_.resize(m);
    seg_entry_.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
      auto& ptr = seg_ptr_[r];
      ptr.assign(nnz_[r] + 1, 0);
      for (std::size_t e = 0; e < entries_; ++e)
        if (pos_[r][e] < nnz_[r]) ++ptr[pos_[r][e] + 1];
      std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
      auto fill = ptr;
      seg_entry_[r].resize(ptr.back());
      for (std::size_t e = 0; e < entries_; ++e)
        if (pos_[r][e] < nnz_[r]) seg_entry_[r][fill[pos_[r][e]]++] = static_cast<std::uint32_t>(e);
    }
  }

  /// Negative log-likelihood; fills p with the mixture probability per entry.
  double objective(const std::vector<SparseColumnMatrix>& mats, std::vector<double>& p,
                   double floor) const {
    p.resize(entries_);
    const std::size_t blocks = (entries_ + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    parallel_for(blocks, threads_, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        double acc = 0.0;
        const std::size_t end = std::min(entries_, (b + 1) * kBlock);
        for (std::size_t e = b * kBlock; e < end; ++e) {
          double prob = 0.0;
          for (std::size_t r = 0; r < weights_.size(); ++r)
            if (pos_[r][e] < nnz_[r]) prob += weights_[r] * mats[r].flat_values()[pos_[r][e]];
          p[e] = prob;
          acc -= count_[e] * std::log(std::max(prob, floor));
        }
        partial[b] = acc;
      }
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
  }

  /// Writes dNLL into `grads` (which share the model supports).
  void gradient(const std::vector<double>& p, double floor,
                std::vector<SparseColumnMatrix>& grads) const {
    std::vector<double> ratio(entries_);
    parallel_for(entries_, threads_, [&](std::size_t e0, std::size_t e1) {
      for (std::size_t e = e0; e < e1; ++e) ratio[e] = count_[e] / std::max(p[e], floor);
    });
    for (std::size_t r = 0; r < weights_.size(); ++r) {
      auto out = grads[r].flat_values();
      const double a = weights_[r];
      const auto& ptr = seg_ptr_[r];
      const auto& ent = seg_entry_[r];
      parallel_for(nnz_[r], threads_, [&](std::size_t q0, std::size_t q1) {
        for (std::size_t q = q0; q < q1; ++q) {
          double acc = 0.0;
          for (std::size_t k = ptr[q]; k < ptr[q + 1]; ++k) acc += ratio[ent[k]];
          out[q] = -a * acc;
        }
      });
    }
  }

 private:
  std::vector<double> weights_;
  unsigned threads_;
  std::size_t entries_ = 0;
  std::vector<double> count_;
  // 32-bit indices halve the memory traffic of the per-entry gathers.
  std::vector<std::vector<std::uint32_t>> pos_;
  std::vector<std::size_t> nnz_;
  std::vector<std::vector<std::size_t>> seg_ptr_;
  std::vector<std::vector<std::uint32_t>> seg_entry_;
};

std::vector<SparseColumnMatrix> raw_matrices(const RhompModel& model) {
  std::vector<SparseColumnMatrix> out;
  for (const auto& m : model.matrices()) out.push_back(m.data());
  return out;
}

RhompModel to_model(std::span<const double> weights, const std::vector<SparseColumnMatrix>& mats) {
  std::vector<ColumnStochasticMatrix> out;
  for (const auto& m : mats) out.emplace_back(m);
  return RhompModel(std::vector<double>(weights.begin(), weights.end()), std::move(out));
}

void project_all(std::vector<SparseColumnMatrix>& mats, unsigned threads) {
  for (auto& m : mats) {
    parallel_for(m.dim(), threads, [&](std::size_t c0, std::size_t c1) {
      std::vector<double> scratch;
      for (std::size_t c = c0; c < c1; ++c)
        if (!m.column_empty(static_cast<StateId>(c)))
          project_to_simplex_inplace(m.values(static_cast<StateId>(c)), scratch);
    });
  }
}

double max_displacement(const std::vector<SparseColumnMatrix>& a, const std::vector<SparseColumnMatrix>& b) {
  double d = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    auto x = a[r].flat_values();
    auto y = b[r].flat_values();
    for (std::size_t q = 0; q < x.size(); ++q) d = std::max(d, std::abs(x[q] - y[q]));
  }
  return d;
}

bool loses_support(const std::vector<double>& before, const std::vector<double>& after, double floor) {
  for (std::size_t e = 0; e < before.size(); ++e)
    if (after[e] < floor && before[e] >= floor) return true;
  return false;
}

}  // namespace

double log_likelihood(const RhompModel& model, const TransitionCounts& counts, double floor) {
  check_shapes(model, counts);
  const auto& table = counts.level(counts.order());
  const auto w = model.weights();
  double total = 0.0;
  for (std::size_t e = 0; e < table.size(); ++e) {
    const StateId i = table.next_state(e);
    auto ctx = table.context(e);
    double p = 0.0;
    for (std::size_t r = 0; r < model.order(); ++r) p += w[r] * model.matrix(r).at(i, ctx[r]);
    total += static_cast<double>(table.count(e)) * std::log(std::max(p, floor));
  }
  return total;
}

std::vector<SparseColumnMatrix> gradients(const RhompModel& model, const TransitionCounts& counts,
                                          double floor) {
  Problem problem(model, counts, 1);
  auto mats = raw_matrices(model);
  std::vector<double> p;
  problem.objective(mats, p, floor);
  auto grads = mats;
  problem.gradient(p, floor, grads);
  return grads;
}

RhompModel initial_model(const TransitionCounts& counts, std::span<const double> weights) {
  if (weights.size() != counts.order())
    throw DataError(fmt::format("{} weights for counts of order {}", weights.size(), counts.order()));
  if (counts.empty() || counts.level(counts.order()).empty())
    throw DataError(fmt::format("no transitions with {} history states to fit", counts.order()));
  const auto& table = counts.level(counts.order());
  std::vector<ColumnStochasticMatrix> mats;
  for (std::size_t r = 0; r < counts.order(); ++r) {
    std::vector<Triplet> triplets;
    triplets.reserve(table.size());
    for (std::size_t e = 0; e < table.size(); ++e)
      triplets.push_back({table.context(e)[r], table.next_state(e), static_cast<double>(table.count(e))});
    auto m = SparseColumnMatrix::from_triplets(counts.num_states(), std::move(triplets));
    for (StateId c = 0; c < m.dim(); ++c) {
      const double s = m.column_sum(c);
      for (double& v : m.values(c)) v /= s;
    }
    mats.emplace_back(std::move(m));
  }
  return RhompModel(std::vector<double>(weights.begin(), weights.end()), std::move(mats));
}

FitResult fit_fixed_weights(const TransitionCounts& counts, std::span<const double> weights,
                            const TrainerConfig& config, const FitObserver& observer) {
  // Validate weights before building the start so errors name the cause.
  double total = 0.0;
  for (double a : weights) {
    if (!(a >= 0.0)) throw DataError(fmt::format("invalid slot weight {}", a));
    total += a;
  }
  if (std::abs(total - 1.0) > RhompModel::kWeightTolerance)
    throw DataError(fmt::format("slot weights sum to {:.17g}, not 1", total));
  return fit_from(initial_model(counts, weights), counts, config, observer);
}

FitResult fit_from(const RhompModel& start, const TransitionCounts& counts,
                   const TrainerConfig& config, const FitObserver& observer) {
  config.validate();
  if (counts.empty() || counts.level(counts.order()).empty())
    throw DataError(fmt::format("no transitions with {} history states to fit", counts.order()));
  const auto reference = initial_model(counts, start.weights());
  for (std::size_t r = 0; r < start.order(); ++r)
    if (!start.matrix(r).data().same_support(reference.matrix(r).data()))
      throw DataError(fmt::format("start matrix {} does not have the observed support", r + 1));

  const Problem problem(start, counts, config.threads);
  const auto weights = start.weights();
  const double floor = config.probability_floor;

  auto current = raw_matrices(start);
  auto trial = current;
  auto grads = current;
  std::vector<double> p_current, p_trial;

  FitTrace trace;
  double objective = problem.objective(current, p_current, floor);
  trace.objectives.push_back(objective);
  trace.accepted.push_back(true);
  double step = config.initial_step;
  std::vector<double> history{objective};

  // A perfect fit (every counted transition has probability one) cannot improve.
  if (objective <= 0.0) trace.converged = true;

  while (!trace.converged && !trace.stalled && trace.iterations < config.max_iterations) {
    problem.gradient(p_current, floor, grads);
    while (true) {
      for (std::size_t r = 0; r < current.size(); ++r) {
        auto cur = current[r].flat_values();
        auto g = grads[r].flat_values();
        auto out = trial[r].flat_values();
        for (std::size_t q = 0; q < out.size(); ++q) out[q] = cur[q] - step * g[q];
      }
      project_all(trial, config.threads);
      const double candidate = problem.objective(trial, p_trial, floor);
      trace.objectives.push_back(candidate);

      // A counted transition pushed to zero probability sends the true
      // objective to +inf; the floor only hides that, so such steps fail.
      if (candidate < objective && !loses_support(p_current, p_trial, floor)) {
        trace.accepted.push_back(true);
        current.swap(trial);
        p_current.swap(p_trial);
        objective = candidate;
        step = std::min(2.0 * step, config.initial_step);
        ++trace.iterations;
        if (observer) observer(to_model(weights, current), objective);
        history.push_back(objective);
        const std::size_t span = std::min(kImprovementWindow, history.size() - 1);
        const double earlier = history[history.size() - 1 - span];
        const double improvement = (earlier - objective) / (static_cast<double>(span) * std::abs(earlier));
        if (improvement < config.tolerance || objective <= 0.0) trace.converged = true;
        break;
      }
      trace.accepted.push_back(false);
      // The projected step maps the point onto itself: it is stationary.
      if (max_displacement(trial, current) <= 1e-14) {
        trace.converged = true;
        break;
      }
      step *= 0.5;
      if (step < FitTrace::kMinStep) {
        trace.stalled = true;
        break;
      }
    }
  }
  trace.final_step = step;
  return {to_model(weights, current), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Alpha selection

std::vector<double> chebyshev_nodes(std::size_t n) {
  if (n < 1) throw DataError("need at least one Chebyshev node");
  std::vector<double> nodes(n);
  for (std::size_t k = 1; k <= n; ++k)
    nodes[k - 1] = 0.5 + 0.5 * std::cos(static_cast<double>(2 * k - 1) / static_cast<double>(2 * n) *
                                        std::numbers::pi);
  return nodes;
}

ChebyshevInterpolant::ChebyshevInterpolant(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 1) throw DataError("interpolation needs at least one value");
  coeffs_.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t k = 1; k <= n; ++k)
      acc += values[k - 1] * std::cos(static_cast<double>(j) * static_cast<double>(2 * k - 1) /
                                      static_cast<double>(2 * n) * std::numbers::pi);
    coeffs_[j] = 2.0 * acc / static_cast<double>(n);
  }
  coeffs_[0] *= 0.5;
  // Derivative series d/dt sum c_j T_j = sum d_j T_j, with d_{j-1} = d_{j+1} + 2 j c_j.
  deriv_coeffs_.assign(n + 1, 0.0);
  for (std::size_t j = n - 1; j >= 1; --j) {
    const double next2 = j + 1 < deriv_coeffs_.size() ? deriv_coeffs_[j + 1] : 0.0;
    deriv_coeffs_[j - 1] = next2 + 2.0 * static_cast<double>(j) * coeffs_[j];
  }
  deriv_coeffs_[0] *= 0.5;
  deriv_coeffs_.resize(n);
}

namespace {

/// Clenshaw evaluation of sum c_j T_j(t).
double clenshaw(std::span<const double> c, double t) {
  double b1 = 0.0, b2 = 0.0;
  for (std::size_t j = c.size(); j-- > 1;) {
    const double b0 = 2.0 * t * b1 - b2 + c[j];
    b2 = b1;
    b1 = b0;
  }
  return t * b1 - b2 + c[0];
}

}  // namespace

double ChebyshevInterpolant::operator()(double alpha) const { return clenshaw(coeffs_, 2.0 * alpha - 1.0); }

double ChebyshevInterpolant::derivative(double alpha) const {
  return 2.0 * clenshaw(deriv_coeffs_, 2.0 * alpha - 1.0);
}

double ChebyshevInterpolant::argmin(double lo, double hi) const {
  if (!(lo <= hi)) throw DataError("empty interpolation window");
  std::vector<double> candidates{lo, hi};
  const std::size_t grid = std::max<std::size_t>(4000, 100 * coeffs_.size());
  double x0 = lo, d0 = derivative(lo);
  for (std::size_t g = 1; g <= grid; ++g) {
    const double x1 = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid);
    const double d1 = derivative(x1);
    if (d0 == 0.0) candidates.push_back(x0);
    if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
      double a = x0, b = x1, da = d0;
      for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
        const double mid = 0.5 * (a + b);
        const double dm = derivative(mid);
        if ((dm < 0.0) == (da < 0.0)) {
          a = mid;
          da = dm;
        } else {
          b = mid;
        }
      }
      candidates.push_back(0.5 * (a + b));
    }
    x0 = x1;
    d0 = d1;
  }
  double best = candidates.front();
  for (double c : candidates)
    if ((*this)(c) < (*this)(best)) best = c;
  return best;
}

AlphaSelection select_alpha(const TransitionCounts& counts, std::size_t n_nodes,
                            const TrainerConfig& config) {
  if (counts.order() != 2) throw DataError("alpha selection needs order-2 counts");
  if (n_nodes < 3) throw DataError("alpha selection needs at least 3 nodes");
  config.validate();

  AlphaSelection out;
  out.nodes = chebyshev_nodes(n_nodes);
  TrainerConfig probe = config;
  probe.tolerance = 10.0 * config.tolerance;
  for (double a : out.nodes) {
    const double w[] = {a, 1.0 - a};
    out.node_objectives.push_back(fit_fixed_weights(counts, w, probe).trace.final_objective());
  }
  const ChebyshevInterpolant curve(out.node_objectives);
  const auto [lo, hi] = std::minmax_element(out.nodes.begin(), out.nodes.end());
  out.alpha = curve.argmin(*lo, *hi);
  const double w[] = {out.alpha, 1.0 - out.alpha};
  out.fit = fit_fixed_weights(counts, w, config);
  return out;
}

}  // namespace rhomp
