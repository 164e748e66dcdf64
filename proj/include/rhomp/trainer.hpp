#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rhomp/corpus.hpp"
#include "rhomp/model.hpp"
#include "rhomp/stochastic.hpp"

namespace rhomp {

struct TrainerConfig {
  /// gamma_0: the step size never grows beyond this.
  double initial_step = 1.0;
  /// Stop once the relative decrease of the objective, averaged over the
  /// last five accepted steps, falls below this.
  double tolerance = 1e-5;
  /// Cap on accepted iterations.
  std::size_t max_iterations = 500;
  /// Lower clamp on probabilities inside logarithms.
  double probability_floor = 1e-12;
  unsigned threads = 1;

  /// Throws DataError on out-of-range fields.
  void validate() const;
};

/// Per-attempt record of a fit. Entry 0 is the initial objective.
struct FitTrace {
  std::vector<double> objectives;
  std::vector<bool> accepted;
  double final_step = 0.0;
  std::size_t iterations = 0;  ///< accepted steps
  bool converged = false;
  /// Step size fell below kMinStep without progress; the best iterate is
  /// returned.
  bool stalled = false;

  static constexpr double kMinStep = 1e-12;

  std::vector<double> accepted_objectives() const;
  double final_objective() const;
};

struct FitResult {
  RhompModel model;
  FitTrace trace;
};

/// log L = sum over order-m count entries of c(i, ctx) log p(i | ctx), with
/// p clamped below by `floor`. Throws DataError when counts.order() differs
/// from the model order or the state counts disagree.
double log_likelihood(const RhompModel& model, const TransitionCounts& counts,
                      double floor = 1e-12);

/// Gradients of the negative log-likelihood with respect to every stored
/// entry of each matrix:
///
///     dR^(r)_{i,h} = - sum_{ctx: ctx_r = h} alpha_r c(i, ctx) / p(i | ctx)
///
/// Each result shares the support of the corresponding model matrix.
std::vector<SparseColumnMatrix> gradients(const RhompModel& model, const TransitionCounts& counts,
                                          double floor = 1e-12);

/// Marginal maximum-likelihood starting point on the observed support:
/// R^(r)_{i,h} proportional to the order-m counts with next state i and
/// slot-r history state h.
RhompModel initial_model(const TransitionCounts& counts, std::span<const double> weights);

/// Called after every accepted step with the current model and objective.
using FitObserver = std::function<void(const RhompModel&, double)>;

/// Projected gradient descent on the negative log-likelihood with slot
/// weights held fixed, starting from initial_model(). Failed steps halve the
/// step size and retry from the pre-step point; successful ones double it up
/// to config.initial_step.
FitResult fit_fixed_weights(const TransitionCounts& counts, std::span<const double> weights,
                            const TrainerConfig& config, const FitObserver& observer = {});

/// Same descent from a caller-provided feasible start. Its matrices must
/// have exactly the support initial_model() would give.
FitResult fit_from(const RhompModel& start, const TransitionCounts& counts,
                   const TrainerConfig& config, const FitObserver& observer = {});

/// alpha_k = 1/2 + 1/2 cos((2k - 1) pi / (2n)), k = 1..n (descending).
std::vector<double> chebyshev_nodes(std::size_t n);

/// Degree n-1 polynomial through values at chebyshev_nodes(n), held in the
/// Chebyshev basis on [0, 1].
class ChebyshevInterpolant {
 public:
  explicit ChebyshevInterpolant(std::span<const double> values_at_nodes);

  double operator()(double alpha) const;
  double derivative(double alpha) const;
  /// Global minimizer over [lo, hi], found among the endpoints and the
  /// roots of the derivative.
  double argmin(double lo, double hi) const;

 private:
  std::vector<double> coeffs_;
  std::vector<double> deriv_coeffs_;
};

struct AlphaSelection {
  double alpha = 0.0;
  FitResult fit;
  std::vector<double> nodes;
  /// Negative log-likelihood reached at each node.
  std::vector<double> node_objectives;
};

/// Trains order-2 models at n Chebyshev nodes (tolerance 10x relaxed),
/// minimizes the interpolated objective over [min node, max node], then
/// retrains at the minimizer with the full tolerance.
AlphaSelection select_alpha(const TransitionCounts& counts, std::size_t n_nodes,
                            const TrainerConfig& config);

}  // namespace rhomp
