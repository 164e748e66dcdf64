#include <doctest.h>

#include <cmath>
#include <map>

#include "rhomp/baselines.hpp"
#include "support.hpp"

using namespace rhomp;
using namespace rhomp::testing;

namespace {

// a=0, b=1, c=2. Bigram types (a,b) x2, (a,c), (b,a), (c,b).
TrailCorpus hand_corpus() { return TrailCorpus{3, {{0, 1, 0, 2, 1}, {0, 1}}}; }

std::vector<double> dense(const SparseVector& v, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < v.size(); ++k) out[v.index[k]] = v.value[k];
  return out;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Log-likelihood of order-1 transitions under column distributions p[j][i].
double bigram_loglik(const std::map<std::pair<StateId, StateId>, double>& counts,
                     const std::vector<std::vector<double>>& p) {
  double ll = 0.0;
  for (const auto& [key, c] : counts) ll += c * std::log(p[key.second][key.first]);
  return ll;
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("MC examples") {
    auto abab = count_transitions(TrailCorpus{2, {{0, 1, 0, 1}}}, 2);
    auto m1 = fit_mc(abab, 1);
    const StateId a[] = {0}, b[] = {1};
    CHECK(mc_predict(m1, a).at(1) == 1.0);
    CHECK(mc_predict(m1, b).at(0) == 1.0);

    auto m2 = fit_mc(abab, 2);
    const StateId ba[] = {1, 0}, ab[] = {0, 1};
    CHECK(mc_predict(m2, ba).at(0) == 1.0);
    CHECK(mc_predict(m2, ab).at(1) == 1.0);

    auto abac = fit_mc(count_transitions(TrailCorpus{3, {{0, 1, 0, 2}}}, 1), 1);
    auto p = mc_predict(abac, a);
    CHECK(p.at(1) == 0.5);
    CHECK(p.at(2) == 0.5);
  }

  TEST_CASE("MC falls back to shorter contexts and then the unigram") {
    // d (3) only ever ends a trail, so it has no successors.
    TrailCorpus c{4, {{0, 1, 0, 1}, {2, 1}, {2, 3}}};
    auto counts = count_transitions(c, 2);
    auto mc = fit_mc(counts, 2);
    const StateId seen[] = {1, 0};
    CHECK(mc_predict(mc, seen).at(0) == 1.0);
    // Context (a, then older c) never occurred; a alone predicts b.
    const StateId unseen_pair[] = {0, 2};
    auto p = mc_predict(mc, unseen_pair);
    CHECK(p.at(1) == 1.0);
    CHECK(p.size() == 1);
    // d has no successors at any order: unigram frequencies.
    const StateId novel[] = {3, 3};
    auto u = dense(mc_predict(mc, novel), 4);
    const double total = 8.0;
    CHECK(u[0] == 2.0 / total);
    CHECK(u[1] == 3.0 / total);
    CHECK(u[2] == 2.0 / total);
    CHECK(u[3] == 1.0 / total);

    const StateId too_short[] = {0};
    CHECK_THROWS_AS(mc_predict(mc, too_short), DataError);
    CHECK_THROWS_AS(fit_mc(counts, 3), DataError);
  }

  TEST_CASE("MC is the maximum-likelihood chain") {
    Rng rng(31);
    auto planted = random_model(6, {1.0}, 3, rng);
    auto corpus = sample_corpus(planted, 10, 50, 2);
    auto mc = fit_mc(count_transitions(corpus, 1), 1);
    std::map<std::pair<StateId, StateId>, double> bigrams;
    for (const auto& t : corpus.trails)
      for (std::size_t k = 1; k < t.size(); ++k) bigrams[{t[k], t[k - 1]}] += 1.0;
    std::vector<std::vector<double>> p(6);
    for (StateId j = 0; j < 6; ++j) {
      const StateId h[] = {j};
      p[j] = dense(mc_predict(mc, h), 6);
    }
    const double best = bigram_loglik(bigrams, p);
    for (int trial = 0; trial < 100; ++trial) {
      auto q = p;
      const StateId j = static_cast<StateId>(rng.below(6));
      // Move mass between two states of column j, staying on the simplex.
      const StateId from = static_cast<StateId>(rng.below(6)), to = static_cast<StateId>(rng.below(6));
      const double delta = 0.5 * q[j][from] * rng.uniform();
      if (from == to || delta == 0.0) continue;
      q[j][from] -= delta;
      q[j][to] += delta;
      CHECK(bigram_loglik(bigrams, q) < best);
    }
  }

  TEST_CASE("Kneser-Ney discount") {
    CHECK(kneser_ney_discount(3, 1) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(kneser_ney_discount(0, 0) == 0.0);
    CHECK(kneser_ney_discount(1, 0) == 1.0);

    auto kn = fit_kneser_ney(count_transitions(hand_corpus(), 1), 1);
    CHECK(kn.discount(1) == doctest::Approx(0.6).epsilon(1e-15));

    auto single = fit_kneser_ney(count_transitions(TrailCorpus{2, {{0, 1}}}, 1), 1);
    CHECK(single.discount(1) == 1.0);
  }

  TEST_CASE("Kneser-Ney hand evaluation") {
    auto kn = fit_kneser_ney(count_transitions(hand_corpus(), 1), 1);
    const StateId a[] = {0};
    auto p = kn_predict(kn, a);
    // (2 - 0.6) / 3 + (0.6 * 2 / 3) * (2 / 4)
    CHECK(p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    // a -> a was never seen but a has continuation mass 1/4.
    CHECK(p[0] == doctest::Approx(0.4 * 0.25).epsilon(1e-12));
    CHECK(p[0] > 0.0);
    CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("Kneser-Ney distributions sum to one and stay positive") {
    Rng rng(32);
    auto planted = random_model(15, {0.6, 0.3, 0.1}, 4, rng);
    auto counts = count_transitions(sample_corpus(planted, 20, 40, 3), 3);
    for (std::size_t order = 1; order <= 3; ++order) {
      auto kn = fit_kneser_ney(counts, order);
      for (std::size_t r = 1; r <= order; ++r) {
        CHECK(kn.discount(r) >= 0.0);
        CHECK(kn.discount(r) <= 1.0);
      }
      for (const auto& [ctx, stats] : kn.level(order).contexts) {
        auto p = kn_predict(kn, ctx);
        CHECK(std::abs(sum(p) - 1.0) <= 1e-9);
      }
      for (int trial = 0; trial < 50; ++trial) {
        Trail h(order);
        for (auto& s : h) s = static_cast<StateId>(rng.below(15));
        auto p = kn_predict(kn, h);
        CHECK(std::abs(sum(p) - 1.0) <= 1e-9);
        // Every state with continuation mass is reachable.
        for (StateId i = 0; i < 15; ++i)
          if (kn.continuation_unigram()[i] > 0.0) CHECK(p[i] > 0.0);
      }
    }
    CHECK_THROWS_AS(fit_kneser_ney(counts, 4), DataError);
  }

  TEST_CASE("zero discount reduces Kneser-Ney to MC") {
    // Every bigram and trigram type occurs at least three times.
    Trail t;
    for (int k = 0; k < 4; ++k) t.insert(t.end(), {0, 1, 2, 0, 2, 1});
    t.push_back(0);
    TrailCorpus c{3, {t}};
    auto counts = count_transitions(c, 2);
    for (std::size_t order : {1u, 2u}) {
      auto kn = fit_kneser_ney(counts, order);
      auto mc = fit_mc(counts, order);
      REQUIRE(kn.discount(order) == 0.0);
      for (const auto& [ctx, stats] : kn.level(order).contexts) {
        auto pk = kn_predict(kn, ctx);
        auto pm = dense(mc_predict(mc, ctx), 3);
        CHECK(pk == pm);
      }
    }
  }

  TEST_CASE("Kneser-Ney lower levels use continuation counts") {
    // b follows a in two different older contexts (c then a, b then a).
    TrailCorpus c{3, {{2, 0, 1}, {1, 0, 1}, {2, 0, 1}}};
    auto kn = fit_kneser_ney(count_transitions(c, 2), 2);
    const auto& lower = kn.level(1).contexts;
    const std::vector<StateId> a{0};
    REQUIRE(lower.count(a));
    const auto& stats = lower.at(a);
    REQUIRE(stats.successors.size() == 1);
    CHECK(stats.successors[0].first == 1);
    CHECK(stats.successors[0].second == 2.0);
    CHECK(stats.total == 2.0);
  }
}
