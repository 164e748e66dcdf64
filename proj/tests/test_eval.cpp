#include <doctest.h>

#include <algorithm>

#include "rhomp/eval.hpp"
#include "support.hpp"

using namespace rhomp;
using namespace rhomp::testing;

namespace {

// Scores fixed per truth position: the test drives ranks directly.
class TablePredictor final : public Predictor {
 public:
  TablePredictor(std::size_t order, std::function<SparseVector(std::span<const StateId>)> fn)
      : order_(order), fn_(std::move(fn)) {}
  std::size_t order() const override { return order_; }
  SparseVector scores(std::span<const StateId> h) const override { return fn_(h); }

 private:
  std::size_t order_;
  std::function<SparseVector(std::span<const StateId>)> fn_;
};

SparseVector uniform_scores(std::size_t n) {
  SparseVector v;
  for (StateId i = 0; i < n; ++i) {
    v.index.push_back(i);
    v.value.push_back(1.0 / static_cast<double>(n));
  }
  return v;
}

Cascade single(std::shared_ptr<const Predictor> p) { return Cascade({std::move(p)}); }

StateRecord record(StateId s, std::uint64_t train, std::uint64_t total, std::uint64_t correct) {
  return StateRecord{s, train, {correct}, total};
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("metric examples") {
    const StateId ranked[] = {3, 1, 2};
    CHECK(precision_at_k(ranked, 1, 1) == 0);
    CHECK(precision_at_k(ranked, 1, 2) == 1);
    CHECK(precision_at_k(ranked, 1, 10) == 1);
    for (std::size_t k = 1; k <= 4; ++k) CHECK(precision_at_k(ranked, 9, k) == 0);
    CHECK(reciprocal_rank(ranked, 1) == 0.5);
    CHECK(reciprocal_rank(ranked, 3) == 1.0);
    CHECK(reciprocal_rank(ranked, 9) == 0.0);
  }

  TEST_CASE("rank of a state in a score vector") {
    SparseVector s{{0, 2, 5, 7}, {0.2, 0.4, 0.2, 0.0}};
    CHECK(rank_of(s, 2) == 1);
    CHECK(rank_of(s, 0) == 2);
    CHECK(rank_of(s, 5) == 3);
    CHECK(rank_of(s, 7) == 0);
    CHECK(rank_of(s, 3) == 0);
  }

  TEST_CASE("perfect predictor on a deterministic corpus") {
    auto cyc = make_stochastic(3, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}});
    auto cascade = single(std::make_shared<RhompPredictor>(RhompModel({1.0}, {cyc})));
    TrailCorpus test{3, {{0, 1, 2, 0, 1}, {2, 0}}};
    const std::size_t ks[] = {1, 2, 3, 4, 5};
    auto report = evaluate(cascade, test, ks);
    for (double p : report.precision) CHECK(p == 1.0);
    CHECK(report.mrr == 1.0);
    CHECK(report.n_transitions == 5);
  }

  TEST_CASE("ranks 1 and 4 give MRR 0.625") {
    // Truth 0 is ranked first; truth 3 is ranked fourth.
    auto pred = std::make_shared<TablePredictor>(1, [](std::span<const StateId>) {
      return SparseVector{{0, 1, 2, 3}, {0.4, 0.3, 0.2, 0.1}};
    });
    TrailCorpus test{4, {{1, 0}, {2, 3}}};
    const std::size_t ks[] = {1, 4};
    auto report = evaluate(single(pred), test, ks);
    CHECK(report.mrr == 0.625);
    CHECK(report.precision_at(1) == 0.5);
    CHECK(report.precision_at(4) == 1.0);
    CHECK_THROWS_AS(report.precision_at(2), DataError);
  }

  TEST_CASE("uniform predictor gives precision k/N") {
    const std::size_t n = 20;
    auto pred = std::make_shared<TablePredictor>(1, [n](std::span<const StateId>) { return uniform_scores(n); });
    Rng rng(41);
    TrailCorpus test{n, {}};
    for (int t = 0; t < 400; ++t) {
      Trail trail(26);
      for (auto& s : trail) s = static_cast<StateId>(rng.below(n));
      test.trails.push_back(trail);
    }
    const std::size_t ks[] = {1, 2, 3, 4, 5};
    auto report = evaluate(single(pred), test, ks);
    // Ties break by index, so hits are exactly the truths below k.
    for (std::size_t k : ks) {
      std::size_t below = 0;
      for (const auto& trail : test.trails)
        for (std::size_t t = 1; t < trail.size(); ++t) below += trail[t] < k;
      CHECK(report.precision_at(k) == static_cast<double>(below) / static_cast<double>(report.n_transitions));
      // Binomial expectation k/N; 10'000 draws give sd below 0.005.
      CHECK(std::abs(report.precision_at(k) - static_cast<double>(k) / n) <= 0.02);
    }
  }

  TEST_CASE("evaluation matches brute-force rescoring") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 3 + rng.below(8);
      auto planted = random_model(n, {0.7, 0.3}, 1 + rng.below(n), rng);
      auto train = sample_corpus(planted, 5, 20, rng.next());
      auto test = sample_corpus(planted, 5, 2 + rng.below(19), rng.next());
      if (test.num_transitions() == 0 || test.num_transitions() > 100) continue;
      auto counts = count_transitions(train, 2);
      for (Family f : {Family::Mc, Family::Kneser, Family::Rhomp}) {
        FamilyOptions opt;
        opt.alpha = 0.7;
        auto fit = fit_cascade(f, counts, 2, opt);
        const std::size_t ks[] = {1, 2, 3, 5};
        auto report = evaluate(fit.cascade, test, ks);
        double rr = 0.0;
        std::vector<double> hits(4, 0.0);
        std::size_t count = 0;
        for (const auto& t : test.trails)
          for (std::size_t pos = 1; pos < t.size(); ++pos) {
            Trail h;
            for (std::size_t b = 1; b <= std::min<std::size_t>(2, pos); ++b) h.push_back(t[pos - b]);
            // Cascade rule by hand.
            auto scores = fit.cascade.member(h.size()).scores(h);
            const auto rank = brute_rank(scores, n, t[pos]);
            if (rank) rr += 1.0 / static_cast<double>(rank);
            for (std::size_t q = 0; q < 4; ++q) hits[q] += rank && rank <= ks[q];
            ++count;
          }
        CHECK(report.n_transitions == count);
        CHECK(report.mrr == doctest::Approx(rr / count).epsilon(1e-15));
        for (std::size_t q = 0; q < 4; ++q) {
          CHECK(report.precision[q] == hits[q] / static_cast<double>(count));
          if (q) CHECK(report.precision[q] >= report.precision[q - 1]);
        }
        CHECK(report.mrr >= 0.0);
        CHECK(report.mrr <= 1.0);
      }
    }
  }

  TEST_CASE("evaluation is thread-count independent") {
    Rng rng(43);
    auto planted = random_model(30, {0.8, 0.2}, 5, rng);
    auto train = sample_corpus(planted, 50, 60, 1);
    auto test = sample_corpus(planted, 60, 60, 2);
    auto counts = count_transitions(train, 2);
    FamilyOptions opt;
    opt.alpha = 0.8;
    auto fit = fit_cascade(Family::Rhomp, counts, 2, opt);
    const std::size_t ks[] = {1, 3};
    auto a = evaluate(fit.cascade, test, ks, counts.unigram(), 1);
    auto b = evaluate(fit.cascade, test, ks, counts.unigram(), 4);
    CHECK(a.mrr == b.mrr);
    CHECK(a.precision == b.precision);
    CHECK(a.per_state.size() == b.per_state.size());
  }

  TEST_CASE("cascade dispatch by history length") {
    auto first = std::make_shared<TablePredictor>(1, [](std::span<const StateId> h) {
      CHECK(h.size() == 1);
      return SparseVector{{0}, {1.0}};
    });
    auto second = std::make_shared<TablePredictor>(2, [](std::span<const StateId> h) {
      CHECK(h.size() == 2);
      return SparseVector{{1}, {1.0}};
    });
    Cascade c({first, second});
    const StateId one[] = {2}, three[] = {2, 1, 0};
    CHECK(c.scores(one).index[0] == 0);
    CHECK(c.scores(three).index[0] == 1);
    CHECK(c.prefix(1).order() == 1);
    CHECK_THROWS_AS(Cascade({second}), DataError);
    CHECK_THROWS_AS(c.prefix(3), DataError);
  }

  TEST_CASE("evaluation errors") {
    auto pred = std::make_shared<TablePredictor>(1, [](std::span<const StateId>) { return uniform_scores(2); });
    const std::size_t ks[] = {1};
    CHECK_THROWS_AS(evaluate(single(pred), TrailCorpus{2, {{0}}}, ks), DataError);
    const std::size_t zero[] = {0};
    CHECK_THROWS_AS(evaluate(single(pred), TrailCorpus{2, {{0, 1}}}, zero), DataError);
  }

  TEST_CASE("frequency bucket examples") {
    EvalReport same;
    same.ks = {1};
    for (StateId s = 0; s < 4; ++s) same.per_state.push_back(record(s, 50, 10, 5));
    auto b1 = frequency_buckets(same, 1, 1, 1);
    REQUIRE(b1.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(b1[k].states == std::vector<StateId>{static_cast<StateId>(k)});
      CHECK(b1[k].precision == 0.5);
    }

    auto all = frequency_buckets(same, 1000, 100, 1);
    REQUIRE(all.size() == 1);
    CHECK(all[0].states.size() == 4);
    CHECK(all[0].transitions == 40);

    EvalReport ten;
    ten.ks = {1};
    for (StateId s = 0; s < 10; ++s) ten.per_state.push_back(record(s, 1000 - 10 * s, 200, s < 5 ? 100 : 50));
    auto two = frequency_buckets(ten, 1000, 5, 1);
    REQUIRE(two.size() == 2);
    CHECK(two[0].states == std::vector<StateId>{0, 1, 2, 3, 4});
    CHECK(two[1].states == std::vector<StateId>{5, 6, 7, 8, 9});
    CHECK(two[0].precision == 0.5);
    CHECK(two[1].precision == 0.25);
    CHECK(two[0].median_train_count == 980.0);
    CHECK(two[1].median_train_count == 930.0);
  }

  TEST_CASE("buckets sort by training count and absorb a short tail") {
    EvalReport r;
    r.ks = {1, 3};
    r.per_state = {{0, 5, {1, 2}, 4}, {1, 50, {3, 3}, 4}, {2, 20, {0, 1}, 4}};
    auto b = frequency_buckets(r, 8, 1, 3);
    REQUIRE(b.size() == 1);
    CHECK(b[0].states == std::vector<StateId>{1, 2, 0});
    CHECK(b[0].precision == 0.5);
    CHECK(b[0].median_train_count == 20.0);
    CHECK_THROWS_AS(frequency_buckets(r, 1, 1, 2), DataError);
  }

  TEST_CASE("order one collapses every family to first-order rankings") {
    Rng rng(44);
    auto planted = random_model(12, {1.0}, 4, rng);
    auto train = sample_corpus(planted, 40, 40, 5);
    auto test = sample_corpus(planted, 20, 40, 6);
    const Family families[] = {Family::Mc, Family::Kneser, Family::Rhomp};
    const std::size_t ks[] = {1, 3};
    FamilyOptions opt;
    auto rows = order_sweep(train, test, 1, families, ks, opt);
    REQUIRE(rows.size() == 3);
    // MC and RHOMP order 1 are the same estimate.
    CHECK(rows[0].report.precision == rows[2].report.precision);
    CHECK(rows[0].report.mrr == doctest::Approx(rows[2].report.mrr).epsilon(1e-12));
    // Standalone first-order evaluation matches the sweep row.
    auto counts = count_transitions(train, 1);
    auto mc = fit_cascade(Family::Mc, counts, 1, opt);
    auto alone = evaluate(mc.cascade, test, ks, counts.unigram());
    CHECK(alone.precision == rows[0].report.precision);
    CHECK(alone.mrr == rows[0].report.mrr);
  }

  TEST_CASE("sweep on first-order data and planted second-order data") {
    Rng rng(45);
    const std::size_t ks[] = {1};
    FamilyOptions opt;
    {
      auto chain = random_model(20, {1.0}, 4, rng);
      auto train = sample_corpus(chain, 100, 200, 7);
      auto test = sample_corpus(chain, 60, 200, 8);
      const Family mc[] = {Family::Mc};
      auto rows = order_sweep(train, test, 2, mc, ks, opt);
      CHECK(rows[1].report.precision[0] - rows[0].report.precision[0] <= 0.02);
    }
    {
      auto planted = random_model(20, {0.55, 0.45}, 3, rng);
      auto train = sample_corpus(planted, 100, 200, 9);
      auto test = sample_corpus(planted, 60, 200, 10);
      const Family both[] = {Family::Mc, Family::Rhomp};
      opt.n_nodes = 7;
      auto rows = order_sweep(train, test, 2, both, ks, opt);
      REQUIRE(rows.size() == 4);
      CHECK(rows[3].family == Family::Rhomp);
      CHECK(rows[3].order == 2);
      CHECK(rows[3].report.precision[0] > rows[0].report.precision[0]);
    }
  }

  TEST_CASE("order three rhomp uses beta from the order-two alpha") {
    Rng rng(46);
    auto planted = random_model(10, {0.6, 0.3, 0.1}, 3, rng);
    auto counts = count_transitions(sample_corpus(planted, 40, 60, 11), 3);
    FamilyOptions opt;
    opt.alpha = 0.75;
    auto fit = fit_cascade(Family::Rhomp, counts, 3, opt);
    REQUIRE(fit.beta);
    CHECK(*fit.beta == doctest::Approx(1.0 / 3.0));
    auto w = fit.rhomp_models[2].weights();
    auto expect = weights_from_beta(1.0 / 3.0, 3);
    for (std::size_t r = 0; r < 3; ++r) CHECK(w[r] == doctest::Approx(expect[r]).epsilon(1e-12));
  }
}
