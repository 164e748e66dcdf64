#include <doctest.h>

#include <sstream>

#include "rhomp/stochastic.hpp"
#include "support.hpp"

using namespace rhomp;
using namespace rhomp::testing;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> w(dim);
  for (auto& v : w) {
    const double u = rng.uniform();
    v = u < 0.2 ? 0.0 : 3.0 * rng.uniform();
  }
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) w[0] = 0.5;
  return w;
}

}  // namespace

TEST_SUITE("stochastic") {
  TEST_CASE("projection examples") {
    const double a[] = {0.5, 0.8};
    auto x = project_to_simplex(a);
    CHECK(x[0] == doctest::Approx(0.35).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(0.65).epsilon(1e-14));
    auto oracle = qp_enumerate(a);
    CHECK(max_abs_diff(x, oracle) < 1e-14);

    const double b[] = {0.3, 0.7};
    auto y = project_to_simplex(b);
    CHECK(y[0] == doctest::Approx(0.3));
    CHECK(y[1] == doctest::Approx(0.7));

    const double c[] = {2.0};
    CHECK(project_to_simplex(c)[0] == 1.0);

    const double z[] = {0.0, 0.0};
    CHECK_THROWS_AS(project_to_simplex(z), DataError);
  }

  TEST_CASE("projection matches brute-force QP enumeration") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
      auto w = random_vector(rng, 1 + rng.below(12));
      auto x = project_to_simplex(w);
      CHECK(max_abs_diff(x, qp_enumerate(w)) <= 1e-12);
    }
  }

  TEST_CASE("projection matches the bisection oracle up to 50 dims") {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
      auto w = random_vector(rng, 1 + rng.below(50));
      auto x = project_to_simplex(w);
      CHECK(max_abs_diff(x, qp_bisect(w)) <= 1e-10);
    }
  }

  TEST_CASE("projection properties") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
      auto w = random_vector(rng, 1 + rng.below(30));
      auto x = project_to_simplex(w);
      double sum = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(x[i] >= 0.0);
        if (w[i] == 0.0) CHECK(x[i] == 0.0);
        sum += x[i];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      // Idempotence on the support of x.
      auto again = project_to_simplex(x);
      CHECK(max_abs_diff(again, x) <= 1e-12);
      // Permutation equivariance.
      std::vector<std::size_t> perm(w.size());
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
      std::vector<double> pw(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) pw[i] = w[perm[i]];
      auto px = project_to_simplex(pw);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(px[i] - x[perm[i]]) <= 1e-14);
    }
  }

  TEST_CASE("project columns") {
    auto m = SparseColumnMatrix::from_triplets(2, {{0, 0, 0.5}, {0, 1, 0.8}, {1, 0, 0.3}, {1, 1, 0.7}});
    auto p = project_columns(m);
    CHECK(p.at(0, 0) == doctest::Approx(0.35));
    CHECK(p.at(1, 0) == doctest::Approx(0.65));
    CHECK(p.at(0, 1) == doctest::Approx(0.3));
    CHECK(p.at(1, 1) == doctest::Approx(0.7));

    auto diag = project_columns(SparseColumnMatrix::from_triplets(3, {{0, 0, 3.0}, {1, 1, 3.0}, {2, 2, 3.0}}));
    for (StateId i = 0; i < 3; ++i) {
      CHECK(diag.at(i, i) == 1.0);
      CHECK(diag.nnz() == 3);
    }

    Rng rng(5);
    auto s = random_stochastic(20, 4, rng);
    auto again = project_columns(s.data());
    CHECK(max_abs_diff(again.data().flat_values(), s.data().flat_values()) <= 1e-15);

    auto with_zero = SparseColumnMatrix::from_triplets(2, {{0, 0, 1.0}, {1, 1, 0.0}});
    try {
      project_columns(with_zero);
      FAIL("expected an error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("column 1") != std::string::npos);
    }
  }

  TEST_CASE("projection of columns is thread-count independent") {
    Rng rng(8);
    std::vector<Triplet> t;
    for (StateId c = 0; c < 40; ++c)
      for (StateId r = 0; r < 40; r += 1 + static_cast<StateId>(rng.below(4))) t.push_back({c, r, rng.uniform() + 0.01});
    auto m = SparseColumnMatrix::from_triplets(40, t);
    CHECK(project_columns(m, 1) == project_columns(m, 4));
  }

  TEST_CASE("sparse matrix construction") {
    auto m = SparseColumnMatrix::from_triplets(3, {{2, 1, 0.25}, {0, 2, 0.5}, {2, 1, 0.25}, {0, 0, 0.5}});
    CHECK(m.nnz() == 3);
    CHECK(m.at(1, 2) == 0.5);
    CHECK(m.at(2, 2) == 0.0);
    CHECK(m.position(0, 1) == m.nnz());
    CHECK(m.column_empty(1));
    CHECK(m.column_sum(0) == 1.0);

    CHECK_THROWS_AS(ColumnStochasticMatrix(SparseColumnMatrix::from_triplets(2, {{0, 0, 0.5}})), DataError);
    CHECK_THROWS_AS(ColumnStochasticMatrix(SparseColumnMatrix::from_triplets(2, {{0, 0, 1.5}, {0, 1, -0.5}})),
                    DataError);
    CHECK_THROWS_AS(SparseColumnMatrix::from_triplets(2, {{0, 2, 1.0}}), DataError);
  }

  TEST_CASE("write matrix") {
    auto m = SparseColumnMatrix::from_triplets(2, {{1, 0, 0.25}, {1, 1, 0.75}, {0, 1, 1.0}});
    std::ostringstream out;
    write_matrix(out, m);
    CHECK(out.str() == "0\t1\t1\n1\t0\t0.25\n1\t1\t0.75\n");
  }
}
