#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qrecm/game.hpp"

using namespace qrecm;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

MixedProfile profile(Vector row, Vector col) { return MixedProfile{{std::move(row), std::move(col)}}; }

Vector random_simplex(std::mt19937_64& rng, Eigen::Index n) {
  std::exponential_distribution<double> e(1.0);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = e(rng);
  return v / v.sum();
}

// Row and Column payoff matrices copied from the catalog table.
const double kRow[4][3][3] = {
    {{10, 30, 10}, {30, 10, 10}, {10, 10, 30}},
    {{10, 30, 10}, {30, 10, 10}, {10, 10, 55}},
    {{25, 30, 10}, {30, 25, 10}, {10, 10, 30}},
    {{20, 30, 10}, {30, 10, 10}, {10, 10, 30}},
};
const double kCol[3][3] = {{30, 10, 30}, {10, 30, 30}, {30, 30, 10}};

}  // namespace

TEST(JokerCatalog, PayoffsMatchTable) {
  const GameSeries s = joker_catalog();
  ASSERT_EQ(s.size(), 4u);
  for (std::size_t m = 0; m < 4; ++m) {
    EXPECT_EQ(s[m].id(), std::to_string(m + 1));
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t pure[2] = {j, k};
        EXPECT_EQ(s[m].payoff(pure, 0), kRow[m][j][k]);
        EXPECT_EQ(s[m].payoff(pure, 1), kCol[j][k]);
      }
  }
  const std::size_t one_one[2] = {0, 0}, jj[2] = {2, 2};
  EXPECT_EQ(s[0].payoff(one_one, 0), 10);
  EXPECT_EQ(s[0].payoff(one_one, 1), 30);
  EXPECT_EQ(s[1].payoff(jj, 0), 55);
  EXPECT_EQ(s[1].payoff(jj, 1), 10);
  EXPECT_EQ(s[3].payoff(one_one, 0), 20);
  EXPECT_EQ(s[3].payoff(one_one, 1), 30);
  EXPECT_EQ(s[0].strategies(0), (std::vector<std::string>{"1", "2", "J"}));
}

TEST(ExpectedUtility, JokerExamples) {
  const GameSeries s = joker_catalog();
  const Vector third = Vector::Constant(3, 1.0 / 3.0);

  Vector u = expected_utility(s[0], 1, profile(third, third));
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(u[j], 70.0 / 3.0, 1e-12);

  u = expected_utility(s[0], 1, profile(vec({0.5, 0.3, 0.2}), third));
  EXPECT_NEAR(u[0], 24.0, 1e-12);
  EXPECT_NEAR(u[1], 20.0, 1e-12);
  EXPECT_NEAR(u[2], 26.0, 1e-12);

  u = expected_utility(s[1], 0, profile(third, third));
  EXPECT_NEAR(u[0], 50.0 / 3.0, 1e-12);
  EXPECT_NEAR(u[1], 50.0 / 3.0, 1e-12);
  EXPECT_NEAR(u[2], 25.0, 1e-12);
}

TEST(ExpectedUtility, OwnVectorIgnored) {
  const GameSeries s = joker_catalog();
  const Vector col = vec({0.2, 0.5, 0.3});
  const Vector a = expected_utility(s[2], 0, profile(vec({1, 0, 0}), col));
  const Vector b = expected_utility(s[2], 0, profile(vec({0.1, 0.1, 0.8}), col));
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ExpectedUtility, MatchesClosedForms) {
  // u_R1 = 30 - 20 c1 ... evaluated against hand-expanded sums of the matrices
  const GameSeries s = joker_catalog();
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const Vector r = random_simplex(rng, 3), c = random_simplex(rng, 3);
    for (std::size_t m = 0; m < 4; ++m) {
      const Vector ur = expected_utility(s[m], 0, profile(r, c));
      const Vector uc = expected_utility(s[m], 1, profile(r, c));
      for (int j = 0; j < 3; ++j) {
        double er = 0.0, ec = 0.0;
        for (int k = 0; k < 3; ++k) {
          er += kRow[m][j][k] * c[k];
          ec += kCol[k][j] * r[k];
        }
        EXPECT_NEAR(ur[j], er, 1e-12);
        EXPECT_NEAR(uc[j], ec, 1e-12);
      }
    }
  }
}

TEST(ExpectedUtility, LinearInOpponent) {
  const GameSeries s = joker_catalog();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const Vector p = random_simplex(rng, 3), q = random_simplex(rng, 3), own = random_simplex(rng, 3);
    const double a = unit(rng);
    for (std::size_t m = 0; m < 4; ++m) {
      const Vector lhs = expected_utility(s[m], 0, profile(own, a * p + (1 - a) * q));
      const Vector rhs = a * expected_utility(s[m], 0, profile(own, p)) +
                         (1 - a) * expected_utility(s[m], 0, profile(own, q));
      EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ExpectedUtility, ColumnIdenticalAcrossJokerGames) {
  const GameSeries s = joker_catalog();
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    const MixedProfile p = profile(random_simplex(rng, 3), random_simplex(rng, 3));
    const Vector u0 = expected_utility(s[0], 1, p);
    for (std::size_t m = 1; m < 4; ++m) EXPECT_EQ(expected_utility(s[m], 1, p), u0);
  }
}

TEST(ExpectedUtility, ThreePlayersBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pay(-5, 5);
  const std::vector<std::vector<std::string>> labels{{"a", "b"}, {"x", "y", "z"}, {"p", "q"}};
  std::vector<double> flat(2 * 3 * 2 * 3);
  for (auto& x : flat) x = pay(rng);
  const NormalFormGame g("g", {"A", "B", "C"}, labels, flat);
  const MixedProfile p{{random_simplex(rng, 2), random_simplex(rng, 3), random_simplex(rng, 2)}};
  const Vector u = expected_utility(g, 1, p);
  for (int j = 0; j < 3; ++j) {
    double e = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c) {
        const std::size_t flat_index = (static_cast<std::size_t>(a) * 3 + j) * 2 + c;
        e += p[0][a] * p[2][c] * flat[flat_index * 3 + 1];
      }
    EXPECT_NEAR(u[j], e, 1e-12);
  }
}

TEST(ExpectedUtility, DimensionMismatch) {
  const GameSeries s = joker_catalog();
  EXPECT_THROW(expected_utility(s[0], 0, profile(Vector::Constant(3, 1.0 / 3), Vector::Constant(2, 0.5))),
               ValidationError);
  EXPECT_THROW(expected_utility(s[0], 0, MixedProfile{{Vector::Constant(3, 1.0 / 3)}}), ValidationError);
}

TEST(Crra, Examples) {
  const NormalFormGame g = NormalFormGame::bimatrix(
      "x", {"A", "B"}, {{"1"}, {"1"}}, Matrix::Constant(1, 1, 100.0), Matrix::Constant(1, 1, 100.0));
  EXPECT_EQ(apply_crra(g, 0.0).payoff(0, 0), 100.0);
  EXPECT_NEAR(apply_crra(g, 0.5).payoff(0, 0), 10.0, 1e-12);
  EXPECT_NEAR(apply_crra(g, 0.99).payoff(0, 0), std::pow(100.0, 0.01), 1e-12);
  EXPECT_NEAR(apply_crra(g, 0.99).payoff(0, 0), 1.0471, 1e-4);
}

TEST(Crra, Errors) {
  const GameSeries s = joker_catalog();
  EXPECT_THROW(apply_crra(s[0], -0.1), RangeError);
  EXPECT_THROW(apply_crra(s[0], 1.0), RangeError);
  const NormalFormGame z = NormalFormGame::bimatrix(
      "z", {"A", "B"}, {{"1", "2"}, {"1"}}, Matrix::Constant(2, 1, 0.0), Matrix::Constant(2, 1, 1.0));
  EXPECT_THROW(apply_crra(z, 0.5), DomainError);
}

TEST(Crra, IdentityAndOrder) {
  const GameSeries s = joker_catalog();
  for (const auto& g : s) EXPECT_EQ(apply_crra(g, 0.0).payoff_tensor(), g.payoff_tensor());
  for (double r : {0.25, 0.5, 0.75, 0.99}) {
    const auto t = apply_crra(s[1], r).payoff_tensor();
    const auto& o = s[1].payoff_tensor();
    for (std::size_t a = 0; a < o.size(); ++a)
      for (std::size_t b = 0; b < o.size(); ++b) {
        if (o[a] < o[b]) {
          EXPECT_LT(t[a], t[b]);
        }
        if (o[a] == o[b]) {
          EXPECT_EQ(t[a], t[b]);
        }
      }
  }
}

TEST(NormalFormGame, Validation) {
  EXPECT_THROW(NormalFormGame("g", {"A", "A"}, {{"1"}, {"1"}}, {0, 0}), ValidationError);
  EXPECT_THROW(NormalFormGame("g", {"A", "B"}, {{"1", "1"}, {"1"}}, {0, 0, 0, 0}), ValidationError);
  EXPECT_THROW(NormalFormGame("g", {"A", "B"}, {{}, {"1"}}, {}), ValidationError);
  EXPECT_THROW(NormalFormGame("g", {"A", "B"}, {{"1", "2"}, {"1"}}, {0, 0, 0}), ValidationError);
  EXPECT_THROW(NormalFormGame("g", {"A"}, {{"1"}}, {NAN}), ValidationError);
}

TEST(MixedProfile, Validation) {
  const GameSeries s = joker_catalog();
  EXPECT_NO_THROW(validate_profile(s[0], MixedProfile::uniform(s[0])));
  EXPECT_THROW(validate_profile(s[0], profile(vec({0.5, 0.5, 0.1}), vec({1, 0, 0}))), ValidationError);
  EXPECT_THROW(validate_profile(s[0], profile(vec({1.2, -0.2, 0}), vec({1, 0, 0}))), ValidationError);
}

TEST(GameSeries, Validation) {
  const GameSeries s = joker_catalog();
  EXPECT_THROW(GameSeries({s[0]}), ValidationError);
  const NormalFormGame other = NormalFormGame::bimatrix("o", {"Row", "Column"}, {{"1", "2"}, {"1", "2"}},
                                                        Matrix::Zero(2, 2), Matrix::Zero(2, 2));
  EXPECT_THROW(GameSeries({s[0], other}), ValidationError);
  EXPECT_EQ(s.index_of("3"), 2u);
  EXPECT_THROW(s.index_of("7"), ValidationError);
  const std::size_t pick[2] = {3, 1};
  const GameSeries sub = s.subset(pick);
  EXPECT_EQ(sub[0].id(), "4");
  EXPECT_EQ(sub[1].id(), "2");
}
