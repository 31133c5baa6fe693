#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "qrecm/qre.hpp"

using namespace qrecm;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

Vector random_simplex(std::mt19937_64& rng, Eigen::Index n) {
  std::exponential_distribution<double> e(1.0);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = e(rng);
  return v / v.sum();
}

QreSolution solve(const NormalFormGame& g, double lambda) {
  LogitParams p;
  p.lambda = lambda;
  return solve_logit_qre(g, p);
}

// Plain softmax written out without the max shift, fine for small inputs.
Vector naive_softmax(const Vector& u, double lambda) {
  Vector e = (lambda * u).array().exp();
  return e / e.sum();
}

const double kLambdas[] = {0.5, 1, 2, 5, 10, 20};

}  // namespace

TEST(LogitResponse, Examples) {
  Vector p = logit_response(Vector::Zero(3), 1.0);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(p[j], 1.0 / 3.0, 1e-15);
  p = logit_response(vec({4, -1, 9}), 0.0);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(p[j], 1.0 / 3.0, 1e-15);
  p = logit_response(vec({1, 0}), std::log(3.0));
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(LogitResponse, AgreesWithNaiveSoftmax) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int t = 0; t < 100; ++t) {
    const Vector u = vec({d(rng), d(rng), d(rng), d(rng)});
    EXPECT_LE((logit_response(u, 1.7) - naive_softmax(u, 1.7)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(LogitResponse, OverflowSafe) {
  const Vector p = logit_response(vec({1000, 999, -1000}), 5.0);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_GT(p[0], p[1]);
}

TEST(LogitResponse, Errors) {
  EXPECT_THROW(logit_response(vec({1, NAN}), 1.0), DomainError);
  EXPECT_THROW(logit_response(vec({1, std::numeric_limits<double>::infinity()}), 1.0), DomainError);
  EXPECT_THROW(logit_response(vec({1, 2}), NAN), DomainError);
  EXPECT_THROW(logit_response(vec({1, 2}), -1.0), RangeError);
}

TEST(LogitResponse, InteriorResponsiveRankOrdered) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-20, 20), bump(0.01, 3);
  for (int t = 0; t < 500; ++t) {
    const Vector u = vec({d(rng), d(rng), d(rng)});
    const double lambda = 0.05 + bump(rng);
    const Vector p = logit_response(u, lambda);
    EXPECT_GT(p.minCoeff(), 0.0);
    EXPECT_NEAR(p.sum(), 1.0, 1e-14);
    for (Eigen::Index j = 0; j < 3; ++j) {
      Vector v = u;
      v[j] += bump(rng);
      // a component already rounded to 1 cannot move in double precision
      if (p[j] < 1.0 - 1e-9) {
        EXPECT_GT(logit_response(v, lambda)[j], p[j]);
      } else {
        EXPECT_GE(logit_response(v, lambda)[j], p[j]);
      }
      for (Eigen::Index k = 0; k < 3; ++k)
        if (u[j] > u[k]) {
          EXPECT_GT(p[j], p[k]);
        }
    }
  }
}

TEST(SocialSurplus, Examples) {
  EXPECT_NEAR(social_surplus(Vector::Zero(3), 1.0), std::log(3.0), 1e-15);
  EXPECT_THROW(social_surplus(Vector::Zero(3), 0.0), RangeError);
  EXPECT_THROW(social_surplus(Vector::Zero(3), -2.0), RangeError);
}

TEST(SocialSurplus, TranslationIdentity) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int t = 0; t < 100; ++t) {
    const Vector u = vec({d(rng), d(rng), d(rng)});
    for (double lambda : {0.3, 1.0, 4.0})
      EXPECT_NEAR(social_surplus(u + Vector::Constant(3, 7.3), lambda), social_surplus(u, lambda) + 7.3,
                  1e-12);
  }
}

TEST(SocialSurplus, GradientIsLogitResponse) {
  // relative agreement needs probabilities well above the rounding error of
  // the differences, so the relative check uses moderate utilities
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> narrow(-2, 2), wide(-5, 5);
  const double h = 1e-5;
  for (int t = 0; t < 100; ++t) {
    const Vector u = vec({narrow(rng), narrow(rng), narrow(rng)});
    const Vector w = vec({wide(rng), wide(rng), wide(rng)});
    for (double lambda : {0.5, 1.0, 2.0}) {
      const Vector p = logit_response(u, lambda), q = logit_response(w, lambda);
      for (Eigen::Index j = 0; j < 3; ++j) {
        Vector up = u, dn = u;
        up[j] += h;
        dn[j] -= h;
        const double g = (social_surplus(up, lambda) - social_surplus(dn, lambda)) / (2 * h);
        EXPECT_LE(std::abs(g - p[j]) / p[j], 1e-6);
        up = w;
        dn = w;
        up[j] += h;
        dn[j] -= h;
        const double gw = (social_surplus(up, lambda) - social_surplus(dn, lambda)) / (2 * h);
        EXPECT_LE(std::abs(gw - q[j]), 1e-9);
      }
    }
  }
}

TEST(Fenchel, Examples) {
  EXPECT_LE(fenchel_check(Vector::Zero(3), 1.0), 1e-15);
  EXPECT_NEAR(logit_conjugate(Vector::Constant(3, 1.0 / 3.0), 1.0), -std::log(3.0), 1e-15);
  EXPECT_LE(fenchel_check(vec({10, 0, 0}), 2.0), 1e-10);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-50, 50);
  for (int t = 0; t < 200; ++t) EXPECT_LE(fenchel_check(vec({d(rng), d(rng), d(rng)}), 1.0), 1e-10);
}

TEST(Fenchel, ZeroLogZero) {
  EXPECT_EQ(logit_conjugate(vec({1, 0, 0}), 1.0), 0.0);
  EXPECT_NEAR(logit_conjugate(vec({0.5, 0.5, 0}), 2.0), 0.5 * std::log(0.5), 1e-15);
}

TEST(SolveQre, ZeroLambdaUniform) {
  const GameSeries s = joker_catalog();
  for (const auto& g : s) {
    const QreSolution q = solve(g, 0.0);
    EXPECT_TRUE(q.converged);
    for (std::size_t i = 0; i < 2; ++i)
      EXPECT_LE((q.profile[i] - Vector::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(SolveQre, SymmetricJokerUniform) {
  const GameSeries s = joker_catalog();
  for (double lambda : {0.1, 1.0, 10.0}) {
    const QreSolution q = solve(s[0], lambda);
    ASSERT_TRUE(q.converged);
    for (std::size_t i = 0; i < 2; ++i)
      EXPECT_LE((q.profile[i] - Vector::Constant(3, 1.0 / 3.0)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SolveQre, LowJokerAtFive) {
  const GameSeries s = joker_catalog();
  const QreSolution q = solve(s[1], 5.0);
  ASSERT_TRUE(q.converged);
  const Vector& r = q.profile[0];
  const Vector& c = q.profile[1];
  EXPECT_NEAR(c[0], c[1], 1e-10);
  EXPECT_GT(c[0], 1.0 / 3.0);
  EXPECT_LE(c[0], 9.0 / 22.0);
  EXPECT_NEAR(r[0], r[1], 1e-10);
  EXPECT_LT(r[0], 1.0 / 3.0);
}

TEST(SolveQre, FixedPointAndInteriority) {
  const GameSeries s = joker_catalog();
  for (double lambda : kLambdas)
    for (const auto& g : s) {
      const QreSolution q = solve(g, lambda);
      ASSERT_TRUE(q.converged) << g.id() << " " << lambda;
      EXPECT_LE(q.residual, 1e-12);
      const MixedProfile br = quantal_response(g, q.profile, lambda);
      for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_LE((br[i] - q.profile[i]).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GT(q.profile[i].minCoeff(), 0.0);
        EXPECT_LT(q.profile[i].maxCoeff(), 1.0);
      }
    }
}

TEST(SolveQre, UniquenessBounds) {
  const GameSeries s = joker_catalog();
  for (double lambda : kLambdas) {
    const Vector r2 = solve(s[1], lambda).profile[0], c2 = solve(s[1], lambda).profile[1];
    EXPECT_GT(c2[0], 1.0 / 3.0);
    EXPECT_LE(c2[0], 9.0 / 22.0);
    EXPECT_LT(r2[0], 1.0 / 3.0);

    const Vector r3 = solve(s[2], lambda).profile[0], c3 = solve(s[2], lambda).profile[1];
    EXPECT_GE(c3[0], 4.0 / 15.0);
    EXPECT_LT(c3[0], 1.0 / 3.0);
    EXPECT_GT(r3[0], 1.0 / 3.0);

    const Vector r4 = solve(s[3], lambda).profile[0], c4 = solve(s[3], lambda).profile[1];
    EXPECT_NEAR(c4[0], c4[2], 1e-10);
    EXPECT_GT(c4[0], 1.0 / 3.0);
    EXPECT_LE(c4[0], 0.4);
    EXPECT_NEAR(r4[1], r4[2], 1e-10);
    EXPECT_LT(r4[1], 1.0 / 3.0);
  }
}

TEST(SolveQre, MultiStartAgreement) {
  const GameSeries s = joker_catalog();
  std::mt19937_64 rng(12);
  for (double lambda : kLambdas)
    for (const auto& g : s) {
      const QreSolution ref = solve(g, lambda);
      LogitParams p;
      p.lambda = lambda;
      for (int k = 0; k < 5; ++k) {
        const MixedProfile start{{random_simplex(rng, 3), random_simplex(rng, 3)}};
        const QreSolution q = solve_logit_qre(g, p, start);
        ASSERT_TRUE(q.converged);
        for (std::size_t i = 0; i < 2; ++i)
          EXPECT_LE((q.profile[i] - ref.profile[i]).cwiseAbs().maxCoeff(), 1e-8);
      }
    }
}

TEST(SolveQre, HighPrecisionViaContinuation) {
  const GameSeries s = joker_catalog();
  for (const auto& g : s) {
    const QreSolution q = solve(g, 60.0);
    ASSERT_TRUE(q.converged) << g.id();
    EXPECT_LE(qre_residual(g, q.profile, 60.0), 1e-12);
  }
}

TEST(SolveQre, ConvergenceFlagIsHonest) {
  const GameSeries s = joker_catalog();
  LogitParams p;
  p.lambda = 10.0;
  p.max_iter = 1;
  p.tol = 1e-15;
  for (const auto& g : s) {
    const QreSolution q = solve_logit_qre(g, p);
    EXPECT_EQ(q.converged, q.residual <= p.tol);
    EXPECT_TRUE(std::isfinite(q.residual));
  }
}

TEST(SolveQre, ParamValidation) {
  const GameSeries s = joker_catalog();
  LogitParams p;
  p.lambda = -1;
  EXPECT_THROW(solve_logit_qre(s[0], p), RangeError);
  p.lambda = 1;
  p.damping = 0;
  EXPECT_THROW(solve_logit_qre(s[0], p), RangeError);
  p.damping = 0.5;
  p.tol = 0;
  EXPECT_THROW(solve_logit_qre(s[0], p), RangeError);
}

TEST(RankOrder, Examples) {
  const GameSeries s = joker_catalog();
  for (const auto& e : rank_order_check(s[0], MixedProfile::uniform(s[0]))) EXPECT_EQ(e.value, 0.0);

  const MixedProfile p{{vec({0.6, 0.2, 0.2}), Vector::Constant(3, 1.0 / 3.0)}};
  const auto entries = rank_order_check(s[0], p);
  ASSERT_EQ(entries.size(), 6u);
  EXPECT_EQ(entries[0].player, 0u);
  EXPECT_EQ(entries[0].first, 0u);
  EXPECT_EQ(entries[0].second, 1u);
  EXPECT_NEAR(entries[0].value, 0.0, 1e-12);
}

TEST(RankOrder, LogitEquilibriaHaveNoViolations) {
  const GameSeries s = joker_catalog();
  for (double lambda : kLambdas)
    for (const auto& g : s)
      for (const auto& e : rank_order_check(g, solve(g, lambda).profile)) EXPECT_GE(e.value, -1e-12);
}

TEST(RankOrder, DimensionMismatch) {
  const GameSeries s = joker_catalog();
  EXPECT_THROW(rank_order_check(s[0], MixedProfile{{Vector::Constant(2, 0.5), Vector::Constant(3, 1.0 / 3)}}),
               ValidationError);
}
