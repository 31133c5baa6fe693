#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "qrecm/cycles.hpp"
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

Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = d(rng);
  return v;
}

const std::vector<std::string> kJokerOrder{
    "121",   "131",   "141",   "232",   "242",   "343",   "1231",  "1241",  "1321",  "1341",
    "1421",  "1431",  "2342",  "2432",  "12341", "12431", "13241", "13421", "14231", "14321"};

// Every sequence of distinct games, reduced to its smallest-first rotation.
std::set<std::vector<std::size_t>> brute_force_cycles(std::size_t m) {
  std::set<std::vector<std::size_t>> out;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<std::size_t> sub;
    for (std::size_t g = 0; g < m; ++g)
      if (mask & (1u << g)) sub.push_back(g);
    if (sub.size() < 2) continue;
    do {
      out.insert(canonical_rotation(sub));
    } while (std::next_permutation(sub.begin(), sub.end()));
  }
  return out;
}

double dot_cycle(const std::vector<Vector>& u, const std::vector<Vector>& p) {
  return cycle_sum(std::span<const Vector>(u), std::span<const Vector>(p));
}

}  // namespace

TEST(EnumerateCycles, JokerInventory) {
  const CycleInventory inv = enumerate_cycles(4, 2);
  ASSERT_EQ(inv.size(), 40u);
  for (std::size_t l = 0; l < 40; ++l) {
    EXPECT_EQ(inv[l].player, l / 20);
    EXPECT_EQ(inv[l].label(), kJokerOrder[l % 20]) << l;
  }
}

TEST(EnumerateCycles, SmallCounts) {
  EXPECT_EQ(enumerate_cycles(2, 2).size(), 2u);
  EXPECT_EQ(enumerate_cycles(2, 2)[0].label(), "121");
  const CycleInventory three = enumerate_cycles(3, 1);
  ASSERT_EQ(three.size(), 5u);
  std::vector<std::string> labels;
  for (const auto& c : three.cycles) labels.push_back(c.label());
  EXPECT_EQ(labels, (std::vector<std::string>{"121", "131", "232", "1231", "1321"}));
}

TEST(EnumerateCycles, CountFormulaAndBruteForce) {
  for (std::size_t m = 2; m <= 7; ++m) {
    const auto expected = brute_force_cycles(m);
    for (std::size_t n = 1; n <= 3; ++n) {
      const CycleInventory inv = enumerate_cycles(m, n);
      std::size_t formula = 0;
      for (std::size_t len = 2; len <= m; ++len) {
        std::size_t choose = 1, fact = 1;
        for (std::size_t k = 0; k < len; ++k) choose = choose * (m - k) / (k + 1);
        for (std::size_t k = 2; k < len; ++k) fact *= k;
        formula += choose * fact;
      }
      EXPECT_EQ(inv.size(), n * formula);
      EXPECT_EQ(cycles_per_player(m), formula);
      std::set<std::vector<std::size_t>> got;
      for (const auto& c : inv.cycles)
        if (c.player == 0) got.insert(c.games);
      EXPECT_EQ(got, expected);
    }
  }
}

TEST(EnumerateCycles, OrderAndCanonicalForm) {
  const CycleInventory inv = enumerate_cycles(5, 2);
  for (std::size_t l = 0; l < inv.size(); ++l) {
    const auto& c = inv[l];
    EXPECT_EQ(c.games, canonical_rotation(c.games));
    std::set<std::size_t> distinct(c.games.begin(), c.games.end());
    EXPECT_EQ(distinct.size(), c.length());
    if (l + 1 < inv.size() && inv[l + 1].player == c.player) {
      const auto& d = inv[l + 1];
      EXPECT_TRUE(c.length() < d.length() || (c.length() == d.length() && c.games < d.games));
    }
  }
}

TEST(EnumerateCycles, Errors) {
  EXPECT_THROW(enumerate_cycles(1, 2), ValidationError);
  EXPECT_THROW(enumerate_cycles(0, 2), ValidationError);
  EXPECT_THROW(enumerate_cycles(3, 0), ValidationError);
}

TEST(EnumerateCycles, SubsetQueries) {
  const CycleInventory inv = enumerate_cycles(4, 2);
  EXPECT_EQ(inv.indices_for_player(1).front(), 20u);
  // game 1 absent: 232, 242, 343, 2342, 2432 for each player (1-based)
  const std::vector<std::size_t> expected{3, 4, 5, 12, 13, 23, 24, 25, 32, 33};
  EXPECT_EQ(inv.indices_without_game(0), expected);
}

TEST(CycleSum, Examples) {
  std::mt19937_64 rng(1);
  const Vector u = random_vector(rng, 3, -5, 5), p = random_simplex(rng, 3);
  EXPECT_EQ(dot_cycle({u, u, u}, {p, p, p}), 0.0);
  EXPECT_NEAR(dot_cycle({vec({1, 0}), vec({0, 1})}, {vec({0.7, 0.3}), vec({0.4, 0.6})}), -0.6, 1e-15);
  EXPECT_THROW(dot_cycle({u, u}, {p}), ValidationError);
  EXPECT_THROW(dot_cycle({u, vec({1, 2})}, {p, p}), ValidationError);
}

TEST(CycleSum, RotationInvariance) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t len = 2 + static_cast<std::size_t>(t % 5);
    std::vector<Vector> u, p;
    for (std::size_t k = 0; k < len; ++k) {
      u.push_back(random_vector(rng, 3, -30, 30));
      p.push_back(random_simplex(rng, 3));
    }
    const double base = dot_cycle(u, p);
    for (std::size_t r = 1; r < len; ++r) {
      std::rotate(u.begin(), u.begin() + 1, u.end());
      std::rotate(p.begin(), p.begin() + 1, p.end());
      EXPECT_NEAR(dot_cycle(u, p), base, 1e-12);
    }
  }
}

TEST(CycleSum, TwoCycleReduction) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    const Vector u0 = random_vector(rng, 3, -10, 10), u1 = random_vector(rng, 3, -10, 10);
    const Vector p0 = random_simplex(rng, 3), p1 = random_simplex(rng, 3);
    EXPECT_NEAR(dot_cycle({u0, u1}, {p0, p1}), (u1 - u0).dot(p0 - p1), 1e-12);
  }
}

TEST(CycleSum, SoftmaxCyclesAreNonPositive) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lam(0.05, 5.0);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t len = 2 + static_cast<std::size_t>(t % 5);
    const double lambda = lam(rng);
    std::vector<Vector> u, p;
    for (std::size_t k = 0; k < len; ++k) {
      u.push_back(random_vector(rng, 4, -20, 20));
      p.push_back(logit_response(u.back(), lambda));
    }
    EXPECT_LE(dot_cycle(u, p), 1e-12);
  }
}

TEST(Hhk, Examples) {
  const Vector p = vec({0.2, 0.3, 0.5});
  HhkRank r = hhk_cumulative_rank(vec({0, 0, 0}), vec({2, 1, 0}), p, p);
  EXPECT_TRUE(r.pass);
  for (double s : r.partial_sums) EXPECT_EQ(s, 0.0);

  r = hhk_cumulative_rank(vec({0, 0, 0}), vec({2, 1, 0}), vec({0.2, 0.3, 0.5}), vec({0.3, 0.35, 0.35}));
  ASSERT_EQ(r.partial_sums.size(), 3u);
  EXPECT_NEAR(r.partial_sums[0], 0.1, 1e-15);
  EXPECT_NEAR(r.partial_sums[1], 0.15, 1e-15);
  EXPECT_NEAR(r.partial_sums[2], 0.0, 1e-15);
  EXPECT_TRUE(r.pass);

  r = hhk_cumulative_rank(vec({0, 0, 0}), vec({2, 1, 0}), vec({0.5, 0.3, 0.2}), vec({0.3, 0.35, 0.35}));
  EXPECT_NEAR(r.partial_sums[0], -0.2, 1e-15);
  EXPECT_FALSE(r.pass);

  EXPECT_THROW(hhk_cumulative_rank(vec({0, 0}), vec({2, 1, 0}), p, p), ValidationError);
}

TEST(Hhk, StableTieBreak) {
  const HhkRank r = hhk_cumulative_rank(vec({1, 1, 1}), vec({2, 3, 3}), vec({0.3, 0.3, 0.4}),
                                        vec({0.3, 0.3, 0.4}));
  EXPECT_EQ(r.order, (std::vector<std::size_t>{1, 2, 0}));
}

// Cumulative rank implies CM for two games when every utility change is
// non-negative.
TEST(Hhk, ForwardDirection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> up(0.0, 10.0);
  int accepted = 0, tries = 0, counterexamples = 0;
  while (accepted < 1000 && tries < 200000) {
    ++tries;
    const Eigen::Index j = 2 + (tries % 4);
    const Vector u0 = random_vector(rng, j, -10, 10);
    Vector u1 = u0;
    for (Eigen::Index k = 0; k < j; ++k) u1[k] += up(rng);
    const Vector p0 = random_simplex(rng, j), p1 = random_simplex(rng, j);
    if (!hhk_cumulative_rank(u0, u1, p0, p1).pass) continue;
    ++accepted;
    if (dot_cycle({u0, u1}, {p0, p1}) > 1e-12) ++counterexamples;
  }
  EXPECT_EQ(accepted, 1000);
  EXPECT_EQ(counterexamples, 0);
}

// Exact logit responses satisfy CM, and hence the cumulative rank property.
TEST(Hhk, ReverseDirection) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> lam(0.05, 3.0);
  int failures = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index j = 2 + (t % 4);
    const double lambda = lam(rng);
    const Vector u0 = random_vector(rng, j, -10, 10), u1 = random_vector(rng, j, -10, 10);
    const Vector p0 = logit_response(u0, lambda), p1 = logit_response(u1, lambda);
    ASSERT_LE(dot_cycle({u0, u1}, {p0, p1}), 1e-12);
    if (!hhk_cumulative_rank(u0, u1, p0, p1).pass) ++failures;
  }
  EXPECT_EQ(failures, 0);
}
