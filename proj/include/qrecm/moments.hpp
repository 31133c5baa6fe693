#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qrecm/cycles.hpp"
#include "qrecm/error.hpp"
#include "qrecm/game.hpp"

namespace qrecm {

/// Per-game profiles, indexed like the series.
using SeriesProfiles = std::vector<MixedProfile>;

/// Trial counts K, indexed [player][game].
using TrialCounts = std::vector<std::vector<std::size_t>>;

inline TrialCounts uniform_trials(std::size_t players, std::size_t games, std::size_t k) {
  return TrialCounts(players, std::vector<std::size_t>(games, k));
}

inline constexpr double kZeroVariance = 1e-14;

/// Free probability coordinates: the first J_i - 1 probabilities of every
/// (player, game) block; the last strategy is implied by the simplex. Ordered
/// player-major, then game, then strategy.
class CoordinateLayout {
 public:
  CoordinateLayout(const GameSeries& series) : games_(series.size()) {
    std::size_t o = 0;
    for (std::size_t i = 0; i < series.num_players(); ++i) {
      offsets_.push_back(o);
      free_.push_back(series.num_strategies(i) - 1);
      o += games_ * free_.back();
    }
    dim_ = o;
  }

  std::size_t dim() const { return dim_; }
  std::size_t num_players() const { return free_.size(); }
  std::size_t num_games() const { return games_; }
  std::size_t free_per_block(std::size_t player) const { return free_[player]; }
  std::size_t index(std::size_t player, std::size_t game, std::size_t a) const {
    return offsets_[player] + game * free_[player] + a;
  }

 private:
  std::size_t games_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> free_;
};

namespace detail {

inline void validate_series_profiles(const GameSeries& series, const SeriesProfiles& profiles) {
  if (profiles.size() != series.size())
    throw ValidationError("expected " + std::to_string(series.size()) + " profiles, got " +
                          std::to_string(profiles.size()));
  for (std::size_t m = 0; m < series.size(); ++m) validate_profile(series[m], profiles[m], 1e-9);
}

inline void validate_inventory(const GameSeries& series, const CycleInventory& inventory) {
  if (inventory.num_games != series.size() || inventory.num_players != series.num_players())
    throw ValidationError("cycle inventory was built for a different series shape");
}

// eu[m][i] = expected_utility(series[m], i, profiles[m])
inline std::vector<std::vector<Vector>> utilities(const GameSeries& series,
                                                  const SeriesProfiles& profiles) {
  std::vector<std::vector<Vector>> eu(series.size());
  for (std::size_t m = 0; m < series.size(); ++m)
    for (std::size_t i = 0; i < series.num_players(); ++i)
      eu[m].push_back(expected_utility(series[m], i, profiles[m]));
  return eu;
}

}  // namespace detail

/// Left-hand sides of the cyclic-monotonicity inequalities, one per cycle of
/// the inventory. Each game's utilities use the opponents' mixtures from that
/// same game.
inline Vector nu_vector(const GameSeries& series, const SeriesProfiles& profiles,
                        const CycleInventory& inventory) {
  detail::validate_inventory(series, inventory);
  detail::validate_series_profiles(series, profiles);
  const auto eu = detail::utilities(series, profiles);
  Vector nu(static_cast<Eigen::Index>(inventory.size()));
  std::vector<Vector> us, ps;
  for (std::size_t l = 0; l < inventory.size(); ++l) {
    const Cycle& c = inventory[l];
    us.clear();
    ps.clear();
    for (auto m : c.games) {
      us.push_back(eu[m][c.player]);
      ps.push_back(profiles[m][c.player]);
    }
    nu[static_cast<Eigen::Index>(l)] = cycle_sum(us, ps);
  }
  return nu;
}

/// Closed-form d nu / d(free coordinates) for two-player series.
///
/// For a cycle of player i visiting game g at slot t (next game h, previous
/// game q) the own-probability derivative is (u_i^h - u_i^g)_a minus the same
/// at the last strategy; the opponent derivative is
/// (pi_i^q - pi_i^g)' A_i^g (e_b - e_last), where A_i^g is i's payoff matrix.
/// Throws UnsupportedShape for n != 2; use jacobian_fd there.
inline Matrix jacobian_analytic(const GameSeries& series, const SeriesProfiles& profiles,
                                const CycleInventory& inventory) {
  if (series.num_players() != 2)
    throw UnsupportedShape("analytic Jacobian covers two-player series only");
  detail::validate_inventory(series, inventory);
  detail::validate_series_profiles(series, profiles);
  const CoordinateLayout layout(series);
  const auto eu = detail::utilities(series, profiles);

  std::vector<std::array<Matrix, 2>> payoff(series.size());
  for (std::size_t m = 0; m < series.size(); ++m)
    for (std::size_t i = 0; i < 2; ++i)
      payoff[m][i] = expected_utility_cross(series[m], i, 1 - i, profiles[m]);

  Matrix jac = Matrix::Zero(static_cast<Eigen::Index>(inventory.size()),
                            static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t l = 0; l < inventory.size(); ++l) {
    const Cycle& c = inventory[l];
    const std::size_t i = c.player;
    const std::size_t k = 1 - i;
    const std::size_t len = c.length();
    const auto row = static_cast<Eigen::Index>(l);
    const auto own_last = static_cast<Eigen::Index>(series.num_strategies(i) - 1);
    const auto opp_last = static_cast<Eigen::Index>(series.num_strategies(k) - 1);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t g = c.games[t];
      const std::size_t h = c.games[(t + 1) % len];
      const std::size_t q = c.games[(t + len - 1) % len];

      const Vector du = eu[h][i] - eu[g][i];
      for (std::size_t a = 0; a < layout.free_per_block(i); ++a)
        jac(row, static_cast<Eigen::Index>(layout.index(i, g, a))) +=
            du[static_cast<Eigen::Index>(a)] - du[own_last];

      const Vector w = profiles[q][i] - profiles[g][i];
      const Vector wa = payoff[g][i].transpose() * w;
      for (std::size_t b = 0; b < layout.free_per_block(k); ++b)
        jac(row, static_cast<Eigen::Index>(layout.index(k, g, b))) +=
            wa[static_cast<Eigen::Index>(b)] - wa[opp_last];
    }
  }
  return jac;
}

/// Central finite differences of nu_vector in every free coordinate, moving
/// the block's last probability to stay on the simplex. If a perturbation
/// leaves [0,1] the step is shrunk tenfold once before giving up.
inline Matrix jacobian_fd(const GameSeries& series, const SeriesProfiles& profiles,
                          const CycleInventory& inventory, double step = 1e-6) {
  if (!(step > 0.0)) throw RangeError("finite-difference step must be positive");
  detail::validate_inventory(series, inventory);
  detail::validate_series_profiles(series, profiles);
  const CoordinateLayout layout(series);
  Matrix jac(static_cast<Eigen::Index>(inventory.size()), static_cast<Eigen::Index>(layout.dim()));

  auto fits = [](const Vector& p, Eigen::Index a, Eigen::Index last, double h) {
    return p[a] - h >= 0.0 && p[a] + h <= 1.0 && p[last] - h >= 0.0 && p[last] + h <= 1.0;
  };

  for (std::size_t i = 0; i < series.num_players(); ++i) {
    const auto last = static_cast<Eigen::Index>(series.num_strategies(i) - 1);
    for (std::size_t m = 0; m < series.size(); ++m) {
      for (std::size_t a = 0; a < layout.free_per_block(i); ++a) {
        const auto ea = static_cast<Eigen::Index>(a);
        double h = step;
        if (!fits(profiles[m][i], ea, last, h)) h *= 0.1;
        if (!fits(profiles[m][i], ea, last, h))
          throw DomainError("finite-difference perturbation leaves the simplex (player " +
                            std::to_string(i) + ", game " + std::to_string(m) + ")");
        SeriesProfiles plus = profiles, minus = profiles;
        plus[m][i][ea] += h;
        plus[m][i][last] -= h;
        minus[m][i][ea] -= h;
        minus[m][i][last] += h;
        jac.col(static_cast<Eigen::Index>(layout.index(i, m, a))) =
            (nu_vector(series, plus, inventory) - nu_vector(series, minus, inventory)) / (2.0 * h);
      }
    }
  }
  return jac;
}

/// Multinomial proportion covariance of the free coordinates, block diagonal
/// over (player, game): diag p_a (1 - p_a) / K, off-diagonal -p_a p_b / K.
inline Matrix multinomial_cov(const GameSeries& series, const SeriesProfiles& profiles,
                              const TrialCounts& trials) {
  detail::validate_series_profiles(series, profiles);
  const CoordinateLayout layout(series);
  if (trials.size() != series.num_players())
    throw ValidationError("trial counts must be given per player");
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(layout.dim()),
                          static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t i = 0; i < series.num_players(); ++i) {
    if (trials[i].size() != series.size())
      throw ValidationError("trial counts must be given per game");
    for (std::size_t m = 0; m < series.size(); ++m) {
      const std::size_t k = trials[i][m];
      if (k == 0) throw ValidationError("trial count K must be at least 1");
      const Vector& p = profiles[m][i];
      const std::size_t f = layout.free_per_block(i);
      for (std::size_t a = 0; a < f; ++a)
        for (std::size_t b = 0; b < f; ++b) {
          const double pa = p[static_cast<Eigen::Index>(a)];
          const double pb = p[static_cast<Eigen::Index>(b)];
          v(static_cast<Eigen::Index>(layout.index(i, m, a)),
            static_cast<Eigen::Index>(layout.index(i, m, b))) =
              ((a == b ? pa : 0.0) - pa * pb) / static_cast<double>(k);
        }
    }
  }
  return v;
}

inline Matrix multinomial_cov(const GameSeries& series, const SeriesProfiles& profiles,
                              std::size_t k) {
  return multinomial_cov(series, profiles, uniform_trials(series.num_players(), series.size(), k));
}

/// Moment vector mu (>= 0 under the null), its Jacobian in the free
/// probability coordinates, the probability covariance V and the delta-method
/// covariance Sigma = J V J'.
struct MomentSystem {
  Vector mu_hat;
  Vector nu_hat;
  Matrix jacobian;
  Matrix prob_cov;
  Matrix sigma;
  std::size_t trials = 0;  // smallest K over blocks; drives kappa
  std::vector<std::size_t> dropped;         // zero-variance moments
  std::vector<std::string> labels;
  std::vector<std::size_t> moment_player;   // owning player per moment

  std::size_t size() const { return static_cast<std::size_t>(mu_hat.size()); }
  bool is_dropped(std::size_t l) const {
    return std::binary_search(dropped.begin(), dropped.end(), l);
  }

  // Recomputes sigma and the dropped set from jacobian and prob_cov.
  void finalize() {
    Matrix s = jacobian * prob_cov * jacobian.transpose();
    sigma = 0.5 * (s + s.transpose());
    dropped.clear();
    for (Eigen::Index l = 0; l < sigma.rows(); ++l)
      if (sigma(l, l) < kZeroVariance) dropped.push_back(static_cast<std::size_t>(l));
  }
};

/// Cycle label in terms of game ids, e.g. "1231"; ids longer than one
/// character are joined with '-'.
inline std::string cycle_label(const Cycle& c, const GameSeries& series) {
  bool short_ids = true;
  for (const auto& g : series) short_ids = short_ids && g.id().size() == 1;
  std::string s;
  auto append = [&](std::size_t m) {
    if (!short_ids && !s.empty()) s += '-';
    s += series[m].id();
  };
  for (auto m : c.games) append(m);
  if (!c.games.empty()) append(c.games.front());
  return s;
}

enum class JacobianMode { automatic, analytic, finite_difference };

inline std::size_t min_trials(const TrialCounts& trials) {
  std::size_t k = SIZE_MAX;
  for (const auto& row : trials)
    for (auto t : row) k = std::min(k, t);
  return k == SIZE_MAX ? 0 : k;
}

inline MomentSystem build_moment_system(const GameSeries& series, const SeriesProfiles& profiles,
                                        const TrialCounts& trials, const CycleInventory& inventory,
                                        JacobianMode mode = JacobianMode::automatic) {
  MomentSystem sys;
  sys.nu_hat = nu_vector(series, profiles, inventory);
  sys.mu_hat = -sys.nu_hat;
  const bool analytic = mode == JacobianMode::analytic ||
                        (mode == JacobianMode::automatic && series.num_players() == 2);
  sys.jacobian = analytic ? jacobian_analytic(series, profiles, inventory)
                          : jacobian_fd(series, profiles, inventory);
  sys.prob_cov = multinomial_cov(series, profiles, trials);
  sys.trials = min_trials(trials);
  for (const auto& c : inventory.cycles) {
    sys.labels.push_back(series.front().player(c.player) + ":" + cycle_label(c, series));
    sys.moment_player.push_back(c.player);
  }
  sys.finalize();
  return sys;
}

inline MomentSystem build_moment_system(const GameSeries& series, const SeriesProfiles& profiles,
                                        const TrialCounts& trials,
                                        JacobianMode mode = JacobianMode::automatic) {
  return build_moment_system(series, profiles, trials,
                             enumerate_cycles(series.size(), series.num_players()), mode);
}

/// Moments for the two-game cumulative rank test: for each player the partial
/// sums of p1 - p0 in decreasing order of u1 - u0 (ordering frozen at the
/// estimate). The last partial sum is identically zero and is dropped.
inline MomentSystem build_hhk_system(const GameSeries& series, const SeriesProfiles& profiles,
                                     const TrialCounts& trials) {
  if (series.size() != 2) throw ValidationError("cumulative rank test needs exactly two games");
  detail::validate_series_profiles(series, profiles);
  const CoordinateLayout layout(series);
  const auto eu = detail::utilities(series, profiles);

  std::size_t total = 0;
  for (std::size_t i = 0; i < series.num_players(); ++i) total += series.num_strategies(i);
  MomentSystem sys;
  sys.mu_hat.resize(static_cast<Eigen::Index>(total));
  sys.jacobian = Matrix::Zero(static_cast<Eigen::Index>(total),
                              static_cast<Eigen::Index>(layout.dim()));
  std::size_t row = 0;
  for (std::size_t i = 0; i < series.num_players(); ++i) {
    const HhkRank rank = hhk_cumulative_rank(eu[0][i], eu[1][i], profiles[0][i], profiles[1][i]);
    const std::size_t last = series.num_strategies(i) - 1;
    std::vector<double> coeff(series.num_strategies(i), 0.0);  // d(sum)/d p_j
    for (std::size_t k = 0; k < rank.order.size(); ++k, ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      coeff[rank.order[k]] = 1.0;
      sys.mu_hat[r] = rank.partial_sums[k];
      for (std::size_t a = 0; a < layout.free_per_block(i); ++a) {
        const double d = coeff[a] - coeff[last];
        sys.jacobian(r, static_cast<Eigen::Index>(layout.index(i, 1, a))) = d;
        sys.jacobian(r, static_cast<Eigen::Index>(layout.index(i, 0, a))) = -d;
      }
      std::string label = series.front().player(i) + ":top" + std::to_string(k + 1);
      sys.labels.push_back(std::move(label));
      sys.moment_player.push_back(i);
    }
  }
  sys.nu_hat = -sys.mu_hat;
  sys.prob_cov = multinomial_cov(series, profiles, trials);
  sys.trials = min_trials(trials);
  sys.finalize();
  // full partial sums are identically zero
  row = 0;
  for (std::size_t i = 0; i < series.num_players(); ++i) {
    row += series.num_strategies(i);
    if (!sys.is_dropped(row - 1)) {
      sys.dropped.push_back(row - 1);
      std::sort(sys.dropped.begin(), sys.dropped.end());
    }
  }
  return sys;
}

}  // namespace qrecm
