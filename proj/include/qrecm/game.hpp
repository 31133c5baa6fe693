#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qrecm/error.hpp"

namespace qrecm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kSimplexTolerance = 1e-12;

/// A finite n-player game in normal form with a dense payoff tensor.
///
/// Payoffs are stored profile-major: for pure profile s (player 0 most
/// significant index) the payoffs of all players are contiguous. Instances are
/// immutable after construction.
class NormalFormGame {
 public:
  NormalFormGame(std::string game_id, std::vector<std::string> players,
                 std::vector<std::vector<std::string>> strategies,
                 std::vector<double> payoffs)
      : id_(std::move(game_id)),
        players_(std::move(players)),
        strategies_(std::move(strategies)),
        payoffs_(std::move(payoffs)) {
    if (players_.empty()) throw ValidationError("game '" + id_ + "': no players");
    if (strategies_.size() != players_.size())
      throw ValidationError("game '" + id_ + "': strategy lists do not match players");
    std::unordered_set<std::string> seen_players;
    for (const auto& p : players_) {
      if (!seen_players.insert(p).second)
        throw ValidationError("game '" + id_ + "': duplicate player '" + p + "'");
    }
    for (std::size_t i = 0; i < strategies_.size(); ++i) {
      const auto& labels = strategies_[i];
      if (labels.empty())
        throw ValidationError("game '" + id_ + "': player '" + players_[i] + "' has no strategies");
      std::unordered_set<std::string> seen(labels.begin(), labels.end());
      if (seen.size() != labels.size())
        throw ValidationError("game '" + id_ + "': duplicate strategy label for '" + players_[i] + "'");
    }
    strides_.assign(players_.size(), 1);
    for (std::size_t i = players_.size() - 1; i > 0; --i)
      strides_[i - 1] = strides_[i] * strategies_[i].size();
    num_profiles_ = strides_[0] * strategies_[0].size();
    if (payoffs_.size() != num_profiles_ * players_.size())
      throw ValidationError("game '" + id_ + "': payoff tensor is not total (expected " +
                            std::to_string(num_profiles_ * players_.size()) + " entries, got " +
                            std::to_string(payoffs_.size()) + ")");
    for (double x : payoffs_)
      if (!std::isfinite(x)) throw ValidationError("game '" + id_ + "': non-finite payoff");
  }

  // Two-player convenience: row_payoffs(j, k) and col_payoffs(j, k) are the
  // payoffs when player 0 plays j and player 1 plays k.
  static NormalFormGame bimatrix(std::string game_id, std::vector<std::string> players,
                                 std::vector<std::vector<std::string>> strategies,
                                 const Matrix& row_payoffs, const Matrix& col_payoffs) {
    if (players.size() != 2 || strategies.size() != 2)
      throw ValidationError("bimatrix game needs exactly two players");
    const auto rows = static_cast<Eigen::Index>(strategies[0].size());
    const auto cols = static_cast<Eigen::Index>(strategies[1].size());
    if (row_payoffs.rows() != rows || row_payoffs.cols() != cols || col_payoffs.rows() != rows ||
        col_payoffs.cols() != cols)
      throw ValidationError("bimatrix payoff shape does not match strategy lists");
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(2 * rows * cols));
    for (Eigen::Index j = 0; j < rows; ++j)
      for (Eigen::Index k = 0; k < cols; ++k) {
        flat.push_back(row_payoffs(j, k));
        flat.push_back(col_payoffs(j, k));
      }
    return NormalFormGame(std::move(game_id), std::move(players), std::move(strategies),
                          std::move(flat));
  }

  const std::string& id() const { return id_; }
  std::size_t num_players() const { return players_.size(); }
  const std::vector<std::string>& players() const { return players_; }
  const std::string& player(std::size_t i) const { return players_.at(i); }
  const std::vector<std::string>& strategies(std::size_t player) const {
    return strategies_.at(player);
  }
  std::size_t num_strategies(std::size_t player) const { return strategies_.at(player).size(); }
  std::size_t num_profiles() const { return num_profiles_; }

  // Decodes a flat profile index into one strategy index per player.
  void decode(std::size_t flat, std::span<std::size_t> pure) const {
    for (std::size_t i = 0; i < strides_.size(); ++i) {
      pure[i] = flat / strides_[i];
      flat %= strides_[i];
    }
  }

  std::size_t encode(std::span<const std::size_t> pure) const {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < strides_.size(); ++i) {
      if (pure[i] >= strategies_[i].size())
        throw ValidationError("strategy index out of range for player '" + players_[i] + "'");
      flat += pure[i] * strides_[i];
    }
    return flat;
  }

  double payoff(std::size_t flat_profile, std::size_t player) const {
    return payoffs_[flat_profile * players_.size() + player];
  }
  double payoff(std::span<const std::size_t> pure, std::size_t player) const {
    return payoff(encode(pure), player);
  }

  const std::vector<double>& payoff_tensor() const { return payoffs_; }

  std::size_t player_index(std::string_view role) const {
    auto it = std::find(players_.begin(), players_.end(), role);
    if (it == players_.end())
      throw ValidationError("game '" + id_ + "': unknown player role '" + std::string(role) + "'");
    return static_cast<std::size_t>(it - players_.begin());
  }

  std::size_t strategy_index(std::size_t player, std::string_view label) const {
    const auto& labels = strategies_.at(player);
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end())
      throw ValidationError("game '" + id_ + "': unknown strategy '" + std::string(label) +
                            "' for player '" + players_[player] + "'");
    return static_cast<std::size_t>(it - labels.begin());
  }

  // Same players and strategy labels (payoffs may differ).
  bool same_shape(const NormalFormGame& other) const {
    return players_ == other.players_ && strategies_ == other.strategies_;
  }

  // Copy with every payoff mapped through f.
  template <typename F>
  NormalFormGame transformed(F&& f) const {
    std::vector<double> out(payoffs_.size());
    std::transform(payoffs_.begin(), payoffs_.end(), out.begin(), std::forward<F>(f));
    return NormalFormGame(id_, players_, strategies_, std::move(out));
  }

 private:
  std::string id_;
  std::vector<std::string> players_;
  std::vector<std::vector<std::string>> strategies_;
  std::vector<double> payoffs_;
  std::vector<std::size_t> strides_;
  std::size_t num_profiles_ = 0;
};

/// One probability vector per player.
struct MixedProfile {
  std::vector<Vector> probs;

  const Vector& operator[](std::size_t player) const { return probs[player]; }
  Vector& operator[](std::size_t player) { return probs[player]; }
  std::size_t size() const { return probs.size(); }

  static MixedProfile uniform(const NormalFormGame& game) {
    MixedProfile p;
    for (std::size_t i = 0; i < game.num_players(); ++i) {
      const auto j = static_cast<Eigen::Index>(game.num_strategies(i));
      p.probs.push_back(Vector::Constant(j, 1.0 / static_cast<double>(j)));
    }
    return p;
  }
};

inline void validate_probability_vector(const Vector& p, double tol = kSimplexTolerance) {
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (!std::isfinite(p[j]) || p[j] < 0.0 || p[j] > 1.0 + tol)
      throw ValidationError("probability entry outside [0,1]");
  if (std::abs(p.sum() - 1.0) > tol) throw ValidationError("probability vector does not sum to 1");
}

inline void validate_profile(const NormalFormGame& game, const MixedProfile& profile,
                             double tol = kSimplexTolerance) {
  if (profile.size() != game.num_players())
    throw ValidationError("profile has " + std::to_string(profile.size()) + " players, game '" +
                          game.id() + "' has " + std::to_string(game.num_players()));
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    if (static_cast<std::size_t>(profile[i].size()) != game.num_strategies(i))
      throw ValidationError("profile dimension mismatch for player '" + game.player(i) + "'");
    validate_probability_vector(profile[i], tol);
  }
}

/// Expected payoff of each pure strategy of `player` against the other
/// players' mixtures. The player's own entry of `profile` is ignored.
inline Vector expected_utility(const NormalFormGame& game, std::size_t player,
                               const MixedProfile& profile) {
  if (player >= game.num_players()) throw ValidationError("player index out of range");
  if (profile.size() != game.num_players())
    throw ValidationError("profile/game player count mismatch");
  for (std::size_t k = 0; k < game.num_players(); ++k)
    if (k != player && static_cast<std::size_t>(profile[k].size()) != game.num_strategies(k))
      throw ValidationError("profile dimension mismatch for player '" + game.player(k) + "'");

  Vector out = Vector::Zero(static_cast<Eigen::Index>(game.num_strategies(player)));
  std::vector<std::size_t> pure(game.num_players());
  for (std::size_t s = 0; s < game.num_profiles(); ++s) {
    game.decode(s, pure);
    double w = 1.0;
    for (std::size_t k = 0; k < game.num_players(); ++k)
      if (k != player) w *= profile[k][static_cast<Eigen::Index>(pure[k])];
    out[static_cast<Eigen::Index>(pure[player])] += w * game.payoff(s, player);
  }
  return out;
}

/// d u_player / d p_other: entry (j, b) is player's expected payoff from j
/// when `other` plays b for sure and everyone else follows `profile`.
inline Matrix expected_utility_cross(const NormalFormGame& game, std::size_t player,
                                     std::size_t other, const MixedProfile& profile) {
  if (player == other) throw ValidationError("cross utility needs two distinct players");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(game.num_strategies(player)),
                            static_cast<Eigen::Index>(game.num_strategies(other)));
  std::vector<std::size_t> pure(game.num_players());
  for (std::size_t s = 0; s < game.num_profiles(); ++s) {
    game.decode(s, pure);
    double w = 1.0;
    for (std::size_t k = 0; k < game.num_players(); ++k)
      if (k != player && k != other) w *= profile[k][static_cast<Eigen::Index>(pure[k])];
    out(static_cast<Eigen::Index>(pure[player]), static_cast<Eigen::Index>(pure[other])) +=
        w * game.payoff(s, player);
  }
  return out;
}

/// Constant relative risk aversion: x -> x^(1-r).
inline NormalFormGame apply_crra(const NormalFormGame& game, double r) {
  if (!(r >= 0.0 && r <= 0.99))
    throw RangeError("CRRA coefficient must lie in [0, 0.99], got " + std::to_string(r));
  for (double x : game.payoff_tensor())
    if (!(x > 0.0))
      throw DomainError("CRRA transform needs strictly positive payoffs (game '" + game.id() + "')");
  if (r == 0.0) return game;
  return game.transformed([r](double x) { return std::pow(x, 1.0 - r); });
}

/// Ordered list of games sharing players and strategy labels.
class GameSeries {
 public:
  explicit GameSeries(std::vector<NormalFormGame> games) : games_(std::move(games)) {
    if (games_.size() < 2) throw ValidationError("a game series needs at least two games");
    for (const auto& g : games_)
      if (!g.same_shape(games_.front()))
        throw ValidationError("game '" + g.id() + "' does not share players/strategies with '" +
                              games_.front().id() + "'");
  }

  std::size_t size() const { return games_.size(); }
  const NormalFormGame& operator[](std::size_t m) const { return games_[m]; }
  const NormalFormGame& front() const { return games_.front(); }
  const std::vector<NormalFormGame>& games() const { return games_; }
  auto begin() const { return games_.begin(); }
  auto end() const { return games_.end(); }

  std::size_t num_players() const { return games_.front().num_players(); }
  std::size_t num_strategies(std::size_t player) const {
    return games_.front().num_strategies(player);
  }

  std::size_t index_of(std::string_view game_id) const {
    for (std::size_t m = 0; m < games_.size(); ++m)
      if (games_[m].id() == game_id) return m;
    throw ValidationError("unknown game_id '" + std::string(game_id) + "'");
  }

  GameSeries subset(std::span<const std::size_t> indices) const {
    std::vector<NormalFormGame> out;
    for (auto m : indices) out.push_back(games_.at(m));
    return GameSeries(std::move(out));
  }

  GameSeries with_crra(double r) const {
    std::vector<NormalFormGame> out;
    for (const auto& g : games_) out.push_back(apply_crra(g, r));
    return GameSeries(std::move(out));
  }

 private:
  std::vector<NormalFormGame> games_;
};

/// Games 1-4 of the Joker family: 3x3, strategies {1, 2, J}; Column payoffs
/// are shared and only Row payoffs move between games.
inline GameSeries joker_catalog() {
  const std::vector<std::string> players{"Row", "Column"};
  const std::vector<std::vector<std::string>> labels{{"1", "2", "J"}, {"1", "2", "J"}};
  Matrix col(3, 3);
  col << 30, 10, 30,
         10, 30, 30,
         30, 30, 10;
  Matrix g1(3, 3), g2(3, 3), g3(3, 3), g4(3, 3);
  g1 << 10, 30, 10,
        30, 10, 10,
        10, 10, 30;
  g2 << 10, 30, 10,
        30, 10, 10,
        10, 10, 55;
  g3 << 25, 30, 10,
        30, 25, 10,
        10, 10, 30;
  g4 << 20, 30, 10,
        30, 10, 10,
        10, 10, 30;
  std::vector<NormalFormGame> games;
  games.push_back(NormalFormGame::bimatrix("1", players, labels, g1, col));
  games.push_back(NormalFormGame::bimatrix("2", players, labels, g2, col));
  games.push_back(NormalFormGame::bimatrix("3", players, labels, g3, col));
  games.push_back(NormalFormGame::bimatrix("4", players, labels, g4, col));
  return GameSeries(std::move(games));
}

}  // namespace qrecm
