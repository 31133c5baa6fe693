#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qrecm/error.hpp"
#include "qrecm/game.hpp"

namespace qrecm {

/// A cycle of distinct games G_0 -> G_1 -> ... -> G_{L-1} -> G_0 seen by one
/// player. Stored in its canonical rotation (smallest game index first);
/// reversed orientations are different cycles.
struct Cycle {
  std::size_t player = 0;
  std::vector<std::size_t> games;  // 0-based

  std::size_t length() const { return games.size(); }
  bool contains(std::size_t game) const {
    return std::find(games.begin(), games.end(), game) != games.end();
  }

  // 1-based game numbers with the first game repeated, e.g. "1231".
  std::string label() const {
    std::string s;
    auto append = [&](std::size_t g) {
      if (!s.empty() && (g + 1) >= 10) s += '-';
      s += std::to_string(g + 1);
    };
    for (auto g : games) append(g);
    if (!games.empty()) append(games.front());
    return s;
  }
};

inline std::vector<std::size_t> canonical_rotation(std::vector<std::size_t> games) {
  if (games.empty()) return games;
  auto smallest = std::min_element(games.begin(), games.end());
  std::rotate(games.begin(), smallest, games.end());
  return games;
}

/// Number of cycles per player over M games: sum_L C(M,L) (L-1)!.
inline std::size_t cycles_per_player(std::size_t m) {
  std::size_t total = 0;
  for (std::size_t len = 2; len <= m; ++len) {
    // C(m, len) * (len - 1)! = m! / ((m - len)! * len)
    std::size_t falling = 1;
    for (std::size_t k = 0; k < len; ++k) falling *= (m - k);
    total += falling / len;
  }
  return total;
}

/// All cycles for all players, player-major; within a player ordered by
/// length, then lexicographically by canonical game sequence. This defines the
/// moment ordering.
struct CycleInventory {
  std::size_t num_games = 0;
  std::size_t num_players = 0;
  std::vector<Cycle> cycles;

  std::size_t size() const { return cycles.size(); }
  const Cycle& operator[](std::size_t l) const { return cycles[l]; }

  std::vector<std::size_t> indices_for_player(std::size_t player) const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < cycles.size(); ++l)
      if (cycles[l].player == player) out.push_back(l);
    return out;
  }

  // Moment indices whose cycle does not visit `game` (any player).
  std::vector<std::size_t> indices_without_game(std::size_t game) const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < cycles.size(); ++l)
      if (!cycles[l].contains(game)) out.push_back(l);
    return out;
  }
};

inline CycleInventory enumerate_cycles(std::size_t num_games, std::size_t num_players) {
  if (num_games < 2) throw ValidationError("cycle enumeration needs at least two games");
  if (num_players < 1) throw ValidationError("cycle enumeration needs at least one player");
  if (num_games > 10) throw ValidationError("cycle enumeration limited to 10 games");

  std::vector<std::vector<std::size_t>> per_player;
  for (std::size_t len = 2; len <= num_games; ++len) {
    std::vector<std::vector<std::size_t>> of_length;
    for (std::size_t first = 0; first + len <= num_games; ++first) {
      // choose len-1 further games above `first`, then every ordering of them
      std::vector<char> pick(num_games - first - 1, 0);
      for (std::size_t k = 0; k + 1 < len; ++k) pick[k] = 1;
      do {
        std::vector<std::size_t> rest;
        for (std::size_t k = 0; k < pick.size(); ++k)
          if (pick[k]) rest.push_back(first + 1 + k);
        do {
          std::vector<std::size_t> seq{first};
          seq.insert(seq.end(), rest.begin(), rest.end());
          of_length.push_back(std::move(seq));
        } while (std::next_permutation(rest.begin(), rest.end()));
      } while (std::prev_permutation(pick.begin(), pick.end()));
    }
    std::sort(of_length.begin(), of_length.end());
    per_player.insert(per_player.end(), of_length.begin(), of_length.end());
  }

  CycleInventory inv;
  inv.num_games = num_games;
  inv.num_players = num_players;
  for (std::size_t p = 0; p < num_players; ++p)
    for (const auto& seq : per_player) inv.cycles.push_back({p, seq});
  return inv;
}

/// Cyclic-monotonicity sum  sum_t <u^{t+1} - u^t, pi^t>  (indices mod L).
/// Nonpositive when every pi^t is the gradient of one convex function at u^t.
inline double cycle_sum(std::span<const Vector> utils, std::span<const Vector> probs) {
  if (utils.size() != probs.size())
    throw ValidationError("cycle_sum: utility and probability lists differ in length");
  const std::size_t len = utils.size();
  if (len == 0) return 0.0;
  const auto dim = utils.front().size();
  for (std::size_t t = 0; t < len; ++t)
    if (utils[t].size() != dim || probs[t].size() != dim)
      throw ValidationError("cycle_sum: vector dimensions differ");
  double s = 0.0;
  for (std::size_t t = 0; t < len; ++t)
    s += (utils[(t + 1) % len] - utils[t]).dot(probs[t]);
  return s;
}

struct HhkRank {
  std::vector<std::size_t> order;     // strategy indices, descending utility change
  std::vector<double> partial_sums;   // sum_{j<=k} (p1 - p0) in that order
  bool pass = false;
};

inline constexpr double kHhkTolerance = 1e-12;

/// Cumulative rank check between two games: order strategies by u1 - u0
/// (descending, ties by original index) and accumulate probability changes.
inline HhkRank hhk_cumulative_rank(const Vector& u0, const Vector& u1, const Vector& p0,
                                   const Vector& p1) {
  const auto dim = u0.size();
  if (u1.size() != dim || p0.size() != dim || p1.size() != dim)
    throw ValidationError("hhk_cumulative_rank: dimension mismatch");
  HhkRank r;
  r.order.resize(static_cast<std::size_t>(dim));
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  const Vector du = u1 - u0;
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    return du[static_cast<Eigen::Index>(a)] > du[static_cast<Eigen::Index>(b)];
  });
  double acc = 0.0;
  r.pass = true;
  for (auto j : r.order) {
    const auto e = static_cast<Eigen::Index>(j);
    acc += p1[e] - p0[e];
    r.partial_sums.push_back(acc);
    if (acc < -kHhkTolerance) r.pass = false;
  }
  return r;
}

}  // namespace qrecm
