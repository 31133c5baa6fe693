#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qrecm/error.hpp"
#include "qrecm/game.hpp"

namespace qrecm {

/// Logit choice probabilities: softmax(lambda * u), shifted by the max for
/// overflow safety.
inline Vector logit_response(const Vector& u, double lambda) {
  if (!std::isfinite(lambda)) throw DomainError("logit precision must be finite");
  if (lambda < 0.0) throw RangeError("logit precision must be non-negative");
  if (u.size() == 0) throw ValidationError("empty payoff vector");
  for (Eigen::Index j = 0; j < u.size(); ++j)
    if (!std::isfinite(u[j])) throw DomainError("non-finite payoff in logit response");
  Vector z = lambda * u;
  z.array() -= z.maxCoeff();
  Vector e = z.array().exp();
  return e / e.sum();
}

/// Logit social surplus (1/lambda) log sum exp(lambda u). Its gradient in u is
/// logit_response(u, lambda).
inline double social_surplus(const Vector& u, double lambda) {
  if (!(lambda > 0.0)) throw RangeError("social surplus needs lambda > 0");
  for (Eigen::Index j = 0; j < u.size(); ++j)
    if (!std::isfinite(u[j])) throw DomainError("non-finite payoff in social surplus");
  Vector z = lambda * u;
  const double c = z.maxCoeff();
  return (c + std::log((z.array() - c).exp().sum())) / lambda;
}

/// Conjugate of the logit surplus on the simplex: (1/lambda) sum p log p,
/// with 0 log 0 = 0.
inline double logit_conjugate(const Vector& p, double lambda) {
  if (!(lambda > 0.0)) throw RangeError("conjugate needs lambda > 0");
  double s = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) s += p[j] * std::log(p[j]);
  return s / lambda;
}

/// |<u, pi> - conj(pi) - surplus(u)| at pi = logit_response(u). Zero up to
/// rounding when the response is the surplus gradient.
inline double fenchel_check(const Vector& u, double lambda) {
  if (!(lambda > 0.0)) throw RangeError("fenchel check needs lambda > 0");
  const Vector pi = logit_response(u, lambda);
  return std::abs(u.dot(pi) - logit_conjugate(pi, lambda) - social_surplus(u, lambda));
}

struct LogitParams {
  double lambda = 1.0;
  double tol = 1e-12;
  int max_iter = 100000;
  double damping = 0.5;
  // Above this precision the solve goes straight to the continuation ladder.
  double homotopy_above = 20.0;

  void validate() const {
    if (!std::isfinite(lambda) || lambda < 0.0) throw RangeError("lambda must be >= 0");
    if (!(tol > 0.0)) throw RangeError("tol must be > 0");
    if (max_iter <= 0) throw RangeError("max_iter must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) throw RangeError("damping must lie in (0, 1]");
  }
};

struct QreSolution {
  MixedProfile profile;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
};

/// Profile of logit responses to `profile`, player by player.
inline MixedProfile quantal_response(const NormalFormGame& game, const MixedProfile& profile,
                                     double lambda) {
  MixedProfile out;
  out.probs.reserve(game.num_players());
  for (std::size_t i = 0; i < game.num_players(); ++i)
    out.probs.push_back(logit_response(expected_utility(game, i, profile), lambda));
  return out;
}

/// Max-norm of profile - QR(profile).
inline double qre_residual(const NormalFormGame& game, const MixedProfile& profile,
                           double lambda) {
  const MixedProfile q = quantal_response(game, profile, lambda);
  double r = 0.0;
  for (std::size_t i = 0; i < game.num_players(); ++i)
    r = std::max(r, (profile[i] - q[i]).cwiseAbs().maxCoeff());
  return r;
}

namespace detail {

inline Vector flatten(const MixedProfile& p) {
  Eigen::Index n = 0;
  for (const auto& v : p.probs) n += v.size();
  Vector x(n);
  Eigen::Index o = 0;
  for (const auto& v : p.probs) {
    x.segment(o, v.size()) = v;
    o += v.size();
  }
  return x;
}

inline MixedProfile unflatten(const NormalFormGame& game, const Vector& x) {
  MixedProfile p;
  Eigen::Index o = 0;
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const auto j = static_cast<Eigen::Index>(game.num_strategies(i));
    p.probs.push_back(x.segment(o, j));
    o += j;
  }
  return p;
}

// Jacobian of the quantal response map in the stacked probability coordinates.
inline Matrix qr_jacobian(const NormalFormGame& game, const MixedProfile& profile,
                          const MixedProfile& response, double lambda) {
  std::vector<Eigen::Index> offset(game.num_players() + 1, 0);
  for (std::size_t i = 0; i < game.num_players(); ++i)
    offset[i + 1] = offset[i] + static_cast<Eigen::Index>(game.num_strategies(i));
  Matrix g = Matrix::Zero(offset.back(), offset.back());
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const Vector& q = response[i];
    const Matrix dq = lambda * (Matrix(q.asDiagonal()) - q * q.transpose());
    for (std::size_t k = 0; k < game.num_players(); ++k) {
      if (k == i) continue;
      const Matrix du = expected_utility_cross(game, i, k, profile);
      g.block(offset[i], offset[k], du.rows(), du.cols()) = dq * du;
    }
  }
  return g;
}

inline void renormalize(const NormalFormGame& game, Vector& x) {
  Eigen::Index o = 0;
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const auto j = static_cast<Eigen::Index>(game.num_strategies(i));
    x.segment(o, j) /= x.segment(o, j).sum();
    o += j;
  }
}

// Damped fixed-point iteration with step halving when the residual grows.
inline QreSolution damped_iteration(const NormalFormGame& game, MixedProfile start, double lambda,
                                    double damping, double tol, int budget) {
  QreSolution s;
  s.profile = std::move(start);
  s.residual = qre_residual(game, s.profile, lambda);
  double d = damping;
  for (int it = 0; it < budget && s.residual > tol; ++it) {
    const MixedProfile q = quantal_response(game, s.profile, lambda);
    MixedProfile next = s.profile;
    for (std::size_t i = 0; i < game.num_players(); ++i)
      next[i] = (1.0 - d) * s.profile[i] + d * q[i];
    const double r = qre_residual(game, next, lambda);
    ++s.iterations;
    if (r > s.residual) {
      d = std::max(0.5 * d, 1e-4);
      if (d <= 1e-4) {
        s.profile = std::move(next);
        s.residual = r;
        break;
      }
      continue;
    }
    s.profile = std::move(next);
    s.residual = r;
  }
  s.converged = s.residual <= tol;
  return s;
}

// Newton on F(x) = x - QR(x) with backtracking on the max-norm residual.
inline QreSolution newton_polish(const NormalFormGame& game, QreSolution s, double lambda,
                                 double tol, int budget) {
  Vector x = flatten(s.profile);
  for (int it = 0; it < budget && s.residual > tol; ++it) {
    const MixedProfile p = unflatten(game, x);
    const MixedProfile q = quantal_response(game, p, lambda);
    const Vector f = x - flatten(q);
    const Matrix jac = Matrix::Identity(x.size(), x.size()) - qr_jacobian(game, p, q, lambda);
    const Vector step = jac.colPivHouseholderQr().solve(-f);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      Vector trial = x + t * step;
      if ((trial.array() <= 0.0).any()) continue;
      renormalize(game, trial);
      const double r = qre_residual(game, unflatten(game, trial), lambda);
      if (r < s.residual) {
        x = std::move(trial);
        s.residual = r;
        accepted = true;
        break;
      }
    }
    ++s.iterations;
    if (!accepted) break;
  }
  s.profile = unflatten(game, x);
  s.converged = s.residual <= tol;
  return s;
}

inline QreSolution solve_direct(const NormalFormGame& game, MixedProfile start, double lambda,
                                const LogitParams& params) {
  const int fp_budget = std::min(params.max_iter, 5000);
  QreSolution s = damped_iteration(game, std::move(start), lambda, params.damping, params.tol,
                                   fp_budget);
  if (!s.converged) {
    const int used = s.iterations;
    s = newton_polish(game, std::move(s), lambda, params.tol, std::min(200, params.max_iter));
    s.iterations = std::max(s.iterations, used);
  }
  return s;
}

// Continuation in lambda from the uniform profile, Newton-corrected per rung.
inline QreSolution solve_homotopy(const NormalFormGame& game, const LogitParams& params) {
  const int rungs = std::max(1, static_cast<int>(std::ceil(params.lambda / 0.5)));
  QreSolution s;
  s.profile = MixedProfile::uniform(game);
  int total = 0;
  for (int k = 1; k <= rungs; ++k) {
    const double lam = params.lambda * static_cast<double>(k) / static_cast<double>(rungs);
    const double rung_tol = k == rungs ? params.tol : std::max(params.tol, 1e-10);
    s.residual = qre_residual(game, s.profile, lam);
    s = newton_polish(game, std::move(s), lam, rung_tol, 100);
    if (!s.converged) s = solve_direct(game, s.profile, lam, params);
    total += s.iterations;
    s.iterations = 0;
  }
  s.iterations = total;
  s.converged = s.residual <= params.tol;
  return s;
}

}  // namespace detail

/// Logit quantal response equilibrium of `game`.
///
/// Damped fixed-point iteration from `start` (uniform by default), polished by
/// Newton steps; falls back to a lambda-continuation ladder when the direct
/// solve stalls or lambda is above `params.homotopy_above`. Non-convergence is
/// reported through `converged`, never thrown.
inline QreSolution solve_logit_qre(const NormalFormGame& game, const LogitParams& params,
                                   std::optional<MixedProfile> start = std::nullopt) {
  params.validate();
  MixedProfile init = start ? *start : MixedProfile::uniform(game);
  validate_profile(game, init, 1e-9);

  if (params.lambda == 0.0) {
    QreSolution s;
    s.profile = MixedProfile::uniform(game);
    s.residual = 0.0;
    s.converged = true;
    return s;
  }

  QreSolution s;
  if (params.lambda <= params.homotopy_above || start) {
    s = detail::solve_direct(game, std::move(init), params.lambda, params);
    if (s.converged) return s;
  }
  QreSolution h = detail::solve_homotopy(game, params);
  h.iterations += s.iterations;
  if (!h.converged && s.residual < h.residual) return s;
  return h;
}

struct RankOrderEntry {
  std::size_t player;
  std::size_t first;
  std::size_t second;
  double value;  // (u_first - u_second) * (p_first - p_second)
};

/// Within-game rank-order products for every player and unordered strategy
/// pair. Negative entries are violations.
inline std::vector<RankOrderEntry> rank_order_check(const NormalFormGame& game,
                                                    const MixedProfile& profile) {
  validate_profile(game, profile, 1e-9);
  std::vector<RankOrderEntry> out;
  for (std::size_t i = 0; i < game.num_players(); ++i) {
    const Vector u = expected_utility(game, i, profile);
    const Vector& p = profile[i];
    for (Eigen::Index j = 0; j < u.size(); ++j)
      for (Eigen::Index k = j + 1; k < u.size(); ++k)
        out.push_back({i, static_cast<std::size_t>(j), static_cast<std::size_t>(k),
                       (u[j] - u[k]) * (p[j] - p[k])});
  }
  return out;
}

}  // namespace qrecm
