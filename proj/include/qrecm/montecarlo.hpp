#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "qrecm/cycles.hpp"
#include "qrecm/error.hpp"
#include "qrecm/game.hpp"
#include "qrecm/gms.hpp"
#include "qrecm/moments.hpp"
#include "qrecm/qre.hpp"
#include "qrecm/random.hpp"

namespace qrecm {

// ---------------------------------------------------------------------------
// Violating profiles

struct ViolatingProfiles {
  SeriesProfiles profiles;
  double margin = 0.0;  // min over all moments of nu
};

struct ViolationSearchConfig {
  std::size_t starts = 64;
  std::size_t iterations = 20000;
  double floor = 0.05;  // lower bound on every probability
  std::uint64_t seed = 7;
};

/// Multi-start (1+1) evolution strategy maximizing min_l nu_l over all
/// per-game profiles. Probabilities are parameterized as
/// floor + (1 - J floor) softmax(z), which keeps every block interior.
inline ViolatingProfiles search_violating_profiles(const GameSeries& series,
                                                   const ViolationSearchConfig& cfg = {}) {
  const CycleInventory inv = enumerate_cycles(series.size(), series.num_players());
  std::vector<Eigen::Index> dims;
  Eigen::Index total = 0;
  for (std::size_t m = 0; m < series.size(); ++m)
    for (std::size_t i = 0; i < series.num_players(); ++i) {
      dims.push_back(static_cast<Eigen::Index>(series.num_strategies(i)));
      total += dims.back();
    }
  for (std::size_t i = 0; i < series.num_players(); ++i)
    if (cfg.floor * static_cast<double>(series.num_strategies(i)) >= 1.0)
      throw RangeError("probability floor too large for the strategy count");

  auto decode = [&](const Vector& z) {
    SeriesProfiles out(series.size());
    Eigen::Index o = 0;
    std::size_t b = 0;
    for (std::size_t m = 0; m < series.size(); ++m)
      for (std::size_t i = 0; i < series.num_players(); ++i, ++b) {
        const Eigen::Index j = dims[b];
        Vector e = z.segment(o, j);
        e.array() -= e.maxCoeff();
        e = e.array().exp();
        e /= e.sum();
        Vector p = Vector::Constant(j, cfg.floor) + (1.0 - static_cast<double>(j) * cfg.floor) * e;
        p /= p.sum();
        out[m].probs.push_back(p);
        o += j;
      }
    return out;
  };
  auto objective = [&](const Vector& z) { return nu_vector(series, decode(z), inv).minCoeff(); };

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ViolatingProfiles best;
  best.margin = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < cfg.starts; ++s) {
    Vector z(total);
    for (Eigen::Index c = 0; c < total; ++c) z[c] = 2.0 * normal(rng);
    double f = objective(z);
    double step = 0.5;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      Vector cand = z;
      for (Eigen::Index c = 0; c < total; ++c) cand[c] += step * normal(rng);
      const double fc = objective(cand);
      if (fc >= f) {
        z = std::move(cand);
        f = fc;
        step = std::min(step * 1.25, 4.0);
      } else {
        step = std::max(step * 0.93, 1e-4);
      }
    }
    if (f > best.margin) {
      best.margin = f;
      best.profiles = decode(z);
    }
  }
  return best;
}

namespace detail {

// Built once with search_violating_profiles(joker_catalog()) (defaults) and
// frozen; rows are games 1-4, Row then Column, strategies {1, 2, J}.
inline constexpr double kJokerViolating[4][2][3] = {
#include "qrecm/joker_violating.inc"
};

}  // namespace detail

/// Frozen violating fixture for the Joker catalog; every one of the 40
/// cyclic-monotonicity sums is strictly positive. Verified on every call.
inline ViolatingProfiles joker_violating_fixture() {
  const GameSeries series = joker_catalog();
  ViolatingProfiles v;
  for (std::size_t m = 0; m < 4; ++m) {
    MixedProfile p;
    for (std::size_t i = 0; i < 2; ++i) {
      Vector x(3);
      for (Eigen::Index j = 0; j < 3; ++j) x[j] = detail::kJokerViolating[m][i][j];
      x /= x.sum();
      p.probs.push_back(x);
    }
    v.profiles.push_back(std::move(p));
  }
  v.margin = nu_vector(series, v.profiles, enumerate_cycles(4, 2)).minCoeff();
  if (!(v.margin > 0.0)) throw NumericError("violating fixture no longer violates every cycle");
  return v;
}

inline bool is_joker_series(const GameSeries& series) {
  const GameSeries joker = joker_catalog();
  if (series.size() != joker.size()) return false;
  for (std::size_t m = 0; m < series.size(); ++m)
    if (!series[m].same_shape(joker[m]) ||
        series[m].payoff_tensor() != joker[m].payoff_tensor())
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// Data-generating processes

enum class DgpKind { qre_logit, violating, mixture };

struct DgpSpec {
  DgpKind kind = DgpKind::qre_logit;
  double lambda = 1.0;
  double weight = 0.0;  // mixture weight on the violating profiles
  std::size_t trials = 250;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(weight >= 0.0 && weight <= 1.0)) throw RangeError("mixture weight must lie in [0, 1]");
    if (trials < 1) throw RangeError("K must be >= 1");
    if (!std::isfinite(lambda) || lambda < 0.0) throw RangeError("lambda must be >= 0");
  }
};

inline SeriesProfiles qre_profiles(const GameSeries& series, double lambda) {
  SeriesProfiles out;
  LogitParams params;
  params.lambda = lambda;
  for (const auto& g : series) {
    QreSolution s = solve_logit_qre(g, params);
    if (!s.converged)
      throw NumericError("logit QRE did not converge for game '" + g.id() +
                         "' (residual " + std::to_string(s.residual) + ")");
    out.push_back(std::move(s.profile));
  }
  return out;
}

inline SeriesProfiles violating_profiles(const GameSeries& series) {
  if (is_joker_series(series)) return joker_violating_fixture().profiles;
  ViolatingProfiles v = search_violating_profiles(series);
  if (!(v.margin > 0.0))
    throw NumericError("could not find profiles violating every cyclic-monotonicity inequality");
  return v.profiles;
}

inline SeriesProfiles mix_profiles(const SeriesProfiles& a, const SeriesProfiles& b, double w) {
  SeriesProfiles out = a;
  for (std::size_t m = 0; m < out.size(); ++m)
    for (std::size_t i = 0; i < out[m].size(); ++i) out[m][i] = (1.0 - w) * a[m][i] + w * b[m][i];
  return out;
}

inline SeriesProfiles dgp_profiles(const GameSeries& series, const DgpSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DgpKind::qre_logit: return qre_profiles(series, spec.lambda);
    case DgpKind::violating: return violating_profiles(series);
    case DgpKind::mixture:
      return mix_profiles(qre_profiles(series, spec.lambda), violating_profiles(series),
                          spec.weight);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Simulated choice data

/// counts[m][i][j]: times player i chose j in game m.
using ChoiceCounts = std::vector<std::vector<std::vector<std::size_t>>>;

inline ChoiceCounts simulate_dataset(const SeriesProfiles& profiles, const TrialCounts& trials,
                                     std::uint64_t seed) {
  Rng rng(seed);
  ChoiceCounts out(profiles.size());
  for (std::size_t m = 0; m < profiles.size(); ++m)
    for (std::size_t i = 0; i < profiles[m].size(); ++i) {
      const std::size_t k = trials.at(i).at(m);
      if (k < 1) throw RangeError("K must be >= 1");
      out[m].push_back(multinomial_draw(rng, k, profiles[m][i]));
    }
  return out;
}

inline ChoiceCounts simulate_dataset(const SeriesProfiles& profiles, std::size_t k,
                                     std::uint64_t seed) {
  const std::size_t players = profiles.empty() ? 0 : profiles.front().size();
  return simulate_dataset(profiles, uniform_trials(players, profiles.size(), k), seed);
}

inline SeriesProfiles frequencies(const ChoiceCounts& counts) {
  SeriesProfiles out(counts.size());
  for (std::size_t m = 0; m < counts.size(); ++m)
    for (const auto& c : counts[m]) {
      std::size_t total = 0;
      for (auto x : c) total += x;
      if (total == 0) throw ValidationError("no trials in a (game, player) block");
      Vector p(static_cast<Eigen::Index>(c.size()));
      for (std::size_t j = 0; j < c.size(); ++j)
        p[static_cast<Eigen::Index>(j)] = static_cast<double>(c[j]) / static_cast<double>(total);
      out[m].probs.push_back(std::move(p));
    }
  return out;
}

inline TrialCounts trial_counts(const ChoiceCounts& counts) {
  if (counts.empty()) return {};
  TrialCounts t(counts.front().size(), std::vector<std::size_t>(counts.size(), 0));
  for (std::size_t m = 0; m < counts.size(); ++m)
    for (std::size_t i = 0; i < counts[m].size(); ++i)
      for (auto x : counts[m][i]) t[i][m] += x;
  return t;
}

// ---------------------------------------------------------------------------
// Experiments

/// Decisions of one simulated replication: reject[kappa][alpha].
struct ReplicationDecision {
  double statistic = 0.0;
  std::vector<std::vector<bool>> reject;
};

/// Simulates one dataset from `profiles` and tests it under every kappa rule
/// and alpha, sharing the Gaussian draws across them.
inline ReplicationDecision run_replication(const GameSeries& series, const CycleInventory& inv,
                                           const SeriesProfiles& profiles, std::size_t k,
                                           const std::vector<KappaSpec>& kappas,
                                           const std::vector<double>& alphas, std::size_t draws,
                                           std::uint64_t rep_seed) {
  const ChoiceCounts counts = simulate_dataset(profiles, k, derive_seed(rep_seed, 0));
  const MomentSystem sys = build_moment_system(series, frequencies(counts), trial_counts(counts), inv);
  std::vector<std::size_t> all(sys.size());
  for (std::size_t l = 0; l < all.size(); ++l) all[l] = l;
  const GaussianDraws g = gaussian_draws(sys, all, draws, derive_seed(rep_seed, 1));

  ReplicationDecision d;
  for (std::size_t r = 0; r < all.size(); ++r)
    if (g.active[r])
      d.statistic += negative_part_squared(g.scale[static_cast<Eigen::Index>(r)] *
                                           sys.mu_hat[static_cast<Eigen::Index>(r)]);
  for (const auto& ks : kappas) {
    const std::vector<double> s = simulated_statistics(g, gms_xi(sys, g, kappa(ks, sys.trials)));
    std::vector<bool> row;
    for (double a : alphas) row.push_back(d.statistic > critical_value_at(s, a));
    d.reject.push_back(std::move(row));
  }
  return d;
}

struct SizeConfig {
  double lambda = 2.0;
  std::vector<std::size_t> n_grid{1000, 5000, 9000};
  std::vector<KappaSpec> kappas{{KappaRule::five_log_half},
                                {KappaRule::five_log_quarter},
                                {KappaRule::five_log_eighth},
                                {KappaRule::five_loglog}};
  std::vector<double> alphas{0.05, 0.10, 0.20};
  std::size_t replications = 500;
  std::size_t draws = 1000;
  std::uint64_t seed = 1;
};

struct SizeRow {
  std::size_t n = 0;
  std::size_t k = 0;
  std::string kappa_rule;
  double alpha = 0.0;
  std::size_t rejections = 0;
  std::size_t replications = 0;
};

struct SizeTable {
  std::vector<SizeRow> rows;
  // replications in which a rejection at some alpha was not also a rejection
  // at every larger alpha; zero by construction
  std::size_t nesting_violations = 0;
};

/// Rejection counts under logit-QRE data, K = N / M per game and role.
inline SizeTable size_experiment(const GameSeries& series, const SizeConfig& cfg) {
  std::vector<double> alphas = cfg.alphas;
  std::sort(alphas.begin(), alphas.end());
  const CycleInventory inv = enumerate_cycles(series.size(), series.num_players());
  const SeriesProfiles null_profiles = qre_profiles(series, cfg.lambda);

  SizeTable table;
  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    const std::size_t n = cfg.n_grid[ni];
    const std::size_t k = n / series.size();
    if (k < 2) throw RangeError("N too small for the number of games");
    std::vector<std::vector<std::size_t>> hits(cfg.kappas.size(),
                                               std::vector<std::size_t>(alphas.size(), 0));
    for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
      const auto d = run_replication(series, inv, null_profiles, k, cfg.kappas, alphas, cfg.draws,
                                     derive_seed(derive_seed(cfg.seed, ni), rep));
      for (std::size_t a = 0; a < cfg.kappas.size(); ++a)
        for (std::size_t b = 0; b < alphas.size(); ++b) {
          hits[a][b] += d.reject[a][b] ? 1 : 0;
          if (b > 0 && d.reject[a][b - 1] && !d.reject[a][b]) ++table.nesting_violations;
        }
    }
    for (std::size_t a = 0; a < cfg.kappas.size(); ++a)
      for (std::size_t b = 0; b < alphas.size(); ++b)
        table.rows.push_back({n, k, cfg.kappas[a].name(), alphas[b], hits[a][b], cfg.replications});
  }
  return table;
}

struct PowerConfig {
  double lambda = 2.0;
  std::vector<double> weights{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<std::size_t> n_grid{1000, 5000, 9000};
  double alpha = 0.10;
  KappaSpec kappa{KappaRule::five_log_quarter};
  std::size_t replications = 100;
  std::size_t draws = 1000;
  std::uint64_t seed = 1;
};

struct PowerRow {
  double weight = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;
  double alpha = 0.0;
  std::size_t rejections = 0;
  std::size_t replications = 0;
  double rate() const {
    return replications ? static_cast<double>(rejections) / static_cast<double>(replications) : 0.0;
  }
};

struct PowerResult {
  std::vector<PowerRow> grid;
};

/// Rejection rate for data drawn from (1 - w) * QRE + w * violating profiles.
/// Replication seeds depend on (N, replication) only, so every weight sees the
/// same random stream.
inline PowerResult power_curve(const GameSeries& series, const PowerConfig& cfg) {
  const CycleInventory inv = enumerate_cycles(series.size(), series.num_players());
  const SeriesProfiles qre = qre_profiles(series, cfg.lambda);
  const SeriesProfiles bad = violating_profiles(series);
  PowerResult out;
  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    const std::size_t k = cfg.n_grid[ni] / series.size();
    if (k < 2) throw RangeError("N too small for the number of games");
    for (double w : cfg.weights) {
      if (!(w >= 0.0 && w <= 1.0)) throw RangeError("mixture weight must lie in [0, 1]");
      const SeriesProfiles p = mix_profiles(qre, bad, w);
      PowerRow row{w, cfg.n_grid[ni], k, cfg.alpha, 0, cfg.replications};
      for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
        const auto d = run_replication(series, inv, p, k, {cfg.kappa}, {cfg.alpha}, cfg.draws,
                                       derive_seed(derive_seed(cfg.seed, ni), rep));
        row.rejections += d.reject[0][0] ? 1 : 0;
      }
      out.grid.push_back(row);
    }
  }
  return out;
}

struct RiskConfig {
  double lambda = 2.0;
  std::size_t trials = 250;
  std::vector<double> r_grid{0.0, 0.25, 0.5, 0.75, 0.99};
  double alpha = 0.05;
  KappaSpec kappa{KappaRule::five_log_quarter};
  std::size_t replications = 100;
  std::size_t draws = 1000;
  std::uint64_t seed = 1;
};

struct RiskResult {
  std::vector<double> r_grid;
  std::vector<std::size_t> rejections;  // per r
  std::size_t constant_decisions = 0;   // replications with one decision for all r
  std::size_t replications = 0;
};

/// Logit-QRE data generated under risk-neutral payoffs, re-tested after CRRA
/// transforms of every payoff.
inline RiskResult risk_robustness(const GameSeries& series, const RiskConfig& cfg) {
  const CycleInventory inv = enumerate_cycles(series.size(), series.num_players());
  const SeriesProfiles qre = qre_profiles(series, cfg.lambda);
  std::vector<GameSeries> transformed;
  for (double r : cfg.r_grid) transformed.push_back(series.with_crra(r));

  RiskResult out;
  out.r_grid = cfg.r_grid;
  out.rejections.assign(cfg.r_grid.size(), 0);
  out.replications = cfg.replications;
  GmsConfig gc;
  gc.alpha = cfg.alpha;
  gc.kappa = cfg.kappa;
  gc.reps = cfg.draws;
  for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
    const std::uint64_t rs = derive_seed(cfg.seed, rep);
    const ChoiceCounts counts = simulate_dataset(qre, cfg.trials, derive_seed(rs, 0));
    const SeriesProfiles freq = frequencies(counts);
    const TrialCounts tc = trial_counts(counts);
    gc.seed = derive_seed(rs, 1);
    std::size_t rejected = 0;
    for (std::size_t ri = 0; ri < transformed.size(); ++ri) {
      const TestResult t = run_gms(build_moment_system(transformed[ri], freq, tc, inv), gc);
      if (t.reject) {
        ++out.rejections[ri];
        ++rejected;
      }
    }
    if (rejected == 0 || rejected == transformed.size()) ++out.constant_decisions;
  }
  return out;
}

}  // namespace qrecm
