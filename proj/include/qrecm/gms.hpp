#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrecm/error.hpp"
#include "qrecm/moments.hpp"
#include "qrecm/random.hpp"

namespace qrecm {

// ---------------------------------------------------------------------------
// Tuning sequence kappa_K

enum class KappaRule {
  sqrt_log,          // (ln K)^(1/2)
  five_log_half,     // 5 (ln K)^(1/2)
  five_log_quarter,  // 5 (ln K)^(1/4)
  five_log_eighth,   // 5 (ln K)^(1/8)
  five_loglog,       // 5 (2 ln ln K)^(1/2)
  custom,
};

struct KappaSpec {
  KappaRule rule = KappaRule::five_log_quarter;
  double custom_value = 0.0;

  std::string name() const {
    switch (rule) {
      case KappaRule::sqrt_log: return "sqrt_log";
      case KappaRule::five_log_half: return "5_log_half";
      case KappaRule::five_log_quarter: return "5_log_quarter";
      case KappaRule::five_log_eighth: return "5_log_eighth";
      case KappaRule::five_loglog: return "5_loglog";
      case KappaRule::custom: return "custom:" + std::to_string(custom_value);
    }
    return "?";
  }

  // Accepts the rule names above, or "custom:<value>".
  static KappaSpec parse(std::string_view s) {
    if (s == "sqrt_log") return {KappaRule::sqrt_log};
    if (s == "5_log_half") return {KappaRule::five_log_half};
    if (s == "5_log_quarter") return {KappaRule::five_log_quarter};
    if (s == "5_log_eighth") return {KappaRule::five_log_eighth};
    if (s == "5_loglog") return {KappaRule::five_loglog};
    if (s.starts_with("custom:")) {
      const std::string v(s.substr(7));
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != v.size() || !(x > 0.0))
        throw ValidationError("custom kappa needs a positive number, got '" + v + "'");
      return {KappaRule::custom, x};
    }
    throw ValidationError("unknown kappa rule '" + std::string(s) + "'");
  }
};

inline double kappa(const KappaSpec& spec, std::size_t trials) {
  if (spec.rule == KappaRule::custom) {
    if (!(spec.custom_value > 0.0)) throw RangeError("custom kappa must be positive");
    return spec.custom_value;
  }
  if (trials < 2) throw RangeError("kappa rules need K >= 2");
  const double lk = std::log(static_cast<double>(trials));
  switch (spec.rule) {
    case KappaRule::sqrt_log: return std::sqrt(lk);
    case KappaRule::five_log_half: return 5.0 * std::sqrt(lk);
    case KappaRule::five_log_quarter: return 5.0 * std::pow(lk, 0.25);
    case KappaRule::five_log_eighth: return 5.0 * std::pow(lk, 0.125);
    case KappaRule::five_loglog: {
      const double ll = 2.0 * std::log(lk);
      if (!(ll > 0.0)) throw RangeError("5_loglog kappa needs K > e");
      return 5.0 * std::sqrt(ll);
    }
    case KappaRule::custom: break;
  }
  return spec.custom_value;
}

// ---------------------------------------------------------------------------
// Moment subsets

struct MomentSubset {
  enum class Kind { all, row, column, explicit_set };
  Kind kind = Kind::all;
  std::vector<std::size_t> indices;  // explicit_set only, 0-based

  std::string name() const {
    switch (kind) {
      case Kind::all: return "all";
      case Kind::row: return "row";
      case Kind::column: return "column";
      case Kind::explicit_set: return "explicit";
    }
    return "?";
  }

  static MomentSubset parse(std::string_view s) {
    if (s == "all") return {Kind::all, {}};
    if (s == "row") return {Kind::row, {}};
    if (s == "column" || s == "col") return {Kind::column, {}};
    throw ValidationError("unknown moment subset '" + std::string(s) + "'");
  }
};

/// Row/column select the moments owned by player 0/1.
inline std::vector<std::size_t> resolve_subset(const MomentSystem& sys, const MomentSubset& subset) {
  std::vector<std::size_t> out;
  switch (subset.kind) {
    case MomentSubset::Kind::all:
      for (std::size_t l = 0; l < sys.size(); ++l) out.push_back(l);
      break;
    case MomentSubset::Kind::row:
    case MomentSubset::Kind::column: {
      const std::size_t p = subset.kind == MomentSubset::Kind::row ? 0 : 1;
      for (std::size_t l = 0; l < sys.size(); ++l)
        if (sys.moment_player.at(l) == p) out.push_back(l);
      break;
    }
    case MomentSubset::Kind::explicit_set:
      out = subset.indices;
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      for (auto l : out)
        if (l >= sys.size()) throw ValidationError("moment index out of range");
      break;
  }
  if (out.empty()) throw ValidationError("moment subset '" + subset.name() + "' is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Statistic

inline double negative_part_squared(double x) { return x < 0.0 ? x * x : 0.0; }

/// Sum of squared negative parts of mu_l / sigma_l over non-dropped moments.
/// Zero-variance moments that are not dropped are divided by one.
inline double test_statistic(const Vector& mu, const Vector& sigma,
                             std::span<const std::size_t> dropped = {}) {
  if (mu.size() != sigma.size()) throw ValidationError("test_statistic: length mismatch");
  double s = 0.0;
  for (Eigen::Index l = 0; l < mu.size(); ++l) {
    if (std::find(dropped.begin(), dropped.end(), static_cast<std::size_t>(l)) != dropped.end())
      continue;
    if (sigma[l] < 0.0) throw ValidationError("test_statistic: negative sigma");
    const double d = sigma[l] * sigma[l] < kZeroVariance ? 1.0 : sigma[l];
    s += negative_part_squared(mu[l] / d);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Simulation

struct GmsConfig {
  double alpha = 0.05;
  std::size_t reps = 1000;
  KappaSpec kappa;
  std::uint64_t seed = 0;
  MomentSubset subset;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("alpha must lie in (0, 1)");
    if (reps < 1) throw RangeError("number of simulation draws must be >= 1");
  }
};

/// R draws of N(0, Omega_I), generated as D_I J_I V^(1/2) eta with eta
/// standard normal in the probability coordinates. Rows are draws.
struct GaussianDraws {
  std::vector<std::size_t> indices;
  Vector scale;  // 1/sigma, or 1 for zero-variance moments
  std::vector<bool> active;  // false for dropped moments
  Matrix z;
};

inline Matrix psd_sqrt(const Matrix& v) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(v);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition of V failed");
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  Vector ev = es.eigenvalues();
  if (ev.size() > 0 && ev.minCoeff() < -1e-12 * scale)
    throw NumericError("probability covariance V is not positive semidefinite (min eigenvalue " +
                       std::to_string(ev.minCoeff()) + ")");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Vector moment_sigmas(const MomentSystem& sys) {
  return sys.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
}

inline GaussianDraws gaussian_draws(const MomentSystem& sys, std::vector<std::size_t> indices,
                                    std::size_t reps, std::uint64_t seed) {
  GaussianDraws g;
  g.indices = std::move(indices);
  const auto n = static_cast<Eigen::Index>(g.indices.size());
  const Vector sigma = moment_sigmas(sys);
  g.scale.resize(n);
  Matrix load(n, sys.jacobian.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t l = g.indices[static_cast<std::size_t>(r)];
    const auto el = static_cast<Eigen::Index>(l);
    const bool zero = sys.sigma(el, el) < kZeroVariance;
    g.scale[r] = zero ? 1.0 : 1.0 / sigma[el];
    g.active.push_back(!sys.is_dropped(l));
    load.row(r) = g.scale[r] * sys.jacobian.row(el);
  }
  load = load * psd_sqrt(sys.prob_cov);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix eta(static_cast<Eigen::Index>(reps), load.cols());
  for (Eigen::Index r = 0; r < eta.rows(); ++r)
    for (Eigen::Index c = 0; c < eta.cols(); ++c) eta(r, c) = normal(rng);
  g.z = eta * load.transpose();
  return g;
}

/// s_r = S(Z_r + [xi]_+) over active moments, sorted ascending.
inline std::vector<double> simulated_statistics(const GaussianDraws& g, const Vector& xi) {
  std::vector<double> s(static_cast<std::size_t>(g.z.rows()), 0.0);
  const Vector shift = xi.cwiseMax(0.0);
  for (Eigen::Index r = 0; r < g.z.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < g.z.cols(); ++c)
      if (g.active[static_cast<std::size_t>(c)]) acc += negative_part_squared(g.z(r, c) + shift[c]);
    s[static_cast<std::size_t>(r)] = acc;
  }
  std::sort(s.begin(), s.end());
  return s;
}

/// Order statistic ceil((1 - alpha) R) of ascending draws (1-based).
inline double critical_value_at(const std::vector<double>& sorted_draws, double alpha) {
  if (sorted_draws.empty()) throw ValidationError("no simulated draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("alpha must lie in (0, 1)");
  const double r = static_cast<double>(sorted_draws.size());
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * r - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted_draws.size());
  return sorted_draws[k - 1];
}

inline Vector gms_xi(const MomentSystem& sys, const GaussianDraws& g, double kappa_value) {
  Vector xi(static_cast<Eigen::Index>(g.indices.size()));
  for (Eigen::Index r = 0; r < xi.size(); ++r)
    xi[r] = g.scale[r] * sys.mu_hat[static_cast<Eigen::Index>(g.indices[static_cast<std::size_t>(r)])] /
            kappa_value;
  return xi;
}

struct CriticalValue {
  double value = 0.0;
  double kappa = 0.0;
  Vector xi;
  std::vector<double> draws;  // ascending
};

inline CriticalValue gms_critical_value(const MomentSystem& sys, const GmsConfig& config) {
  config.validate();
  const GaussianDraws g = gaussian_draws(sys, resolve_subset(sys, config.subset), config.reps,
                                         config.seed);
  CriticalValue cv;
  cv.kappa = kappa(config.kappa, sys.trials);
  cv.xi = gms_xi(sys, g, cv.kappa);
  cv.draws = simulated_statistics(g, cv.xi);
  cv.value = critical_value_at(cv.draws, config.alpha);
  return cv;
}

// ---------------------------------------------------------------------------
// Test result

struct MomentDiagnostic {
  std::size_t index = 0;  // 0-based position in the moment system
  std::string label;
  double mu_hat = 0.0;
  double sigma = 0.0;
  double normalized = 0.0;
  double xi = 0.0;
  bool selected = false;  // xi <= 1: close enough to binding to shape the null
  bool dropped = false;
};

struct DrawSummary {
  double mean = 0.0;
  double median = 0.0;
  double q90 = 0.0;
  double q95 = 0.0;
  double q99 = 0.0;
  double max = 0.0;
};

struct TestResult {
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  std::string kappa_rule;
  double kappa_value = 0.0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::string subset;
  std::size_t trials = 0;
  Vector xi;
  std::vector<MomentDiagnostic> per_moment;
  std::vector<std::size_t> dropped;       // excluded from the statistic
  std::vector<std::size_t> unit_divisor;  // normalized by 1 instead of 1/sigma
  DrawSummary draws_summary;
  std::vector<double> draws;  // ascending; not serialized

  double critical_value_for(double a) const { return critical_value_at(draws, a); }
  bool rejects_at(double a) const { return statistic > critical_value_for(a); }
  std::size_t violated_moments() const {
    std::size_t n = 0;
    for (const auto& d : per_moment)
      if (d.mu_hat < 0.0) ++n;
    return n;
  }
};

inline DrawSummary summarize_draws(const std::vector<double>& sorted) {
  DrawSummary d;
  if (sorted.empty()) return d;
  double sum = 0.0;
  for (double x : sorted) sum += x;
  d.mean = sum / static_cast<double>(sorted.size());
  d.median = critical_value_at(sorted, 0.5);
  d.q90 = critical_value_at(sorted, 0.10);
  d.q95 = critical_value_at(sorted, 0.05);
  d.q99 = critical_value_at(sorted, 0.01);
  d.max = sorted.back();
  return d;
}

/// GMS test of mu >= 0 on the configured subset of an assembled system.
inline TestResult run_gms(const MomentSystem& sys, const GmsConfig& config) {
  config.validate();
  const GaussianDraws g =
      gaussian_draws(sys, resolve_subset(sys, config.subset), config.reps, config.seed);
  const double kv = kappa(config.kappa, sys.trials);
  const Vector sigma = moment_sigmas(sys);

  TestResult res;
  res.alpha = config.alpha;
  res.kappa_rule = config.kappa.name();
  res.kappa_value = kv;
  res.reps = config.reps;
  res.seed = config.seed;
  res.subset = config.subset.name();
  res.trials = sys.trials;
  res.xi = gms_xi(sys, g, kv);

  for (std::size_t r = 0; r < g.indices.size(); ++r) {
    const std::size_t l = g.indices[r];
    const auto el = static_cast<Eigen::Index>(l);
    MomentDiagnostic d;
    d.index = l;
    d.label = l < sys.labels.size() ? sys.labels[l] : std::to_string(l);
    d.mu_hat = sys.mu_hat[el];
    d.sigma = sigma[el];
    d.normalized = g.scale[static_cast<Eigen::Index>(r)] * d.mu_hat;
    d.xi = res.xi[static_cast<Eigen::Index>(r)];
    d.dropped = !g.active[r];
    d.selected = !d.dropped && d.xi <= 1.0;
    if (d.dropped) {
      res.dropped.push_back(l);
    } else {
      res.statistic += negative_part_squared(d.normalized);
    }
    if (sys.sigma(el, el) < kZeroVariance) res.unit_divisor.push_back(l);
    res.per_moment.push_back(std::move(d));
  }

  res.draws = simulated_statistics(g, res.xi);
  res.critical_value = critical_value_at(res.draws, config.alpha);
  res.reject = res.statistic > res.critical_value;
  const auto exceed = static_cast<double>(
      res.draws.end() - std::lower_bound(res.draws.begin(), res.draws.end(), res.statistic));
  res.p_value = exceed / static_cast<double>(res.draws.size());
  res.draws_summary = summarize_draws(res.draws);
  return res;
}

/// Cyclic-monotonicity test for observed per-game profiles.
inline TestResult run_cm_test(const GameSeries& series, const SeriesProfiles& profiles,
                              const TrialCounts& trials, const GmsConfig& config,
                              JacobianMode mode = JacobianMode::automatic) {
  return run_gms(build_moment_system(series, profiles, trials, mode), config);
}

/// Cumulative rank test between exactly two games, on the same GMS machinery.
inline TestResult run_hhk_test(const GameSeries& series, const SeriesProfiles& profiles,
                               const TrialCounts& trials, const GmsConfig& config) {
  return run_gms(build_hhk_system(series, profiles, trials), config);
}

}  // namespace qrecm
