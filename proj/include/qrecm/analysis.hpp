#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qrecm/error.hpp"
#include "qrecm/game.hpp"
#include "qrecm/gms.hpp"
#include "qrecm/io.hpp"
#include "qrecm/moments.hpp"
#include "qrecm/random.hpp"

namespace qrecm {

enum class AnalysisMode { pooled, per_subject };
enum class OpponentModel { self, others, beliefs };

inline std::string to_string(AnalysisMode m) { return m == AnalysisMode::pooled ? "pooled" : "per_subject"; }

inline std::string to_string(OpponentModel m) {
  switch (m) {
    case OpponentModel::self: return "self";
    case OpponentModel::others: return "others";
    case OpponentModel::beliefs: return "beliefs";
  }
  return "?";
}

inline AnalysisMode parse_mode(std::string_view s) {
  if (s == "pooled") return AnalysisMode::pooled;
  if (s == "per_subject" || s == "per-subject") return AnalysisMode::per_subject;
  throw ValidationError("unknown analysis mode '" + std::string(s) + "'");
}

inline OpponentModel parse_opponent(std::string_view s) {
  if (s == "self") return OpponentModel::self;
  if (s == "others") return OpponentModel::others;
  if (s == "beliefs") return OpponentModel::beliefs;
  throw ValidationError("unknown opponent model '" + std::string(s) + "'");
}

struct AnalysisConfig {
  AnalysisMode mode = AnalysisMode::pooled;
  OpponentModel opponent = OpponentModel::self;
  GmsConfig gms;
  std::vector<MomentSubset> subsets;  // empty: all, row and column
  std::vector<double> risk_r{0.0};    // first value drives the main results
  std::size_t min_trials = 5;
  JacobianMode jacobian = JacobianMode::automatic;

  std::vector<MomentSubset> effective_subsets() const {
    if (!subsets.empty()) return subsets;
    return {{MomentSubset::Kind::all, {}}, {MomentSubset::Kind::row, {}}, {MomentSubset::Kind::column, {}}};
  }

  void validate() const {
    gms.validate();
    if (risk_r.empty()) throw ValidationError("risk grid is empty");
    for (double r : risk_r)
      if (!(r >= 0.0 && r <= 0.99)) throw RangeError("risk coefficient must lie in [0, 0.99]");
    if (min_trials < 1) throw RangeError("min_trials must be >= 1");
    for (const auto& s : subsets)
      if (s.kind == MomentSubset::Kind::explicit_set)
        throw ValidationError("analysis subsets are all, row or column");
  }
};

// ---------------------------------------------------------------------------
// Aggregation

enum class UnitView { both, row, column };

inline std::string to_string(UnitView v) {
  switch (v) {
    case UnitView::both: return "both";
    case UnitView::row: return "row";
    case UnitView::column: return "column";
  }
  return "?";
}

/// One analysis unit: the games it covers (indices into the dataset's series),
/// observed profiles per covered game and K per [player][covered game].
struct AnalysisUnit {
  std::string id;
  UnitView view = UnitView::both;
  std::vector<std::size_t> games;
  SeriesProfiles profiles;
  TrialCounts trials;
  // players whose probabilities are elicited beliefs, taken as known
  std::vector<std::size_t> fixed_players;
};

struct Aggregation {
  std::vector<AnalysisUnit> units;
  std::vector<std::string> notices;
};

namespace detail {

struct Block {
  Vector sum;  // choice counts or summed probability vectors
  std::size_t n = 0;

  void add(const Vector& v) {
    if (sum.size() == 0) sum = Vector::Zero(v.size());
    sum += v;
    ++n;
  }
  Vector mean() const { return sum / static_cast<double>(n); }
};

// blocks[game][role]
using BlockGrid = std::vector<std::vector<Block>>;

inline BlockGrid empty_grid(const GameSeries& s) {
  return BlockGrid(s.size(), std::vector<Block>(s.num_players()));
}

inline Vector one_hot(std::size_t j, std::size_t n) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
  v[static_cast<Eigen::Index>(j)] = 1.0;
  return v;
}

inline std::string game_list(const GameSeries& s, const std::vector<std::size_t>& games) {
  std::string out;
  for (auto m : games) out += (out.empty() ? "" : ",") + s[m].id();
  return out;
}

// Opponent observation for each trial: the recorded opponent choice, or the
// mix of opposite-role choices in the same session, game and round.
inline std::vector<std::optional<Vector>> opponent_observations(const Dataset& d) {
  std::map<std::tuple<std::string, std::size_t, long, std::size_t>, Block> pool;
  for (const auto& t : d.trials)
    pool[{t.session_id, t.game, t.round, t.role}].add(
        one_hot(t.own_choice, d.series.num_strategies(t.role)));
  std::vector<std::optional<Vector>> out;
  for (const auto& t : d.trials) {
    const std::size_t opp = 1 - t.role;
    if (t.opp_choice) {
      out.emplace_back(one_hot(*t.opp_choice, d.series.num_strategies(opp)));
      continue;
    }
    auto it = pool.find({t.session_id, t.game, t.round, opp});
    if (it == pool.end())
      out.emplace_back(std::nullopt);
    else
      out.emplace_back(it->second.mean());
  }
  return out;
}

}  // namespace detail

/// Builds analysis units from raw records. Pooled mode sums every subject's
/// choices; per-subject mode pairs each subject's own frequencies with an
/// opponent profile taken from the subject's other role (self), the realized
/// opponents (others) or the subject's elicited beliefs (beliefs).
inline Aggregation aggregate(const Dataset& d, const AnalysisConfig& cfg) {
  cfg.validate();
  const GameSeries& s = d.series;
  detail::opponent_of(s, 0);
  const std::size_t M = s.size();
  Aggregation agg;

  auto freq = [](const detail::Block& b) { return b.mean(); };
  auto enough = [&](const detail::Block& b) { return b.n >= cfg.min_trials; };

  if (cfg.mode == AnalysisMode::pooled) {
    detail::BlockGrid g = detail::empty_grid(s);
    for (const auto& t : d.trials) g[t.game][t.role].add(detail::one_hot(t.own_choice, s.num_strategies(t.role)));
    AnalysisUnit u;
    u.id = "pooled";
    u.trials.assign(2, {});
    for (std::size_t m = 0; m < M; ++m) {
      if (!enough(g[m][0]) || !enough(g[m][1])) {
        agg.notices.push_back("pooled: game " + s[m].id() + " has fewer than " +
                              std::to_string(cfg.min_trials) + " trials in some role; left out");
        continue;
      }
      u.games.push_back(m);
      u.profiles.push_back({{freq(g[m][0]), freq(g[m][1])}});
      for (std::size_t i = 0; i < 2; ++i) u.trials[i].push_back(g[m][i].n);
    }
    if (u.games.size() < 2) throw ValidationError("pooled data cover fewer than two usable games");
    agg.units.push_back(std::move(u));
    return agg;
  }

  // per subject
  const auto opp_obs = detail::opponent_observations(d);
  std::map<std::string, detail::BlockGrid> own, others, beliefs;
  std::size_t unmatched = 0;
  for (std::size_t k = 0; k < d.trials.size(); ++k) {
    const auto& t = d.trials[k];
    auto [it, fresh] = own.try_emplace(t.subject_id, detail::empty_grid(s));
    it->second[t.game][t.role].add(detail::one_hot(t.own_choice, s.num_strategies(t.role)));
    auto [ot, f2] = others.try_emplace(t.subject_id, detail::empty_grid(s));
    if (opp_obs[k])
      ot->second[t.game][t.role].add(*opp_obs[k]);
    else
      ++unmatched;
  }
  for (const auto& b : d.beliefs) {
    auto [it, fresh] = beliefs.try_emplace(b.subject_id, detail::empty_grid(s));
    it->second[b.game][b.role].add(b.belief);
  }
  if (cfg.opponent == OpponentModel::others && unmatched > 0)
    agg.notices.push_back(std::to_string(unmatched) +
                          " trials have no recorded or pairable opponent choice");
  if (cfg.opponent == OpponentModel::beliefs && d.beliefs.empty())
    throw ValidationError("opponent model 'beliefs' needs a beliefs file");

  for (const auto& [subject, grid] : own) {
    if (cfg.opponent == OpponentModel::self) {
      AnalysisUnit u;
      u.id = subject;
      u.trials.assign(2, {});
      for (std::size_t m = 0; m < M; ++m) {
        if (!enough(grid[m][0]) || !enough(grid[m][1])) continue;
        u.games.push_back(m);
        u.profiles.push_back({{freq(grid[m][0]), freq(grid[m][1])}});
        for (std::size_t i = 0; i < 2; ++i) u.trials[i].push_back(grid[m][i].n);
      }
      if (u.games.size() < 2) {
        agg.notices.push_back("subject " + subject + ": fewer than two games with at least " +
                              std::to_string(cfg.min_trials) + " trials in both roles; excluded");
        continue;
      }
      agg.units.push_back(std::move(u));
      continue;
    }

    for (std::size_t role = 0; role < 2; ++role) {
      const std::size_t opp = 1 - role;
      AnalysisUnit u;
      u.id = subject;
      u.view = role == 0 ? UnitView::row : UnitView::column;
      u.trials.assign(2, {});
      const std::string tag = "subject " + subject + " (" + s.front().player(role) + "): ";
      std::vector<std::size_t> missing;
      for (std::size_t m = 0; m < M; ++m) {
        if (!enough(grid[m][role])) continue;
        const detail::Block* ob = nullptr;
        if (cfg.opponent == OpponentModel::others) {
          const auto& b = others.at(subject)[m][role];
          if (!enough(b)) continue;
          ob = &b;
        } else {
          auto it = beliefs.find(subject);
          if (it == beliefs.end() || it->second[m][role].n == 0) {
            missing.push_back(m);
            continue;
          }
          ob = &it->second[m][role];
          u.fixed_players = {opp};
        }
        u.games.push_back(m);
        MixedProfile p;
        p.probs.resize(2);
        p.probs[role] = freq(grid[m][role]);
        p.probs[opp] = ob->mean();
        u.profiles.push_back(std::move(p));
        u.trials[role].push_back(grid[m][role].n);
        u.trials[opp].push_back(ob->n);
      }
      if (!missing.empty()) {
        agg.notices.push_back(tag + "no elicited beliefs in game(s) " + detail::game_list(s, missing) +
                              "; excluded");
        continue;
      }
      if (u.games.size() < 2) {
        agg.notices.push_back(tag + "fewer than two games with at least " +
                              std::to_string(cfg.min_trials) + " usable trials; excluded");
        continue;
      }
      agg.units.push_back(std::move(u));
    }
  }
  if (agg.units.empty()) throw ValidationError("no analysis unit survives aggregation");
  return agg;
}

/// Moment system of one unit under CRRA coefficient r. Belief blocks carry no
/// sampling variance and do not enter K.
inline MomentSystem unit_system(const GameSeries& series, const AnalysisUnit& u, double r = 0.0,
                                JacobianMode mode = JacobianMode::automatic) {
  const GameSeries sub = series.subset(u.games).with_crra(r);
  TrialCounts trials = u.trials;
  for (auto i : u.fixed_players)
    for (auto& k : trials.at(i)) k = std::max<std::size_t>(k, 1);
  MomentSystem sys = build_moment_system(sub, u.profiles, trials, mode);
  if (!u.fixed_players.empty()) {
    const CoordinateLayout layout(sub);
    for (auto i : u.fixed_players)
      for (std::size_t m = 0; m < sub.size(); ++m)
        for (std::size_t a = 0; a < layout.free_per_block(i); ++a) {
          const auto c = static_cast<Eigen::Index>(layout.index(i, m, a));
          sys.prob_cov.row(c).setZero();
          sys.prob_cov.col(c).setZero();
        }
    TrialCounts sampled;
    for (std::size_t i = 0; i < trials.size(); ++i)
      if (std::find(u.fixed_players.begin(), u.fixed_players.end(), i) == u.fixed_players.end())
        sampled.push_back(trials[i]);
    sys.trials = min_trials(sampled);
    sys.finalize();
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Analysis

struct UnitResult {
  std::string unit;
  UnitView view = UnitView::both;
  std::vector<std::string> games;
  TrialCounts trials;
  std::vector<TestResult> tests;  // one per subset
};

struct SubsetSummary {
  std::string subset;
  std::size_t units = 0;
  double avg_statistic = 0.0;
  double avg_critical_value = 0.0;
  std::size_t rejected_5 = 0;
  std::size_t rejected_10 = 0;
  std::size_t rejected_20 = 0;
  double avg_violation_pct = 0.0;  // mean share of moments with mu_hat < 0
};

struct RiskRow {
  double r = 0.0;
  std::string subset;
  std::size_t units = 0;
  std::size_t rejected = 0;
  double avg_statistic = 0.0;
};

struct AnalysisReport {
  AnalysisConfig config;
  std::vector<std::string> notices;
  std::vector<UnitResult> units;
  std::vector<SubsetSummary> summary;
  std::vector<RiskRow> risk;  // filled when more than one r is given
};

namespace detail {

inline std::vector<MomentSubset> subsets_for(UnitView v, const std::vector<MomentSubset>& wanted) {
  std::vector<MomentSubset> out;
  for (const auto& s : wanted) {
    if (v == UnitView::both ||
        (v == UnitView::row && s.kind == MomentSubset::Kind::row) ||
        (v == UnitView::column && s.kind == MomentSubset::Kind::column))
      out.push_back(s);
  }
  return out;
}

inline std::uint64_t unit_seed(const AnalysisConfig& cfg, std::size_t k) {
  return cfg.mode == AnalysisMode::pooled ? cfg.gms.seed : derive_seed(cfg.gms.seed, k);
}

inline std::vector<UnitResult> run_units(const GameSeries& series, const Aggregation& agg,
                                         const AnalysisConfig& cfg, double r) {
  std::vector<UnitResult> out;
  const auto wanted = cfg.effective_subsets();
  for (std::size_t k = 0; k < agg.units.size(); ++k) {
    const auto& u = agg.units[k];
    UnitResult res;
    res.unit = u.id;
    res.view = u.view;
    for (auto m : u.games) res.games.push_back(series[m].id());
    res.trials = u.trials;
    const auto subsets = subsets_for(u.view, wanted);
    if (!subsets.empty()) {
      const MomentSystem sys = unit_system(series, u, r, cfg.jacobian);
      for (const auto& sub : subsets) {
        GmsConfig g = cfg.gms;
        g.subset = sub;
        g.seed = unit_seed(cfg, k);
        res.tests.push_back(run_gms(sys, g));
      }
    }
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace detail

inline AnalysisReport analyze(const Dataset& d, const AnalysisConfig& cfg) {
  cfg.validate();
  const Aggregation agg = aggregate(d, cfg);
  AnalysisReport rep;
  rep.config = cfg;
  rep.notices = agg.notices;
  if (cfg.mode == AnalysisMode::per_subject && cfg.opponent != OpponentModel::self) {
    for (const auto& s : cfg.effective_subsets())
      if (s.kind == MomentSubset::Kind::all)
        rep.notices.push_back("subset 'all' is skipped: opponent model '" + to_string(cfg.opponent) +
                              "' tests each role on its own profiles");
  }
  if (cfg.risk_r.front() != 0.0)
    rep.notices.push_back("payoffs transformed by x^(1-r) with r = " + std::to_string(cfg.risk_r.front()));
  rep.units = detail::run_units(d.series, agg, cfg, cfg.risk_r.front());

  for (const auto& sub : cfg.effective_subsets()) {
    SubsetSummary sm;
    sm.subset = sub.name();
    for (const auto& u : rep.units)
      for (const auto& t : u.tests) {
        if (t.subset != sm.subset) continue;
        ++sm.units;
        sm.avg_statistic += t.statistic;
        sm.avg_critical_value += t.critical_value;
        sm.rejected_5 += t.rejects_at(0.05) ? 1 : 0;
        sm.rejected_10 += t.rejects_at(0.10) ? 1 : 0;
        sm.rejected_20 += t.rejects_at(0.20) ? 1 : 0;
        sm.avg_violation_pct += 100.0 * static_cast<double>(t.violated_moments()) /
                                static_cast<double>(t.per_moment.size());
      }
    if (sm.units == 0) continue;
    const auto n = static_cast<double>(sm.units);
    sm.avg_statistic /= n;
    sm.avg_critical_value /= n;
    sm.avg_violation_pct /= n;
    rep.summary.push_back(sm);
  }

  if (cfg.risk_r.size() > 1) {
    for (double r : cfg.risk_r) {
      const auto units = r == cfg.risk_r.front() ? rep.units : detail::run_units(d.series, agg, cfg, r);
      for (const auto& sub : cfg.effective_subsets()) {
        RiskRow row;
        row.r = r;
        row.subset = sub.name();
        for (const auto& u : units)
          for (const auto& t : u.tests)
            if (t.subset == row.subset) {
              ++row.units;
              row.rejected += t.reject ? 1 : 0;
              row.avg_statistic += t.statistic;
            }
        if (row.units == 0) continue;
        row.avg_statistic /= static_cast<double>(row.units);
        rep.risk.push_back(row);
      }
    }
  }
  return rep;
}

}  // namespace qrecm
