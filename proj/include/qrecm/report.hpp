#pragma once

#include <charconv>
#include <cstddef>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qrecm/analysis.hpp"
#include "qrecm/cycles.hpp"
#include "qrecm/gms.hpp"
#include "qrecm/io.hpp"
#include "qrecm/moments.hpp"
#include "qrecm/montecarlo.hpp"
#include "qrecm/qre.hpp"

namespace qrecm {

inline constexpr const char* kVersion = "0.1.0";

inline Json to_json(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v[k]);
  return j;
}

inline Json to_json(const MixedProfile& p, const NormalFormGame& g) {
  Json j = Json::object();
  for (std::size_t i = 0; i < p.size(); ++i) {
    Json probs = Json::object();
    for (std::size_t s = 0; s < g.num_strategies(i); ++s)
      probs[g.strategies(i)[s]] = p[i][static_cast<Eigen::Index>(s)];
    j[g.player(i)] = probs;
  }
  return j;
}

inline Json to_json(const GmsConfig& c) {
  return {{"alpha", c.alpha},
          {"R", c.reps},
          {"kappa_rule", c.kappa.name()},
          {"seed", c.seed},
          {"subset", c.subset.name()}};
}

inline Json to_json(const TestResult& t) {
  Json j;
  j["statistic"] = t.statistic;
  j["critical_value"] = t.critical_value;
  j["p_value"] = t.p_value;
  j["reject"] = t.reject;
  j["alpha"] = t.alpha;
  j["kappa_rule"] = t.kappa_rule;
  j["kappa_value"] = t.kappa_value;
  j["R"] = t.reps;
  j["seed"] = t.seed;
  j["subset"] = t.subset;
  j["K"] = t.trials;
  Json pm = Json::array();
  for (const auto& d : t.per_moment)
    pm.push_back({{"index", d.index},
                  {"label", d.label},
                  {"mu_hat", d.mu_hat},
                  {"sigma", d.sigma},
                  {"normalized", d.normalized},
                  {"xi", d.xi},
                  {"selected", d.selected},
                  {"dropped", d.dropped}});
  j["per_moment"] = pm;
  j["dropped"] = t.dropped;
  j["unit_divisor"] = t.unit_divisor;
  const auto& s = t.draws_summary;
  j["draws_summary"] = {{"mean", s.mean}, {"median", s.median}, {"q90", s.q90},
                        {"q95", s.q95},   {"q99", s.q99},       {"max", s.max}};
  return j;
}

inline Json to_json(const MomentSystem& sys) {
  Json j;
  j["P"] = sys.size();
  j["D"] = static_cast<std::size_t>(sys.jacobian.cols());
  j["K"] = sys.trials;
  j["labels"] = sys.labels;
  j["mu_hat"] = to_json(sys.mu_hat);
  j["sigma_diag"] = to_json(Vector(sys.sigma.diagonal()));
  j["dropped"] = sys.dropped;
  return j;
}

inline Json to_json(const QreSolution& s, const NormalFormGame& g, double lambda) {
  return {{"game_id", g.id()},
          {"lambda", lambda},
          {"converged", s.converged},
          {"iterations", s.iterations},
          {"residual", s.residual},
          {"profile", to_json(s.profile, g)}};
}

inline Json to_json(const AnalysisConfig& c) {
  Json subsets = Json::array();
  for (const auto& s : c.effective_subsets()) subsets.push_back(s.name());
  Json gms = to_json(c.gms);
  gms.erase("subset");
  return {{"mode", to_string(c.mode)},
          {"opponent", to_string(c.opponent)},
          {"subsets", subsets},
          {"gms", gms},
          {"risk_r", c.risk_r},
          {"min_trials", c.min_trials},
          {"crra_applies_to", "all payoffs, including belief-based expected utilities"}};
}

inline Json to_json(const AnalysisReport& r, const GameSeries& series) {
  Json j;
  j["version"] = kVersion;
  j["games"] = [&] {
    Json g = Json::array();
    for (const auto& x : series) g.push_back(x.id());
    return g;
  }();
  j["config"] = to_json(r.config);
  j["notices"] = r.notices;
  Json units = Json::array();
  for (const auto& u : r.units) {
    Json tests = Json::array();
    for (const auto& t : u.tests) tests.push_back(to_json(t));
    units.push_back({{"unit", u.unit},
                     {"view", to_string(u.view)},
                     {"games", u.games},
                     {"K", u.trials},
                     {"tests", tests}});
  }
  j["units"] = units;
  Json summary = Json::array();
  for (const auto& s : r.summary)
    summary.push_back({{"subset", s.subset},
                       {"units", s.units},
                       {"avg_statistic", s.avg_statistic},
                       {"avg_critical_value", s.avg_critical_value},
                       {"rejected_at_5", s.rejected_5},
                       {"rejected_at_10", s.rejected_10},
                       {"rejected_at_20", s.rejected_20},
                       {"avg_cm_violations_pct", s.avg_violation_pct}});
  j["summary"] = summary;
  if (!r.risk.empty()) {
    Json risk = Json::array();
    for (const auto& x : r.risk)
      risk.push_back({{"r", x.r},
                      {"subset", x.subset},
                      {"units", x.units},
                      {"rejected", x.rejected},
                      {"avg_statistic", x.avg_statistic}});
    j["risk_sweep"] = risk;
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV tables

// shortest text that reads back to the same double
inline std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline void write_inventory_csv(std::ostream& os, const CycleInventory& inv,
                                const std::vector<std::string>& roles = {}) {
  os << "index,player,length,cycle\n";
  for (std::size_t l = 0; l < inv.size(); ++l) {
    const auto& c = inv[l];
    const std::string who = c.player < roles.size() ? roles[c.player] : std::to_string(c.player);
    os << l + 1 << ',' << who << ',' << c.length() << ',' << c.label() << '\n';
  }
}

inline void write_size_csv(std::ostream& os, const SizeTable& t) {
  os << "N,K,kappa_rule,alpha,rejections,reps\n";
  for (const auto& r : t.rows)
    os << r.n << ',' << r.k << ',' << r.kappa_rule << ',' << fmt(r.alpha) << ',' << r.rejections
       << ',' << r.replications << '\n';
}

inline void write_power_csv(std::ostream& os, const PowerResult& p) {
  os << "w,N,K,alpha,rejections,reps,rejection_rate\n";
  for (const auto& r : p.grid)
    os << fmt(r.weight) << ',' << r.n << ',' << r.k << ',' << fmt(r.alpha) << ',' << r.rejections
       << ',' << r.replications << ',' << fmt(r.rate()) << '\n';
}

inline Json kappa_names(const std::vector<KappaSpec>& ks) {
  Json j = Json::array();
  for (const auto& k : ks) j.push_back(k.name());
  return j;
}

inline Json to_json(const SizeConfig& c) {
  return {{"lambda", c.lambda},   {"N", c.n_grid},           {"kappa_rules", kappa_names(c.kappas)},
          {"alpha", c.alphas},    {"reps", c.replications},  {"R", c.draws},
          {"seed", c.seed}};
}

inline Json to_json(const PowerConfig& c) {
  return {{"lambda", c.lambda}, {"w", c.weights},         {"N", c.n_grid},
          {"alpha", c.alpha},   {"kappa_rule", c.kappa.name()}, {"reps", c.replications},
          {"R", c.draws},       {"seed", c.seed}};
}

inline Json to_json(const SizeTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"N", r.n}, {"K", r.k}, {"kappa_rule", r.kappa_rule}, {"alpha", r.alpha},
                    {"rejections", r.rejections}, {"reps", r.replications}});
  return {{"rows", rows}, {"nesting_violations", t.nesting_violations}};
}

inline Json to_json(const PowerResult& p) {
  Json rows = Json::array();
  for (const auto& r : p.grid)
    rows.push_back({{"w", r.weight}, {"N", r.n}, {"K", r.k}, {"alpha", r.alpha},
                    {"rejections", r.rejections}, {"reps", r.replications}, {"rejection_rate", r.rate()}});
  return rows;
}

/// Run manifest: version, command, configuration echo and results.
inline Json manifest(const std::string& command, Json config, Json results) {
  return {{"version", kVersion}, {"command", command}, {"config", std::move(config)},
          {"results", std::move(results)}};
}

}  // namespace qrecm
