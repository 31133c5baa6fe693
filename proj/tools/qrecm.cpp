// qrecm: command-line driver for the cyclic-monotonicity QRE test.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qrecm/analysis.hpp"
#include "qrecm/cycles.hpp"
#include "qrecm/game.hpp"
#include "qrecm/gms.hpp"
#include "qrecm/io.hpp"
#include "qrecm/montecarlo.hpp"
#include "qrecm/qre.hpp"
#include "qrecm/random.hpp"
#include "qrecm/report.hpp"

namespace {

using namespace qrecm;

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct GameSource {
  std::string games_path;
  std::string catalog_name;

  void attach(CLI::App* app) {
    auto* g = app->add_option("--games", games_path, "games.json file");
    auto* c = app->add_option("--catalog", catalog_name, "built-in catalog (joker)");
    g->excludes(c);
  }

  GameSeries load() const {
    if (!games_path.empty()) return load_games(games_path);
    return catalog(catalog_name.empty() ? "joker" : catalog_name);
  }
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

void emit_json(const std::string& path, const Json& j) { emit(path, j.dump(2) + "\n"); }

std::vector<KappaSpec> parse_kappas(const std::vector<std::string>& names) {
  std::vector<KappaSpec> out;
  for (const auto& n : names) out.push_back(KappaSpec::parse(n));
  return out;
}

JacobianMode parse_jacobian(const std::string& s) {
  if (s == "auto") return JacobianMode::automatic;
  if (s == "analytic") return JacobianMode::analytic;
  if (s == "fd") return JacobianMode::finite_difference;
  throw ValidationError("unknown jacobian mode '" + s + "'");
}

// Appends the entries of a JSON config object as long options, skipping keys
// already given on the command line.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  std::vector<std::string> rest;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) throw ValidationError("--config needs a file");
      path = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
    } else {
      rest.push_back(args[k]);
    }
  }
  if (path.empty()) return rest;

  auto in = open_input(path);
  Json cfg;
  try {
    cfg = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ValidationError(path + ": config must be a JSON object");
  auto given = [&](const std::string& flag) {
    return std::any_of(rest.begin(), rest.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  auto scalar = [](const Json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) rest.push_back(flag);
    } else if (value.is_array()) {
      rest.push_back(flag);
      for (const auto& v : value) rest.push_back(scalar(v));
    } else if (!value.is_null()) {
      rest.push_back(flag);
      rest.push_back(scalar(value));
    }
  }
  return rest;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  GameSource games;
  std::string dgp = "qre";
  double lambda = 2.0;
  double weight = 0.0;
  std::size_t subjects = 20;
  std::size_t rounds = 20;
  std::uint64_t seed = 0;
  std::string session = "S1";
  std::string out;
  std::string beliefs_out;
  std::size_t belief_every = 5;
};

void run_simulate(const SimulateArgs& a) {
  const GameSeries series = a.games.load();
  detail::opponent_of(series, 0);
  if (a.subjects < 2 || a.subjects % 2 != 0) throw RangeError("--subjects must be even and >= 2");
  if (a.rounds < 1) throw RangeError("--rounds must be >= 1");
  if (a.belief_every < 1) throw RangeError("--belief-every must be >= 1");
  DgpSpec spec;
  spec.kind = a.dgp == "qre" ? DgpKind::qre_logit
            : a.dgp == "violating" ? DgpKind::violating
            : a.dgp == "mixture" ? DgpKind::mixture
            : throw ValidationError("unknown dgp '" + a.dgp + "'");
  spec.lambda = a.lambda;
  spec.weight = a.weight;
  spec.seed = a.seed;
  const SeriesProfiles profiles = dgp_profiles(series, spec);

  std::ostringstream trials, beliefs;
  trials << "session_id,subject_id,game_id,round,role,own_choice,opp_choice\n";
  beliefs << "subject_id,game_id,round,role";
  for (std::size_t b = 0; b < series.num_strategies(1); ++b) beliefs << ",b" << b + 1;
  beliefs << '\n';
  beliefs.precision(17);

  Rng rng(a.seed);
  std::vector<std::size_t> order(a.subjects);
  for (std::size_t m = 0; m < series.size(); ++m) {
    const auto& g = series[m];
    for (std::size_t r = 1; r <= a.rounds; ++r) {
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t half = a.subjects / 2;
      for (std::size_t k = 0; k < half; ++k) {
        const std::size_t who[2] = {order[k], order[half + k]};
        std::size_t pick[2];
        for (std::size_t i = 0; i < 2; ++i) {
          const auto c = multinomial_draw(rng, 1, profiles[m][i]);
          pick[i] = static_cast<std::size_t>(std::find(c.begin(), c.end(), 1) - c.begin());
        }
        for (std::size_t i = 0; i < 2; ++i) {
          trials << a.session << ",s" << who[i] + 1 << ',' << g.id() << ',' << r << ','
                 << g.player(i) << ',' << g.strategies(i)[pick[i]] << ','
                 << g.strategies(1 - i)[pick[1 - i]] << '\n';
          if (r % a.belief_every == 0) {
            beliefs << 's' << who[i] + 1 << ',' << g.id() << ',' << r << ',' << g.player(i);
            const Vector& p = profiles[m][1 - i];
            for (Eigen::Index j = 0; j < p.size(); ++j) beliefs << ',' << p[j];
            beliefs << '\n';
          }
        }
      }
    }
  }
  emit(a.out, trials.str());
  if (!a.beliefs_out.empty()) emit(a.beliefs_out, beliefs.str());
}

// ---------------------------------------------------------------------------
// hhk / rank-order helpers

// Pooled frequencies from a trials file, or exact logit-QRE profiles.
SeriesProfiles observed_or_qre(const GameSeries& series, const std::string& trials_path,
                               std::optional<double> lambda, TrialCounts* trials, std::size_t k) {
  if (!trials_path.empty()) {
    const Dataset d = ingest(trials_path, std::nullopt, series);
    AnalysisConfig cfg;
    cfg.min_trials = 1;
    const Aggregation agg = aggregate(d, cfg);
    const auto& u = agg.units.front();
    if (u.games.size() != series.size())
      throw ValidationError("trials file does not cover every selected game in both roles");
    if (trials) *trials = u.trials;
    return u.profiles;
  }
  if (!lambda) throw ValidationError("give --trials or --lambda");
  if (trials) *trials = uniform_trials(series.num_players(), series.size(), k);
  return qre_profiles(series, *lambda);
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Cyclic-monotonicity test of quantal response equilibrium"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // test
  auto* test = app.add_subcommand("test", "run the GMS test on choice data");
  GameSource test_games;
  test_games.attach(test);
  std::string trials_path, beliefs_path, mode = "pooled", opponent = "self", kappa_name = "5_log_quarter";
  std::string jacobian = "auto", out_path, moments_out;
  std::vector<std::string> subsets;
  AnalysisConfig acfg;
  test->add_option("--trials", trials_path, "trials.csv")->required();
  test->add_option("--beliefs", beliefs_path, "beliefs.csv");
  test->add_option("--mode", mode, "pooled | per_subject")->capture_default_str();
  test->add_option("--opponent", opponent, "self | others | beliefs")->capture_default_str();
  test->add_option("--subset", subsets, "all | row | column (default: all three)");
  test->add_option("--alpha", acfg.gms.alpha, "significance level")->capture_default_str();
  test->add_option("--reps", acfg.gms.reps, "simulation draws R")->capture_default_str();
  test->add_option("--kappa", kappa_name, "kappa rule or custom:<value>")->capture_default_str();
  test->add_option("--seed", acfg.gms.seed, "master seed")->capture_default_str();
  test->add_option("--risk-r", acfg.risk_r, "CRRA coefficient(s); several values run a sweep");
  test->add_option("--min-trials", acfg.min_trials, "minimum trials per game and role")
      ->capture_default_str();
  test->add_option("--jacobian", jacobian, "auto | analytic | fd")->capture_default_str();
  test->add_option("--moments-out", moments_out, "write the pooled moment system as JSON");
  test->add_option("--out", out_path, "report path (default stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "write a synthetic trials.csv from a DGP");
  SimulateArgs sa;
  sa.games.attach(sim);
  sim->add_option("--dgp", sa.dgp, "qre | violating | mixture")->capture_default_str();
  sim->add_option("--lambda", sa.lambda, "logit precision")->capture_default_str();
  sim->add_option("--weight", sa.weight, "mixture weight on the violating profiles");
  sim->add_option("--subjects", sa.subjects, "number of subjects (even)")->capture_default_str();
  sim->add_option("--rounds", sa.rounds, "rounds per game")->capture_default_str();
  sim->add_option("--session", sa.session, "session id")->capture_default_str();
  sim->add_option("--seed", sa.seed, "seed")->capture_default_str();
  sim->add_option("--beliefs-out", sa.beliefs_out, "also write beliefs.csv");
  sim->add_option("--belief-every", sa.belief_every, "belief elicitation period in rounds")
      ->capture_default_str();
  sim->add_option("--out", sa.out, "trials path (default stdout)");

  // size
  auto* size = app.add_subcommand("size", "Monte Carlo size study under logit-QRE data");
  GameSource size_games;
  size_games.attach(size);
  SizeConfig sc;
  std::vector<std::string> size_kappas{"5_log_half", "5_log_quarter", "5_log_eighth", "5_loglog"};
  std::string size_csv, size_out;
  size->add_option("--lambda", sc.lambda, "logit precision")->capture_default_str();
  size->add_option("--n", sc.n_grid, "N grid (K = N / M)");
  size->add_option("--kappa", size_kappas, "kappa rules");
  size->add_option("--alpha", sc.alphas, "significance levels");
  size->add_option("--replications", sc.replications, "Monte Carlo replications")->capture_default_str();
  size->add_option("--reps", sc.draws, "simulation draws R per test")->capture_default_str();
  size->add_option("--seed", sc.seed, "master seed")->capture_default_str();
  size->add_option("--csv", size_csv, "write the table as CSV");
  size->add_option("--out", size_out, "JSON manifest path (default stdout)");

  // power
  auto* power = app.add_subcommand("power", "rejection rates along the QRE-to-violation mixture");
  GameSource power_games;
  power_games.attach(power);
  PowerConfig pc;
  std::string power_kappa = "5_log_quarter", power_csv, power_out;
  power->add_option("--lambda", pc.lambda, "logit precision")->capture_default_str();
  power->add_option("--w", pc.weights, "mixture weights");
  power->add_option("--n", pc.n_grid, "N grid (K = N / M)");
  power->add_option("--alpha", pc.alpha, "significance level")->capture_default_str();
  power->add_option("--kappa", power_kappa, "kappa rule")->capture_default_str();
  power->add_option("--replications", pc.replications, "Monte Carlo replications")->capture_default_str();
  power->add_option("--reps", pc.draws, "simulation draws R per test")->capture_default_str();
  power->add_option("--seed", pc.seed, "master seed")->capture_default_str();
  power->add_option("--csv", power_csv, "write the curve as CSV");
  power->add_option("--out", power_out, "JSON manifest path (default stdout)");

  // solve
  auto* solve = app.add_subcommand("solve", "logit QRE of one game");
  GameSource solve_games;
  solve_games.attach(solve);
  std::string solve_game, solve_out;
  LogitParams lp;
  solve->add_option("--game", solve_game, "game id")->required();
  solve->add_option("--lambda", lp.lambda, "logit precision")->required();
  solve->add_option("--tol", lp.tol, "max-norm tolerance")->capture_default_str();
  solve->add_option("--max-iter", lp.max_iter, "iteration budget")->capture_default_str();
  solve->add_option("--damping", lp.damping, "fixed-point damping")->capture_default_str();
  solve->add_option("--out", solve_out, "output path (default stdout)");

  // cycles
  auto* cycles = app.add_subcommand("cycles", "list the cycle inventory as CSV");
  std::size_t cyc_m = 0, cyc_n = 2;
  std::string cyc_out;
  cycles->add_option("--m", cyc_m, "number of games")->required();
  cycles->add_option("--players", cyc_n, "number of players")->capture_default_str();
  cycles->add_option("--out", cyc_out, "output path (default stdout)");

  // hhk
  auto* hhk = app.add_subcommand("hhk", "cumulative rank test between two games");
  GameSource hhk_games;
  hhk_games.attach(hhk);
  std::vector<std::string> pair;
  std::string hhk_trials, hhk_out, hhk_kappa = "5_log_quarter";
  std::optional<double> hhk_lambda;
  std::size_t hhk_k = 250;
  GmsConfig hc;
  hhk->add_option("--pair", pair, "two game ids")->required()->expected(2);
  hhk->add_option("--trials", hhk_trials, "trials.csv (pooled frequencies)");
  hhk->add_option("--lambda", hhk_lambda, "use exact logit-QRE profiles instead of data");
  hhk->add_option("--k", hhk_k, "K assumed with --lambda")->capture_default_str();
  hhk->add_option("--alpha", hc.alpha, "significance level")->capture_default_str();
  hhk->add_option("--reps", hc.reps, "simulation draws R")->capture_default_str();
  hhk->add_option("--kappa", hhk_kappa, "kappa rule")->capture_default_str();
  hhk->add_option("--seed", hc.seed, "seed")->capture_default_str();
  hhk->add_option("--out", hhk_out, "output path (default stdout)");

  // rank-order
  auto* rank = app.add_subcommand("rank-order", "within-game rank-order products");
  GameSource rank_games;
  rank_games.attach(rank);
  std::string rank_trials, rank_out;
  std::vector<std::string> rank_ids;
  std::optional<double> rank_lambda;
  rank->add_option("--game", rank_ids, "game id(s); default every game");
  rank->add_option("--trials", rank_trials, "trials.csv (pooled frequencies)");
  rank->add_option("--lambda", rank_lambda, "use exact logit-QRE profiles instead of data");
  rank->add_option("--out", rank_out, "output path (default stdout)");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "show or rebuild the violating profiles");
  GameSource fix_games;
  fix_games.attach(fixture);
  bool fix_search = false;
  ViolationSearchConfig vc;
  std::string fix_out;
  fixture->add_flag("--search", fix_search, "run the search instead of loading the frozen fixture");
  fixture->add_option("--starts", vc.starts, "search restarts")->capture_default_str();
  fixture->add_option("--iterations", vc.iterations, "iterations per start")->capture_default_str();
  fixture->add_option("--floor", vc.floor, "probability floor")->capture_default_str();
  fixture->add_option("--seed", vc.seed, "search seed")->capture_default_str();
  fixture->add_option("--out", fix_out, "output path (default stdout)");

  std::vector<std::string> args(argv + 1, argv + argc);
  args = expand_config(std::move(args));
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  if (*test) {
    acfg.mode = parse_mode(mode);
    acfg.opponent = parse_opponent(opponent);
    acfg.gms.kappa = KappaSpec::parse(kappa_name);
    acfg.jacobian = parse_jacobian(jacobian);
    for (const auto& s : subsets) acfg.subsets.push_back(MomentSubset::parse(s));
    acfg.validate();
    const Dataset d = ingest(trials_path,
                             beliefs_path.empty() ? std::nullopt : std::optional<std::string>(beliefs_path),
                             test_games.load());
    const AnalysisReport rep = analyze(d, acfg);
    emit_json(out_path, to_json(rep, d.series));
    if (!moments_out.empty()) {
      AnalysisConfig pooled = acfg;
      pooled.mode = AnalysisMode::pooled;
      const auto agg = aggregate(d, pooled);
      emit_json(moments_out, to_json(unit_system(d.series, agg.units.front(), acfg.risk_r.front(),
                                                 acfg.jacobian)));
    }
    return 0;
  }
  if (*sim) {
    run_simulate(sa);
    return 0;
  }
  if (*size) {
    sc.kappas = parse_kappas(size_kappas);
    const GameSeries series = size_games.load();
    const SizeTable t = size_experiment(series, sc);
    if (!size_csv.empty()) {
      std::ostringstream os;
      write_size_csv(os, t);
      emit(size_csv, os.str());
    }
    emit_json(size_out, manifest("size", to_json(sc), to_json(t)));
    return 0;
  }
  if (*power) {
    pc.kappa = KappaSpec::parse(power_kappa);
    const GameSeries series = power_games.load();
    const PowerResult r = power_curve(series, pc);
    if (!power_csv.empty()) {
      std::ostringstream os;
      write_power_csv(os, r);
      emit(power_csv, os.str());
    }
    emit_json(power_out, manifest("power", to_json(pc), to_json(r)));
    return 0;
  }
  if (*solve) {
    const GameSeries series = solve_games.load();
    const auto& g = series[series.index_of(solve_game)];
    const QreSolution s = solve_logit_qre(g, lp);
    emit_json(solve_out, to_json(s, g, lp.lambda));
    if (!s.converged) {
      std::cerr << "error: logit QRE did not converge (residual " << s.residual << ")\n";
      return kExitNumeric;
    }
    return 0;
  }
  if (*cycles) {
    const CycleInventory inv = enumerate_cycles(cyc_m, cyc_n);
    std::vector<std::string> roles;
    for (std::size_t i = 0; i < cyc_n; ++i) roles.push_back(std::to_string(i + 1));
    std::ostringstream os;
    write_inventory_csv(os, inv, roles);
    emit(cyc_out, os.str());
    return 0;
  }
  if (*hhk) {
    const GameSeries all = hhk_games.load();
    const std::vector<std::size_t> idx{all.index_of(pair[0]), all.index_of(pair[1])};
    if (idx[0] == idx[1]) throw ValidationError("--pair needs two different games");
    const GameSeries series = all.subset(idx);
    TrialCounts trials;
    const SeriesProfiles profiles = observed_or_qre(series, hhk_trials, hhk_lambda, &trials, hhk_k);
    hc.kappa = KappaSpec::parse(hhk_kappa);
    Json ranks = Json::array();
    for (std::size_t i = 0; i < series.num_players(); ++i) {
      const HhkRank r = hhk_cumulative_rank(expected_utility(series[0], i, profiles[0]),
                                            expected_utility(series[1], i, profiles[1]),
                                            profiles[0][i], profiles[1][i]);
      Json order = Json::array();
      for (auto j : r.order) order.push_back(series.front().strategies(i)[j]);
      ranks.push_back({{"player", series.front().player(i)},
                       {"order", order},
                       {"partial_sums", r.partial_sums},
                       {"pass", r.pass}});
    }
    Json j;
    j["version"] = kVersion;
    j["games"] = pair;
    j["source"] = hhk_trials.empty() ? "logit_qre" : "trials";
    if (hhk_lambda) j["lambda"] = *hhk_lambda;
    j["cumulative_rank"] = ranks;
    j["test"] = to_json(run_hhk_test(series, profiles, trials, hc));
    emit_json(hhk_out, j);
    return 0;
  }
  if (*rank) {
    const GameSeries series = rank_games.load();
    const SeriesProfiles profiles = observed_or_qre(series, rank_trials, rank_lambda, nullptr, 1);
    Json games = Json::array();
    for (std::size_t m = 0; m < series.size(); ++m) {
      const auto& g = series[m];
      if (!rank_ids.empty() && std::find(rank_ids.begin(), rank_ids.end(), g.id()) == rank_ids.end())
        continue;
      Json entries = Json::array();
      std::size_t violations = 0;
      for (const auto& e : rank_order_check(g, profiles[m])) {
        entries.push_back({{"player", g.player(e.player)},
                           {"pair", {g.strategies(e.player)[e.first], g.strategies(e.player)[e.second]}},
                           {"value", e.value}});
        if (e.value < 0.0) ++violations;
      }
      games.push_back({{"game_id", g.id()},
                       {"profile", to_json(profiles[m], g)},
                       {"entries", entries},
                       {"violations", violations}});
    }
    for (const auto& id : rank_ids) series.index_of(id);
    emit_json(rank_out, Json{{"version", kVersion}, {"games", games}});
    return 0;
  }
  if (*fixture) {
    const GameSeries series = fix_games.load();
    const ViolatingProfiles v = fix_search ? search_violating_profiles(series, vc)
                                           : ViolatingProfiles{violating_profiles(series), 0.0};
    const Vector nu = nu_vector(series, v.profiles, enumerate_cycles(series.size(), series.num_players()));
    Json profiles = Json::array();
    for (std::size_t m = 0; m < series.size(); ++m)
      profiles.push_back({{"game_id", series[m].id()}, {"profile", to_json(v.profiles[m], series[m])}});
    emit_json(fix_out, Json{{"version", kVersion},
                            {"source", fix_search ? "search" : "stored"},
                            {"margin", nu.minCoeff()},
                            {"nu", to_json(nu)},
                            {"profiles", profiles}});
    return nu.minCoeff() > 0.0 ? 0 : kExitNumeric;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const qrecm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
