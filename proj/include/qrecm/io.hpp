#pragma once

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "qrecm/error.hpp"
#include "qrecm/game.hpp"

namespace qrecm {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// One CSV record; double quotes may wrap a field and "" escapes a quote.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted field");
  out.push_back(trim(cur));
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row
};

inline CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split_csv(line);
    } catch (const ValidationError& e) {
      throw ValidationError(source + " line " + std::to_string(n) + ": " + e.what());
    }
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError(source + " line " + std::to_string(n) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(n);
  }
  if (t.rows.empty()) throw ValidationError(source + ": no records");
  return t;
}

inline std::size_t column(const CsvTable& t, std::string_view name, const std::string& source) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end())
    throw ValidationError(source + ": missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

inline long parse_integer(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw ValidationError(where + ": expected an integer, got '" + s + "'");
  return v;
}

inline double parse_real(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(v))
    throw ValidationError(where + ": expected a finite number, got '" + s + "'");
  return v;
}

inline std::size_t opponent_of(const GameSeries& series, std::size_t role) {
  if (series.num_players() != 2)
    throw UnsupportedShape("choice data ingestion supports two-player games only");
  return 1 - role;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Records

struct TrialRecord {
  std::string session_id;
  std::string subject_id;
  std::size_t game = 0;  // index into the series
  long round = 0;
  std::size_t role = 0;
  std::size_t own_choice = 0;
  std::optional<std::size_t> opp_choice;
  std::size_t line = 0;
};

struct BeliefRecord {
  std::string subject_id;
  std::size_t game = 0;
  long round = 0;
  std::size_t role = 0;  // the subject's role; the belief is about the opponent
  Vector belief;
  std::size_t line = 0;
};

inline constexpr double kBeliefTolerance = 1e-6;

inline std::vector<TrialRecord> parse_trials(std::istream& in, const GameSeries& series,
                                             const std::string& source = "trials.csv") {
  const auto t = detail::read_csv(in, source);
  const std::size_t c_session = detail::column(t, "session_id", source);
  const std::size_t c_subject = detail::column(t, "subject_id", source);
  const std::size_t c_game = detail::column(t, "game_id", source);
  const std::size_t c_round = detail::column(t, "round", source);
  const std::size_t c_role = detail::column(t, "role", source);
  const std::size_t c_own = detail::column(t, "own_choice", source);
  const auto has_opp = std::find(t.header.begin(), t.header.end(), "opp_choice") != t.header.end();
  const std::size_t c_opp = has_opp ? detail::column(t, "opp_choice", source) : 0;

  std::vector<TrialRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + " line " + std::to_string(t.lines[r]);
    try {
      TrialRecord rec;
      rec.line = t.lines[r];
      rec.session_id = row[c_session];
      rec.subject_id = row[c_subject];
      if (rec.subject_id.empty()) throw ValidationError("empty subject_id");
      rec.game = series.index_of(row[c_game]);
      rec.round = detail::parse_integer(row[c_round], "round");
      rec.role = series[rec.game].player_index(row[c_role]);
      rec.own_choice = series[rec.game].strategy_index(rec.role, row[c_own]);
      if (has_opp && !row[c_opp].empty())
        rec.opp_choice =
            series[rec.game].strategy_index(detail::opponent_of(series, rec.role), row[c_opp]);
      out.push_back(std::move(rec));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<BeliefRecord> parse_beliefs(std::istream& in, const GameSeries& series,
                                               const std::string& source = "beliefs.csv") {
  const auto t = detail::read_csv(in, source);
  const std::size_t c_subject = detail::column(t, "subject_id", source);
  const std::size_t c_game = detail::column(t, "game_id", source);
  const std::size_t c_round = detail::column(t, "round", source);
  const std::size_t c_role = detail::column(t, "role", source);

  std::vector<BeliefRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + " line " + std::to_string(t.lines[r]);
    try {
      BeliefRecord rec;
      rec.line = t.lines[r];
      rec.subject_id = row[c_subject];
      rec.game = series.index_of(row[c_game]);
      rec.round = detail::parse_integer(row[c_round], "round");
      rec.role = series[rec.game].player_index(row[c_role]);
      const std::size_t opp = detail::opponent_of(series, rec.role);
      const std::size_t j = series.num_strategies(opp);
      rec.belief.resize(static_cast<Eigen::Index>(j));
      for (std::size_t b = 0; b < j; ++b) {
        const std::string name = "b" + std::to_string(b + 1);
        const double x = detail::parse_real(row[detail::column(t, name, source)], name);
        if (x < 0.0) throw ValidationError(name + " is negative");
        rec.belief[static_cast<Eigen::Index>(b)] = x;
      }
      const double sum = rec.belief.sum();
      if (std::abs(sum - 1.0) > kBeliefTolerance)
        throw ValidationError("belief sums to " + std::to_string(sum) + ", not 1");
      rec.belief /= sum;
      out.push_back(std::move(rec));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

struct Tally {
  std::string subject_id;
  std::size_t game = 0;
  std::size_t role = 0;
  std::size_t trials = 0;
  std::size_t beliefs = 0;
};

struct Dataset {
  GameSeries series;
  std::vector<TrialRecord> trials;
  std::vector<BeliefRecord> beliefs;

  // Per (subject, game, role) counts, sorted by subject then game then role.
  std::vector<Tally> tallies() const {
    std::map<std::tuple<std::string, std::size_t, std::size_t>, Tally> m;
    for (const auto& t : trials) {
      auto& x = m[{t.subject_id, t.game, t.role}];
      x.subject_id = t.subject_id;
      x.game = t.game;
      x.role = t.role;
      ++x.trials;
    }
    for (const auto& b : beliefs) {
      auto& x = m[{b.subject_id, b.game, b.role}];
      x.subject_id = b.subject_id;
      x.game = b.game;
      x.role = b.role;
      ++x.beliefs;
    }
    std::vector<Tally> out;
    for (auto& [k, v] : m) out.push_back(v);
    return out;
  }

  // Trials per game, summed over subjects and roles.
  std::vector<std::size_t> trials_per_game() const {
    std::vector<std::size_t> n(series.size(), 0);
    for (const auto& t : trials) ++n[t.game];
    return n;
  }

  std::vector<std::string> subjects() const {
    std::vector<std::string> s;
    for (const auto& t : trials) s.push_back(t.subject_id);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

inline Dataset ingest(const std::string& trials_path, const std::optional<std::string>& beliefs_path,
                      GameSeries series) {
  detail::opponent_of(series, 0);
  Dataset d{std::move(series), {}, {}};
  {
    auto in = open_input(trials_path);
    d.trials = parse_trials(in, d.series, trials_path);
  }
  if (beliefs_path) {
    auto in = open_input(*beliefs_path);
    d.beliefs = parse_beliefs(in, d.series, *beliefs_path);
  }
  return d;
}

// ---------------------------------------------------------------------------
// games.json

inline NormalFormGame game_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("game entry is not an object");
  for (const char* key : {"game_id", "players", "strategies", "payoffs"})
    if (!j.contains(key)) throw ValidationError(std::string("game entry lacks '") + key + "'");
  const std::string id = j.at("game_id").is_string() ? j.at("game_id").get<std::string>()
                                                      : j.at("game_id").dump();
  try {
    const auto players = j.at("players").get<std::vector<std::string>>();
    std::vector<std::vector<std::string>> strategies;
    for (const auto& p : players) {
      if (!j.at("strategies").contains(p))
        throw ValidationError("no strategy list for player '" + p + "'");
      strategies.push_back(j.at("strategies").at(p).get<std::vector<std::string>>());
    }
    // a scaffold game gives decode/encode before the payoffs are known
    std::size_t profiles = 1;
    for (const auto& s : strategies) profiles *= std::max<std::size_t>(s.size(), 1);
    const NormalFormGame shape(id, players, strategies,
                               std::vector<double>(profiles * players.size(), 0.0));
    std::vector<double> flat(profiles * players.size(), 0.0);
    std::vector<bool> seen(profiles, false);
    for (const auto& entry : j.at("payoffs")) {
      std::vector<std::size_t> pure(players.size());
      for (std::size_t i = 0; i < players.size(); ++i)
        pure[i] = shape.strategy_index(i, entry.at("profile").at(players[i]).get<std::string>());
      const std::size_t f = shape.encode(pure);
      if (seen[f]) throw ValidationError("duplicate payoff entry");
      seen[f] = true;
      for (std::size_t i = 0; i < players.size(); ++i) {
        const auto& v = entry.at("payoff").at(players[i]);
        if (!v.is_number()) throw ValidationError("payoff for '" + players[i] + "' is not a number");
        flat[f * players.size() + i] = v.get<double>();
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
      throw ValidationError("payoff map is not total");
    return NormalFormGame(id, players, strategies, std::move(flat));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("game '" + id + "': " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("game '" + id + "': " + e.what());
  }
}

inline Json game_to_json(const NormalFormGame& g) {
  Json j;
  j["game_id"] = g.id();
  j["players"] = g.players();
  Json strategies = Json::object();
  for (std::size_t i = 0; i < g.num_players(); ++i) strategies[g.player(i)] = g.strategies(i);
  j["strategies"] = strategies;
  Json payoffs = Json::array();
  std::vector<std::size_t> pure(g.num_players());
  for (std::size_t f = 0; f < g.num_profiles(); ++f) {
    g.decode(f, pure);
    Json profile = Json::object(), payoff = Json::object();
    for (std::size_t i = 0; i < g.num_players(); ++i) {
      profile[g.player(i)] = g.strategies(i)[pure[i]];
      payoff[g.player(i)] = g.payoff(f, i);
    }
    payoffs.push_back({{"profile", profile}, {"payoff", payoff}});
  }
  j["payoffs"] = payoffs;
  return j;
}

inline GameSeries series_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("games file must hold a JSON array");
  std::vector<NormalFormGame> games;
  std::vector<std::string> ids;
  for (const auto& g : j) {
    games.push_back(game_from_json(g));
    if (std::find(ids.begin(), ids.end(), games.back().id()) != ids.end())
      throw ValidationError("duplicate game_id '" + games.back().id() + "'");
    ids.push_back(games.back().id());
  }
  return GameSeries(std::move(games));
}

inline Json series_to_json(const GameSeries& s) {
  Json j = Json::array();
  for (const auto& g : s) j.push_back(game_to_json(g));
  return j;
}

inline GameSeries load_games(const std::string& path) {
  auto in = open_input(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return series_from_json(j);
}

// Built-in catalogs by name.
inline GameSeries catalog(std::string_view name) {
  if (name == "joker") return joker_catalog();
  throw ValidationError("unknown catalog '" + std::string(name) + "'");
}

}  // namespace qrecm
