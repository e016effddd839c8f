#include "xq/evaluation.hpp"

#include <json.hpp>

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "xq/qlearning.hpp"

namespace xq {

double score(int wins, int draws, int games) {
  if (games <= 0) throw ConfigError("score needs at least one game");
  if (wins < 0 || draws < 0 || wins + draws > games) throw ConfigError("wins + draws exceed games");
  return (wins + 0.5 * draws) / games;
}

GreedyQPlayer::GreedyQPlayer(const nn::Network<float>& q) : net_(q) {
  if (net_.output_shape().size() != kNumActions) throw ConfigError("Q network must have 65 outputs");
}

Move GreedyQPlayer::choose(const Board& b) {
  const std::vector<Move> moves = legal_moves(b);
  if (moves.empty()) throw NoLegalMove("no legal move on a finished game");
  if (moves.size() == 1) return moves.front();
  const auto q = q_values(net_, b);
  return Move{masked_argmax(q, legal_action_mask(b))};
}

ScriptedPlayer::ScriptedPlayer(PolicyKind kind) : policy_(kind) {}

GameOutcome play_game(Player& black, Player& white, Board b) {
  while (!is_terminal(b)) {
    Player& mover = b.to_move() == Color::Black ? black : white;
    b = apply_move(b, mover.choose(b));
  }
  return game_outcome(b);
}

namespace {

const std::vector<Board>& standard_openings() {
  static const std::vector<Board> openings = enumerate_openings();
  return openings;
}

}  // namespace

EvalReport evaluate(Player& agent, Player& opponent, const std::vector<Board>& openings, int rounds,
                    std::uint64_t seed) {
  if (rounds <= 0) throw ConfigError("evaluation needs at least one round");
  EvalReport report;
  std::uint64_t game_index = 0;
  for (int round = 0; round < rounds; ++round) {
    int wins = 0, draws = 0, games = 0;
    for (std::size_t i = 0; i < openings.size(); ++i) {
      for (Color agent_color : {Color::Black, Color::White}) {
        agent.begin_game(derive_seed(seed, 2 * game_index));
        opponent.begin_game(derive_seed(seed, 2 * game_index + 1));
        ++game_index;
        const GameOutcome out = agent_color == Color::Black ? play_game(agent, opponent, openings[i])
                                                            : play_game(opponent, agent, openings[i]);
        const int result = out.result_for(agent_color);
        wins += result > 0;
        draws += result == 0;
        ++games;
        report.per_opening.push_back({static_cast<int>(i), agent_color, result, out.piece_diff});
      }
    }
    report.wins += wins;
    report.draws += draws;
    report.losses += games - wins - draws;
    report.games += games;
    report.round_scores.push_back(score(wins, draws, games));
  }
  report.score = score(report.wins, report.draws, report.games);
  return report;
}

EvalReport evaluate(Player& agent, Player& opponent, int rounds, std::uint64_t seed) {
  return evaluate(agent, opponent, standard_openings(), rounds, seed);
}

EvalReport evaluate(const nn::Network<float>& q, PolicyKind opponent, int rounds, std::uint64_t seed) {
  GreedyQPlayer agent(q);
  ScriptedPlayer opp(opponent);
  return evaluate(agent, opp, rounds, seed);
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["wins"] = wins;
  j["draws"] = draws;
  j["losses"] = losses;
  j["games"] = games;
  j["score"] = score;
  j["round_scores"] = round_scores;
  if (initial_q) j["initial_q"] = *initial_q;
  auto& per = j["per_opening"] = nlohmann::ordered_json::array();
  for (const GameRecord& g : per_opening) {
    per.push_back({{"opening", g.opening},
                   {"color", std::string(1, color_char(g.agent_color))},
                   {"outcome", g.result},
                   {"piece_diff", g.piece_diff}});
  }
  return j.dump(1) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.wins = j.at("wins").get<int>();
    r.draws = j.at("draws").get<int>();
    r.losses = j.at("losses").get<int>();
    r.games = j.at("games").get<int>();
    r.score = j.at("score").get<double>();
    r.round_scores = j.at("round_scores").get<std::vector<double>>();
    if (j.contains("initial_q")) r.initial_q = j.at("initial_q").get<double>();
    for (const auto& g : j.at("per_opening")) {
      GameRecord rec;
      rec.opening = g.at("opening").get<int>();
      rec.agent_color = g.at("color").get<std::string>() == "B" ? Color::Black : Color::White;
      rec.result = g.at("outcome").get<int>();
      rec.piece_diff = g.at("piece_diff").get<int>();
      r.per_opening.push_back(rec);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad evaluation report: ") + e.what());
  }
}

std::string EvalReport::csv_header() { return "run,iter,opponent,wins,draws,losses,score\n"; }

std::string EvalReport::csv_row(const std::string& run, std::int64_t iter, const std::string& opponent) const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", score);
  std::ostringstream os;
  os << run << ',' << iter << ',' << opponent << ',' << wins << ',' << draws << ',' << losses << ',' << buf << '\n';
  return os.str();
}

std::vector<TournamentResult> tournament(const std::vector<Player*>& players, int rounds, std::uint64_t seed) {
  if (players.size() < 2) throw ConfigError("need at least two players");
  if (rounds <= 0) throw ConfigError("tournament needs at least one round");
  const std::vector<Board>& openings = standard_openings();
  std::vector<TournamentResult> results;
  std::uint64_t game_index = 0;
  for (std::size_t a = 0; a < players.size(); ++a) {
    for (std::size_t b = a + 1; b < players.size(); ++b) {
      TournamentResult r{a, b, 0, 0, 0, 0, rounds};
      for (int round = 0; round < rounds; ++round) {
        for (const Board& start : openings) {
          for (Color a_color : {Color::Black, Color::White}) {
            players[a]->begin_game(derive_seed(seed, 2 * game_index));
            players[b]->begin_game(derive_seed(seed, 2 * game_index + 1));
            ++game_index;
            const GameOutcome out = a_color == Color::Black ? play_game(*players[a], *players[b], start)
                                                            : play_game(*players[b], *players[a], start);
            const int result = out.result_for(a_color);
            r.a_wins += result > 0;
            r.b_wins += result < 0;
            r.draws += result == 0;
            ++r.games;
          }
        }
      }
      results.push_back(r);
    }
  }
  return results;
}

std::vector<TournamentResult> tournament(const std::vector<nn::Network<float>>& players, int rounds,
                                         std::uint64_t seed) {
  std::vector<std::unique_ptr<GreedyQPlayer>> owned;
  std::vector<Player*> ptrs;
  for (const auto& net : players) {
    owned.push_back(std::make_unique<GreedyQPlayer>(net));
    ptrs.push_back(owned.back().get());
  }
  return tournament(ptrs, rounds, seed);
}

namespace {

// wins[row][col] = games row won against col, games[row][col] = games played.
void pairwise(std::size_t n, const std::vector<TournamentResult>& results, std::vector<std::vector<int>>& wins,
              std::vector<std::vector<int>>& games) {
  wins.assign(n, std::vector<int>(n, 0));
  games.assign(n, std::vector<int>(n, 0));
  for (const TournamentResult& r : results) {
    if (r.a >= n || r.b >= n) throw ConfigError("tournament result refers to an unknown player");
    wins[r.a][r.b] += r.a_wins;
    wins[r.b][r.a] += r.b_wins;
    games[r.a][r.b] += r.games;
    games[r.b][r.a] += r.games;
  }
}

std::string cell(int wins, int games) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%d (%.2f)", wins, games > 0 ? static_cast<double>(wins) / games : 0.0);
  return buf;
}

}  // namespace

std::string tournament_matrix_csv(const std::vector<std::string>& names, const std::vector<TournamentResult>& results) {
  std::vector<std::vector<int>> wins, games;
  pairwise(names.size(), results, wins, games);
  std::ostringstream os;
  os << "player";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t r = 0; r < names.size(); ++r) {
    os << names[r];
    for (std::size_t c = 0; c < names.size(); ++c) {
      os << ',';
      if (r != c && games[r][c] > 0) os << cell(wins[r][c], games[r][c]);
    }
    os << '\n';
  }
  return os.str();
}

std::string tournament_table(const std::vector<std::string>& names, const std::vector<TournamentResult>& results) {
  std::vector<std::vector<int>> wins, games;
  pairwise(names.size(), results, wins, games);
  std::size_t width = 6;
  for (const auto& n : names) width = std::max(width, n.size());
  width += 2;
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "";
  for (const auto& n : names) os << std::setw(static_cast<int>(width)) << n;
  os << '\n';
  for (std::size_t r = 0; r < names.size(); ++r) {
    os << std::setw(static_cast<int>(width)) << names[r];
    for (std::size_t c = 0; c < names.size(); ++c) {
      os << std::setw(static_cast<int>(width)) << (r == c || games[r][c] == 0 ? "-" : cell(wins[r][c], games[r][c]));
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace xq
