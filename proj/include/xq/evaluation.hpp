#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xq/nn.hpp"
#include "xq/othello.hpp"
#include "xq/policies.hpp"

namespace xq {

// (wins + 0.5 draws) / games. Throws ConfigError for games <= 0 or counts
// that do not fit in `games`.
double score(int wins, int draws, int games);

// Something that picks moves. begin_game() is called once per game with a
// per-game seed so stochastic players stay reproducible.
class Player {
 public:
  virtual ~Player() = default;
  virtual void begin_game(std::uint64_t /*seed*/) {}
  virtual Move choose(const Board& b) = 0;
};

// Greedy (epsilon = 0) on raw network outputs with illegal actions masked,
// inference mode. Holds its own copy of the network.
class GreedyQPlayer final : public Player {
 public:
  explicit GreedyQPlayer(const nn::Network<float>& q);
  Move choose(const Board& b) override;

 private:
  nn::Network<float> net_;
};

class ScriptedPlayer final : public Player {
 public:
  explicit ScriptedPlayer(PolicyKind kind);
  void begin_game(std::uint64_t seed) override { policy_.reseed(seed); }
  Move choose(const Board& b) override { return policy_.choose(b); }

 private:
  ScriptedPolicy policy_;
};

GameOutcome play_game(Player& black, Player& white, Board start);

struct GameRecord {
  int opening = 0;
  Color agent_color = Color::Black;
  int result = 0;  // +1 win, 0 draw, -1 loss for the agent
  int piece_diff = 0;

  bool operator==(const GameRecord&) const = default;
};

struct EvalReport {
  int wins = 0;
  int draws = 0;
  int losses = 0;
  int games = 0;
  double score = 0.0;
  std::vector<double> round_scores;
  std::vector<GameRecord> per_opening;
  std::optional<double> initial_q;

  bool operator==(const EvalReport&) const = default;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  // `run,iter,opponent,wins,draws,losses,score`
  static std::string csv_header();
  std::string csv_row(const std::string& run, std::int64_t iter, const std::string& opponent) const;
};

// Every round plays all openings twice (agent as Black, then as White).
// The opponent and agent are reseeded per game from `seed` and the game index.
EvalReport evaluate(Player& agent, Player& opponent, const std::vector<Board>& openings, int rounds,
                    std::uint64_t seed);
EvalReport evaluate(Player& agent, Player& opponent, int rounds, std::uint64_t seed);
EvalReport evaluate(const nn::Network<float>& q, PolicyKind opponent, int rounds, std::uint64_t seed);

struct TournamentResult {
  std::size_t a = 0;
  std::size_t b = 0;
  int a_wins = 0;
  int b_wins = 0;
  int draws = 0;
  int games = 0;
  int rounds = 0;

  bool operator==(const TournamentResult&) const = default;
};

// Every unordered pair plays rounds x (openings x 2) games with colors
// swapped per opening. Throws ConfigError for fewer than two players.
std::vector<TournamentResult> tournament(const std::vector<Player*>& players, int rounds, std::uint64_t seed);
std::vector<TournamentResult> tournament(const std::vector<nn::Network<float>>& players, int rounds,
                                         std::uint64_t seed);

// Row-beats-column matrix: entry "wins (fraction)"; the diagonal is blank.
std::string tournament_matrix_csv(const std::vector<std::string>& names, const std::vector<TournamentResult>& results);
std::string tournament_table(const std::vector<std::string>& names, const std::vector<TournamentResult>& results);

}  // namespace xq
