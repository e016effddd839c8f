#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <map>

#include "xq/errors.hpp"
#include "xq/policies.hpp"

using namespace xq;

namespace {

std::vector<Board> midgame_boards(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Board> out;
  while (static_cast<int>(out.size()) < n) {
    Board b = Board::initial();
    const int plies = static_cast<int>(uniform_index(rng, 50));
    for (int i = 0; i < plies && !is_terminal(b); ++i) {
      const auto moves = legal_moves(b);
      b = apply_move(b, moves[uniform_index(rng, moves.size())]);
    }
    if (!is_terminal(b)) out.push_back(b);
  }
  return out;
}

const Board kPassBoard = Board::from_text(
    "BBBBBBBB\n"
    "BBBBBBBB\n"
    "BBBBBBBB\n"
    "BBBBBBBB\n"
    "BBBBBBBB\n"
    "BBBBBBBB\n"
    "BBBBBBBW\n"
    "BBBBBB..\n"
    "to_move: W\n");

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xq_policies_" + name);
}

}  // namespace

TEST(HeurTable, MatchesPublishedWeights) {
  const std::array<int, 64> expected = {
      100, -25, 10, 5,  5,  10, -25, 100,  //
      -25, -25, 2,  2,  2,  2,  -25, -25,  //
      10,  2,   5,  1,  1,  5,  2,   10,   //
      5,   2,   1,  2,  2,  1,  2,   5,    //
      5,   2,   1,  2,  2,  1,  2,   5,    //
      10,  2,   5,  1,  1,  5,  2,   10,   //
      -25, -25, 2,  2,  2,  2,  -25, -25,  //
      100, -25, 10, 5,  5,  10, -25, 100,
  };
  EXPECT_EQ(HeurTable::standard().weights, expected);
}

TEST(HeurTable, InvariantUnderSymmetries) {
  const HeurTable h = HeurTable::standard();
  for (int s = 0; s < 8; ++s)
    for (int sq = 0; sq < 64; ++sq) EXPECT_EQ(h.at(transform_square(sq, s)), h.at(sq));
}

TEST(PolicyKind, ParseAndPrint) {
  EXPECT_EQ(parse_policy_kind("RANDOM"), PolicyKind::Random);
  EXPECT_EQ(parse_policy_kind("greedy"), PolicyKind::Greedy);
  EXPECT_EQ(parse_policy_kind("Stochastic"), PolicyKind::Stochastic);
  EXPECT_EQ(to_string(PolicyKind::Stochastic), "stochastic");
  EXPECT_THROW(parse_policy_kind("minimax"), ConfigError);
}

TEST(RandomMove, UniformOnInitialBoard) {
  Rng rng(1);
  std::map<int, int> freq;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++freq[random_move(Board::initial(), rng).index];
  ASSERT_EQ(freq.size(), 4u);
  for (auto [move, count] : freq) EXPECT_NEAR(count / double(n), 0.25, 0.02) << move;
}

TEST(RandomMove, ForcedMoves) {
  Rng rng(2);
  EXPECT_EQ(random_move(kPassBoard, rng), Move::pass());
  const Board b = kPassBoard.with_to_move(Color::Black);
  ASSERT_EQ(legal_moves(b).size(), 1u);
  EXPECT_EQ(random_move(b, rng), Move::at(7, 7));
}

TEST(RandomMove, TerminalThrows) {
  Rng rng(3);
  const Board full = Board::from_masks(~0ull, 0, Color::Black);
  EXPECT_THROW(random_move(full, rng), NoLegalMove);
  EXPECT_THROW(greedy_move(full), NoLegalMove);
  EXPECT_THROW(stochastic_move(full, HeurTable::standard(), rng), NoLegalMove);
}

TEST(GreedyMove, PrefersLargestCapture) {
  // Black at a1 side: c1 flips three discs in a row, the others flip one.
  const Board b = Board::from_text(
      "........\n"
      ".WWWB...\n"
      "........\n"
      "...WB...\n"
      "...BW...\n"
      "........\n"
      "........\n"
      "........\n"
      "to_move: B\n");
  const Move m = greedy_move(b);
  EXPECT_EQ(m, Move::at(1, 0));
  EXPECT_EQ(std::popcount(b.flips(m.index)), 3);
}

TEST(GreedyMove, TieGoesToLowestIndex) {
  // All four opening moves flip exactly one disc.
  EXPECT_EQ(greedy_move(Board::initial()), Move::at(2, 3));
}

TEST(GreedyMove, MatchesExhaustiveOnePly) {
  for (const Board& b : midgame_boards(500, 4)) {
    const Color me = b.to_move();
    int best = -1;
    Move expected;
    for (Move m : legal_moves(b)) {
      const int discs = apply_move(b, m).count(me);
      if (discs > best) {
        best = discs;
        expected = m;
      }
    }
    const Move got = greedy_move(b);
    EXPECT_EQ(got, expected) << b.to_text();
    EXPECT_EQ(apply_move(b, got).count(me), best);
  }
}

TEST(StochasticMove, CornerInGreedyBranch) {
  const Board b = Board::from_text(
      "........\n"
      ".W......\n"
      "..B.....\n"
      "...WB...\n"
      "...BW...\n"
      "........\n"
      "........\n"
      "........\n"
      "to_move: B\n");
  ASSERT_TRUE(is_legal(b, Move::at(0, 0)));
  Rng rng(5);
  // random_share 0 forces the greedy branch.
  EXPECT_EQ(stochastic_move(b, HeurTable::standard(), rng, 0.0), Move::at(0, 0));
}

TEST(StochasticMove, SingleLegalMove) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(stochastic_move(kPassBoard, HeurTable::standard(), rng), Move::pass());
}

TEST(StochasticMove, MixtureFrequency) {
  const Board b = Board::initial();
  const auto legal = legal_moves(b);
  Rng probe(0);
  const Move greedy_choice = stochastic_move(b, HeurTable::standard(), probe, 0.0);
  Rng rng(7);
  const int n = 10000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += stochastic_move(b, HeurTable::standard(), rng) == greedy_choice;
  const double expected = 0.3 + 0.7 / static_cast<double>(legal.size());
  EXPECT_NEAR(hits / double(n), expected, 0.02);
}

TEST(StochasticMove, MixtureOnAsymmetricBoard) {
  const Board b = midgame_boards(1, 8).front();
  const auto legal = legal_moves(b);
  ASSERT_GT(legal.size(), 2u);
  Rng probe(0);
  const Move greedy_choice = stochastic_move(b, HeurTable::standard(), probe, 0.0);
  Rng rng(9);
  const int n = 10000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += stochastic_move(b, HeurTable::standard(), rng) == greedy_choice;
  EXPECT_NEAR(hits / double(n), 0.3 + 0.7 / static_cast<double>(legal.size()), 0.02);
}

TEST(ExpertLabel, InitialBoardIsNeutral) {
  const HeurTable h = HeurTable::standard();
  EXPECT_EQ(expert_label(Board::initial(), Color::Black, h), 0);
  EXPECT_EQ(expert_label(Board::initial(), Color::White, h), 0);
}

TEST(ExpertLabel, CornerOwnerIsAhead) {
  // Same interior weights on both sides, black additionally owns a1.
  Board b = Board::from_text(
      "B.......\n"
      "........\n"
      "........\n"
      "...WB...\n"
      "...BW...\n"
      "........\n"
      "........\n"
      "........\n"
      "to_move: W\n");
  EXPECT_EQ(heuristic_value(b, Color::Black, HeurTable::standard()), 100);
  EXPECT_EQ(expert_label(b, Color::Black, HeurTable::standard()), 1);
  EXPECT_EQ(expert_label(b, Color::White, HeurTable::standard()), -1);
  EXPECT_EQ(expert_label(b, Color::Black, HeurTable::standard(), 100), 0);
  EXPECT_EQ(expert_label(b, Color::Black, HeurTable::standard(), 99), 1);
}

TEST(ExpertLabel, SignOfDirectSum) {
  const HeurTable h = HeurTable::standard();
  for (const Board& b : midgame_boards(500, 10)) {
    int sum = 0;
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        const int w = h.weights[static_cast<std::size_t>(r * 8 + c)];
        if (b.at(r, c) == Cell::Black) sum += w;
        if (b.at(r, c) == Cell::White) sum -= w;
      }
    }
    const int sign = (sum > 0) - (sum < 0);
    EXPECT_EQ(expert_label(b, Color::Black, h), sign);
    EXPECT_EQ(expert_label(b, Color::White, h), -sign);
  }
}

TEST(ExpertExamples, DefaultSizes) {
  ExpertGenConfig cfg;
  cfg.seed = 1;
  const auto examples = generate_expert_examples(cfg);
  EXPECT_EQ(examples.size(), 10000u);
  const auto hist = label_histogram(examples);
  EXPECT_EQ(hist[0] + hist[1] + hist[2], 10000u);
  for (const auto& e : examples) {
    EXPECT_GE(e.label, -1);
    EXPECT_LE(e.label, 1);
    EXPECT_EQ(e.state.own & e.state.other, 0u);
  }
}

TEST(ExpertExamples, KeepAllWhenPoolEqualsKeep) {
  ExpertGenConfig cfg;
  cfg.pool_size = cfg.keep = 500;
  cfg.seed = 2;
  EXPECT_EQ(generate_expert_examples(cfg).size(), 500u);
  cfg.keep = 501;
  EXPECT_THROW(generate_expert_examples(cfg), ConfigError);
}

TEST(ExpertExamples, LabelsMatchRecordedStates) {
  ExpertGenConfig cfg;
  cfg.pool_size = 2000;
  cfg.keep = 300;
  cfg.seed = 3;
  const HeurTable h = HeurTable::standard();
  for (const auto& e : generate_expert_examples(cfg)) {
    // Rebuild a board with the recorded side as Black.
    const Board b = Board::from_masks(e.state.own, e.state.other, Color::Black);
    EXPECT_EQ(e.label, expert_label(b, Color::Black, h));
    // Recorded at the sampler's turn, so it had a move to make.
    EXPECT_FALSE(is_terminal(b));
  }
}

TEST(ExpertExamples, Reproducible) {
  ExpertGenConfig cfg;
  cfg.pool_size = 3000;
  cfg.keep = 1000;
  cfg.seed = 4;
  cfg.opponent = PolicyKind::Stochastic;
  const auto a = generate_expert_examples(cfg);
  EXPECT_EQ(a, generate_expert_examples(cfg));
  cfg.seed = 5;
  EXPECT_NE(a, generate_expert_examples(cfg));
}

TEST(ExpertFile, RoundTrip) {
  ExpertGenConfig cfg;
  cfg.pool_size = 1000;
  cfg.keep = 200;
  const auto examples = generate_expert_examples(cfg);
  const auto path = temp_file("roundtrip.xqex");
  write_expert_file(path, examples);
  EXPECT_EQ(std::filesystem::file_size(path), 4u + 1u + 8u + 200u * 33u);
  EXPECT_EQ(read_expert_file(path), examples);
  std::filesystem::remove(path);
}

TEST(ExpertFile, RejectsCorruptInput) {
  const auto path = temp_file("corrupt.xqex");
  {
    std::ofstream f(path, std::ios::binary);
    f << "XQNN garbage";
  }
  EXPECT_THROW(read_expert_file(path), FormatError);

  ExpertExample bad;
  bad.state.own = 1;
  bad.state.other = 2;
  bad.label = 1;
  write_expert_file(path, {bad});
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  bytes.back() = 7;  // label out of range
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << bytes;
  }
  EXPECT_THROW(read_expert_file(path), FormatError);
  EXPECT_THROW(read_expert_file(temp_file("missing.xqex")), Error);
  std::filesystem::remove(path);
}
