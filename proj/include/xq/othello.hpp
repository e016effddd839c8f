#pragma once

#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xq/errors.hpp"

namespace xq {

inline constexpr int kBoardSide = 8;
inline constexpr int kNumSquares = 64;
inline constexpr int kPassIndex = 64;
inline constexpr int kNumActions = 65;

enum class Color : std::uint8_t { Black = 0, White = 1 };

constexpr Color opponent(Color c) noexcept {
  return c == Color::Black ? Color::White : Color::Black;
}

char color_char(Color c) noexcept;

enum class Cell : std::uint8_t { Empty, Black, White };

// An action: a square index (row * 8 + col) or the explicit PASS action 64.
struct Move {
  int index = kPassIndex;

  static constexpr Move pass() noexcept { return Move{kPassIndex}; }
  static constexpr Move at(int row, int col) noexcept { return Move{row * kBoardSide + col}; }

  constexpr bool is_pass() const noexcept { return index == kPassIndex; }
  constexpr int row() const noexcept { return index / kBoardSide; }
  constexpr int col() const noexcept { return index % kBoardSide; }

  auto operator<=>(const Move&) const = default;
};

std::string to_string(Move m);

// Position plus side to move, stored as one occupancy mask per color.
// Bit i of a mask is square i = row * 8 + col.
class Board {
 public:
  // The empty board with Black to move; mostly useful for building fixtures.
  Board() = default;

  static Board initial() noexcept;
  // Throws FormatError if the masks overlap.
  static Board from_masks(std::uint64_t black, std::uint64_t white, Color to_move);
  // Parses 8 rows of '.', 'B', 'W' followed by "to_move: B" or "to_move: W".
  static Board from_text(std::string_view text);

  std::uint64_t black() const noexcept { return black_; }
  std::uint64_t white() const noexcept { return white_; }
  std::uint64_t pieces(Color c) const noexcept { return c == Color::Black ? black_ : white_; }
  std::uint64_t occupied() const noexcept { return black_ | white_; }
  Color to_move() const noexcept { return to_move_; }

  Cell at(int square) const noexcept;
  Cell at(int row, int col) const noexcept { return at(row * kBoardSide + col); }
  int count(Color c) const noexcept { return std::popcount(pieces(c)); }
  int empty_count() const noexcept { return kNumSquares - std::popcount(occupied()); }

  // Squares where the side to move may place a disc (each flips at least one).
  std::uint64_t placements() const noexcept;
  std::uint64_t placements_for(Color c) const noexcept;
  // Discs that placing on `square` would flip for the side to move (0 if none).
  std::uint64_t flips(int square) const noexcept;

  Board with_to_move(Color c) const noexcept;

  std::string to_text() const;

  // Canonical order: lexicographic on (black mask, white mask, to_move).
  auto operator<=>(const Board&) const = default;

 private:
  std::uint64_t black_ = 0;
  std::uint64_t white_ = 0;
  Color to_move_ = Color::Black;
};

enum class Winner : std::uint8_t { Black, White, Draw };

struct GameOutcome {
  Winner winner = Winner::Draw;
  int piece_diff = 0;  // black - white

  // +1 win, 0 draw, -1 loss from `c`'s point of view.
  int result_for(Color c) const noexcept;
  bool operator==(const GameOutcome&) const = default;
};

bool is_terminal(const Board& b) noexcept;

// Flipping placements for the side to move; [PASS] when only the opponent can
// move; empty when the game is over.
std::vector<Move> legal_moves(const Board& b);
bool is_legal(const Board& b, Move m) noexcept;

// Throws IllegalMove unless m is in legal_moves(b).
Board apply_move(const Board& b, Move m);

// Throws NotTerminal while either side can still move.
GameOutcome game_outcome(const Board& b);

// Every distinct position (occupancy and side to move) after 4 plies from the
// initial board, sorted by Board's ordering.
std::vector<Board> enumerate_openings();

// Two binary 8x8 planes: plane 0 holds `perspective`'s discs, plane 1 the
// opponent's. Stored as bit masks with the same square indexing as Board.
struct StateEncoding {
  std::uint64_t own = 0;
  std::uint64_t other = 0;

  int plane(int p, int square) const noexcept {
    return static_cast<int>(((p == 0 ? own : other) >> square) & 1u);
  }
  bool operator==(const StateEncoding&) const = default;
};

StateEncoding encode_state(const Board& b, Color perspective) noexcept;

// The eight symmetries of the square, index 0 being the identity.
int transform_square(int square, int symmetry) noexcept;
std::uint64_t transform_mask(std::uint64_t mask, int symmetry) noexcept;
Board transform_board(const Board& b, int symmetry) noexcept;

}  // namespace xq
