#include "xq/othello.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace xq {

namespace {

constexpr std::uint64_t kNotColA = ~0x0101010101010101ULL;
constexpr std::uint64_t kNotColH = ~0x8080808080808080ULL;

using ShiftFn = std::uint64_t (*)(std::uint64_t);

constexpr std::array<ShiftFn, 8> kShifts = {
    [](std::uint64_t x) { return (x << 1) & kNotColA; },  // east
    [](std::uint64_t x) { return (x >> 1) & kNotColH; },  // west
    [](std::uint64_t x) { return x << 8; },               // south
    [](std::uint64_t x) { return x >> 8; },               // north
    [](std::uint64_t x) { return (x << 9) & kNotColA; },  // south-east
    [](std::uint64_t x) { return (x << 7) & kNotColH; },  // south-west
    [](std::uint64_t x) { return (x >> 7) & kNotColA; },  // north-east
    [](std::uint64_t x) { return (x >> 9) & kNotColH; },  // north-west
};

std::uint64_t placements_of(std::uint64_t own, std::uint64_t opp) noexcept {
  const std::uint64_t empty = ~(own | opp);
  std::uint64_t moves = 0;
  for (ShiftFn shift : kShifts) {
    std::uint64_t run = shift(own) & opp;
    for (int i = 0; i < 5; ++i) run |= shift(run) & opp;
    moves |= shift(run) & empty;
  }
  return moves;
}

std::uint64_t flips_of(std::uint64_t own, std::uint64_t opp, int square) noexcept {
  const std::uint64_t bit = 1ULL << square;
  if ((own | opp) & bit) return 0;
  std::uint64_t flipped = 0;
  for (ShiftFn shift : kShifts) {
    std::uint64_t run = 0;
    std::uint64_t x = shift(bit);
    while (x & opp) {
      run |= x;
      x = shift(x);
    }
    if (x & own) flipped |= run;
  }
  return flipped;
}

}  // namespace

char color_char(Color c) noexcept { return c == Color::Black ? 'B' : 'W'; }

std::string to_string(Move m) {
  if (m.is_pass()) return "pass";
  std::string s;
  s += static_cast<char>('a' + m.col());
  s += static_cast<char>('1' + m.row());
  return s;
}

Board Board::initial() noexcept {
  Board b;
  // d4, e5 white; e4, d5 black (row-major index row*8+col).
  b.white_ = (1ULL << (3 * 8 + 3)) | (1ULL << (4 * 8 + 4));
  b.black_ = (1ULL << (3 * 8 + 4)) | (1ULL << (4 * 8 + 3));
  b.to_move_ = Color::Black;
  return b;
}

Board Board::from_masks(std::uint64_t black, std::uint64_t white, Color to_move) {
  if (black & white) throw FormatError("board masks overlap");
  Board b;
  b.black_ = black;
  b.white_ = white;
  b.to_move_ = to_move;
  return b;
}

Board Board::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::uint64_t black = 0;
  std::uint64_t white = 0;
  int row = 0;
  while (row < kBoardSide && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.size() != kBoardSide) throw FormatError("board row must have 8 cells: '" + line + "'");
    for (int col = 0; col < kBoardSide; ++col) {
      const std::uint64_t bit = 1ULL << (row * kBoardSide + col);
      switch (line[col]) {
        case '.': break;
        case 'B': black |= bit; break;
        case 'W': white |= bit; break;
        default: throw FormatError("unexpected board cell '" + std::string(1, line[col]) + "'");
      }
    }
    ++row;
  }
  if (row != kBoardSide) throw FormatError("board text needs 8 rows");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    constexpr std::string_view kKey = "to_move:";
    if (line.rfind(kKey, 0) != 0) throw FormatError("expected 'to_move: B|W', got '" + line + "'");
    std::string value = line.substr(kKey.size());
    value.erase(0, value.find_first_not_of(' '));
    if (value == "B") return from_masks(black, white, Color::Black);
    if (value == "W") return from_masks(black, white, Color::White);
    throw FormatError("to_move must be B or W");
  }
  throw FormatError("missing 'to_move:' line");
}

Cell Board::at(int square) const noexcept {
  const std::uint64_t bit = 1ULL << square;
  if (black_ & bit) return Cell::Black;
  if (white_ & bit) return Cell::White;
  return Cell::Empty;
}

std::uint64_t Board::placements_for(Color c) const noexcept {
  return placements_of(pieces(c), pieces(opponent(c)));
}

std::uint64_t Board::placements() const noexcept { return placements_for(to_move_); }

std::uint64_t Board::flips(int square) const noexcept {
  return flips_of(pieces(to_move_), pieces(opponent(to_move_)), square);
}

Board Board::with_to_move(Color c) const noexcept {
  Board b = *this;
  b.to_move_ = c;
  return b;
}

std::string Board::to_text() const {
  std::string s;
  s.reserve(8 * 9 + 12);
  for (int row = 0; row < kBoardSide; ++row) {
    for (int col = 0; col < kBoardSide; ++col) {
      switch (at(row, col)) {
        case Cell::Empty: s += '.'; break;
        case Cell::Black: s += 'B'; break;
        case Cell::White: s += 'W'; break;
      }
    }
    s += '\n';
  }
  s += "to_move: ";
  s += color_char(to_move_);
  s += '\n';
  return s;
}

int GameOutcome::result_for(Color c) const noexcept {
  if (winner == Winner::Draw) return 0;
  const bool black_won = winner == Winner::Black;
  return (black_won == (c == Color::Black)) ? 1 : -1;
}

bool is_terminal(const Board& b) noexcept {
  return b.placements_for(Color::Black) == 0 && b.placements_for(Color::White) == 0;
}

std::vector<Move> legal_moves(const Board& b) {
  std::vector<Move> moves;
  std::uint64_t mask = b.placements();
  if (mask == 0) {
    if (b.placements_for(opponent(b.to_move())) != 0) moves.push_back(Move::pass());
    return moves;
  }
  moves.reserve(std::popcount(mask));
  while (mask) {
    moves.push_back(Move{std::countr_zero(mask)});
    mask &= mask - 1;
  }
  return moves;
}

bool is_legal(const Board& b, Move m) noexcept {
  if (m.index < 0 || m.index > kPassIndex) return false;
  const std::uint64_t mask = b.placements();
  if (m.is_pass()) return mask == 0 && b.placements_for(opponent(b.to_move())) != 0;
  return (mask >> m.index) & 1u;
}

Board apply_move(const Board& b, Move m) {
  if (!is_legal(b, m)) throw IllegalMove("illegal move " + to_string(m));
  const Color mover = b.to_move();
  if (m.is_pass()) return b.with_to_move(opponent(mover));
  const std::uint64_t flipped = b.flips(m.index);
  const std::uint64_t own = b.pieces(mover) | flipped | (1ULL << m.index);
  const std::uint64_t opp = b.pieces(opponent(mover)) & ~flipped;
  return mover == Color::Black ? Board::from_masks(own, opp, Color::White)
                               : Board::from_masks(opp, own, Color::Black);
}

GameOutcome game_outcome(const Board& b) {
  if (!is_terminal(b)) throw NotTerminal("game is not over");
  GameOutcome out;
  out.piece_diff = b.count(Color::Black) - b.count(Color::White);
  out.winner = out.piece_diff > 0 ? Winner::Black : out.piece_diff < 0 ? Winner::White : Winner::Draw;
  return out;
}

std::vector<Board> enumerate_openings() {
  std::vector<Board> frontier{Board::initial()};
  for (int ply = 0; ply < 4; ++ply) {
    std::vector<Board> next;
    for (const Board& b : frontier) {
      for (Move m : legal_moves(b)) next.push_back(apply_move(b, m));
    }
    frontier = std::move(next);
  }
  std::sort(frontier.begin(), frontier.end());
  frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
  return frontier;
}

StateEncoding encode_state(const Board& b, Color perspective) noexcept {
  return StateEncoding{b.pieces(perspective), b.pieces(opponent(perspective))};
}

int transform_square(int square, int symmetry) noexcept {
  int r = square / kBoardSide;
  int c = square % kBoardSide;
  constexpr int n = kBoardSide - 1;
  if (symmetry & 4) c = n - c;  // mirror first, then rotate
  for (int k = 0; k < (symmetry & 3); ++k) {
    const int nr = c;
    const int nc = n - r;
    r = nr;
    c = nc;
  }
  return r * kBoardSide + c;
}

std::uint64_t transform_mask(std::uint64_t mask, int symmetry) noexcept {
  std::uint64_t out = 0;
  while (mask) {
    const int sq = std::countr_zero(mask);
    out |= 1ULL << transform_square(sq, symmetry);
    mask &= mask - 1;
  }
  return out;
}

Board transform_board(const Board& b, int symmetry) noexcept {
  return Board::from_masks(transform_mask(b.black(), symmetry), transform_mask(b.white(), symmetry),
                           b.to_move());
}

}  // namespace xq
