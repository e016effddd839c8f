#include "xq/policies.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>

namespace xq {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

HeurTable HeurTable::standard() noexcept {
  HeurTable t;
  t.weights = {
      100, -25, 10, 5, 5, 10, -25, 100,  //
      -25, -25, 2,  2, 2, 2,  -25, -25,  //
      10,  2,   5,  1, 1, 5,  2,   10,   //
      5,   2,   1,  2, 2, 1,  2,   5,    //
      5,   2,   1,  2, 2, 1,  2,   5,    //
      10,  2,   5,  1, 1, 5,  2,   10,   //
      -25, -25, 2,  2, 2, 2,  -25, -25,  //
      100, -25, 10, 5, 5, 10, -25, 100,  //
  };
  return t;
}

std::string_view to_string(PolicyKind k) noexcept {
  switch (k) {
    case PolicyKind::Random: return "random";
    case PolicyKind::Greedy: return "greedy";
    case PolicyKind::Stochastic: return "stochastic";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "random") return PolicyKind::Random;
  if (lower == "greedy") return PolicyKind::Greedy;
  if (lower == "stochastic") return PolicyKind::Stochastic;
  throw ConfigError("unknown opponent kind '" + std::string(name) + "'");
}

namespace {

std::vector<Move> moves_or_throw(const Board& b) {
  std::vector<Move> moves = legal_moves(b);
  if (moves.empty()) throw NoLegalMove("no legal move on a finished game");
  return moves;
}

}  // namespace

Move random_move(const Board& b, Rng& rng) {
  const std::vector<Move> moves = moves_or_throw(b);
  return moves[uniform_index(rng, moves.size())];
}

Move greedy_move(const Board& b) {
  const std::vector<Move> moves = moves_or_throw(b);
  Move best = moves.front();
  int best_count = -1;
  for (Move m : moves) {
    const int count = m.is_pass() ? b.count(b.to_move()) : b.count(b.to_move()) + 1 + std::popcount(b.flips(m.index));
    if (count > best_count) {
      best_count = count;
      best = m;
    }
  }
  return best;
}

Move stochastic_move(const Board& b, const HeurTable& heur, Rng& rng, double random_share) {
  const std::vector<Move> moves = moves_or_throw(b);
  if (uniform01(rng) < random_share) return moves[uniform_index(rng, moves.size())];
  // PASS is only ever the sole legal move, so placements are all that compete.
  Move best = moves.front();
  for (Move m : moves) {
    if (heur.at(m.index) > heur.at(best.index)) best = m;
  }
  return best;
}

ScriptedPolicy::ScriptedPolicy(PolicyKind kind, std::uint64_t seed, HeurTable heur)
    : kind_(kind), heur_(heur), rng_(seed) {}

Move ScriptedPolicy::choose(const Board& b) {
  switch (kind_) {
    case PolicyKind::Random: return random_move(b, rng_);
    case PolicyKind::Greedy: return greedy_move(b);
    case PolicyKind::Stochastic: return stochastic_move(b, heur_, rng_);
  }
  throw ConfigError("bad policy kind");
}

int heuristic_value(const Board& b, Color perspective, const HeurTable& heur) noexcept {
  int h = 0;
  std::uint64_t own = b.pieces(perspective);
  std::uint64_t opp = b.pieces(opponent(perspective));
  for (; own; own &= own - 1) h += heur.at(std::countr_zero(own));
  for (; opp; opp &= opp - 1) h -= heur.at(std::countr_zero(opp));
  return h;
}

int expert_label(const Board& b, Color perspective, const HeurTable& heur, int dead_zone) noexcept {
  const int h = heuristic_value(b, perspective, heur);
  if (h > dead_zone) return 1;
  if (h < -dead_zone) return -1;
  return 0;
}

std::vector<ExpertExample> generate_expert_examples(const ExpertGenConfig& cfg) {
  if (cfg.keep > cfg.pool_size) throw ConfigError("keep must not exceed pool size");
  const HeurTable heur = HeurTable::standard();
  ScriptedPolicy sampler(cfg.sampler, derive_seed(cfg.seed, 1), heur);
  ScriptedPolicy opponent_policy(cfg.opponent, derive_seed(cfg.seed, 2), heur);

  std::vector<ExpertExample> pool;
  pool.reserve(cfg.pool_size);
  for (std::size_t game = 0; pool.size() < cfg.pool_size; ++game) {
    const Color sampler_color = game % 2 == 0 ? Color::Black : Color::White;
    Board b = Board::initial();
    while (!is_terminal(b) && pool.size() < cfg.pool_size) {
      if (b.to_move() == sampler_color) {
        const auto label = static_cast<std::int8_t>(expert_label(b, sampler_color, heur, cfg.dead_zone));
        pool.push_back({encode_state(b, sampler_color), label});
        b = apply_move(b, sampler.choose(b));
      } else {
        b = apply_move(b, opponent_policy.choose(b));
      }
    }
  }

  Rng pick(derive_seed(cfg.seed, 3));
  for (std::size_t i = 0; i < cfg.keep; ++i) {
    const std::size_t j = i + uniform_index(pick, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(cfg.keep);
  return pool;
}

std::array<std::size_t, 3> label_histogram(const std::vector<ExpertExample>& examples) noexcept {
  std::array<std::size_t, 3> hist{};
  for (const auto& e : examples) ++hist[static_cast<std::size_t>(e.label + 1)];
  return hist;
}

namespace {

constexpr char kExpertMagic[4] = {'X', 'Q', 'E', 'X'};
constexpr std::uint8_t kExpertVersion = 1;
constexpr std::size_t kPlaneBytes = 16;

void put_plane(std::string& out, std::uint64_t mask) {
  char bytes[kPlaneBytes] = {};
  std::memcpy(bytes, &mask, sizeof mask);
  out.append(bytes, kPlaneBytes);
}

std::uint64_t get_plane(const char* p) {
  std::uint64_t mask = 0;
  std::memcpy(&mask, p, sizeof mask);
  for (std::size_t i = sizeof mask; i < kPlaneBytes; ++i) {
    if (p[i] != 0) throw FormatError("expert record has nonzero padding");
  }
  return mask;
}

}  // namespace

void write_expert_file(const std::filesystem::path& path, const std::vector<ExpertExample>& examples) {
  std::string out(kExpertMagic, sizeof kExpertMagic);
  out += static_cast<char>(kExpertVersion);
  const std::uint64_t count = examples.size();
  out.append(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& e : examples) {
    put_plane(out, e.state.own);
    put_plane(out, e.state.other);
    out += static_cast<char>(e.label);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("failed writing " + path.string());
}

std::vector<ExpertExample> read_expert_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  constexpr std::size_t kHeader = sizeof kExpertMagic + 1 + sizeof(std::uint64_t);
  constexpr std::size_t kRecord = 2 * kPlaneBytes + 1;
  if (data.size() < kHeader || std::memcmp(data.data(), kExpertMagic, sizeof kExpertMagic) != 0) {
    throw FormatError(path.string() + " is not an expert example file");
  }
  if (static_cast<std::uint8_t>(data[4]) != kExpertVersion) throw FormatError("unsupported expert file version");
  std::uint64_t count = 0;
  std::memcpy(&count, data.data() + 5, sizeof count);
  if (data.size() != kHeader + count * kRecord) throw FormatError("expert file size does not match record count");

  std::vector<ExpertExample> examples(count);
  const char* p = data.data() + kHeader;
  for (auto& e : examples) {
    e.state.own = get_plane(p);
    e.state.other = get_plane(p + kPlaneBytes);
    e.label = static_cast<std::int8_t>(p[2 * kPlaneBytes]);
    if (e.state.own & e.state.other) throw FormatError("expert record planes overlap");
    if (e.label < -1 || e.label > 1) throw FormatError("expert label outside {-1, 0, 1}");
    p += kRecord;
  }
  return examples;
}

}  // namespace xq
