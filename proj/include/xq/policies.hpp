#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xq/othello.hpp"
#include "xq/random.hpp"

namespace xq {

// Positional weights per square (row-major).
struct HeurTable {
  std::array<int, kNumSquares> weights{};

  static HeurTable standard() noexcept;
  int at(int square) const noexcept { return weights[static_cast<std::size_t>(square)]; }
  bool operator==(const HeurTable&) const = default;
};

enum class PolicyKind : std::uint8_t { Random, Greedy, Stochastic };

std::string_view to_string(PolicyKind k) noexcept;
// Accepts "random", "greedy", "stochastic" (case-insensitive); throws ConfigError.
PolicyKind parse_policy_kind(std::string_view name);

// Each throws NoLegalMove on a terminal board.
Move random_move(const Board& b, Rng& rng);
// Maximizes the mover's disc count after the move; ties go to the lowest index.
Move greedy_move(const Board& b);
// With probability `random_share` plays random_move, otherwise the legal
// placement with the highest table weight (PASS only when forced).
Move stochastic_move(const Board& b, const HeurTable& heur, Rng& rng, double random_share = 0.7);

// A scripted opponent that owns its random stream.
class ScriptedPolicy {
 public:
  explicit ScriptedPolicy(PolicyKind kind, std::uint64_t seed = 0,
                          HeurTable heur = HeurTable::standard());

  PolicyKind kind() const noexcept { return kind_; }
  Move choose(const Board& b);
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  PolicyKind kind_;
  HeurTable heur_;
  Rng rng_;
};

// Weighted disc differential from `perspective`'s side.
int heuristic_value(const Board& b, Color perspective, const HeurTable& heur) noexcept;

// Coarse state value in {-1, 0, 1}: the sign of heuristic_value, with values
// inside [-dead_zone, dead_zone] mapped to 0.
int expert_label(const Board& b, Color perspective, const HeurTable& heur, int dead_zone = 0) noexcept;

struct ExpertExample {
  StateEncoding state;
  std::int8_t label = 0;

  bool operator==(const ExpertExample&) const = default;
};

struct ExpertGenConfig {
  PolicyKind sampler = PolicyKind::Stochastic;
  PolicyKind opponent = PolicyKind::Random;
  std::size_t pool_size = 100000;
  std::size_t keep = 10000;
  int dead_zone = 0;
  std::uint64_t seed = 0;
};

// Plays sampler-vs-opponent games (sampler color alternating per game),
// labels every state the sampler acts from, then keeps a uniform subset.
std::vector<ExpertExample> generate_expert_examples(const ExpertGenConfig& cfg);

// Label histogram indexed by label + 1.
std::array<std::size_t, 3> label_histogram(const std::vector<ExpertExample>& examples) noexcept;

// XQEX file: "XQEX", version byte, u64 LE record count, then per record
// 16 bytes plane 0, 16 bytes plane 1, 1 signed byte label.
void write_expert_file(const std::filesystem::path& path, const std::vector<ExpertExample>& examples);
std::vector<ExpertExample> read_expert_file(const std::filesystem::path& path);

}  // namespace xq
