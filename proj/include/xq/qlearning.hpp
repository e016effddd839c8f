#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xq/nn.hpp"
#include "xq/othello.hpp"
#include "xq/policies.hpp"
#include "xq/random.hpp"

namespace xq {

using ActionMask = std::bitset<kNumActions>;

ActionMask legal_action_mask(const Board& b);

// One replay record. The reward is already the discounted final result.
struct Transition {
  StateEncoding state;
  int action = kPassIndex;
  StateEncoding next_state;
  float reward = 0.0f;
  bool terminal = false;
  ActionMask legal_next;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  void push(const Transition& t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  // Oldest-first view.
  const Transition& at(std::size_t i) const;
  // Uniform with replacement.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // slot the next push overwrites once full
  std::vector<Transition> items_;
};

// Fixed expert examples; empty disables the expert regression step.
class ExpertBuffer {
 public:
  ExpertBuffer() = default;
  explicit ExpertBuffer(std::vector<ExpertExample> examples, std::size_t capacity = 10000);

  bool empty() const noexcept { return examples_.empty(); }
  std::size_t size() const noexcept { return examples_.size(); }
  const std::vector<ExpertExample>& examples() const noexcept { return examples_; }
  std::vector<ExpertExample> sample(std::size_t n, Rng& rng) const;

 private:
  std::vector<ExpertExample> examples_;
};

enum class Algorithm : std::uint8_t { DoubleDueling, ExpertQ, ExpertQNoExamples };

std::string_view to_string(Algorithm a) noexcept;
// "double-dueling", "expert-q", "expert-q-noex"
Algorithm parse_algorithm(std::string_view name);

enum class QReducer : std::uint8_t { Max, Mean };

std::string_view to_string(QReducer r) noexcept;
QReducer parse_reducer(std::string_view name);

struct TrainConfig {
  Algorithm algorithm = Algorithm::ExpertQ;
  double gamma = 0.99;
  double learning_rate = 1e-4;
  std::int64_t max_iter = 100000;
  std::int64_t sync_every = 2000;
  std::size_t batch = 64;
  double eps_start = 1.0;
  double eps_end = 0.01;
  std::size_t buffer_capacity = 10000;
  std::uint64_t seed = 0;

  std::int64_t log_every = 100;
  std::int64_t eval_every = 2000;  // 0 disables periodic evaluation
  int eval_rounds = 1;
  nn::BackboneOptions architecture{};
  // Literal reading of the expert regression: error measured on E_B, applied to E_A.
  bool expert_loss_on_copy = false;
  QReducer initial_q_reducer = QReducer::Max;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct AgentNets {
  Algorithm algorithm = Algorithm::ExpertQ;
  nn::Network<float> q_a;
  nn::Network<float> q_b;
  std::optional<nn::Network<float>> e_a;
  std::optional<nn::Network<float>> e_b;
  nn::Adam<float> q_opt;
  std::optional<nn::Adam<float>> e_opt;

  bool has_expert() const noexcept { return e_a.has_value(); }
  // Q_B <- Q_A, E_B <- E_A.
  void sync();
};

AgentNets make_agent(const TrainConfig& cfg);

double epsilon_at(std::int64_t iter, const TrainConfig& cfg);

// out_a = q_a - mean(q) + value
std::array<float, kNumActions> compose_q(std::span<const float, kNumActions> q_raw, float state_value);
std::array<double, kNumActions> compose_q(std::span<const double, kNumActions> q_raw, double state_value);

// Backward of the composition taken at one action per column: d/dq is
// g (onehot(a) - 1/65), d/de is g.
void compose_q_backward(std::span<const int> actions, std::span<const float> grad, nn::Matrix<float>& grad_q,
                        nn::Matrix<float>& grad_e);
void compose_q_backward(std::span<const int> actions, std::span<const double> grad, nn::Matrix<double>& grad_q,
                        nn::Matrix<double>& grad_e);

// Highest-valued legal action; ties go to the lowest index.
int masked_argmax(std::span<const float> values, const ActionMask& legal);

// Raw outputs of `net` for one position from the side-to-move's perspective.
std::array<float, kNumActions> q_values(nn::Network<float>& net, const Board& b);

// Epsilon-greedy on raw Q_A outputs with illegal actions masked out.
// Throws NoLegalMove on a terminal board.
Move select_action(nn::Network<float>& q_net, const Board& b, double eps, Rng& rng);

// Plays one game as `agent_color`, pushing one transition per agent turn.
GameOutcome rollout_episode(AgentNets& nets, ScriptedPolicy& opponent, Color agent_color, double eps,
                            ReplayBuffer& buffer, const TrainConfig& cfg, Rng& rng);

// Bootstrapped targets r + gamma * Q_B(s', a*) (Q_B composed with E_B for the
// expert algorithms); r alone for terminal transitions.
std::vector<float> td_targets(AgentNets& nets, std::span<const Transition> batch, const TrainConfig& cfg);

// Dueling-network double Q update on Q_A. Throws InsufficientBuffer.
float update_baseline(AgentNets& nets, const ReplayBuffer& buffer, const TrainConfig& cfg, Rng& rng);
// Same update on a given minibatch.
float update_baseline_on(AgentNets& nets, std::span<const Transition> batch, const TrainConfig& cfg);

struct ExpertQLosses {
  float q_loss = 0.0f;
  std::optional<float> expert_loss;
};

// Joint Q_A/E_A step on the composed values, then (if examples exist) an
// E_A regression step on expert labels. Throws InsufficientBuffer.
ExpertQLosses update_expert_q(AgentNets& nets, const ReplayBuffer& buffer, const ExpertBuffer& expert,
                              const TrainConfig& cfg, Rng& rng);
float update_expert_q_on(AgentNets& nets, std::span<const Transition> batch, const TrainConfig& cfg);
float update_expert_on(AgentNets& nets, std::span<const ExpertExample> examples, const TrainConfig& cfg);

// Max (or mean) over legal actions of raw Q_A at the standard initial board.
float initial_q(nn::Network<float>& q_net, QReducer reducer = QReducer::Max);

struct MetricsRow {
  std::int64_t iter = 0;
  double eps = 0.0;
  std::optional<double> loss_q;
  std::optional<double> loss_expert;
  double initial_q = 0.0;
  std::optional<double> score;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  // Header `iter,eps,loss_q,loss_expert,initial_q,score`; absent values blank.
  std::string to_csv() const;
};

struct TrainHooks {
  // Called at eval_every boundaries; returns the evaluation score.
  std::function<double(AgentNets&, std::int64_t iter)> evaluate;
  // Called after each logged row.
  std::function<void(AgentNets&, const MetricsRow&)> on_log;
};

struct TrainResult {
  AgentNets nets;
  MetricsLog log;
};

TrainResult train(const TrainConfig& cfg, PolicyKind opponent, const ExpertBuffer& expert,
                  const TrainHooks& hooks = {});

}  // namespace xq
