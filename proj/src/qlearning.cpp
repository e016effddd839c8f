#include "xq/qlearning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "xq/evaluation.hpp"

namespace xq {

using nn::Matrix;
using nn::Mode;

ActionMask legal_action_mask(const Board& b) {
  ActionMask mask;
  for (Move m : legal_moves(b)) mask.set(static_cast<std::size_t>(m.index));
  return mask;
}

// --- buffers ----------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  items_.reserve(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
    return;
  }
  items_[head_] = t;
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay buffer index");
  return items_[(head_ + i) % items_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw InsufficientBuffer("cannot sample an empty replay buffer");
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(items_[uniform_index(rng, items_.size())]);
  return out;
}

ExpertBuffer::ExpertBuffer(std::vector<ExpertExample> examples, std::size_t capacity) : examples_(std::move(examples)) {
  if (examples_.size() > capacity) examples_.resize(capacity);
}

std::vector<ExpertExample> ExpertBuffer::sample(std::size_t n, Rng& rng) const {
  if (examples_.empty()) throw InsufficientBuffer("expert buffer is empty");
  std::vector<ExpertExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(examples_[uniform_index(rng, examples_.size())]);
  return out;
}

// --- configuration ------------------------------------------------------------

std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::DoubleDueling: return "double-dueling";
    case Algorithm::ExpertQ: return "expert-q";
    case Algorithm::ExpertQNoExamples: return "expert-q-noex";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "double-dueling") return Algorithm::DoubleDueling;
  if (name == "expert-q") return Algorithm::ExpertQ;
  if (name == "expert-q-noex") return Algorithm::ExpertQNoExamples;
  throw ConfigError("unknown algorithm '" + std::string(name) + "' (double-dueling, expert-q, expert-q-noex)");
}

std::string_view to_string(QReducer r) noexcept { return r == QReducer::Max ? "max" : "mean"; }

QReducer parse_reducer(std::string_view name) {
  if (name == "max") return QReducer::Max;
  if (name == "mean") return QReducer::Mean;
  throw ConfigError("unknown initial-Q reducer '" + std::string(name) + "' (max, mean)");
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_iter < 0) throw ConfigError("max_iter must be non-negative");
  if (sync_every <= 0) throw ConfigError("sync_every must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (!(eps_end >= 0.0 && eps_start <= 1.0 && eps_start >= eps_end)) {
    throw ConfigError("need 0 <= eps_end <= eps_start <= 1");
  }
  if (buffer_capacity == 0) throw ConfigError("buffer capacity must be positive");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (eval_rounds <= 0) throw ConfigError("eval_rounds must be positive");
  if (architecture.filters <= 0 || architecture.conv_layers <= 0 || architecture.fc_units <= 0) {
    throw ConfigError("architecture sizes must be positive");
  }
  if (!(architecture.dropout >= 0.0f && architecture.dropout < 1.0f)) throw ConfigError("dropout must be in [0, 1)");
}

// --- networks -------------------------------------------------------------------

void AgentNets::sync() {
  q_b = q_a;
  if (e_a) e_b = *e_a;
}

AgentNets make_agent(const TrainConfig& cfg) {
  AgentNets nets;
  nets.algorithm = cfg.algorithm;
  const nn::AdamOptions adam{cfg.learning_rate};
  const bool dueling = cfg.algorithm == Algorithm::DoubleDueling;
  nets.q_a = nn::build_network<float>(dueling ? nn::NetworkRole::Dueling : nn::NetworkRole::QValues, cfg.architecture,
                                      derive_seed(cfg.seed, 101));
  nets.q_b = nets.q_a;
  nets.q_opt = nn::Adam<float>(nets.q_a, adam);
  if (!dueling) {
    nets.e_a = nn::build_network<float>(nn::NetworkRole::StateValue, cfg.architecture, derive_seed(cfg.seed, 102));
    nets.e_b = nets.e_a;
    nets.e_opt = nn::Adam<float>(*nets.e_a, adam);
  }
  return nets;
}

// --- action selection -----------------------------------------------------------

double epsilon_at(std::int64_t iter, const TrainConfig& cfg) {
  if (cfg.max_iter <= 0) return cfg.eps_end;
  const double frac = static_cast<double>(iter) / static_cast<double>(cfg.max_iter);
  const double eps = (1.0 - frac) * cfg.eps_start + frac * cfg.eps_end;
  return std::clamp(eps, cfg.eps_end, cfg.eps_start);
}

namespace {

template <typename T>
std::array<T, kNumActions> compose_impl(std::span<const T, kNumActions> q_raw, T state_value) {
  const T mean = std::accumulate(q_raw.begin(), q_raw.end(), T(0)) / T(kNumActions);
  std::array<T, kNumActions> out;
  for (int a = 0; a < kNumActions; ++a) out[a] = q_raw[a] - mean + state_value;
  return out;
}

template <typename T>
void compose_backward_impl(std::span<const int> actions, std::span<const T> grad, Matrix<T>& gq, Matrix<T>& ge) {
  const auto n = static_cast<Eigen::Index>(actions.size());
  if (grad.size() != actions.size()) throw ConfigError("one gradient per action expected");
  gq.resize(kNumActions, n);
  ge.resize(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const T g = grad[static_cast<std::size_t>(j)];
    gq.col(j).setConstant(-g / T(kNumActions));
    gq(actions[static_cast<std::size_t>(j)], j) += g;
    ge(0, j) = g;
  }
}

}  // namespace

void compose_q_backward(std::span<const int> actions, std::span<const float> grad, Matrix<float>& grad_q,
                        Matrix<float>& grad_e) {
  compose_backward_impl(actions, grad, grad_q, grad_e);
}

void compose_q_backward(std::span<const int> actions, std::span<const double> grad, Matrix<double>& grad_q,
                        Matrix<double>& grad_e) {
  compose_backward_impl(actions, grad, grad_q, grad_e);
}

std::array<float, kNumActions> compose_q(std::span<const float, kNumActions> q_raw, float state_value) {
  return compose_impl(q_raw, state_value);
}

std::array<double, kNumActions> compose_q(std::span<const double, kNumActions> q_raw, double state_value) {
  return compose_impl(q_raw, state_value);
}

int masked_argmax(std::span<const float> values, const ActionMask& legal) {
  int best = -1;
  float best_value = -std::numeric_limits<float>::infinity();
  for (std::size_t a = 0; a < values.size() && a < legal.size(); ++a) {
    if (!legal.test(a)) continue;
    if (best < 0 || values[a] > best_value) {
      best = static_cast<int>(a);
      best_value = values[a];
    }
  }
  if (best < 0) throw NoLegalMove("no legal action to choose from");
  return best;
}

std::array<float, kNumActions> q_values(nn::Network<float>& net, const Board& b) {
  const StateEncoding s = encode_state(b, b.to_move());
  const nn::Tensor<float> x = nn::encode_batch<float>(std::span(&s, 1));
  const nn::Tensor<float>& out = net.forward(x, Mode::Inference);
  if (out.data.rows() != kNumActions) throw ConfigError("Q network must have 65 outputs");
  std::array<float, kNumActions> q;
  for (int a = 0; a < kNumActions; ++a) q[a] = out.data(a, 0);
  return q;
}

Move select_action(nn::Network<float>& q_net, const Board& b, double eps, Rng& rng) {
  const std::vector<Move> moves = legal_moves(b);
  if (moves.empty()) throw NoLegalMove("no legal move on a finished game");
  const bool explore = uniform01(rng) < eps;
  if (explore) return moves[uniform_index(rng, moves.size())];
  if (moves.size() == 1) return moves.front();
  const auto q = q_values(q_net, b);
  return Move{masked_argmax(q, legal_action_mask(b))};
}

GameOutcome rollout_episode(AgentNets& nets, ScriptedPolicy& opponent, Color agent_color, double eps,
                            ReplayBuffer& buffer, const TrainConfig& cfg, Rng& rng) {
  struct Decision {
    StateEncoding state;
    int action;
    ActionMask legal;
  };
  std::vector<Decision> decisions;
  Board b = Board::initial();
  while (!is_terminal(b)) {
    if (b.to_move() == agent_color) {
      const Move m = select_action(nets.q_a, b, eps, rng);
      decisions.push_back({encode_state(b, agent_color), m.index, legal_action_mask(b)});
      b = apply_move(b, m);
    } else {
      b = apply_move(b, opponent.choose(b));
    }
  }
  const GameOutcome outcome = game_outcome(b);
  const double z = outcome.result_for(agent_color);
  const std::size_t T = decisions.size();
  for (std::size_t t = 0; t < T; ++t) {
    Transition tr;
    tr.state = decisions[t].state;
    tr.action = decisions[t].action;
    tr.reward = static_cast<float>(std::pow(cfg.gamma, static_cast<double>(T - 1 - t)) * z);
    tr.terminal = t + 1 == T;
    if (tr.terminal) {
      tr.next_state = encode_state(b, agent_color);
    } else {
      tr.next_state = decisions[t + 1].state;
      tr.legal_next = decisions[t + 1].legal;
    }
    buffer.push(tr);
  }
  return outcome;
}

// --- updates ----------------------------------------------------------------------

namespace {

template <typename Item, typename Fn>
nn::Tensor<float> encode_items(std::span<const Item> items, Fn&& state_of) {
  std::vector<StateEncoding> states;
  states.reserve(items.size());
  for (const Item& it : items) states.push_back(state_of(it));
  return nn::encode_batch<float>(states);
}

void check_finite(float loss, const char* what) {
  if (!std::isfinite(loss)) throw NonFiniteGradient(std::string("non-finite ") + what + " loss");
}

}  // namespace

std::vector<float> td_targets(AgentNets& nets, std::span<const Transition> batch, const TrainConfig& cfg) {
  std::vector<float> y(batch.size());
  const bool any_open = std::any_of(batch.begin(), batch.end(), [](const Transition& t) { return !t.terminal; });
  if (!any_open) {
    for (std::size_t j = 0; j < batch.size(); ++j) y[j] = batch[j].reward;
    return y;
  }
  const nn::Tensor<float> x = encode_items(batch, [](const Transition& t) { return t.next_state; });
  const Matrix<float> q = nets.q_b.forward(x, Mode::Inference).data;
  Matrix<float> e;
  if (nets.has_expert()) e = nets.e_b->forward(x, Mode::Inference).data;

  std::array<float, kNumActions> column;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Transition& t = batch[j];
    if (t.terminal) {
      y[j] = t.reward;
      continue;
    }
    for (int a = 0; a < kNumActions; ++a) column[a] = q(a, static_cast<Eigen::Index>(j));
    const int best = masked_argmax(column, t.legal_next);
    float value = column[best];
    if (nets.has_expert()) value = compose_q(column, e(0, static_cast<Eigen::Index>(j)))[best];
    y[j] = t.reward + static_cast<float>(cfg.gamma) * value;
  }
  return y;
}

float update_baseline_on(AgentNets& nets, std::span<const Transition> batch, const TrainConfig& cfg) {
  const std::vector<float> targets = td_targets(nets, batch, cfg);
  const nn::Tensor<float> x = encode_items(batch, [](const Transition& t) { return t.state; });
  const Matrix<float>& out = nets.q_a.forward(x, Mode::Train).data;
  const std::size_t n = batch.size();
  std::vector<float> pred(n), grad(n);
  for (std::size_t j = 0; j < n; ++j) pred[j] = out(batch[j].action, static_cast<Eigen::Index>(j));
  const float loss = nn::mse_loss<float>(pred, targets, grad);
  check_finite(loss, "Q");
  Matrix<float> g = Matrix<float>::Zero(out.rows(), out.cols());
  for (std::size_t j = 0; j < n; ++j) g(batch[j].action, static_cast<Eigen::Index>(j)) = grad[j];
  nets.q_a.backward(g);
  nets.q_opt.step(nets.q_a);
  return loss;
}

float update_baseline(AgentNets& nets, const ReplayBuffer& buffer, const TrainConfig& cfg, Rng& rng) {
  if (buffer.size() < cfg.batch) throw InsufficientBuffer("replay buffer holds fewer transitions than one batch");
  const std::vector<Transition> batch = buffer.sample(cfg.batch, rng);
  return update_baseline_on(nets, batch, cfg);
}

float update_expert_q_on(AgentNets& nets, std::span<const Transition> batch, const TrainConfig& cfg) {
  if (!nets.has_expert()) throw ConfigError("expert Q update needs an expert network");
  const std::vector<float> targets = td_targets(nets, batch, cfg);
  const nn::Tensor<float> x = encode_items(batch, [](const Transition& t) { return t.state; });
  const Matrix<float>& q = nets.q_a.forward(x, Mode::Train).data;
  const Matrix<float>& e = nets.e_a->forward(x, Mode::Train).data;
  const std::size_t n = batch.size();
  const Matrix<float> q_mean = q.colwise().mean();
  std::vector<float> pred(n), grad(n);
  std::vector<int> actions(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    actions[j] = batch[j].action;
    pred[j] = q(actions[j], col) - q_mean(0, col) + e(0, col);
  }
  const float loss = nn::mse_loss<float>(pred, targets, grad);
  check_finite(loss, "Q");

  Matrix<float> gq, ge;
  compose_q_backward(actions, grad, gq, ge);
  nets.q_a.backward(gq);
  nets.e_a->backward(ge);
  nets.q_opt.step(nets.q_a);
  nets.e_opt->step(*nets.e_a);
  return loss;
}

float update_expert_on(AgentNets& nets, std::span<const ExpertExample> examples, const TrainConfig& cfg) {
  if (!nets.has_expert()) throw ConfigError("expert regression needs an expert network");
  const nn::Tensor<float> x = encode_items(examples, [](const ExpertExample& e) { return e.state; });
  const std::size_t n = examples.size();
  std::vector<float> labels(n), pred(n), grad(n);
  for (std::size_t j = 0; j < n; ++j) labels[j] = examples[j].label;

  // With expert_loss_on_copy the error is read off E_B and pushed through
  // E_A's graph; E_B itself has no trainable path.
  Matrix<float> copy_out;
  if (cfg.expert_loss_on_copy) copy_out = nets.e_b->forward(x, Mode::Inference).data;
  const Matrix<float>& out = nets.e_a->forward(x, Mode::Train).data;
  const Matrix<float>& source = cfg.expert_loss_on_copy ? copy_out : out;
  for (std::size_t j = 0; j < n; ++j) pred[j] = source(0, static_cast<Eigen::Index>(j));
  const float loss = nn::mse_loss<float>(pred, labels, grad);
  check_finite(loss, "expert");

  Matrix<float> g(1, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) g(0, static_cast<Eigen::Index>(j)) = grad[j];
  nets.e_a->backward(g);
  nets.e_opt->step(*nets.e_a);
  return loss;
}

ExpertQLosses update_expert_q(AgentNets& nets, const ReplayBuffer& buffer, const ExpertBuffer& expert,
                              const TrainConfig& cfg, Rng& rng) {
  if (buffer.size() < cfg.batch) throw InsufficientBuffer("replay buffer holds fewer transitions than one batch");
  ExpertQLosses losses;
  const std::vector<Transition> batch = buffer.sample(cfg.batch, rng);
  losses.q_loss = update_expert_q_on(nets, batch, cfg);
  if (!expert.empty()) {
    const std::vector<ExpertExample> examples = expert.sample(cfg.batch, rng);
    losses.expert_loss = update_expert_on(nets, examples, cfg);
  }
  return losses;
}

float initial_q(nn::Network<float>& q_net, QReducer reducer) {
  const Board start = Board::initial();
  const auto q = q_values(q_net, start);
  const std::vector<Move> moves = legal_moves(start);
  float best = -std::numeric_limits<float>::infinity();
  double sum = 0.0;
  for (Move m : moves) {
    best = std::max(best, q[m.index]);
    sum += q[m.index];
  }
  return reducer == QReducer::Max ? best : static_cast<float>(sum / static_cast<double>(moves.size()));
}

// --- metrics & training loop ---------------------------------------------------------

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << "iter,eps,loss_q,loss_expert,initial_q,score\n";
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const MetricsRow& r : rows) {
    os << r.iter << ',' << num(r.eps) << ',' << (r.loss_q ? num(*r.loss_q) : "") << ','
       << (r.loss_expert ? num(*r.loss_expert) : "") << ',' << num(r.initial_q) << ','
       << (r.score ? num(*r.score) : "") << '\n';
  }
  return os.str();
}

TrainResult train(const TrainConfig& cfg, PolicyKind opponent_kind, const ExpertBuffer& expert,
                  const TrainHooks& hooks) {
  cfg.validate();
  TrainResult result{make_agent(cfg), {}};
  AgentNets& nets = result.nets;
  if (cfg.max_iter == 0) return result;

  const ExpertBuffer no_examples;
  const ExpertBuffer& examples = cfg.algorithm == Algorithm::ExpertQ ? expert : no_examples;
  ReplayBuffer buffer(cfg.buffer_capacity);
  ScriptedPolicy opponent(opponent_kind, derive_seed(cfg.seed, 201));
  Rng explore_rng(derive_seed(cfg.seed, 202));
  Rng sample_rng(derive_seed(cfg.seed, 203));

  double q_loss_sum = 0.0, e_loss_sum = 0.0;
  int q_loss_count = 0, e_loss_count = 0;

  for (std::int64_t iter = 0; iter < cfg.max_iter; ++iter) {
    const Color agent_color = iter % 2 == 0 ? Color::Black : Color::White;
    rollout_episode(nets, opponent, agent_color, epsilon_at(iter, cfg), buffer, cfg, explore_rng);

    if (buffer.size() >= cfg.batch) {
      if (cfg.algorithm == Algorithm::DoubleDueling) {
        q_loss_sum += update_baseline(nets, buffer, cfg, sample_rng);
        ++q_loss_count;
      } else {
        const ExpertQLosses l = update_expert_q(nets, buffer, examples, cfg, sample_rng);
        q_loss_sum += l.q_loss;
        ++q_loss_count;
        if (l.expert_loss) {
          e_loss_sum += *l.expert_loss;
          ++e_loss_count;
        }
      }
    }

    const std::int64_t done = iter + 1;
    if (done % cfg.sync_every == 0) nets.sync();

    const bool eval_now = cfg.eval_every > 0 && done % cfg.eval_every == 0;
    if (done % cfg.log_every == 0 || eval_now || done == cfg.max_iter) {
      MetricsRow row;
      row.iter = done;
      row.eps = epsilon_at(done, cfg);
      if (q_loss_count > 0) row.loss_q = q_loss_sum / q_loss_count;
      if (e_loss_count > 0) row.loss_expert = e_loss_sum / e_loss_count;
      row.initial_q = initial_q(nets.q_a, cfg.initial_q_reducer);
      if (eval_now) {
        row.score = hooks.evaluate
                        ? hooks.evaluate(nets, done)
                        : evaluate(nets.q_a, opponent_kind, cfg.eval_rounds,
                                   derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(done)))
                              .score;
      }
      result.log.rows.push_back(row);
      if (hooks.on_log) hooks.on_log(nets, row);
      q_loss_sum = e_loss_sum = 0.0;
      q_loss_count = e_loss_count = 0;
    }
  }
  return result;
}

}  // namespace xq
