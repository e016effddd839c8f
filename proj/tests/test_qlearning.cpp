#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "xq/errors.hpp"
#include "xq/qlearning.hpp"

using namespace xq;
using nn::Matrix;

namespace {

nn::BackboneOptions tiny_arch() {
  nn::BackboneOptions o;
  o.filters = 4;
  o.conv_layers = 1;
  o.fc_units = 16;
  return o;
}

TrainConfig tiny_config(Algorithm algo, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.algorithm = algo;
  cfg.architecture = tiny_arch();
  cfg.max_iter = 40;
  cfg.batch = 16;
  cfg.log_every = 10;
  cfg.eval_every = 0;
  cfg.seed = seed;
  return cfg;
}

// A single dense layer over the raw planes: outputs are bias + W x, so a zero
// W makes every state produce exactly the bias vector.
nn::Network<float> dense_net(int outputs, const std::vector<float>& bias, bool zero_weights = true) {
  nn::LayerSpec fc;
  fc.kind = nn::LayerKind::FullyConnected;
  fc.in = 128;
  fc.out = outputs;
  nn::Network<float> net(nn::kBoardInput, {fc});
  net.initialize(5);
  auto& layer = std::get<nn::FullyConnected<float>>(net.layers()[0]);
  if (zero_weights) layer.weight.value.setZero();
  for (int i = 0; i < outputs; ++i) layer.bias.value(i, 0) = bias[static_cast<std::size_t>(i)];
  return net;
}

AgentNets dense_agent(Algorithm algo, const std::vector<float>& q_bias, float e_bias = 0.0f,
                      bool zero_weights = true) {
  AgentNets nets;
  nets.algorithm = algo;
  nets.q_a = dense_net(kNumActions, q_bias, zero_weights);
  nets.q_b = nets.q_a;
  nets.q_opt = nn::Adam<float>(nets.q_a);
  if (algo != Algorithm::DoubleDueling) {
    nets.e_a = dense_net(1, {e_bias}, zero_weights);
    nets.e_b = nets.e_a;
    nets.e_opt = nn::Adam<float>(*nets.e_a);
  }
  return nets;
}

std::vector<Board> midgame_boards(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Board> out;
  while (static_cast<int>(out.size()) < n) {
    Board b = Board::initial();
    const int plies = static_cast<int>(uniform_index(rng, 58));
    for (int i = 0; i < plies && !is_terminal(b); ++i) {
      const auto moves = legal_moves(b);
      b = apply_move(b, moves[uniform_index(rng, moves.size())]);
    }
    if (!is_terminal(b)) out.push_back(b);
  }
  return out;
}

Transition transition_from(const Board& b, int action, float reward, bool terminal, const Board& next) {
  Transition t;
  t.state = encode_state(b, b.to_move());
  t.action = action;
  t.reward = reward;
  t.terminal = terminal;
  t.next_state = encode_state(next, b.to_move());
  if (!terminal) t.legal_next = legal_action_mask(next);
  return t;
}

}  // namespace

TEST(Epsilon, LinearSchedule) {
  TrainConfig cfg;
  cfg.max_iter = 1000;
  EXPECT_DOUBLE_EQ(epsilon_at(0, cfg), 1.0);
  EXPECT_DOUBLE_EQ(epsilon_at(1000, cfg), 0.01);
  EXPECT_NEAR(epsilon_at(500, cfg), 0.505, 1e-12);
  EXPECT_DOUBLE_EQ(epsilon_at(5000, cfg), 0.01);
}

TEST(Compose, ConstantQGivesStateValue) {
  std::array<float, kNumActions> q;
  q.fill(3.25f);
  for (float v : compose_q(q, 0.5f)) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Compose, MeanIsStateValueAndArgmaxInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, kNumActions> q;
    for (double& x : q) x = 4.0 * uniform01(rng) - 2.0;
    const double e = 4.0 * uniform01(rng) - 2.0;
    const auto out = compose_q(std::span<const double, kNumActions>(q), e);
    double mean = 0.0;
    for (double x : out) mean += x / kNumActions;
    EXPECT_NEAR(mean, e, 1e-12);
    EXPECT_EQ(std::max_element(out.begin(), out.end()) - out.begin(), std::max_element(q.begin(), q.end()) - q.begin());
  }
}

TEST(Compose, BackwardMatchesDefinition) {
  const std::vector<int> actions{0, 64};
  const std::vector<double> grad{0.5, -2.0};
  Matrix<double> gq, ge;
  compose_q_backward(actions, grad, gq, ge);
  ASSERT_EQ(gq.rows(), 65);
  ASSERT_EQ(gq.cols(), 2);
  EXPECT_DOUBLE_EQ(gq(0, 0), 0.5 - 0.5 / 65);
  EXPECT_DOUBLE_EQ(gq(1, 0), -0.5 / 65);
  EXPECT_DOUBLE_EQ(gq(64, 1), -2.0 + 2.0 / 65);
  EXPECT_DOUBLE_EQ(ge(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(ge(0, 1), -2.0);
  EXPECT_NEAR(gq.col(0).sum(), 0.0, 1e-15);
}

TEST(MaskedArgmax, LegalOnlyLowestIndexTies) {
  std::array<float, kNumActions> v{};
  v[64] = 10.0f;
  v[5] = 1.0f;
  v[9] = 1.0f;
  ActionMask legal;
  legal.set(5);
  legal.set(9);
  legal.set(20);
  EXPECT_EQ(masked_argmax(v, legal), 5);
  EXPECT_THROW(masked_argmax(v, ActionMask{}), NoLegalMove);
}

TEST(SelectAction, NeverIllegal) {
  nn::Network<float> q = nn::build_network<float>(nn::NetworkRole::QValues, tiny_arch(), 3);
  // Make the illegal-most-of-the-time PASS output dominate.
  std::get<nn::FullyConnected<float>>(q.layers().back()).bias.value(64, 0) = 100.0f;
  const auto boards = midgame_boards(1000, 4);
  Rng rng(5);
  for (int trial = 0; trial < 100000; ++trial) {
    const Board& b = boards[static_cast<std::size_t>(trial) % boards.size()];
    const double eps = uniform01(rng);
    const Move m = select_action(q, b, eps, rng);
    ASSERT_TRUE(is_legal(b, m)) << b.to_text() << to_string(m);
  }
}

TEST(SelectAction, ExploreIsUniform) {
  nn::Network<float> q = nn::build_network<float>(nn::NetworkRole::QValues, tiny_arch(), 6);
  Rng rng(7);
  std::map<int, int> freq;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++freq[select_action(q, Board::initial(), 1.0, rng).index];
  ASSERT_EQ(freq.size(), 4u);
  // chi-square with 3 degrees of freedom, 99.9% quantile 16.27
  double chi2 = 0.0;
  for (auto [m, c] : freq) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  EXPECT_LT(chi2, 16.27);
}

TEST(SelectAction, GreedyIgnoresComposition) {
  nn::Network<float> q = nn::build_network<float>(nn::NetworkRole::QValues, tiny_arch(), 8);
  Rng rng(9);
  for (const Board& b : midgame_boards(200, 10)) {
    const auto raw = q_values(q, b);
    const auto composed = compose_q(raw, 0.37f);
    const ActionMask legal = legal_action_mask(b);
    EXPECT_EQ(select_action(q, b, 0.0, rng).index, masked_argmax(composed, legal));
  }
}

TEST(SelectAction, TerminalThrows) {
  nn::Network<float> q = nn::build_network<float>(nn::NetworkRole::QValues, tiny_arch(), 8);
  Rng rng(1);
  EXPECT_THROW(select_action(q, Board::from_masks(~0ull, 0, Color::White), 0.0, rng), NoLegalMove);
}

TEST(ReplayBuffer, FifoAtCapacity) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 15; ++i) {
    Transition t;
    t.action = i;
    buf.push(t);
  }
  ASSERT_EQ(buf.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(buf.at(i).action, static_cast<int>(i) + 5);
  Rng rng(1);
  for (const Transition& t : buf.sample(100, rng)) EXPECT_GE(t.action, 5);
  EXPECT_THROW(ReplayBuffer(4).sample(1, rng), InsufficientBuffer);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(Rollout, DiscountedRewardsAndLinks) {
  const TrainConfig cfg = tiny_config(Algorithm::ExpertQ);
  AgentNets nets = make_agent(cfg);
  ScriptedPolicy opp(PolicyKind::Random, 3);
  Rng rng(4);
  int wins = 0, draws = 0;
  for (int game = 0; game < 60; ++game) {
    ReplayBuffer buf(200);
    const Color color = game % 2 ? Color::White : Color::Black;
    const GameOutcome out = rollout_episode(nets, opp, color, 1.0, buf, cfg, rng);
    const int z = out.result_for(color);
    wins += z > 0;
    draws += z == 0;
    const std::size_t T = buf.size();
    ASSERT_GE(T, 1u);
    for (std::size_t t = 0; t < T; ++t) {
      const Transition& tr = buf.at(t);
      const double expected = std::pow(0.99, static_cast<double>(T - 1 - t)) * z;
      EXPECT_FLOAT_EQ(tr.reward, static_cast<float>(expected));
      EXPECT_LE(std::abs(tr.reward), 1.0f);
      EXPECT_EQ(tr.terminal, t + 1 == T);
      if (t + 1 < T) {
        EXPECT_EQ(tr.next_state, buf.at(t + 1).state);
        EXPECT_TRUE(tr.legal_next.any());
      }
      // The agent's own pieces are always plane 0.
      const Board s = Board::from_masks(color == Color::Black ? tr.state.own : tr.state.other,
                                        color == Color::Black ? tr.state.other : tr.state.own, color);
      EXPECT_TRUE(is_legal(s, Move{tr.action}));
    }
    if (z > 0 && T >= 3) {
      EXPECT_NEAR(buf.at(T - 3).reward, 0.9801f, 1e-6f);
      EXPECT_EQ(buf.at(T - 1).reward, 1.0f);
    }
  }
  EXPECT_GT(wins, 0);
}

TEST(Rollout, DrawGivesZeroRewards) {
  // Random play draws a few percent of the time.
  const TrainConfig cfg = tiny_config(Algorithm::DoubleDueling);
  AgentNets nets = make_agent(cfg);
  ScriptedPolicy opp(PolicyKind::Random, 3);
  Rng rng(11);
  int draws_seen = 0;
  for (int game = 0; game < 400 && draws_seen == 0; ++game) {
    ReplayBuffer buf(200);
    const GameOutcome out = rollout_episode(nets, opp, Color::Black, 1.0, buf, cfg, rng);
    if (out.winner != Winner::Draw) continue;
    ++draws_seen;
    for (std::size_t t = 0; t < buf.size(); ++t) EXPECT_EQ(buf.at(t).reward, 0.0f);
  }
  EXPECT_GT(draws_seen, 0);
}

TEST(Targets, TerminalAndZeroGamma) {
  AgentNets nets = dense_agent(Algorithm::DoubleDueling, std::vector<float>(65, 0.3f));
  const Board b = Board::initial();
  const Board next = apply_move(apply_move(b, Move::at(2, 3)), Move::at(2, 2));
  TrainConfig cfg;
  const std::vector<Transition> batch{transition_from(b, 19, 1.0f, true, next),
                                      transition_from(b, 19, -0.5f, false, next)};
  auto y = td_targets(nets, batch, cfg);
  EXPECT_FLOAT_EQ(y[0], 1.0f);
  EXPECT_FLOAT_EQ(y[1], -0.5f + 0.99f * 0.3f);
  cfg.gamma = 0.0;
  y = td_targets(nets, batch, cfg);
  EXPECT_FLOAT_EQ(y[1], -0.5f);
}

TEST(Targets, ScalarOracleBaseline) {
  std::vector<float> table(65);
  for (int a = 0; a < 65; ++a) table[static_cast<std::size_t>(a)] = std::sin(static_cast<float>(a)) * 2.0f;
  AgentNets nets = dense_agent(Algorithm::DoubleDueling, table);
  TrainConfig cfg;
  std::vector<Transition> batch;
  for (const Board& b : midgame_boards(30, 12)) {
    const Move m = legal_moves(b).front();
    const Board after = apply_move(b, m);
    if (is_terminal(after)) continue;
    batch.push_back(transition_from(b, m.index, 0.25f, false, after));
  }
  const auto y = td_targets(nets, batch, cfg);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    float best = -1e9f;
    for (int a = 0; a < 65; ++a)
      if (batch[j].legal_next.test(static_cast<std::size_t>(a))) best = std::max(best, table[static_cast<std::size_t>(a)]);
    EXPECT_FLOAT_EQ(y[j], 0.25f + 0.99f * best);
  }
}

TEST(Targets, ScalarOracleComposed) {
  std::vector<float> table(65);
  double mean = 0.0;
  for (int a = 0; a < 65; ++a) {
    table[static_cast<std::size_t>(a)] = std::cos(1.7f * static_cast<float>(a));
    mean += table[static_cast<std::size_t>(a)] / 65.0;
  }
  const float e = -0.4f;
  AgentNets nets = dense_agent(Algorithm::ExpertQ, table, e);
  TrainConfig cfg;
  const Board b = Board::initial();
  const Board next = apply_move(apply_move(b, Move::at(2, 3)), Move::at(2, 4));
  const Transition t = transition_from(b, 19, 0.0f, false, next);
  int best = -1;
  for (int a = 0; a < 65; ++a)
    if (t.legal_next.test(static_cast<std::size_t>(a)) && (best < 0 || table[a] > table[best])) best = a;
  const auto y = td_targets(nets, std::vector<Transition>{t}, cfg);
  EXPECT_NEAR(y[0], 0.99 * (table[static_cast<std::size_t>(best)] - mean + e), 1e-6);
}

TEST(Targets, DoNotTouchTargetNetworks) {
  const TrainConfig cfg = tiny_config(Algorithm::ExpertQ);
  AgentNets nets = make_agent(cfg);
  const std::string qb = nn::serialize_model(nets.q_b);
  const std::string eb = nn::serialize_model(*nets.e_b);
  ReplayBuffer buf(500);
  ScriptedPolicy opp(PolicyKind::Random, 1);
  Rng rng(2);
  for (int i = 0; i < 5; ++i) rollout_episode(nets, opp, Color::Black, 1.0, buf, cfg, rng);
  const std::vector<Transition> batch = buf.sample(32, rng);
  td_targets(nets, batch, cfg);
  update_expert_q_on(nets, batch, cfg);
  EXPECT_EQ(nn::serialize_model(nets.q_b), qb);
  EXPECT_EQ(nn::serialize_model(*nets.e_b), eb);
  EXPECT_NE(nn::serialize_model(nets.q_a), qb);
}

TEST(BaselineUpdate, ExactTargetsLeaveParameters) {
  std::vector<float> bias(65);
  for (int a = 0; a < 65; ++a) bias[static_cast<std::size_t>(a)] = 0.01f * static_cast<float>(a);
  AgentNets nets = dense_agent(Algorithm::DoubleDueling, bias, 0.0f, false);
  const Board b = Board::initial();
  const auto q = q_values(nets.q_a, b);
  // Terminal transitions whose reward equals the current prediction.
  const std::vector<Transition> batch{transition_from(b, 19, q[19], true, b), transition_from(b, 37, q[37], true, b)};
  const std::string before = nn::serialize_model(nets.q_a);
  TrainConfig cfg;
  EXPECT_NEAR(update_baseline_on(nets, batch, cfg), 0.0f, 1e-12f);
  EXPECT_EQ(nn::serialize_model(nets.q_a), before);
}

TEST(BaselineUpdate, LossMatchesHandComputedMse) {
  std::vector<float> bias(65);
  for (int a = 0; a < 65; ++a) bias[static_cast<std::size_t>(a)] = 0.02f * static_cast<float>(a) - 0.5f;
  AgentNets nets = dense_agent(Algorithm::DoubleDueling, bias, 0.0f, false);
  TrainConfig cfg;
  std::vector<Transition> batch;
  std::vector<float> expected_pred, expected_target;
  for (const Board& b : midgame_boards(8, 13)) {
    const Move m = legal_moves(b).back();
    const Board after = apply_move(b, m);
    const bool terminal = is_terminal(after);
    batch.push_back(transition_from(b, m.index, 0.5f, terminal, after));
    expected_pred.push_back(q_values(nets.q_a, b)[m.index]);
  }
  expected_target = td_targets(nets, batch, cfg);
  double mse = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double d = expected_pred[j] - expected_target[j];
    mse += d * d / static_cast<double>(batch.size());
  }
  EXPECT_NEAR(update_baseline_on(nets, batch, cfg), mse, 1e-5);
}

TEST(BaselineUpdate, SingleTransitionConverges) {
  TrainConfig cfg = tiny_config(Algorithm::DoubleDueling);
  cfg.architecture.dropout = 0.0f;
  AgentNets nets = make_agent(cfg);
  const Board b = Board::initial();
  // Target far from the initial prediction so 100 steps stay short of Adam's overshoot.
  const std::vector<Transition> batch(16, transition_from(b, 19, -1.0f, true, b));
  std::vector<float> losses;
  for (int i = 0; i < 100; ++i) losses.push_back(update_baseline_on(nets, batch, cfg));
  int decreasing = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) decreasing += losses[i] < losses[i - 1];
  EXPECT_GE(decreasing, 90);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(BaselineUpdate, NeedsFullBatch) {
  const TrainConfig cfg = tiny_config(Algorithm::DoubleDueling);
  AgentNets nets = make_agent(cfg);
  ReplayBuffer buf(100);
  Rng rng(1);
  buf.push(Transition{});
  EXPECT_THROW(update_baseline(nets, buf, cfg, rng), InsufficientBuffer);
  EXPECT_THROW(update_expert_q(nets, buf, ExpertBuffer{}, tiny_config(Algorithm::ExpertQ), rng), InsufficientBuffer);
}

TEST(ExpertUpdate, ZeroExpertConstantQ) {
  AgentNets nets = dense_agent(Algorithm::ExpertQ, std::vector<float>(65, 2.0f), 0.0f);
  TrainConfig cfg;
  const Board b = Board::initial();
  const std::vector<Transition> batch{transition_from(b, 19, 0.5f, true, b), transition_from(b, 26, -1.0f, true, b)};
  EXPECT_NEAR(update_expert_q_on(nets, batch, cfg), (0.25f + 1.0f) / 2.0f, 1e-6f);
}

TEST(ExpertUpdate, RegressionReachesLabel) {
  TrainConfig cfg;
  cfg.algorithm = Algorithm::ExpertQ;
  cfg.seed = 3;
  AgentNets nets = make_agent(cfg);
  Board b = Board::initial();
  b = apply_move(b, Move::at(2, 3));
  const ExpertExample ex{encode_state(b, Color::White), 1};
  const std::vector<ExpertExample> batch(64, ex);
  for (int i = 0; i < 500; ++i) update_expert_on(nets, batch, cfg);
  const StateEncoding s = ex.state;
  const float v = nets.e_a->forward(nn::encode_batch<float>(std::span(&s, 1)), nn::Mode::Inference).data(0, 0);
  EXPECT_NEAR(v, 1.0f, 0.05f);
}

TEST(ExpertUpdate, LiteralCopyVariantTrainsOnlyEA) {
  TrainConfig cfg = tiny_config(Algorithm::ExpertQ);
  cfg.expert_loss_on_copy = true;
  AgentNets nets = make_agent(cfg);
  const std::string eb = nn::serialize_model(*nets.e_b);
  const std::string ea = nn::serialize_model(*nets.e_a);
  const ExpertExample ex{encode_state(Board::initial(), Color::Black), -1};
  update_expert_on(nets, std::vector<ExpertExample>(8, ex), cfg);
  EXPECT_EQ(nn::serialize_model(*nets.e_b), eb);
  EXPECT_NE(nn::serialize_model(*nets.e_a), ea);
}

TEST(InitialQ, MaxAndMeanOverLegal) {
  std::vector<float> bias(65, 5.0f);  // illegal actions carry a large value
  bias[19] = 0.1f;
  bias[26] = 0.4f;
  bias[37] = -0.2f;
  bias[44] = 0.3f;
  nn::Network<float> q = dense_net(65, bias);
  EXPECT_FLOAT_EQ(initial_q(q, QReducer::Max), 0.4f);
  EXPECT_FLOAT_EQ(initial_q(q, QReducer::Mean), 0.15f);
}

TEST(Config, ParsingAndValidation) {
  EXPECT_EQ(parse_algorithm("double-dueling"), Algorithm::DoubleDueling);
  EXPECT_EQ(parse_algorithm("expert-q"), Algorithm::ExpertQ);
  EXPECT_EQ(parse_algorithm("expert-q-noex"), Algorithm::ExpertQNoExamples);
  EXPECT_THROW(parse_algorithm("dqn"), ConfigError);
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.eps_end = 0.5;
  cfg.eps_start = 0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.gamma = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.sync_every = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, ZeroIterationsReturnsFreshNetworks) {
  TrainConfig cfg = tiny_config(Algorithm::ExpertQ);
  cfg.max_iter = 0;
  const TrainResult r = train(cfg, PolicyKind::Random, {});
  EXPECT_TRUE(r.log.rows.empty());
  const AgentNets fresh = make_agent(cfg);
  EXPECT_EQ(nn::serialize_model(r.nets.q_a), nn::serialize_model(fresh.q_a));
  EXPECT_EQ(nn::serialize_model(*r.nets.e_a), nn::serialize_model(*fresh.e_a));
}

TEST(Train, SyncEveryIterationKeepsCopiesEqual) {
  TrainConfig cfg = tiny_config(Algorithm::ExpertQ);
  cfg.sync_every = 1;
  int checks = 0;
  TrainHooks hooks;
  hooks.on_log = [&](AgentNets& nets, const MetricsRow&) {
    EXPECT_EQ(nn::serialize_model(nets.q_a), nn::serialize_model(nets.q_b));
    EXPECT_EQ(nn::serialize_model(*nets.e_a), nn::serialize_model(*nets.e_b));
    ++checks;
  };
  cfg.log_every = 1;
  train(cfg, PolicyKind::Random, {}, hooks);
  EXPECT_EQ(checks, 40);
}

TEST(Train, CopiesLagUntilSync) {
  TrainConfig cfg = tiny_config(Algorithm::DoubleDueling);
  cfg.sync_every = 1000;
  const TrainResult r = train(cfg, PolicyKind::Random, {});
  EXPECT_EQ(nn::serialize_model(r.nets.q_b), nn::serialize_model(make_agent(cfg).q_b));
  EXPECT_NE(nn::serialize_model(r.nets.q_a), nn::serialize_model(r.nets.q_b));
}

TEST(Train, DeterministicLogs) {
  ExpertGenConfig gen;
  gen.pool_size = 2000;
  gen.keep = 500;
  const ExpertBuffer expert(generate_expert_examples(gen));
  TrainConfig cfg = tiny_config(Algorithm::ExpertQ, 9);
  cfg.eval_every = 20;
  const TrainResult a = train(cfg, PolicyKind::Stochastic, expert);
  const TrainResult b = train(cfg, PolicyKind::Stochastic, expert);
  EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
  EXPECT_EQ(nn::serialize_model(a.nets.q_a), nn::serialize_model(b.nets.q_a));
  cfg.seed = 10;
  EXPECT_NE(train(cfg, PolicyKind::Stochastic, expert).log.to_csv(), a.log.to_csv());
}

TEST(Train, LogColumnsPerAlgorithm) {
  ExpertGenConfig gen;
  gen.pool_size = gen.keep = 300;
  const ExpertBuffer expert(generate_expert_examples(gen));
  TrainConfig cfg = tiny_config(Algorithm::ExpertQ);
  cfg.eval_every = 20;
  const TrainResult with = train(cfg, PolicyKind::Random, expert);
  ASSERT_EQ(with.log.rows.size(), 4u);
  EXPECT_EQ(with.log.rows[0].iter, 10);
  EXPECT_TRUE(with.log.rows.back().loss_expert.has_value());
  EXPECT_TRUE(with.log.rows[1].score.has_value());
  EXPECT_FALSE(with.log.rows[0].score.has_value());
  EXPECT_DOUBLE_EQ(with.log.rows.back().eps, 0.01);

  cfg.algorithm = Algorithm::ExpertQNoExamples;
  const TrainResult without = train(cfg, PolicyKind::Random, expert);
  for (const MetricsRow& row : without.log.rows) EXPECT_FALSE(row.loss_expert.has_value());

  const std::string csv = with.log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,eps,loss_q,loss_expert,initial_q,score");
}
