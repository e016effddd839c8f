#include "xq/app.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xq/evaluation.hpp"
#include "xq/nn.hpp"
#include "xq/policies.hpp"

namespace xq::app {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error("failed writing " + path.string());
}

void append_csv(const fs::path& path, const std::string& header, const std::string& row) {
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw Error("cannot open " + path.string());
  if (fresh) f << header;
  f << row;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (checkpoint_every < 0) throw ConfigError("checkpoint cadence must be non-negative");
  if (train.algorithm == Algorithm::ExpertQ && !expert_file) throw ConfigError("expert examples required");
  if (expert_file && !fs::exists(*expert_file)) {
    throw ConfigError("expert example file not found: " + expert_file->string());
  }
}

std::string RunConfig::to_toml() const {
  const TrainConfig& t = train;
  std::ostringstream os;
  os << "# xqlearn run configuration\n";
  os << "seed = " << t.seed << "\n";
  os << "out-dir = " << quoted(run_dir.generic_string()) << "\n";
  os << "\n[train]\n";
  os << "algo = " << quoted(std::string(to_string(t.algorithm))) << "\n";
  os << "opponent = " << quoted(std::string(to_string(opponent))) << "\n";
  if (expert_file) os << "expert-file = " << quoted(expert_file->generic_string()) << "\n";
  os << "iters = " << t.max_iter << "\n";
  os << "gamma = " << fmt_double(t.gamma) << "\n";
  os << "lr = " << fmt_double(t.learning_rate) << "\n";
  os << "sync-every = " << t.sync_every << "\n";
  os << "batch = " << t.batch << "\n";
  os << "eps-start = " << fmt_double(t.eps_start) << "\n";
  os << "eps-end = " << fmt_double(t.eps_end) << "\n";
  os << "buffer-cap = " << t.buffer_capacity << "\n";
  os << "log-every = " << t.log_every << "\n";
  os << "eval-every = " << t.eval_every << "\n";
  os << "eval-rounds = " << t.eval_rounds << "\n";
  os << "checkpoint-every = " << checkpoint_every << "\n";
  os << "filters = " << t.architecture.filters << "\n";
  os << "conv-layers = " << t.architecture.conv_layers << "\n";
  os << "fc-units = " << t.architecture.fc_units << "\n";
  os << "dropout = " << fmt_double(t.architecture.dropout) << "\n";
  os << "fc-activation = " << quoted(std::string(nn::to_string(t.architecture.fc_activation))) << "\n";
  os << "expert-loss-on-copy = " << (t.expert_loss_on_copy ? "true" : "false") << "\n";
  os << "initial-q-reducer = " << quoted(std::string(to_string(t.initial_q_reducer))) << "\n";
  return os.str();
}

namespace {

void save_roles(const fs::path& dir, AgentNets& nets, std::int64_t iter, bool all_roles) {
  const std::string suffix = "_" + std::to_string(iter) + ".xqnn";
  nn::save_model(dir / ("q_a" + suffix), nets.q_a, all_roles ? &nets.q_opt : nullptr);
  if (nets.e_a) nn::save_model(dir / ("e_a" + suffix), *nets.e_a, all_roles ? &*nets.e_opt : nullptr);
  if (!all_roles) return;
  nn::save_model(dir / ("q_b" + suffix), nets.q_b);
  if (nets.e_b) nn::save_model(dir / ("e_b" + suffix), *nets.e_b);
}

}  // namespace

TrainResult train_run(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  ExpertBuffer expert;
  if (cfg.expert_file && cfg.train.algorithm == Algorithm::ExpertQ) {
    expert = ExpertBuffer(read_expert_file(*cfg.expert_file), cfg.train.buffer_capacity);
  }
  fs::create_directories(cfg.run_dir);
  write_file(cfg.run_dir / "config.toml", cfg.to_toml());
  const fs::path evals = cfg.run_dir / "evals.csv";
  if (fs::exists(evals)) fs::remove(evals);
  const std::string run_name = cfg.run_dir.filename().string();
  const std::string opponent(to_string(cfg.opponent));

  TrainHooks hooks;
  hooks.evaluate = [&](AgentNets& nets, std::int64_t iter) {
    const EvalReport report = evaluate(nets.q_a, cfg.opponent, cfg.train.eval_rounds,
                                       derive_seed(cfg.train.seed, 1000 + static_cast<std::uint64_t>(iter)));
    append_csv(evals, EvalReport::csv_header(), report.csv_row(run_name, iter, opponent));
    return report.score;
  };
  hooks.on_log = [&](AgentNets& nets, const MetricsRow& row) {
    log << "iter " << row.iter << "  eps " << row.eps;
    if (row.loss_q) log << "  loss_q " << *row.loss_q;
    if (row.loss_expert) log << "  loss_e " << *row.loss_expert;
    log << "  initial_q " << row.initial_q;
    if (row.score) log << "  score " << *row.score;
    log << std::endl;
    if (cfg.checkpoint_every > 0 && row.iter % cfg.checkpoint_every == 0 && row.iter != cfg.train.max_iter) {
      save_roles(cfg.run_dir, nets, row.iter, false);
    }
  };

  TrainResult result = train(cfg.train, cfg.opponent, expert, hooks);
  write_file(cfg.run_dir / "metrics.csv", result.log.to_csv());
  save_roles(cfg.run_dir, result.nets, cfg.train.max_iter, true);
  nn::save_model(cfg.run_dir / "model.xqnn", result.nets.q_a);
  return result;
}

namespace {

struct TrainOptions {
  std::string algo = "expert-q";
  std::string opponent = "random";
  std::string expert_file;
  std::string fc_activation = "sigmoid";
  std::string reducer = "max";
};

nn::Network<float> load_q_network(const fs::path& path) {
  if (!fs::exists(path)) throw Error("model file not found: " + path.string());
  nn::LoadedModel m = nn::load_model(path);
  if (m.net.input_shape() != nn::kBoardInput || m.net.output_shape().size() != kNumActions) {
    throw FormatError(path.string() + " is not a Q network (expects 2x8x8 input and 65 outputs)");
  }
  return std::move(m.net);
}

int show_file(const fs::path& path, std::ostream& out) {
  const std::string data = read_file(path);
  if (data.rfind("XQNN", 0) == 0) {
    const nn::LoadedModel m = nn::deserialize_model(data);
    const nn::Shape in = m.net.input_shape();
    out << "model " << path.string() << "\n  input " << in.channels << "x" << in.height << "x" << in.width << "\n";
    for (const nn::LayerSpec& s : m.net.architecture()) out << "  " << nn::describe(s) << "\n";
    out << "  outputs " << m.net.output_shape().size() << ", parameters " << m.net.parameter_count() << "\n";
    out << "  optimizer state: " << (m.optimizer ? "yes (" + std::to_string(m.optimizer->steps()) + " steps)" : "no")
        << "\n";
    return kOk;
  }
  if (data.rfind("XQEX", 0) == 0) {
    const std::vector<ExpertExample> examples = read_expert_file(path);
    const auto hist = label_histogram(examples);
    out << "expert examples " << path.string() << "\n  records " << examples.size() << "\n  labels -1: " << hist[0]
        << "  0: " << hist[1] << "  +1: " << hist[2] << "\n";
    return kOk;
  }
  const Board b = Board::from_text(data);
  out << b.to_text() << "black " << b.count(Color::Black) << "  white " << b.count(Color::White) << "\nlegal:";
  for (Move m : legal_moves(b)) out << ' ' << to_string(m);
  out << (is_terminal(b) ? " (game over)" : "") << "\n";
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expert Q-learning toolkit for Othello", "xqlearn"};
  app.fallthrough();
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir = ".";
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out-dir", out_dir, "Output / run directory");
  app.set_config("--config", "", "TOML configuration file");

  // gen-expert
  auto* gen = app.add_subcommand("gen-expert", "Sample expert examples (STOCHASTIC vs an opponent)");
  std::string gen_opponent = "random";
  std::size_t pool = 100000, keep = 10000;
  int dead_zone = 0;
  std::string gen_out;
  gen->add_option("--opponent", gen_opponent, "random | greedy | stochastic");
  gen->add_option("--pool", pool, "States sampled before subsetting");
  gen->add_option("--keep", keep, "Examples kept");
  gen->add_option("--dead-zone", dead_zone, "Heuristic values within +-dead-zone are labelled 0");
  gen->add_option("--out", gen_out, "Output file (default <out-dir>/expert_<opponent>.xqex)");

  // train
  auto* tr = app.add_subcommand("train", "Train an agent against a scripted opponent");
  RunConfig run;
  TrainOptions topt;
  tr->add_option("--algo", topt.algo, "double-dueling | expert-q | expert-q-noex");
  tr->add_option("--opponent", topt.opponent, "random | greedy | stochastic");
  tr->add_option("--expert-file", topt.expert_file, "Expert example file (required for expert-q)");
  tr->add_option("--iters", run.train.max_iter, "Training iterations (games)");
  tr->add_option("--gamma", run.train.gamma);
  tr->add_option("--lr", run.train.learning_rate);
  tr->add_option("--sync-every", run.train.sync_every);
  tr->add_option("--batch", run.train.batch);
  tr->add_option("--eps-start", run.train.eps_start);
  tr->add_option("--eps-end", run.train.eps_end);
  tr->add_option("--buffer-cap", run.train.buffer_capacity);
  tr->add_option("--log-every", run.train.log_every);
  tr->add_option("--eval-every", run.train.eval_every, "0 disables periodic evaluation");
  tr->add_option("--eval-rounds", run.train.eval_rounds);
  tr->add_option("--checkpoint-every", run.checkpoint_every);
  tr->add_option("--filters", run.train.architecture.filters);
  tr->add_option("--conv-layers", run.train.architecture.conv_layers);
  tr->add_option("--fc-units", run.train.architecture.fc_units);
  tr->add_option("--dropout", run.train.architecture.dropout);
  tr->add_option("--fc-activation", topt.fc_activation, "sigmoid | relu | identity");
  tr->add_option("--expert-loss-on-copy", run.train.expert_loss_on_copy);
  tr->add_option("--initial-q-reducer", topt.reducer, "max | mean");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate Q models over all openings");
  std::vector<std::string> eval_models;
  std::string eval_opponent = "random";
  int eval_rounds = 1;
  std::string eval_run;
  std::int64_t eval_iter = 0;
  ev->add_option("models", eval_models, "Q model files")->required();
  ev->add_option("--opponent", eval_opponent, "random | greedy | stochastic");
  ev->add_option("--rounds", eval_rounds, "Rounds of 472 games");
  ev->add_option("--run", eval_run, "Run name for the CSV row (default: model file stem)");
  ev->add_option("--iter", eval_iter, "Iteration for the CSV row");

  // tournament
  auto* tn = app.add_subcommand("tournament", "Round-robin between Q models");
  std::vector<std::string> tn_models;
  int tn_rounds = 10;
  std::vector<std::string> tn_names;
  tn->add_option("models", tn_models, "Q model files")->required();
  tn->add_option("--rounds", tn_rounds, "Rounds of 472 games per pairing");
  tn->add_option("--names", tn_names, "Display names, one per model")->delimiter(',');

  // show
  auto* sh = app.add_subcommand("show", "Pretty-print a model, expert file or board file");
  std::string show_path;
  sh->add_option("file", show_path)->required();

  std::vector<const char*> argv{"xqlearn"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (*gen) {
      ExpertGenConfig cfg;
      cfg.opponent = parse_policy_kind(gen_opponent);
      cfg.pool_size = pool;
      cfg.keep = keep;
      cfg.dead_zone = dead_zone;
      cfg.seed = seed;
      if (keep == 0 || keep > pool) throw ConfigError("need 0 < keep <= pool");
      const fs::path path = gen_out.empty() ? fs::path(out_dir) / ("expert_" + gen_opponent + ".xqex") : fs::path(gen_out);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      const std::vector<ExpertExample> examples = generate_expert_examples(cfg);
      write_expert_file(path, examples);
      const auto hist = label_histogram(examples);
      out << "wrote " << examples.size() << " examples to " << path.string() << "\nlabels -1: " << hist[0]
          << "  0: " << hist[1] << "  +1: " << hist[2] << "\n";
      return kOk;
    }
    if (*tr) {
      run.train.seed = seed;
      run.train.algorithm = parse_algorithm(topt.algo);
      run.train.architecture.fc_activation = nn::parse_activation(topt.fc_activation);
      run.train.initial_q_reducer = parse_reducer(topt.reducer);
      run.opponent = parse_policy_kind(topt.opponent);
      if (!topt.expert_file.empty()) run.expert_file = topt.expert_file;
      run.run_dir = out_dir;
      run.validate();
      train_run(run, out);
      out << "finished " << run.train.max_iter << " iterations; run directory " << run.run_dir.string() << "\n";
      return kOk;
    }
    if (*ev) {
      const PolicyKind opp = parse_policy_kind(eval_opponent);
      if (eval_rounds <= 0) throw ConfigError("rounds must be positive");
      fs::create_directories(out_dir);
      for (const std::string& model : eval_models) {
        const nn::Network<float> q = load_q_network(model);
        EvalReport report = evaluate(q, opp, eval_rounds, seed);
        nn::Network<float> probe = q;
        report.initial_q = initial_q(probe);
        const std::string stem = fs::path(model).stem().string();
        write_file(fs::path(out_dir) / (stem + "_eval.json"), report.to_json());
        append_csv(fs::path(out_dir) / "evals.csv", EvalReport::csv_header(),
                   report.csv_row(eval_run.empty() ? stem : eval_run, eval_iter, eval_opponent));
        out << model << " vs " << eval_opponent << ": games " << report.games << "  wins " << report.wins
            << "  draws " << report.draws << "  losses " << report.losses << "  score " << report.score << "\n";
      }
      return kOk;
    }
    if (*tn) {
      if (tn_models.size() < 2) throw ConfigError("need at least two players");
      if (!tn_names.empty() && tn_names.size() != tn_models.size()) throw ConfigError("one name per model required");
      if (tn_rounds <= 0) throw ConfigError("rounds must be positive");
      std::vector<nn::Network<float>> nets;
      for (const std::string& m : tn_models) nets.push_back(load_q_network(m));
      std::vector<std::string> names = tn_names;
      if (names.empty()) {
        for (const std::string& m : tn_models) names.push_back(fs::path(m).stem().string());
      }
      const std::vector<TournamentResult> results = tournament(nets, tn_rounds, seed);
      fs::create_directories(out_dir);
      write_file(fs::path(out_dir) / "tournament.csv", tournament_matrix_csv(names, results));
      out << tournament_table(names, results);
      for (const TournamentResult& r : results) {
        out << names[r.a] << " vs " << names[r.b] << ": " << r.a_wins << "-" << r.b_wins << " (" << r.draws
            << " draws) over " << r.games << " games\n";
      }
      return kOk;
    }
    if (*sh) return show_file(show_path, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace xq::app
