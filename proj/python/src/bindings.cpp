#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "xq/app.hpp"
#include "xq/evaluation.hpp"

namespace py = pybind11;
using namespace xq;

namespace {

nn::Network<float> load_q(const std::filesystem::path& path) {
  nn::LoadedModel m = nn::load_model(path);
  if (m.net.output_shape().size() != kNumActions) throw FormatError(path.string() + " is not a Q network");
  return std::move(m.net);
}

std::vector<int> move_indices(const Board& b) {
  std::vector<int> out;
  for (Move m : legal_moves(b)) out.push_back(m.index);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Othello engine, scripted opponents and expert Q-learning";
  m.attr("PASS") = kPassIndex;
  m.attr("NUM_ACTIONS") = kNumActions;

  py::register_exception<Error>(m, "XqError");

  py::class_<Board>(m, "Board")
      .def(py::init<>())
      .def_static("initial", &Board::initial)
      .def_static("from_text", [](const std::string& s) { return Board::from_text(s); })
      .def_static("from_masks",
                  [](std::uint64_t black, std::uint64_t white, char to_move) {
                    return Board::from_masks(black, white, to_move == 'W' ? Color::White : Color::Black);
                  },
                  py::arg("black"), py::arg("white"), py::arg("to_move") = 'B')
      .def_property_readonly("black", &Board::black)
      .def_property_readonly("white", &Board::white)
      .def_property_readonly("to_move", [](const Board& b) { return std::string(1, color_char(b.to_move())); })
      .def("count", [](const Board& b, char c) { return b.count(c == 'W' ? Color::White : Color::Black); })
      .def("legal_moves", &move_indices, "Square indices row*8+col; 64 is PASS")
      .def("play", [](const Board& b, int move) { return apply_move(b, Move{move}); })
      .def("is_terminal", [](const Board& b) { return is_terminal(b); })
      .def("outcome",
           [](const Board& b) {
             const GameOutcome o = game_outcome(b);
             return py::make_tuple(o.result_for(Color::Black), o.piece_diff);
           },
           "(result for Black in {-1, 0, 1}, black - white)")
      .def("to_text", &Board::to_text)
      .def("__str__", &Board::to_text)
      .def(py::self == py::self)
      .def("__hash__", [](const Board& b) {
        return py::hash(py::make_tuple(b.black(), b.white(), static_cast<int>(b.to_move())));
      });

  m.def("move_name", [](int move) { return to_string(Move{move}); });
  m.def("openings", &enumerate_openings);

  m.def("policy_move",
        [](const std::string& kind, const Board& b, std::uint64_t seed) {
          ScriptedPolicy p(parse_policy_kind(kind), seed);
          return p.choose(b).index;
        },
        py::arg("kind"), py::arg("board"), py::arg("seed") = 0);

  m.def("generate_expert",
        [](const std::filesystem::path& out, const std::string& opponent, std::size_t pool, std::size_t keep,
           std::uint64_t seed) {
          ExpertGenConfig cfg;
          cfg.opponent = parse_policy_kind(opponent);
          cfg.pool_size = pool;
          cfg.keep = keep;
          cfg.seed = seed;
          std::vector<ExpertExample> ex;
          {
            py::gil_scoped_release release;
            ex = generate_expert_examples(cfg);
            write_expert_file(out, ex);
          }
          const auto h = label_histogram(ex);
          return py::dict(py::arg("records") = ex.size(), py::arg("loss") = h[0], py::arg("neutral") = h[1],
                          py::arg("win") = h[2]);
        },
        py::arg("out"), py::arg("opponent") = "random", py::arg("pool") = 100000, py::arg("keep") = 10000,
        py::arg("seed") = 0);

  m.def("read_expert_labels", [](const std::filesystem::path& path) {
    std::vector<int> labels;
    for (const ExpertExample& e : read_expert_file(path)) labels.push_back(e.label);
    return labels;
  });

  m.def("q_values",
        [](const std::filesystem::path& model, const Board& b) {
          nn::Network<float> q = load_q(model);
          const auto v = xq::q_values(q, b);
          return std::vector<float>(v.begin(), v.end());
        },
        "Raw network outputs (inference mode) for the side to move");

  m.def("evaluate",
        [](const std::filesystem::path& model, const std::string& opponent, int rounds, std::uint64_t seed) {
          const nn::Network<float> q = load_q(model);
          const PolicyKind kind = parse_policy_kind(opponent);
          EvalReport r;
          {
            py::gil_scoped_release release;
            r = evaluate(q, kind, rounds, seed);
          }
          return r.to_json();
        },
        py::arg("model"), py::arg("opponent") = "random", py::arg("rounds") = 1, py::arg("seed") = 0,
        "Evaluation report as JSON text");

  m.def("tournament",
        [](const std::vector<std::filesystem::path>& models, int rounds, std::uint64_t seed) {
          std::vector<nn::Network<float>> nets;
          for (const auto& p : models) nets.push_back(load_q(p));
          std::vector<TournamentResult> res;
          {
            py::gil_scoped_release release;
            res = tournament(nets, rounds, seed);
          }
          py::list out;
          for (const TournamentResult& r : res) {
            out.append(py::dict(py::arg("a") = r.a, py::arg("b") = r.b, py::arg("a_wins") = r.a_wins,
                                py::arg("b_wins") = r.b_wins, py::arg("draws") = r.draws,
                                py::arg("games") = r.games));
          }
          return out;
        },
        py::arg("models"), py::arg("rounds") = 1, py::arg("seed") = 0);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = app::run_cli(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        "Runs the xqlearn command line; returns (exit code, stdout, stderr)");
}
