"""Python bindings for the xqlearn C++ core."""

import json

from ._core import (
    NUM_ACTIONS,
    PASS,
    Board,
    XqError,
    generate_expert,
    move_name,
    openings,
    policy_move,
    q_values,
    read_expert_labels,
    run_cli,
    tournament,
)
from ._core import evaluate as _evaluate


def evaluate(model, opponent="random", rounds=1, seed=0):
    """Play every opening twice per round against a scripted opponent; returns a dict."""
    return json.loads(_evaluate(str(model), opponent, rounds, seed))


__all__ = [
    "NUM_ACTIONS",
    "PASS",
    "Board",
    "XqError",
    "evaluate",
    "generate_expert",
    "move_name",
    "openings",
    "policy_move",
    "q_values",
    "read_expert_labels",
    "run_cli",
    "tournament",
]
