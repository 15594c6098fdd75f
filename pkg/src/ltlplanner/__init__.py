"""Temporal-logic task planning with a decision scorer and conformal uncertainty gating."""
from .ltl import AtomicProposition, Dfa, Formula, LTLSyntaxError, NonCoSafe, UnknownAtom, parse_ltl, to_dfa
from .automaton import PrunedDfa, prune, distance, select_subtask
from .conformal import CalibrationModel, calibrate, predict_set
from .mission import MissionConfig, PlanTrace, run_flat_baseline, run_mission

__version__ = "0.1.0"

__all__ = [
    "AtomicProposition", "Dfa", "Formula", "LTLSyntaxError", "NonCoSafe", "UnknownAtom", "parse_ltl",
    "to_dfa", "PrunedDfa", "prune", "distance", "select_subtask", "CalibrationModel", "calibrate",
    "predict_set", "MissionConfig", "PlanTrace", "run_flat_baseline", "run_mission",
]
