"""Split conformal prediction over multi-step decision sequences (vanilla and RAPS)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .scoring import ScoreVector

__all__ = [
    "CalibrationPoint", "CalibrationSet", "CalibrationModel", "PredictionSet", "EmptyCalibration",
    "nonconformity_vanilla", "nonconformity_raps", "sequence_score", "quantile_index",
    "calibrate", "predict_set", "causal_sets", "product_size", "label", "joint_confidence",
    "covers",
]

DEFAULT_LAMBDA = 0.01
DEFAULT_KREG = 1


class EmptyCalibration(ValueError):
    pass


def _probs(sv) -> np.ndarray:
    return np.asarray(sv.probs if isinstance(sv, ScoreVector) else sv, dtype=float)


def _truth_index(sv, truth) -> int:
    if isinstance(truth, (int, np.integer)):
        return int(truth)
    return sv.index(truth)


def nonconformity_vanilla(score_vector, truth) -> float:
    """``1 - g(truth)``; ``truth`` is a Decision or an index into the decision set."""
    p = _probs(score_vector)
    return float(1.0 - p[_truth_index(score_vector, truth)])


def _ranking(p: np.ndarray) -> np.ndarray:
    # descending by probability; stable so equal masses keep decision order
    return np.argsort(-p, kind="stable")


def nonconformity_raps(score_vector, truth, lam: float = DEFAULT_LAMBDA, k_reg: int = DEFAULT_KREG) -> float:
    """Mass ranked strictly above the truth, plus ``g(truth)``, plus ``lam * max(0, rank - k_reg)``."""
    p = _probs(score_vector)
    t = _truth_index(score_vector, truth)
    order = _ranking(p)
    rank = int(np.nonzero(order == t)[0][0]) + 1
    above = float(p[order[: rank - 1]].sum())
    return above + float(p[t]) + lam * max(0, rank - k_reg)


@dataclass(frozen=True)
class CalibrationPoint:
    """One calibration sequence: per-step probability vectors and true decision indices."""

    probs: tuple[tuple[float, ...], ...]
    truth: tuple[int, ...]
    digests: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.probs) != len(self.truth) or not self.truth:
            raise ValueError("a calibration point needs one truth index per step and at least one step")
        for p, t in zip(self.probs, self.truth):
            if not 0 <= t < len(p):
                raise ValueError("truth index outside the decision set")

    @property
    def horizon(self) -> int:
        return len(self.truth)

    def to_json(self) -> dict:
        return {"probs": [list(p) for p in self.probs], "truth": list(self.truth),
                "digests": list(self.digests)}

    @classmethod
    def from_json(cls, d: dict) -> "CalibrationPoint":
        return cls(tuple(tuple(float(x) for x in p) for p in d["probs"]),
                   tuple(int(t) for t in d["truth"]), tuple(d.get("digests", ())))


@dataclass(frozen=True)
class CalibrationSet:
    points: tuple[CalibrationPoint, ...]
    method: str = "vanilla"
    alpha: float = 0.05
    lam: float = DEFAULT_LAMBDA
    k_reg: int = DEFAULT_KREG

    def __post_init__(self):
        if self.method not in ("vanilla", "raps"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.lam < 0 or self.k_reg < 1:
            raise ValueError("RAPS needs lam >= 0 and k_reg >= 1")

    def to_json(self) -> dict:
        return {"method": self.method, "alpha": self.alpha, "lam": self.lam, "k_reg": self.k_reg,
                "points": [p.to_json() for p in self.points]}

    @classmethod
    def from_json(cls, d: dict) -> "CalibrationSet":
        return cls(tuple(CalibrationPoint.from_json(p) for p in d["points"]), d.get("method", "vanilla"),
                   float(d.get("alpha", 0.05)), float(d.get("lam", DEFAULT_LAMBDA)),
                   int(d.get("k_reg", DEFAULT_KREG)))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationSet":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CalibrationModel:
    method: str
    alpha: float
    qhat: float
    n: int
    lam: float = DEFAULT_LAMBDA
    k_reg: int = DEFAULT_KREG
    degenerate: bool = False
    scores: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def to_json(self) -> dict:
        return {"method": self.method, "alpha": self.alpha,
                "qhat": None if self.degenerate else self.qhat, "n": self.n,
                "lam": self.lam, "k_reg": self.k_reg, "degenerate": self.degenerate}

    @classmethod
    def from_json(cls, d: dict) -> "CalibrationModel":
        deg = bool(d.get("degenerate", False))
        return cls(d["method"], float(d["alpha"]), math.inf if deg else float(d["qhat"]), int(d["n"]),
                   float(d.get("lam", DEFAULT_LAMBDA)), int(d.get("k_reg", DEFAULT_KREG)), deg)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def step_score(method: str, probs, truth: int, lam: float = DEFAULT_LAMBDA, k_reg: int = DEFAULT_KREG) -> float:
    if method == "vanilla":
        return nonconformity_vanilla(probs, truth)
    return nonconformity_raps(probs, truth, lam, k_reg)


def sequence_score(point: CalibrationPoint, method: str = "vanilla", lam: float = DEFAULT_LAMBDA,
                   k_reg: int = DEFAULT_KREG) -> float:
    """Worst per-step nonconformity, i.e. the least confident step of the sequence."""
    return max(step_score(method, np.asarray(p), t, lam, k_reg) for p, t in zip(point.probs, point.truth))


def quantile_index(n: int, alpha: float) -> int:
    """1-based order statistic ``ceil((n + 1)(1 - alpha))``.

    A tiny slack absorbs binary rounding, so that e.g. 20 * 0.95 gives 19.
    """
    return math.ceil((n + 1) * (1 - alpha) - 1e-9)


def calibrate(cal: CalibrationSet) -> CalibrationModel:
    n = len(cal.points)
    if n == 0:
        raise EmptyCalibration("calibration needs at least one sequence")
    scores = sorted(sequence_score(p, cal.method, cal.lam, cal.k_reg) for p in cal.points)
    k = quantile_index(n, cal.alpha)
    if k > n:
        return CalibrationModel(cal.method, cal.alpha, math.inf, n, cal.lam, cal.k_reg, True, tuple(scores))
    return CalibrationModel(cal.method, cal.alpha, scores[k - 1], n, cal.lam, cal.k_reg, False, tuple(scores))


@dataclass(frozen=True)
class PredictionSet:
    members: tuple[int, ...]  # decision indices, ascending
    step_index: int = 0

    def __post_init__(self):
        if not self.members:
            raise ValueError("prediction sets are never empty")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def singleton(self) -> bool:
        return len(self.members) == 1

    def __contains__(self, idx) -> bool:
        return idx in self.members


def predict_set(model: CalibrationModel, score_vector, step: int = 0, force_argmax: bool = True) -> PredictionSet:
    p = _probs(score_vector)
    if model.degenerate:
        return PredictionSet(tuple(range(len(p))), step)
    top = int(np.argmax(p))
    if model.method == "vanilla":
        members = set(np.nonzero(p > 1.0 - model.qhat)[0].tolist())
    else:
        order = _ranking(p)
        cum = np.cumsum(p[order])
        pen = model.lam * np.maximum(0, np.arange(1, len(p) + 1) - model.k_reg)
        members = set(order[cum + pen <= model.qhat].tolist())
    if force_argmax:
        members.add(top)
    return PredictionSet(tuple(sorted(members)), step)


def causal_sets(model: CalibrationModel, score_vectors: Iterable) -> list[PredictionSet]:
    """Per-step sets built online; their product is the sequence-level set."""
    return [predict_set(model, sv, k) for k, sv in enumerate(score_vectors)]


def product_size(sets: Sequence[PredictionSet]) -> int:
    return math.prod(s.size for s in sets)


def covers(sets: Sequence[PredictionSet], truth: Sequence[int]) -> bool:
    return len(sets) == len(truth) and all(t in s for s, t in zip(sets, truth))


def label(sets: Sequence[PredictionSet]) -> bool:
    """True iff every step's prediction set is a singleton."""
    return all(s.singleton for s in sets)


def joint_confidence(alpha: float, k: int) -> float:
    if k < 0:
        raise ValueError("K must be non-negative")
    return (1.0 - alpha) ** k
