"""
Convex-hull encoding of disjunctive constraints.

An inclusive disjunction ``f_1 <= 0 or ... or f_m <= 0`` holds iff some
weight vector ``lam`` in the unit simplex gives ``sum(lam * f) <= 0``.
The two-branch exclusive-or adds a second weight vector ``pi`` with
``sum(pi * f) >= 0``.
"""

import logging
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import InvalidWeightError

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9


class DisjunctionSpec(BaseModel):
    """A disjunction over ``n_branches`` constraint functions, identified by name"""
    model_config = ConfigDict(frozen=True)

    branches: Tuple[str, ...] = Field(..., min_length=2)
    kind: Literal["inclusive", "exclusive"] = "inclusive"

    @property
    def n_branches(self) -> int:
        return len(self.branches)


ANTIROLL_LEFT = DisjunctionSpec(branches=("f1_left", "f2_left"))
ANTIROLL_RIGHT = DisjunctionSpec(branches=("f1_right", "f2_right"))


def _check_simplex(weights: Sequence[float], size: int, label: str = "lambda") -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (size,):
        raise InvalidWeightError(f"{label} must have {size} entries, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidWeightError(f"{label} has non-finite entries")
    if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidWeightError(f"{label}={w.tolist()} is outside the unit simplex")
    return w


def _branch_values(spec: DisjunctionSpec, f: Sequence[float]) -> np.ndarray:
    values = np.asarray(f, dtype=float)
    if values.shape != (spec.n_branches,):
        raise ValueError(f"expected {spec.n_branches} branch values, got shape {values.shape}")
    return values


def hull_residual(spec: DisjunctionSpec, f: Sequence[float], weights: Sequence[float]) -> float:
    """sum(lam_i * f_i); a value <= 0 certifies the inclusive disjunction"""
    values = _branch_values(spec, f)
    lam = _check_simplex(weights, spec.n_branches)
    return float(lam @ values)


def feasible_weight(f: Sequence[float]) -> Optional[np.ndarray]:
    """Canonical certificate: all weight on the most negative branch, or None if every branch is positive"""
    values = np.asarray(f, dtype=float)
    if values.size < 2:
        raise ValueError("a disjunction needs at least two branches")
    best = int(np.argmin(values))
    if values[best] > 0:
        return None
    lam = np.zeros(values.size)
    lam[best] = 1.0
    return lam


def exclusive_residuals(spec: DisjunctionSpec, f: Sequence[float], weights: Sequence[float],
                        selector: Sequence[float]) -> Tuple[float, float]:
    """(sum(lam f), sum(pi f)); the exclusive-or holds when the first is <= 0 and the second >= 0"""
    if spec.n_branches != 2:
        raise ValueError("exclusive disjunctions are only defined for two branches")
    values = _branch_values(spec, f)
    lam = _check_simplex(weights, 2, "lambda")
    pi = _check_simplex(selector, 2, "pi")
    return float(lam @ values), float(pi @ values)


def exclusive_feasible(f: Sequence[float]) -> bool:
    """Whether some (lam, pi) pair satisfies the exclusive-or"""
    values = np.asarray(f, dtype=float)
    return bool(values.min() <= 0 <= values.max())


def satisfied(f: Sequence[float], tol: float = 0.0) -> bool:
    """Pointwise inclusive disjunction check, min_i f_i <= tol"""
    return bool(np.min(np.asarray(f, dtype=float)) <= tol)
