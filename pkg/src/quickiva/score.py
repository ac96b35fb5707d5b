"""Score functions (nonlinearities) and the statistics derived from them.

A score ``phi^k(s)`` maps the joint output vector ``s`` (one entry per mixture)
to a complex number; ``conj_deriv`` is its Wirtinger derivative with respect to
``conj(s_k)``. Batched evaluation works on ``S`` of shape ``(K, ...)`` and
returns arrays of the same shape for all ``k`` at once.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .model import FLOOR, DegenerateError

# Count of phi_norm evaluations at s = 0 that were replaced by zeros.
singular_events: Counter = Counter()


class SingularScoreError(DegenerateError):
    pass


class DegenerateStatisticError(DegenerateError):
    pass


def _rational(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p2 = np.abs(S) ** 2
    denom = 1.0 + p2.sum(axis=0, keepdims=True)
    phi = S.conj() / denom
    dphi = (denom - p2) / denom**2
    return phi, dphi


def _norm(S: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p2 = np.abs(S) ** 2
    n = np.sqrt(p2.sum(axis=0, keepdims=True))
    zero = n == 0
    if zero.any():
        singular_events["norm"] += int(zero.sum())
        n = np.where(zero, 1.0, n)
    phi = S.conj() / n
    dphi = 1.0 / n - p2 / (2.0 * n**3)
    if zero.any():
        phi = np.where(zero, 0.0, phi)
        dphi = np.where(zero, 0.0, dphi)
    return phi, dphi


@dataclass(frozen=True)
class ScoreFunction:
    name: str
    batch: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]
    log_density: Callable[[np.ndarray], np.ndarray]
    """Model log-density (up to a constant) whose negative s_k-derivative is phi."""

    def eval(self, s, k: int) -> complex:
        s = _as_point(s)
        if self.name == "norm" and not np.any(s):
            raise SingularScoreError("phi_norm is undefined at s = 0")
        return complex(self.batch(s[:, None])[0][k, 0])

    def conj_deriv(self, s, k: int) -> complex:
        s = _as_point(s)
        if self.name == "norm" and not np.any(s):
            raise SingularScoreError("phi_norm is undefined at s = 0")
        return complex(self.batch(s[:, None])[1][k, 0])


def _as_point(s) -> np.ndarray:
    return np.atleast_1d(np.asarray(s, dtype=complex))


phi_rational = ScoreFunction(
    name="rational",
    batch=_rational,
    log_density=lambda S: -np.log1p((np.abs(S) ** 2).sum(axis=0)),
)

phi_norm = ScoreFunction(
    name="norm",
    batch=_norm,
    log_density=lambda S: -2.0 * np.sqrt((np.abs(S) ** 2).sum(axis=0)),
)

SCORES: Dict[str, ScoreFunction] = {f.name: f for f in (phi_rational, phi_norm)}


def get_score(name: str) -> ScoreFunction:
    try:
        return SCORES[name]
    except KeyError:
        raise ValueError(f"unknown score {name!r}; choose from {sorted(SCORES)}") from None


def nu_stat(outputs: np.ndarray, score: ScoreFunction, k: int, floor: float = FLOOR) -> complex:
    """Sample mean of ``phi^k(s) s_k`` over a block of outputs of shape ``(K, N_b)``."""
    phi, _ = score.batch(outputs)
    nu = np.mean(phi[k] * outputs[k])
    if not abs(nu) > floor:
        raise DegenerateStatisticError(f"|nu| = {abs(nu):.3g} is below {floor:g}")
    return complex(nu)


def rho_stat(outputs: np.ndarray, score: ScoreFunction, k: int) -> complex:
    """Sample mean of ``d phi^k / d conj(s_k)`` over a block of outputs."""
    _, dphi = score.batch(outputs)
    return complex(np.mean(dphi[k]))
