"""Separation quality metrics and aggregation of Monte-Carlo outcomes."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

DB_CAP = 150.0
SUCCESS_DB = 15.0

SUCCESS = "success"
OTHER_SOURCE = "other_source"
FAILURE = "failure"


def _to_db(ratio: float) -> float:
    if ratio <= 0:
        return -DB_CAP
    if not np.isfinite(ratio):
        return DB_CAP
    return float(np.clip(10.0 * np.log10(ratio), -DB_CAP, DB_CAP))


def sir(extracted: np.ndarray, true_soi: np.ndarray) -> float:
    """Signal-to-interference ratio (dB) of ``extracted`` w.r.t. ``true_soi``.

    ``extracted`` is projected onto ``true_soi``; the residual counts as
    interference. Invariant to complex scaling of either argument.
    """
    y = np.asarray(extracted, dtype=complex).ravel()
    s = np.asarray(true_soi, dtype=complex).ravel()
    ss = np.vdot(s, s).real
    if ss <= 0:
        raise ValueError("true_soi must be nonzero")
    y_s = (np.vdot(s, y) / ss) * s
    signal = np.vdot(y_s, y_s).real
    if signal <= 0:
        return -DB_CAP
    noise = np.vdot(y - y_s, y - y_s).real
    if noise <= signal * 10 ** (-DB_CAP / 10):
        return DB_CAP
    return _to_db(signal / noise)


def isr(W: np.ndarray, A_true: np.ndarray) -> np.ndarray:
    """Interference-to-signal ratio (dB) of every separated output.

    Outputs are paired with sources by the assignment maximizing the total
    matched energy of the row-normalized global matrix ``W @ A_true``.
    """
    G = np.asarray(W) @ np.asarray(A_true)
    P = np.abs(G) ** 2
    scale = P.max(axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    rows, cols = linear_sum_assignment(P / scale, maximize=True)
    out = np.empty(G.shape[0])
    for i, j in zip(rows, cols):
        sig = P[i, j]
        leak = P[i].sum() - sig
        if sig <= 0:
            out[i] = DB_CAP
        elif leak <= sig * 10 ** (-DB_CAP / 10):
            out[i] = -DB_CAP
        else:
            out[i] = _to_db(leak / sig)
    return out


def classify_outcome(sir_db: float) -> str:
    if sir_db > SUCCESS_DB:
        return SUCCESS
    if sir_db < -SUCCESS_DB:
        return OTHER_SOURCE
    return FAILURE


@dataclass
class TrialOutcome:
    """Result of one extraction or separation run.

    ``sir_db`` holds one value per mixture (extraction); ``isr_db`` one value
    per separated source (separation, flattened over mixtures).
    """

    sir_db: np.ndarray = field(default_factory=lambda: np.empty(0))
    isr_db: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0
    wall_ms: float = 0.0
    converged: bool = False
    error: Optional[str] = None

    @property
    def classification(self) -> List[str]:
        return [classify_outcome(v) for v in np.atleast_1d(self.sir_db)]


def histogram(values: Iterable[float], width: float = 2.0, lo: float = -51.0, hi: float = 51.0):
    """Fixed-width histogram; values outside ``[lo, hi]`` land in the edge bins.

    Returns a list of ``(bin_lo, bin_hi, count)`` rows, empty for empty input.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return []
    edges = np.arange(lo, hi + width / 2, width)
    n_bins = len(edges) - 1
    idx = np.floor((np.clip(v, lo, hi) - lo) / width).astype(int)
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)]


HISTOGRAM_FIELDS = ("bin_lo", "bin_hi", "count", "algorithm", "experiment")
TRAJECTORY_FIELDS = ("iteration", "wall_ms_mean", "isr_db_mean", "algorithm")


def aggregate(
    outcomes: Sequence[TrialOutcome],
    algorithm: str,
    experiment: str,
    width: float = 2.0,
    lo: float = -51.0,
    hi: float = 51.0,
) -> List[dict]:
    """SIR histogram rows (one SIR per mixture per trial) for the CSV schema."""
    values = [float(v) for o in outcomes for v in np.atleast_1d(o.sir_db)]
    return [
        dict(bin_lo=a, bin_hi=b, count=c, algorithm=algorithm, experiment=experiment)
        for a, b, c in histogram(values, width, lo, hi)
    ]


def iteration_histogram(outcomes: Sequence[TrialOutcome], algorithm: str, experiment: str) -> List[dict]:
    its = np.array([o.iterations for o in outcomes], dtype=int)
    if its.size == 0:
        return []
    edges = [0, 5, 10, 20, 50, 100, 200, 500, 1000, max(1001, int(its.max()) + 1)]
    counts, _ = np.histogram(its, bins=edges)
    return [
        dict(bin_lo=edges[i], bin_hi=edges[i + 1], count=int(c), algorithm=algorithm, experiment=experiment)
        for i, c in enumerate(counts)
    ]


def trajectory(isr_curves: np.ndarray, wall_ms: np.ndarray, algorithm: str) -> List[dict]:
    """Trial-averaged ISR vs. iteration and wall clock.

    ``isr_curves`` and ``wall_ms`` have shape ``(trials, iterations + 1)``;
    ISR is averaged in dB.
    """
    isr_curves = np.asarray(isr_curves, dtype=float)
    if isr_curves.size == 0:
        return []
    isr_mean = isr_curves.mean(axis=0)
    wall_mean = np.asarray(wall_ms, dtype=float).mean(axis=0)
    return [
        dict(iteration=i, wall_ms_mean=float(wall_mean[i]), isr_db_mean=float(isr_mean[i]), algorithm=algorithm)
        for i in range(isr_curves.shape[1])
    ]


def to_csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in fields})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return v
