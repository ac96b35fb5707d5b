"""Finite-difference references for the analytic gradients and Hessians.

These evaluate contrast functions directly and differentiate numerically, so
they share no code with the closed-form expressions in :mod:`quickiva.extract`.
For a function ``F`` of a complex vector ``v`` the Wirtinger derivatives are
``dF/dv* = (dF/dRe v + i dF/dIm v) / 2`` and ``dF/dv = (dF/dRe v - i dF/dIm v) / 2``.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .score import ScoreFunction

STEP = 1e-5
LADDER = 10.0 ** -np.arange(2.0, 7.5, 0.5)


def _central(F: Callable, v: np.ndarray, e: np.ndarray, step: Optional[float]):
    """Fourth-order central difference of ``F`` along unit direction ``e``.

    With ``step=None`` the step is picked from a geometric ladder where
    neighbouring estimates agree best, balancing truncation and roundoff.
    """
    if step is not None:
        return (8 * (F(v + step * e) - F(v - step * e)) - (F(v + 2 * step * e) - F(v - 2 * step * e))) / (12 * step)
    est = [np.asarray(_central(F, v, e, h)) for h in LADDER]
    gaps = [np.max(np.abs(est[i + 1] - est[i])) for i in range(len(est) - 1)]
    return est[int(np.argmin(gaps)) + 1]


def wirtinger_conj(F: Callable[[np.ndarray], complex], v: np.ndarray, step: Optional[float] = STEP) -> np.ndarray:
    """Central-difference ``dF/dv*`` for scalar ``F``."""
    v = np.asarray(v, dtype=complex)
    out = np.empty(v.shape, dtype=complex)
    for j in range(v.size):
        e = np.zeros_like(v)
        e[j] = 1.0
        out[j] = 0.5 * (_central(F, v, e, step) + 1j * _central(F, v, 1j * e, step))
    return out


def wirtinger_jacobian(G: Callable[[np.ndarray], np.ndarray], v: np.ndarray, step: Optional[float] = STEP) -> np.ndarray:
    """Central-difference ``J[i, j] = dG_i/dv_j`` for vector-valued ``G``."""
    v = np.asarray(v, dtype=complex)
    cols = []
    for j in range(v.size):
        e = np.zeros_like(v)
        e[j] = 1.0
        cols.append(0.5 * (_central(G, v, e, step) - 1j * _central(G, v, 1j * e, step)))
    return np.stack(cols, axis=-1)


def score_conj_deriv(score: ScoreFunction, s: np.ndarray, k: int, step: float = STEP) -> complex:
    """Numerical ``d phi^k / d conj(s_k)``."""
    s = np.asarray(s, dtype=complex)

    def phi_k(sk):
        p = s.copy()
        p[k] = sk[0]
        return score.batch(p[:, None])[0][k, 0]

    # phi is complex-valued; wirtinger_conj's formula holds for complex F as well
    return complex(wirtinger_conj(phi_k, s[k : k + 1], step)[0])


def quickive1_contrast(w: np.ndarray, a: np.ndarray, X: np.ndarray, score: ScoreFunction, k: int):
    """``h -> mean log f(s)`` with ``a^k`` fixed and ``beta^k`` completed from the constraint.

    ``w`` is ``(K, d)``, ``a`` is ``(K, d)`` and ``X`` is ``(K, d, N)``.
    """
    gamma, g = a[k, 0], a[k, 1:]

    def F(h):
        beta = np.conj((1.0 - np.vdot(h, g)) / gamma)
        wk = np.concatenate([[beta], h])
        W = w.copy()
        W[k] = wk
        S = np.einsum("kd,kdn->kn", W.conj(), X)
        return float(np.mean(score.log_density(S)))

    return F


def quickive2_contrast(
    w: np.ndarray, g: np.ndarray, X: np.ndarray, score: ScoreFunction, k: int, nu: np.ndarray
):
    """``w^k -> <nu^{-1} mean log f(s) - log det C_z + (d - 2) log|gamma|^2>_t``.

    The background density is Gaussian with its own sample covariance, so only
    the log-determinant survives. ``g`` (``(K, T, d - 1)``) is held fixed and
    ``gamma`` follows from the distortionless constraint. ``X`` is
    ``(K, T, d, N_b)``; ``nu`` is ``(K, T)`` and frozen.
    """
    K, T, d, _ = X.shape

    def F(wk):
        W = w.copy()
        W[k] = wk
        beta, h = wk[0], wk[1:]
        total = 0.0
        for t in range(T):
            S = np.einsum("kd,kdn->kn", W.conj(), X[:, t])
            gamma = (1.0 - np.vdot(h, g[k, t])) / np.conj(beta)
            z = g[k, t][:, None] * X[k, t, 0] - gamma * X[k, t, 1:]
            Cz = z @ z.conj().T / z.shape[1]
            _, logdet = np.linalg.slogdet(Cz) if d > 1 else (1.0, 0.0)
            total = total + np.mean(score.log_density(S)) / nu[k, t] - logdet + (d - 2) * np.log(abs(gamma) ** 2)
        return total / T

    return F
