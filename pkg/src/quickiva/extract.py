"""One-unit blind extraction with Newton-Raphson updates.

Data are passed as ``X`` with shape ``(K, T, d, N_b)``; covariances come from a
:class:`~quickiva.model.CovarianceSet` built once per dataset. Separating
vectors ``w`` are shared across blocks (shape ``(K, d)``); mixing vectors
``a`` live per block (shape ``(K, T, d)``).

Algorithms:

* ``quickive1``: NR step in ``h`` with ``a`` fixed and ``beta`` completed from
  the distortionless constraint. Only valid for ``T = 1``.
* ``quickive2``: NR step in ``w`` on the nu-scaled gradient, any ``T``.
* ``gradient``: fixed-step ascent along the same scaled gradient.

Every step ends by normalizing ``w`` to unit output power and recoupling ``a``
through ``a = C w / (w^H C w)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .metrics import TrialOutcome, sir
from .model import (
    FLOOR,
    CovarianceSet,
    Dataset,
    IveParams,
    SingularParameterizationError,
    background_cov,
    background_cov_inv,
    orthogonal_coupling,
)
from .score import DegenerateStatisticError, ScoreFunction

COND_MAX = 1e12
FALLBACK_STEP = 0.1

ALGORITHMS = ("quickive1", "quickive2", "gradient")
HESSIAN_MODES = ("exact", "approx")


@dataclass(frozen=True)
class StoppingRule:
    tol: float = 1e-6
    max_iter: int = 1000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class ExtractionState:
    w: np.ndarray
    a: np.ndarray
    iteration: int = 0
    last_step_norm: float = np.inf
    fallbacks: int = 0
    diagnostics: Tuple[dict, ...] = field(default=(), repr=False)

    @property
    def params(self) -> IveParams:
        return IveParams.from_vectors(self.w, self.a)

    @property
    def K(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]


def outputs(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Extracted signals ``w^H x``, shape ``(K, T, N_b)``."""
    return np.einsum("kd,ktdn->ktn", w.conj(), X)


def normalize_and_couple(w: np.ndarray, cov: CovarianceSet) -> Tuple[np.ndarray, np.ndarray]:
    """Scale ``w`` to unit (block-averaged) output power and recouple ``a`` per block."""
    C = cov.block_average()
    power = np.einsum("kd,kde,ke->k", w.conj(), C, w).real
    if np.any(~(power > FLOOR)):
        raise SingularParameterizationError("separating vector has vanishing output power")
    w = w / np.sqrt(power)[:, None]
    K, T = cov.cx.shape[:2]
    a = np.empty((K, T, w.shape[1]), dtype=complex)
    for k in range(K):
        for t in range(T):
            a[k, t] = orthogonal_coupling(w[k], cov.cx[k, t])
    return w, a


def init_state(w0: np.ndarray, cov: CovarianceSet) -> ExtractionState:
    w, a = normalize_and_couple(np.asarray(w0, dtype=complex), cov)
    return ExtractionState(w=w, a=a)


def _newton(H: np.ndarray, grad: np.ndarray) -> Optional[np.ndarray]:
    """``-(H^*)^{-1} grad``, or None when ``H`` is too ill-conditioned."""
    if H.size == 0:
        return np.zeros_like(grad)
    Hc = H.conj()
    if not np.all(np.isfinite(Hc)) or np.linalg.cond(Hc) > COND_MAX:
        return None
    return -np.linalg.solve(Hc, grad)


# QuickIVE-1 -----------------------------------------------------------------


def _require_single_block(X: np.ndarray) -> None:
    if X.shape[1] != 1:
        raise ValueError("QuickIVE-1 requires a single block (T = 1)")


def _background(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``z = B x = g x_1 - gamma x_2`` for one mixture, shape ``(d - 1, N)``."""
    return a[1:, None] * x[0] - a[0] * x[1:]


def _gamma(state: ExtractionState, k: int) -> complex:
    gamma = state.a[k, 0, 0]
    if not abs(gamma) > FLOOR:
        raise SingularParameterizationError(f"|gamma| = {abs(gamma):.3g} is below {FLOOR:g}")
    return gamma


def quickive1_gradient(state: ExtractionState, X: np.ndarray, score: ScoreFunction, k: int) -> np.ndarray:
    """Gradient of the contrast w.r.t. ``conj(h^k)`` with ``a^k`` held fixed."""
    _require_single_block(X)
    gamma = _gamma(state, k)
    S = outputs(state.w, X)[:, 0]
    phi, _ = score.batch(S)
    z = _background(state.a[k, 0], X[k, 0])
    return (z * phi[k]).mean(axis=1) / gamma


def quickive1_hessian(state: ExtractionState, X: np.ndarray, score: ScoreFunction, k: int) -> np.ndarray:
    _require_single_block(X)
    gamma = _gamma(state, k)
    S = outputs(state.w, X)[:, 0]
    _, dphi = score.batch(S)
    z = _background(state.a[k, 0], X[k, 0])
    M = (z * dphi[k]) @ z.conj().T / z.shape[1]
    return -(M.T) / abs(gamma) ** 2


def quickive1_hessian_approx(state: ExtractionState, cov: CovarianceSet, rho: complex, k: int) -> np.ndarray:
    """Decoupled approximation ``-rho C_z / |gamma|^2`` of the QuickIVE-1 Hessian."""
    gamma = _gamma(state, k)
    Cz = background_cov(cov.cx[k, 0], state.params, k, 0)
    return -rho * Cz / abs(gamma) ** 2


def _quickive1_approx_direction(
    state: ExtractionState, cov: CovarianceSet, grad: np.ndarray, rho: complex, k: int
) -> Optional[np.ndarray]:
    # The approximation stands in for the Hessian with its layout transposed,
    # so H^* = -conj(rho) C_z / |gamma|^2.
    if grad.size == 0:
        return np.zeros_like(grad)
    if not abs(rho) > FLOOR:
        return None
    gamma = _gamma(state, k)
    if cov.inv is not None:
        Cz_inv = background_cov_inv(cov.inv[k, 0], state.params, k, 0)
        if not np.all(np.isfinite(Cz_inv)) or np.linalg.cond(Cz_inv) > COND_MAX:
            return None
        return abs(gamma) ** 2 / np.conj(rho) * (Cz_inv @ grad)
    H = quickive1_hessian_approx(state, cov, rho, k).T
    return _newton(H, grad)


def quickive1_update(
    state: ExtractionState,
    X: np.ndarray,
    cov: CovarianceSet,
    score: ScoreFunction,
    hessian: str = "exact",
) -> Tuple[np.ndarray, dict]:
    """Unnormalized separating vectors after one QuickIVE-1 NR step (all k)."""
    _require_single_block(X)
    K, d = state.w.shape
    S = outputs(state.w, X)[:, 0]
    phi, dphi = score.batch(S)
    w_new = np.empty_like(state.w)
    fallbacks = 0
    grad_norm = 0.0
    for k in range(K):
        gamma = _gamma(state, k)
        a = state.a[k, 0]
        z = _background(a, X[k, 0])
        grad = (z * phi[k]).mean(axis=1) / gamma
        grad_norm = max(grad_norm, float(np.linalg.norm(grad)))
        if hessian == "approx":
            step = _quickive1_approx_direction(state, cov, grad, np.mean(dphi[k]), k)
        else:
            H = -(((z * dphi[k]) @ z.conj().T / z.shape[1]).T) / abs(gamma) ** 2
            step = _newton(H, grad)
        if step is None:
            step = FALLBACK_STEP * grad
            fallbacks += 1
        h = state.w[k, 1:] + step
        beta = (1.0 - np.vdot(a[1:], h)) / np.conj(gamma)
        w_new[k, 0] = beta
        w_new[k, 1:] = h
    info = dict(grad_norm=grad_norm, fallbacks=fallbacks, contrast=float(np.mean(score.log_density(S))))
    return w_new, info


# QuickIVE-2 -----------------------------------------------------------------


def nu_stats(state: ExtractionState, X: np.ndarray, score: ScoreFunction) -> np.ndarray:
    """``nu[k, t] = mean(phi^k s_k)`` on every block, shape ``(K, T)``."""
    S = outputs(state.w, X)
    phi, _ = score.batch(S)
    nu = (phi * S).mean(axis=-1)
    if np.any(~(np.abs(nu) > FLOOR)):
        raise DegenerateStatisticError("nu fell below the floor")
    return nu


def quickive2_gradient(
    state: ExtractionState, X: np.ndarray, score: ScoreFunction, nu: Optional[np.ndarray] = None
) -> np.ndarray:
    """Block-averaged nu-scaled gradient w.r.t. ``conj(w^k)``, shape ``(K, d)``.

    ``nu`` is recomputed from the current outputs unless given (frozen).
    """
    S = outputs(state.w, X)
    phi, _ = score.batch(S)
    if nu is None:
        nu = (phi * S).mean(axis=-1)
        if np.any(~(np.abs(nu) > FLOOR)):
            raise DegenerateStatisticError("nu fell below the floor")
    Ephx = np.einsum("ktdn,ktn->ktd", X, phi) / X.shape[-1]
    return (state.a - Ephx / nu[:, :, None]).mean(axis=1)


def quickive2_hessian(
    state: ExtractionState, X: np.ndarray, score: ScoreFunction, nu: Optional[np.ndarray] = None
) -> np.ndarray:
    """``-<nu^{-1} E[dphi x x^H]^T>_t``, shape ``(K, d, d)``."""
    S = outputs(state.w, X)
    phi, dphi = score.batch(S)
    if nu is None:
        nu = (phi * S).mean(axis=-1)
        if np.any(~(np.abs(nu) > FLOOR)):
            raise DegenerateStatisticError("nu fell below the floor")
    M = np.einsum("ktin,ktn,ktjn->ktij", X, dphi, X.conj()) / X.shape[-1]
    return -(M.swapaxes(-1, -2) / nu[:, :, None, None]).mean(axis=1)


def quickive2_update(
    state: ExtractionState, X: np.ndarray, cov: CovarianceSet, score: ScoreFunction
) -> Tuple[np.ndarray, dict]:
    S = outputs(state.w, X)
    phi, dphi = score.batch(S)
    nu = (phi * S).mean(axis=-1)
    if np.any(~(np.abs(nu) > FLOOR)):
        raise DegenerateStatisticError("nu fell below the floor")
    n_b = X.shape[-1]
    Ephx = np.einsum("ktdn,ktn->ktd", X, phi) / n_b
    grad = (state.a - Ephx / nu[:, :, None]).mean(axis=1)
    M = np.einsum("ktin,ktn,ktjn->ktij", X, dphi, X.conj()) / n_b
    H = -(M.swapaxes(-1, -2) / nu[:, :, None, None]).mean(axis=1)
    w_new = np.empty_like(state.w)
    fallbacks = 0
    for k in range(state.K):
        step = _newton(H[k], grad[k])
        if step is None:
            step = FALLBACK_STEP * grad[k]
            fallbacks += 1
        w_new[k] = state.w[k] + step
    info = dict(
        grad_norm=float(np.linalg.norm(grad, axis=1).max()),
        fallbacks=fallbacks,
        contrast=float(np.mean(score.log_density(S))),
    )
    return w_new, info


def gradient_update(
    state: ExtractionState, X: np.ndarray, cov: CovarianceSet, score: ScoreFunction, mu: float = 0.2
) -> Tuple[np.ndarray, dict]:
    if mu < 0:
        raise ValueError("mu must be non-negative")
    S = outputs(state.w, X)
    grad = quickive2_gradient(state, X, score)
    info = dict(
        grad_norm=float(np.linalg.norm(grad, axis=1).max()),
        fallbacks=0,
        contrast=float(np.mean(score.log_density(S))),
    )
    return state.w + mu * grad, info


# Steps and the run loop -----------------------------------------------------


def _finish(state: ExtractionState, w_new: np.ndarray, cov: CovarianceSet, info: dict) -> ExtractionState:
    w, a = normalize_and_couple(w_new, cov)
    return replace(
        state,
        w=w,
        a=a,
        iteration=state.iteration + 1,
        last_step_norm=float(np.max(direction_change(state.w, w))),
        fallbacks=state.fallbacks + info["fallbacks"],
        diagnostics=state.diagnostics + (info,),
    )


def quickive1_step(state, X, cov, score, hessian: str = "exact") -> ExtractionState:
    w_new, info = quickive1_update(state, X, cov, score, hessian)
    return _finish(state, w_new, cov, info)


def quickive2_step(state, X, cov, score) -> ExtractionState:
    w_new, info = quickive2_update(state, X, cov, score)
    return _finish(state, w_new, cov, info)


def gradient_baseline_step(state, X, cov, score, mu: float = 0.2) -> ExtractionState:
    w_new, info = gradient_update(state, X, cov, score, mu)
    return _finish(state, w_new, cov, info)


def direction_change(w_old: np.ndarray, w_new: np.ndarray) -> np.ndarray:
    """``1 - |w_new^H w_old| / (|w_new| |w_old|)`` along the last axis."""
    num = np.abs(np.sum(w_new.conj() * w_old, axis=-1))
    den = np.linalg.norm(w_new, axis=-1) * np.linalg.norm(w_old, axis=-1)
    return 1.0 - num / den


def make_step(algorithm: str, hessian: str = "exact", mu: float = 0.2) -> Callable:
    if algorithm == "quickive1":
        if hessian not in HESSIAN_MODES:
            raise ValueError(f"unknown hessian mode {hessian!r}")
        return lambda s, X, cov, score: quickive1_step(s, X, cov, score, hessian)
    if algorithm == "quickive2":
        return quickive2_step
    if algorithm == "gradient":
        if not mu > 0:
            raise ValueError("mu must be positive")
        return lambda s, X, cov, score: gradient_baseline_step(s, X, cov, score, mu)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")


def run_extraction(
    algorithm: str,
    data: Dataset,
    init_w: np.ndarray,
    stopping: StoppingRule = StoppingRule(),
    score: Optional[ScoreFunction] = None,
    hessian: str = "exact",
    mu: float = 0.2,
    cov: Optional[CovarianceSet] = None,
) -> Tuple[ExtractionState, TrialOutcome]:
    """Iterate ``algorithm`` from ``init_w`` until the stopping rule fires.

    Stops when ``1 - |w_new^H w_old| / (|w_new| |w_old|) < tol`` for every
    mixture, or after ``max_iter`` steps. SIR is filled in when ``data``
    carries ground-truth sources (the first source is the target).
    """
    from .score import phi_rational

    score = score or phi_rational
    step = make_step(algorithm, hessian, mu)
    X = data.samples
    if cov is None:
        cov = CovarianceSet.from_samples(X, with_inverse=(hessian == "approx"))
    state = init_state(init_w, cov)
    converged = False
    t0 = time.perf_counter()
    for _ in range(stopping.max_iter):
        state = step(state, X, cov, score)
        if state.last_step_norm < stopping.tol:
            converged = True
            break
    wall_ms = 1e3 * (time.perf_counter() - t0)
    outcome = TrialOutcome(
        sir_db=extraction_sir(state.w, data),
        iterations=state.iteration,
        wall_ms=wall_ms,
        converged=converged,
    )
    return state, outcome


def extraction_sir(w: np.ndarray, data: Dataset) -> np.ndarray:
    """SIR of ``w^{kH} x^k`` against the first true source of each mixture."""
    if data.sources is None:
        return np.full(w.shape[0], np.nan)
    Y = outputs(w, data.samples)
    return np.array([sir(Y[k].ravel(), data.sources[k, :, 0, :].ravel()) for k in range(w.shape[0])])


def phase_rotate(state: ExtractionState, theta: np.ndarray) -> ExtractionState:
    """Rotate ``w^k`` and ``a^k`` by ``exp(i theta_k)``; ``w^H a`` is unchanged."""
    ph = np.exp(1j * np.asarray(theta, dtype=float).reshape(-1))
    if ph.size == 1:
        ph = np.repeat(ph, state.K)
    return replace(state, w=state.w * ph[:, None], a=state.a * ph[:, None, None])
