"""Oracle checks runnable from the command line.

Each check returns a :class:`Check` with the worst observed error and the
tolerance it was held to. ``hessian_sign=-1`` corrupts the analytic Hessians
before comparison; the derivative checks must then fail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import stats

from . import oracles, simgen
from .extract import ExtractionState, init_state, nu_stats, quickive1_gradient, quickive1_hessian
from .extract import quickive2_gradient, quickive2_hessian
from .model import (
    CovarianceSet,
    IveParams,
    assemble_demixing,
    assemble_mixing,
    background_cov,
    background_cov_inv,
    blocking_matrix,
    orthogonal_coupling,
)
from .score import SCORES
from .separate import symmetric_orthogonalize


@dataclass
class Check:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)


def random_params(rng, d: int, K: int = 1, T: int = 1) -> IveParams:
    """Random parameters with beta completed from the distortionless constraint."""
    a = simgen.complex_normal(rng, (K, T, d))
    a[..., 0] += 0.5 * np.exp(1j * rng.uniform(0, 2 * np.pi, (K, T)))  # keep |gamma| off zero
    h = simgen.complex_normal(rng, (K, T, d - 1))
    hg = np.einsum("ktd,ktd->kt", h.conj(), a[..., 1:])
    beta = np.conj((1.0 - hg) / a[..., 0])
    w = np.concatenate([beta[..., None], h], axis=-1)
    return IveParams.from_vectors(w, a)


def check_algebra(rng, draws: int = 1000, dims=range(2, 9)) -> List[Check]:
    dims = list(dims)
    inv_err = block_err = det_err = coup_err = 0.0
    for i in range(draws):
        d = dims[i % len(dims)]
        p = random_params(rng, d)
        A = assemble_mixing(p, 0)
        W = assemble_demixing(p, 0)
        inv_err = max(inv_err, np.linalg.norm(W @ A - np.eye(d)))
        a = p.mixing_vector(0)
        block_err = max(block_err, np.linalg.norm(blocking_matrix(p, 0) @ a) / np.linalg.norm(a))
        det = abs(np.linalg.det(W)) ** 2
        ref = abs(p.gamma[0, 0]) ** (2 * (d - 2))
        det_err = max(det_err, abs(det - ref) / ref)
        M = simgen.complex_normal(rng, (d, d))
        C = M @ M.conj().T + 0.1 * np.eye(d)
        w = simgen.complex_normal(rng, d)
        coup_err = max(coup_err, abs(np.vdot(w, orthogonal_coupling(w, C)) - 1.0))
    return [
        Check("demixing @ mixing = I (Frobenius)", inv_err, 1e-10),
        Check("|B a| / |a|", block_err, 1e-12),
        Check("|det W|^2 = |gamma|^(2(d-2)) (relative)", det_err, 1e-10),
        Check("w^H a = 1 after coupling", coup_err, 1e-12),
    ]


def check_inversion_lemma(rng, draws: int = 50) -> Check:
    err = 0.0
    for i in range(draws):
        d = 2 + i % 6
        p = random_params(rng, d)
        M = simgen.complex_normal(rng, (d, d))
        C = M @ M.conj().T + 0.1 * np.eye(d)
        direct = np.linalg.inv(background_cov(C, p, 0))
        lemma = background_cov_inv(np.linalg.inv(C), p, 0)
        err = max(err, np.linalg.norm(lemma - direct) / np.linalg.norm(direct))
    return Check("C_z inverse: inversion lemma vs dense (relative)", err, 1e-8)


def check_scores(rng, points: int = 1000) -> List[Check]:
    out = []
    for name, score in SCORES.items():
        err = 0.0
        for _ in range(points):
            K = int(rng.integers(1, 5))
            s = simgen.complex_normal(rng, K)
            s *= rng.uniform(0.1, 10.0) / np.linalg.norm(s)
            k = int(rng.integers(K))
            analytic = score.conj_deriv(s, k)
            numeric = oracles.score_conj_deriv(score, s, k)
            err = max(err, abs(analytic - numeric) / (1.0 + abs(analytic)))
        out.append(Check(f"{name}: d phi / d s* vs finite difference", err, 1e-6))
    return out


def _instance(rng, d: int, K: int, T: int = 1, N: int = 200):
    X = simgen.complex_normal(rng, (K, T, d, N))
    X = np.einsum("kij,ktjn->ktin", simgen.complex_normal(rng, (K, d, d)) + 2 * np.eye(d), X)
    X[:, :, 0] += simgen.laplacean(rng, (K, T, N))
    cov = CovarianceSet.from_samples(X)
    state = init_state(simgen.complex_normal(rng, (K, d)), cov)
    return X, cov, state


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / scale)


def quickive1_errors(rng, score, d: int, K: int, hessian_sign: float = 1.0):
    """Worst relative gradient and Hessian errors of QuickIVE-1 over all k."""
    X, cov, st = _instance(rng, d, K)
    g_err = h_err = 0.0
    for k in range(K):
        F = oracles.quickive1_contrast(st.w, st.a[:, 0], X[:, 0], score, k)
        fd = oracles.wirtinger_conj(F, st.w[k, 1:], step=None)
        g_err = max(g_err, _rel(quickive1_gradient(st, X, score, k), fd))

        gamma, g = st.a[k, 0, 0], st.a[k, 0, 1:]

        def G(h):
            W = st.w.copy()
            W[k] = np.concatenate([[np.conj((1.0 - np.vdot(h, g)) / gamma)], h])
            return quickive1_gradient(ExtractionState(W, st.a), X, score, k)

        J = oracles.wirtinger_jacobian(G, st.w[k, 1:])
        H = hessian_sign * quickive1_hessian(st, X, score, k)
        h_err = max(h_err, _rel(H.T, J))
    return g_err, h_err


def quickive2_errors(rng, score, d: int, K: int, T: int = 1, hessian_sign: float = 1.0):
    X, cov, st = _instance(rng, d, K, T)
    nu = nu_stats(st, X, score)
    grad = quickive2_gradient(st, X, score, nu)
    H = hessian_sign * quickive2_hessian(st, X, score, nu)
    g_err = h_err = 0.0
    for k in range(K):
        F = oracles.quickive2_contrast(st.w, st.a[:, :, 1:], X, score, k, nu)
        fd = oracles.wirtinger_conj(F, st.w[k], step=None)
        g_err = max(g_err, _rel(grad[k], fd))

        def G(wk):
            W = st.w.copy()
            W[k] = wk
            return quickive2_gradient(ExtractionState(W, st.a), X, score, nu)[k]

        J = oracles.wirtinger_jacobian(G, st.w[k])
        h_err = max(h_err, _rel(H[k].T, J))
    return g_err, h_err


def check_derivatives(rng, instances: int = 50, hessian_sign: float = 1.0) -> List[Check]:
    errs = {key: 0.0 for key in ("g1", "h1", "g2", "h2")}
    for i in range(instances):
        d = (2, 3, 4)[i % 3]
        K = 1 + (i // 3) % 2
        for score in SCORES.values():
            g1, h1 = quickive1_errors(rng, score, d, K, hessian_sign)
            g2, h2 = quickive2_errors(rng, score, d, K, 1 + i % 2, hessian_sign)
            errs["g1"] = max(errs["g1"], g1)
            errs["h1"] = max(errs["h1"], h1)
            errs["g2"] = max(errs["g2"], g2)
            errs["h2"] = max(errs["h2"], h2)
    return [
        Check("QuickIVE-1 gradient vs contrast finite difference", errs["g1"], 1e-5),
        Check("QuickIVE-1 Hessian vs gradient Jacobian", errs["h1"], 1e-4),
        Check("QuickIVE-2 scaled gradient vs contrast finite difference", errs["g2"], 1e-5),
        Check("QuickIVE-2 Hessian vs gradient Jacobian (nu frozen)", errs["h2"], 1e-4),
    ]


def rejection_radii(rng, K: int, alpha: float, n: int) -> np.ndarray:
    """Radii from ``r^(2K-1) exp(-(lambda^2 r^2)^alpha)`` by uniform-envelope rejection."""
    lam2 = simgen.exp_power_lambda2(K, alpha)
    log_pdf = lambda r: (2 * K - 1) * np.log(r) - (lam2 * r * r) ** alpha
    grid = np.linspace(1e-6, 200.0, 200001)
    lp = log_pdf(grid)
    r_max = grid[lp > lp.max() - 40.0][-1]
    peak = lp.max()
    out = []
    total = 0
    while total < n:
        r = rng.uniform(0.0, r_max, 4 * n)
        keep = np.log(rng.uniform(size=r.size)) < log_pdf(np.maximum(r, 1e-300)) - peak
        out.append(r[keep])
        total += int(keep.sum())
    return np.concatenate(out)[:n]


def check_sampler(rng, n: int = 10**6, n_ks: int = 10**5) -> List[Check]:
    out = []
    for K, alpha in ((1, 0.5), (1, 1.0), (3, 0.4)):
        s = simgen.sample_exp_power(rng, K, alpha, n)
        var_err = float(np.abs(np.mean(np.abs(s) ** 2, axis=1) - 1.0).max())
        out.append(Check(f"exp-power K={K} alpha={alpha}: unit variance", var_err, 0.01))
        r_fast = np.linalg.norm(simgen.sample_exp_power(rng, K, alpha, n_ks), axis=0)
        r_ref = rejection_radii(rng, K, alpha, n_ks)
        p = stats.ks_2samp(r_fast, r_ref).pvalue
        # reported as 0.01 / p so that passing means error <= 1
        out.append(Check(f"exp-power K={K} alpha={alpha}: radial KS (0.01/p)", 0.01 / max(p, 1e-300), 1.0))
    return out


def check_orthogonalization(rng, draws: int = 100) -> Check:
    err = 0.0
    for i in range(draws):
        d = 1 + i % 8
        U = symmetric_orthogonalize(simgen.complex_normal(rng, (d, d)))
        err = max(err, np.linalg.norm(U.conj().T @ U - np.eye(d)))
    return Check("symmetric orthogonalization: W^H W = I", err, 1e-10)


def run_all(seed: int = 0, hessian_sign: float = 1.0, quick: bool = True) -> List[Check]:
    rng = simgen.make_rng(seed)
    checks = []
    checks += check_algebra(rng, 200 if quick else 1000)
    checks.append(check_inversion_lemma(rng))
    checks += check_scores(rng, 200 if quick else 1000)
    checks += check_derivatives(rng, 6 if quick else 50, hessian_sign)
    checks += check_sampler(rng, 2 * 10**5 if quick else 10**6, 2 * 10**4 if quick else 10**5)
    checks.append(check_orthogonalization(rng))
    if quick:
        # fewer samples: widen the moment tolerance to the matching 5 sigma band
        for c in checks:
            if c.name.endswith("unit variance"):
                c.tol = 0.03
    return checks
