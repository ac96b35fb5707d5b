"""Seeded synthetic mixtures for the extraction and separation benchmarks.

All generators draw from a :class:`numpy.random.Generator` backed by PCG64;
per-trial streams come from :func:`trial_rng`, which spawns children of a
``SeedSequence`` so trials are reproducible independently of worker layout.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .model import Dataset

COND_CAP = 1e4
MAX_REDRAWS = 100


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return np.random.Generator(np.random.PCG64(ss))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circular complex Gaussian with unit variance ``E|x|^2 = 1``."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def exp_power_lambda2(K: int, alpha: float) -> float:
    """Scale ``lambda^2`` making each component of the exponential-power law unit variance."""
    return float(np.exp(gammaln((K + 1) / alpha) - gammaln(K / alpha)) / K)


def sample_exp_power(rng: np.random.Generator, K: int, alpha: float, n: int) -> np.ndarray:
    """Draw ``n`` vectors from ``p(s) ~ exp(-(lambda^2 |s|^2)^alpha)`` on ``C^K``.

    The law is spherically symmetric: the direction is uniform on the complex
    unit sphere and ``(lambda^2 r^2)^alpha`` is Gamma(K / alpha) distributed.
    Returns an array of shape ``(K, n)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if K < 1:
        raise ValueError("K must be at least 1")
    direction = complex_normal(rng, (K, n))
    direction /= np.linalg.norm(direction, axis=0, keepdims=True)
    q = rng.gamma(K / alpha, 1.0, size=n)
    r = q ** (1.0 / (2.0 * alpha)) / np.sqrt(exp_power_lambda2(K, alpha))
    return direction * r


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary matrix."""
    Z = complex_normal(rng, (n, n))
    Q, R = np.linalg.qr(Z)
    diag = np.diag(R)
    return Q * (diag / np.abs(diag))


def random_mixing(rng: np.random.Generator, d: int, cond_cap: float = COND_CAP) -> np.ndarray:
    """Complex Gaussian ``d x d`` matrix with condition number at most ``cond_cap``."""
    if not cond_cap > 1:
        raise ValueError("cond_cap must exceed 1")
    for _ in range(MAX_REDRAWS):
        A = complex_normal(rng, (d, d))
        if np.linalg.cond(A) <= cond_cap:
            return A
    raise RuntimeError(f"no {d}x{d} mixing matrix with cond <= {cond_cap:g} in {MAX_REDRAWS} draws")


def laplacean(rng: np.random.Generator, size) -> np.ndarray:
    """Unit-variance circular Laplacean samples."""
    size = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(size))
    return sample_exp_power(rng, 1, 0.5, n).reshape(size)


def _iva_sources(rng, K: int, d: int, N: int, alpha: float) -> np.ndarray:
    """Independent sources ``(K, d, N)``; source 0 is dependent across mixtures."""
    S = sample_exp_power(rng, 1, alpha, K * d * N).reshape(K, d, N)
    U = random_unitary(rng, K)
    S[:, 0, :] = U @ S[:, 0, :]
    return S


def generate_iva_dataset(
    rng: np.random.Generator, K: int = 3, d: int = 6, N: int = 1000, alpha_soi: float = 0.5
) -> Dataset:
    """Extraction benchmark data with a single block.

    Every mixture holds ``d`` circular Laplacean sources; the first sources of
    the ``K`` mixtures are mixed by a random unitary matrix, which leaves them
    uncorrelated but dependent.
    """
    if K < 1 or d < 1:
        raise ValueError("K and d must be positive")
    S = _iva_sources(rng, K, d, N, alpha_soi)
    A = np.stack([random_mixing(rng, d) for _ in range(K)])
    X = A @ S
    return Dataset(samples=X[:, None], sources=S[:, None], mixing=A[:, None])


def generate_csv_dataset(
    rng: np.random.Generator,
    K: int = 3,
    d: int = 6,
    T: int = 3,
    n_block: int = 1000,
    n_csv_sources: int = 3,
    alpha_soi: float = 0.5,
    cond_cap: float = COND_CAP,
) -> Dataset:
    """Piecewise mixtures whose first ``n_csv_sources`` demixing rows are constant over blocks."""
    if not 1 <= n_csv_sources <= d:
        raise ValueError("need 1 <= n_csv_sources <= d")
    S = _iva_sources(rng, K, d, T * n_block, alpha_soi)
    S = S.reshape(K, d, T, n_block).transpose(0, 2, 1, 3)
    A = np.empty((K, T, d, d), dtype=complex)
    for k in range(K):
        for _ in range(MAX_REDRAWS):
            fixed = complex_normal(rng, (n_csv_sources, d))
            blocks = []
            for t in range(T):
                for _ in range(MAX_REDRAWS):
                    W = np.vstack([fixed, complex_normal(rng, (d - n_csv_sources, d))])
                    if np.linalg.cond(W) <= cond_cap:
                        blocks.append(W)
                        break
                else:
                    break
            if len(blocks) == T:
                break
        else:
            raise RuntimeError("could not draw well-conditioned CSV demixing matrices")
        for t, W in enumerate(blocks):
            A[k, t] = np.linalg.inv(W)
    X = A @ S
    return Dataset(samples=X, sources=S, mixing=A)


def generate_separation_dataset(
    rng: np.random.Generator, K: int = 3, d: int = 5, N: int = 5000, alpha: float = 0.4
) -> Dataset:
    """``d`` independent vector components, each exponential-power over the ``K`` mixtures."""
    S = np.stack([sample_exp_power(rng, K, alpha, N) for _ in range(d)], axis=1)
    A = np.stack([random_mixing(rng, d) for _ in range(K)])
    X = A @ S
    return Dataset(samples=X[:, None], sources=S[:, None], mixing=A[:, None])


def true_separating_vectors(data: Dataset) -> np.ndarray:
    """Separating vectors of the first source, ``conj`` of the first row of ``inv(A^{k,1})``."""
    return np.stack([np.linalg.inv(data.mixing[k, 0])[0].conj() for k in range(data.K)])


def near_ideal_init(rng: np.random.Generator, w_true: np.ndarray, norm: float = 0.1) -> np.ndarray:
    """``w_true`` plus a complex Gaussian perturbation of the given norm, per mixture."""
    p = complex_normal(rng, w_true.shape)
    p *= norm / np.linalg.norm(p, axis=-1, keepdims=True)
    return w_true + p
