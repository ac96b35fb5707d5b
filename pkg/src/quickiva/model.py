"""Mixing-model parameterization for one-source extraction.

The mixing matrix of every mixture ``k`` and block ``t`` is written in terms of
the mixing vector ``a = [gamma; g]`` and the separating vector
``w = [beta; h]``::

    A = [[gamma, h^H                     ],
         [g,     (g h^H - I) / gamma     ]]

    W = [[conj(beta), h^H      ],
         [g,          -gamma I ]]

with ``W = inv(A)`` whenever ``w^H a = 1``. The lower block ``B = [g, -gamma I]``
of ``W`` annihilates ``a`` and yields the background signals ``z = B x``.

Under the constant-separating-vector (CSV) model ``beta`` and ``h`` are shared by
all blocks of a mixture; :class:`IveParams` stores them broadcast over ``t`` so
both models run through the same code.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

FLOOR = 1e-10


class DegenerateError(ArithmeticError):
    """Base class for recoverable numerical degeneracies."""


class SingularParameterizationError(DegenerateError):
    """``gamma`` or ``beta`` fell below the floor."""


class DegenerateDirectionError(DegenerateError):
    """A quadratic form ``w^H C w`` vanished."""


@dataclass(frozen=True)
class IveParams:
    """Per-(k, t) parameters ``gamma, g, beta, h``.

    Shapes: ``gamma, beta`` are ``(K, T)``, ``g, h`` are ``(K, T, d - 1)``.
    Under CSV, ``beta`` and ``h`` are read-only broadcast views of a single
    value per mixture.
    """

    gamma: np.ndarray
    g: np.ndarray
    beta: np.ndarray
    h: np.ndarray
    csv: bool = False

    @property
    def K(self) -> int:
        return self.gamma.shape[0]

    @property
    def T(self) -> int:
        return self.gamma.shape[1]

    @property
    def d(self) -> int:
        return self.g.shape[2] + 1

    @classmethod
    def from_vectors(cls, w: np.ndarray, a: np.ndarray) -> "IveParams":
        """Split separating vectors ``w`` and mixing vectors ``a`` into parameters.

        ``a`` has shape ``(K, T, d)``. ``w`` has shape ``(K, d)`` (shared over
        blocks, CSV) or ``(K, T, d)``.
        """
        a = np.asarray(a, dtype=complex)
        w = np.asarray(w, dtype=complex)
        K, T, d = a.shape
        csv = w.ndim == 2
        if csv:
            w = np.broadcast_to(w[:, None, :], (K, T, d))
        return cls(
            gamma=a[:, :, 0], g=a[:, :, 1:], beta=w[:, :, 0], h=w[:, :, 1:], csv=csv
        )

    def mixing_vector(self, k: int, t: int = 0) -> np.ndarray:
        return np.concatenate([[self.gamma[k, t]], self.g[k, t]])

    def separating_vector(self, k: int, t: int = 0) -> np.ndarray:
        return np.concatenate([[self.beta[k, t]], self.h[k, t]])

    def constraint_residual(self) -> np.ndarray:
        """``gamma conj(beta) - (1 - h^H g)`` for every (k, t)."""
        hg = np.einsum("ktd,ktd->kt", self.h.conj(), self.g)
        return self.gamma * self.beta.conj() - (1.0 - hg)


def _check_floor(value: complex, name: str, floor: float = FLOOR) -> None:
    if not abs(value) > floor:
        raise SingularParameterizationError(f"|{name}| = {abs(value):.3g} is below {floor:g}")


def assemble_mixing(params: IveParams, k: int, t: int = 0, floor: float = FLOOR) -> np.ndarray:
    gamma = params.gamma[k, t]
    _check_floor(gamma, "gamma", floor)
    g, h = params.g[k, t], params.h[k, t]
    d = params.d
    A = np.empty((d, d), dtype=complex)
    A[0, 0] = gamma
    A[0, 1:] = h.conj()
    A[1:, 0] = g
    A[1:, 1:] = (np.outer(g, h.conj()) - np.eye(d - 1)) / gamma
    return A


def assemble_demixing(params: IveParams, k: int, t: int = 0) -> np.ndarray:
    d = params.d
    W = np.empty((d, d), dtype=complex)
    W[0, 0] = np.conj(params.beta[k, t])
    W[0, 1:] = params.h[k, t].conj()
    W[1:, :] = blocking_matrix(params, k, t)
    return W


def blocking_matrix(params: IveParams, k: int, t: int = 0) -> np.ndarray:
    """``B = [g, -gamma I]``, shape ``(d - 1, d)``."""
    return blocking_from_mixing(params.mixing_vector(k, t))


def blocking_from_mixing(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    d = a.shape[-1]
    B = np.zeros((d - 1, d), dtype=complex)
    B[:, 0] = a[1:]
    B[:, 1:] = -a[0] * np.eye(d - 1)
    return B


def complete_beta(params: IveParams, k: int, t: int = 0, floor: float = FLOOR) -> complex:
    """``beta`` satisfying the distortionless constraint for the stored gamma, g, h."""
    gamma = params.gamma[k, t]
    _check_floor(gamma, "gamma", floor)
    gh = np.vdot(params.g[k, t], params.h[k, t])
    return complex((1.0 - gh) / np.conj(gamma))


def complete_gamma(params: IveParams, k: int, t: int = 0, floor: float = FLOOR) -> complex:
    """``gamma`` satisfying the distortionless constraint for the stored beta, g, h."""
    beta = params.beta[k, t]
    _check_floor(beta, "beta", floor)
    hg = np.vdot(params.h[k, t], params.g[k, t])
    return complex((1.0 - hg) / np.conj(beta))


def orthogonal_coupling(w: np.ndarray, cx: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Mixing vector ``a = C w / (w^H C w)`` tied to the separating vector ``w``."""
    Cw = cx @ w
    q = np.vdot(w, Cw)
    if not abs(q) > floor:
        raise DegenerateDirectionError(f"w^H C w = {abs(q):.3g} is below {floor:g}")
    return Cw / q.real


@dataclass(frozen=True)
class Dataset:
    """Observations ``samples[k, t, :, n]`` with optional ground truth.

    ``sources`` has the same shape as ``samples``; ``mixing[k, t]`` is the true
    ``d x d`` mixing matrix of mixture ``k`` on block ``t``.
    """

    samples: np.ndarray
    sources: Optional[np.ndarray] = None
    mixing: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.samples.ndim != 4:
            raise ValueError(f"samples must be (K, T, d, N_b), got shape {self.samples.shape}")

    @property
    def K(self) -> int:
        return self.samples.shape[0]

    @property
    def T(self) -> int:
        return self.samples.shape[1]

    @property
    def d(self) -> int:
        return self.samples.shape[2]

    @property
    def n_block(self) -> int:
        return self.samples.shape[3]

    @property
    def N(self) -> int:
        return self.T * self.n_block

    def subset(self, ks) -> "Dataset":
        """Dataset restricted to the mixtures ``ks`` (a slice or index list)."""
        return Dataset(
            samples=self.samples[ks],
            sources=None if self.sources is None else self.sources[ks],
            mixing=None if self.mixing is None else self.mixing[ks],
        )


@dataclass(frozen=True)
class CovarianceSet:
    """Sample covariances ``cx[k, t]`` and, optionally, their inverses."""

    cx: np.ndarray
    inv: Optional[np.ndarray] = None

    @classmethod
    def from_samples(cls, samples: np.ndarray, with_inverse: bool = False) -> "CovarianceSet":
        n_block = samples.shape[-1]
        if n_block < samples.shape[-2]:
            warnings.warn(
                f"N_b = {n_block} < d = {samples.shape[-2]}: covariance is rank deficient",
                RuntimeWarning,
                stacklevel=2,
            )
        cx = np.einsum("ktin,ktjn->ktij", samples, samples.conj()) / n_block
        cx = 0.5 * (cx + cx.conj().swapaxes(-1, -2))
        inv = np.linalg.inv(cx) if with_inverse else None
        return cls(cx=cx, inv=inv)

    def block_average(self) -> np.ndarray:
        """``<C^{k,t}>_t``, shape ``(K, d, d)``."""
        return self.cx.mean(axis=1)


def sample_covariance(dataset: Dataset, k: int, t: int = 0) -> np.ndarray:
    return CovarianceSet.from_samples(dataset.samples[k : k + 1, t : t + 1]).cx[0, 0]


def background_cov(cx: np.ndarray, params: IveParams, k: int, t: int = 0) -> np.ndarray:
    """Covariance of the background signals, ``B C B^H``."""
    B = blocking_matrix(params, k, t)
    Cz = B @ cx @ B.conj().T
    return 0.5 * (Cz + Cz.conj().T)


def background_cov_inv(cx_inv: np.ndarray, params: IveParams, k: int, t: int = 0) -> np.ndarray:
    """Inverse of ``B C B^H`` from a known ``inv(C)``, without a fresh inversion.

    With ``A = [a, Q]`` the mixing matrix, ``inv(W C W^H) = A^H inv(C) A``; the
    lower-right block of its inverse is a rank-one downdate of ``Q^H inv(C) Q``.
    Requires the distortionless constraint to hold.
    """
    A = assemble_mixing(params, k, t)
    a, Q = A[:, 0], A[:, 1:]
    Pa = cx_inv @ a
    PQ = cx_inv @ Q
    p11 = np.vdot(a, Pa)
    p21 = Q.conj().T @ Pa
    out = Q.conj().T @ PQ - np.outer(p21, p21.conj()) / p11
    return 0.5 * (out + out.conj().T)
