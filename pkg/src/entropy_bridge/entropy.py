"""Relative entropy functionals for Gaussian and finite discrete measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .matgauss import pd_eig

MASS_TOL = 1e-12


@dataclass(eq=False)
class GaussianDist:
    """Gaussian measure with mean vector and positive definite covariance.

    The covariance eigendecomposition is computed once at construction and
    reused for every inverse and log-determinant.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float)).copy()
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionError(
                f"mean has size {mean.size} but covariance shape is {cov.shape}"
            )
        w, q = pd_eig(cov)  # raises DefinitenessError unless PD
        mean.flags.writeable = False
        cov.flags.writeable = False
        self.mean = mean
        self.cov = cov
        self._cov_eigvals = w
        self._cov_eigvecs = q

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov_logdet(self) -> float:
        return float(np.log(self._cov_eigvals).sum())

    def cov_inverse(self) -> np.ndarray:
        q, w = self._cov_eigvecs, self._cov_eigvals
        inv = (q / w) @ q.T
        return 0.5 * (inv + inv.T)


def gauss_relent(p: GaussianDist, q: GaussianDist) -> float:
    """Relative entropy D(p || q) between Gaussian measures.

    Equals ``((m_p - m_q)' C_q^{-1} (m_p - m_q) + Tr X - ln det X - n) / 2``
    with ``X = C_q^{-1} C_p``; nonnegative, zero iff the measures coincide.
    """
    if p.dim != q.dim:
        raise DimensionError(f"dimension mismatch: {p.dim} vs {q.dim}")
    d = p.mean - q.mean
    y = q._cov_eigvecs.T @ d
    mean_term = float((y * y / q._cov_eigvals).sum())
    tr_chi = float((q.cov_inverse() * p.cov).sum())
    logdet_chi = p.cov_logdet - q.cov_logdet
    val = 0.5 * (mean_term + tr_chi - logdet_chi - p.dim)
    return max(val, 0.0)


@dataclass(eq=False)
class FiniteDist:
    """Probability masses over an indexed finite alphabet."""

    masses: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.masses, dtype=float)).copy()
        if m.ndim != 1:
            raise DimensionError("masses must be a vector")
        if m.min(initial=0.0) < -MASS_TOL:
            raise ValueError(f"negative mass {m.min():.3e}")
        np.clip(m, 0.0, None, out=m)
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {m.sum()!r}, not 1")
        m.flags.writeable = False
        self.masses = m

    @property
    def size(self) -> int:
        return self.masses.size


@dataclass(eq=False)
class FiniteJoint:
    """Joint masses over state x noise-word, state axis first.

    Shape is ``(nx, nw, ..., nw)`` with one trailing axis per noise letter.
    """

    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float).copy()
        if m.ndim < 1:
            raise DimensionError("joint must have a state axis")
        if m.min(initial=0.0) < -MASS_TOL:
            raise ValueError(f"negative mass {m.min():.3e}")
        np.clip(m, 0.0, None, out=m)
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {m.sum()!r}, not 1")
        m.flags.writeable = False
        self.masses = m

    @property
    def nx(self) -> int:
        return self.masses.shape[0]

    @property
    def word_len(self) -> int:
        return self.masses.ndim - 1

    def state_marginal(self) -> np.ndarray:
        axes = tuple(range(1, self.masses.ndim))
        return self.masses.sum(axis=axes) if axes else self.masses.copy()


def finite_relent(p: FiniteDist, q: FiniteDist) -> float:
    """D(p || q) on a common alphabet; +inf if p charges a q-null point.

    Uses the convention 0 ln 0 = 0.
    """
    if p.size != q.size:
        raise DimensionError(f"alphabet mismatch: {p.size} vs {q.size}")
    pm, qm = p.masses, q.masses
    pos = pm > 0.0
    if np.any(qm[pos] == 0.0):
        return math.inf
    val = float((pm[pos] * np.log(pm[pos] / qm[pos])).sum())
    return max(val, 0.0)


def product_masses(ref: FiniteDist, k: int) -> np.ndarray:
    """Masses of the k-fold product of ``ref``, shape ``(nw,)*k``."""
    out = np.ones(())
    for _ in range(k):
        out = out[..., None] * ref.masses
    return out


def finite_cond_relent(joint: FiniteJoint, ref_noise: FiniteDist, k: int) -> float:
    """Conditional relative entropy of the noise-word law given the state.

    For a joint Q over (x, w) with w a k-letter word, returns
    ``sum Q(x, w) ln( Q(w|x) / R^k(w) )`` where R^k is the product reference.
    An absolute continuity failure (mass on an R^k-null word) yields +inf.
    """
    m = joint.masses
    if m.ndim != k + 1 or any(ax != ref_noise.size for ax in m.shape[1:]):
        raise DimensionError(
            f"joint shape {m.shape} incompatible with k={k}, |W|={ref_noise.size}"
        )
    flat = m.reshape(m.shape[0], -1)
    px = flat.sum(axis=1)
    ref = product_masses(ref_noise, k).reshape(-1)
    pos = flat > 0.0
    denom = px[:, None] * ref[None, :]
    if np.any(denom[pos] == 0.0):
        return math.inf
    val = float((flat[pos] * np.log(flat[pos] / denom[pos])).sum())
    return max(val, 0.0)
