"""Gaussian bridge solver for linear systems.

Computes the minimum conditional relative-entropy supply an uncertain noise
must deliver to steer ``x' = A x + B w`` between Gaussian state distributions
over a fixed horizon, together with the optimal affine-Gaussian noise
strategy, a guaranteed-feasible strategy, lower bounds, infinite-horizon
limits, and per-leg path supplies.

Supply of an affine strategy (stacked noise conditionally
``N(w_mean + K (x0 - anchor), L)`` given the initial state) is

    (|w_mean|^2 + Tr(K S K' + L) - ln det L - m t) / 2,

with ``S`` the initial covariance.  The minimum over steering strategies is

    (|b - A^t a|^2_{G^{-1}} + Tr(U + V - sqrt(I + 4 U V)) - ln det X) / 2,

where ``G`` is the horizon-``t`` reachability Gramian,
``U = G^{-1/2} A^t S (A^t)' G^{-1/2}``, ``V = G^{-1/2} T G^{-1/2}`` for the
terminal covariance ``T``, and ``X`` solves ``X + X U X = V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .entropy import GaussianDist, gauss_relent
from .errors import ConvergenceError, DimensionError, ParameterError, UnreachableError
from .matgauss import (
    GramianSet,
    LinearSystem,
    dlyap_inf,
    gramians,
    pd_eig,
    pd_inverse,
    pd_sqrt_pair,
    riccati_closed_form,
    sqrt_psd,
)

LN2 = math.log(2.0)


@dataclass(eq=False)
class NoiseStrategy:
    """Affine Gaussian conditional law of the stacked noise given x0.

    The stacked noise over the horizon is ``N(w_mean + gain (x0 - anchor_mean),
    cond_cov)``; admissibility requires ``cond_cov`` PD.
    """

    horizon: int
    w_mean: np.ndarray
    gain: np.ndarray
    cond_cov: np.ndarray
    anchor_mean: np.ndarray

    def __post_init__(self):
        w_mean = np.atleast_1d(np.asarray(self.w_mean, dtype=float)).copy()
        gain = np.atleast_2d(np.asarray(self.gain, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cond_cov, dtype=float)).copy()
        anchor = np.atleast_1d(np.asarray(self.anchor_mean, dtype=float)).copy()
        mt = w_mean.size
        if gain.shape[0] != mt or cov.shape != (mt, mt):
            raise DimensionError(
                f"inconsistent strategy shapes: w_mean {mt}, gain {gain.shape}, "
                f"cond_cov {cov.shape}"
            )
        if gain.shape[1] != anchor.size:
            raise DimensionError(
                f"gain maps {gain.shape[1]}-vectors but anchor has size {anchor.size}"
            )
        pd_eig(cov)  # admissibility
        for arr in (w_mean, gain, cov, anchor):
            arr.flags.writeable = False
        self.w_mean = w_mean
        self.gain = gain
        self.cond_cov = cov
        self.anchor_mean = anchor

    @property
    def noise_dim(self) -> int:
        return self.w_mean.size


@dataclass(eq=False)
class BridgeSolution:
    """Minimum supply and its ingredients; ``supply`` is +inf when the
    horizon is below the minimal steering horizon."""

    supply: float
    mean_part: float
    cov_part: float
    riccati_sol: np.ndarray | None
    riccati_u: np.ndarray | None
    riccati_v: np.ndarray | None
    strategy: NoiseStrategy | None
    grams: GramianSet

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.supply)


def _core(sys: LinearSystem, horizon: int, phi: GaussianDist, psi: GaussianDist):
    if phi.dim != sys.n or psi.dim != sys.n:
        raise DimensionError(
            f"distributions of dim {phi.dim}/{psi.dim} for an n={sys.n} system"
        )
    grams = gramians(sys, horizon)
    if not grams.full_rank:
        return grams, None
    g_sqrt, g_isqrt = pd_sqrt_pair(grams.gram)
    g_inv = g_isqrt @ g_isqrt
    a_pow = np.linalg.matrix_power(sys.A, horizon)
    d = psi.mean - a_pow @ phi.mean
    mean_part = float(d @ g_inv @ d)
    u = g_isqrt @ a_pow @ phi.cov @ a_pow.T @ g_isqrt
    v = g_isqrt @ psi.cov @ g_isqrt
    u = 0.5 * (u + u.T)
    v = 0.5 * (v + v.T)
    sol, trace_sqrt, logdet_factor = riccati_closed_form(u, v)
    logdet_v = float(np.log(np.linalg.eigvalsh(v)).sum())
    cov_part = (
        float(np.trace(u) + np.trace(v))
        - trace_sqrt
        + logdet_factor
        - sys.n * LN2
        - logdet_v
    )
    cov_part = max(cov_part, 0.0)
    return grams, (g_sqrt, g_isqrt, g_inv, a_pow, d, mean_part, u, v, sol, cov_part)


def _strategy_from_core(sys, horizon, phi, grams, core) -> NoiseStrategy:
    g_sqrt, g_isqrt, g_inv, a_pow, d, _, _, _, sol, _ = core
    h = grams.H
    mt = h.shape[1]
    s_mat = g_sqrt @ sol @ g_sqrt
    n_mat = g_inv - pd_inverse(s_mat)
    n_mat = 0.5 * (n_mat + n_mat.T)
    w_mean = h.T @ (g_inv @ d)
    l_prec = np.eye(mt) - h.T @ n_mat @ h
    w, q = np.linalg.eigh(0.5 * (l_prec + l_prec.T))
    if w[0] <= 0.0:
        raise ConvergenceError(
            f"conditional covariance lost definiteness (eigenvalue {w[0]:.3e})",
            last=w,
        )
    cond_cov = (q / w) @ q.T
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    gain = cond_cov @ h.T @ n_mat @ a_pow
    return NoiseStrategy(
        horizon=horizon,
        w_mean=w_mean,
        gain=gain,
        cond_cov=cond_cov,
        anchor_mean=phi.mean,
    )


def min_supply(
    sys: LinearSystem, horizon: int, phi: GaussianDist, psi: GaussianDist
) -> BridgeSolution:
    """Minimum required supply to steer ``phi`` to ``psi`` in ``horizon`` steps.

    Returns an infeasible solution (supply +inf, no strategy) when the
    reachability Gramian at this horizon is singular, i.e. the horizon is
    below the minimal steering horizon.
    """
    grams, core = _core(sys, horizon, phi, psi)
    if core is None:
        return BridgeSolution(
            supply=math.inf,
            mean_part=math.inf,
            cov_part=math.inf,
            riccati_sol=None,
            riccati_u=None,
            riccati_v=None,
            strategy=None,
            grams=grams,
        )
    _, _, _, _, _, mean_part, u, v, sol, cov_part = core
    strategy = _strategy_from_core(sys, horizon, phi, grams, core)
    return BridgeSolution(
        supply=0.5 * (mean_part + cov_part),
        mean_part=mean_part,
        cov_part=cov_part,
        riccati_sol=sol,
        riccati_u=u,
        riccati_v=v,
        strategy=strategy,
        grams=grams,
    )


def optimal_strategy(
    sys: LinearSystem, horizon: int, phi: GaussianDist, psi: GaussianDist
) -> NoiseStrategy:
    """Supply-minimizing affine Gaussian strategy steering ``phi`` to ``psi``."""
    grams, core = _core(sys, horizon, phi, psi)
    if core is None:
        raise UnreachableError(
            f"horizon {horizon} below minimal steering horizon", tau=grams.tau
        )
    return _strategy_from_core(sys, horizon, phi, grams, core)


def feasible_strategy(
    sys: LinearSystem,
    horizon: int,
    phi: GaussianDist,
    psi: GaussianDist,
    eps: float | None = None,
) -> NoiseStrategy:
    """Steering strategy with conditional covariance ``eps I``.

    ``eps`` must lie in ``(0, 1/rho(G T^{-1})]`` where ``G`` is the horizon
    Gramian and ``T`` the terminal covariance; the default is the midpoint
    ``0.5 / rho(G T^{-1})`` of that interval.
    """
    grams, core = _core(sys, horizon, phi, psi)
    if core is None:
        raise UnreachableError(
            f"horizon {horizon} below minimal steering horizon", tau=grams.tau
        )
    _, g_isqrt, g_inv, a_pow, d, *_ = core
    _, t_isqrt = pd_sqrt_pair(psi.cov)
    rho = float(np.linalg.eigvalsh(t_isqrt @ grams.gram @ t_isqrt)[-1])
    eps_max = 1.0 / rho
    if eps is None:
        eps = 0.5 * eps_max
    if not (0.0 < eps <= eps_max * (1.0 + 1e-12)):
        raise ParameterError(
            f"eps={eps!r} outside (0, {eps_max!r}] for this horizon/terminal pair"
        )
    h = grams.H
    mt = h.shape[1]
    _, s_isqrt = pd_sqrt_pair(phi.cov)
    root = sqrt_psd(psi.cov - eps * grams.gram)
    gain = h.T @ g_inv @ (root @ s_isqrt - a_pow)
    return NoiseStrategy(
        horizon=horizon,
        w_mean=h.T @ (g_inv @ d),
        gain=gain,
        cond_cov=eps * np.eye(mt),
        anchor_mean=phi.mean,
    )


def strategy_supply(strategy: NoiseStrategy, init_cov) -> float:
    """Supply delivered by an affine strategy from an initial covariance."""
    sig = np.atleast_2d(np.asarray(init_cov, dtype=float))
    k = strategy.gain
    if sig.shape != (k.shape[1], k.shape[1]):
        raise DimensionError(
            f"initial covariance shape {sig.shape} does not match gain {k.shape}"
        )
    w, _ = pd_eig(strategy.cond_cov)
    mt = strategy.noise_dim
    val = 0.5 * (
        float(strategy.w_mean @ strategy.w_mean)
        + float(((k @ sig) * k).sum())
        + float(w.sum())
        - float(np.log(w).sum())
        - mt
    )
    return max(val, 0.0)


def push_forward(sys: LinearSystem, strategy: NoiseStrategy, phi: GaussianDist):
    """Terminal mean and covariance after applying ``strategy`` from ``phi``."""
    grams = gramians(sys, strategy.horizon)
    h = grams.H
    a_pow = np.linalg.matrix_power(sys.A, strategy.horizon)
    closed = a_pow + h @ strategy.gain
    mean = a_pow @ phi.mean + h @ (
        strategy.w_mean + strategy.gain @ (phi.mean - strategy.anchor_mean)
    )
    cov = closed @ phi.cov @ closed.T + h @ strategy.cond_cov @ h.T
    return mean, 0.5 * (cov + cov.T)


def lower_bound(phi: GaussianDist, psi: GaussianDist, p_star: GaussianDist) -> float:
    """Storage-difference lower bound on the minimum supply."""
    return max(gauss_relent(psi, p_star) - gauss_relent(phi, p_star), 0.0)


def inf_horizon_supply(psi: GaussianDist, sys: LinearSystem) -> float:
    """Long-horizon limit of the minimum supply: D(psi || invariant law)."""
    gamma = dlyap_inf(sys)
    return gauss_relent(psi, GaussianDist(np.zeros(sys.n), gamma))


def path_supply(sys: LinearSystem, dists: list[GaussianDist]) -> float:
    """Minimum supply to track the given sequence of state distributions.

    Sums the one-step bridge minima along consecutive pairs; requires a PD
    one-step Gramian (full-row-rank B).
    """
    if len(dists) < 2:
        raise ParameterError("need at least two distributions")
    if not gramians(sys, 1).full_rank:
        raise UnreachableError(
            "tracking requires a PD one-step Gramian (full row rank B)", tau=None
        )
    total = 0.0
    for cur, nxt in zip(dists[:-1], dists[1:]):
        total += min_supply(sys, 1, cur, nxt).supply
    return total
