"""Seeded Monte Carlo validation of noise strategies on linear systems.

The random stream is pinned end to end: a Philox counter generator keyed by
(seed, block index) through ``SeedSequence``, raw 64-bit words mapped to
open-unit uniforms, and the inverse normal CDF as the transform.  Golden
values for the first draws are frozen in the test suite.

Samples are generated in fixed-size blocks, one substream per block, so the
stream never depends on how blocks are distributed over workers; per-block
moment sums are merged with exact compensated summation, making the report
independent of the merge grouping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .bridge import NoiseStrategy
from .entropy import GaussianDist
from .errors import DimensionError, ParameterError
from .matgauss import LinearSystem

BLOCK = 65_536


@dataclass(eq=False)
class SimConfig:
    sample_count: int
    seed: int
    horizon: int
    strategy: NoiseStrategy
    init: GaussianDist

    def __post_init__(self):
        if self.sample_count < 2:
            raise ParameterError("need at least two samples")
        if self.horizon != self.strategy.horizon:
            raise DimensionError(
                f"config horizon {self.horizon} != strategy horizon "
                f"{self.strategy.horizon}"
            )


@dataclass(eq=False)
class MomentReport:
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    supply: float
    supply_se: float
    sample_count: int
    init_mean: np.ndarray
    init_cov: np.ndarray


def normal_stream(seed: int, count: int, shard: int | None = None) -> np.ndarray:
    """Deterministic standard normal draws.

    Philox raw output -> uniform ``(k + 0.5) * 2^-53`` -> inverse CDF.
    Distinct ``(seed, shard)`` pairs yield independent substreams.
    """
    if count < 0:
        raise ParameterError("count must be nonnegative")
    key = (seed,) if shard is None else (seed, shard)
    bits = np.random.Philox(np.random.SeedSequence(key)).random_raw(count)
    uniform = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(uniform)


def _block_sums(sys, config, block_idx, size):
    strat = config.strategy
    n, m, t = sys.n, sys.m, config.horizon
    mt = strat.noise_dim
    chol_init = np.linalg.cholesky(config.init.cov)
    chol_cond = np.linalg.cholesky(strat.cond_cov)
    logdet_cond = 2.0 * float(np.log(np.diag(chol_cond)).sum())

    z = normal_stream(config.seed, size * (n + mt), shard=block_idx)
    z0 = z[: size * n].reshape(size, n)
    zw = z[size * n :].reshape(size, mt)
    x0 = config.init.mean + z0 @ chol_init.T
    cond_mean = strat.w_mean + (x0 - strat.anchor_mean) @ strat.gain.T
    w = cond_mean + zw @ chol_cond.T

    x = x0
    for k in range(t):
        x = x @ sys.A.T + w[:, k * m : (k + 1) * m] @ sys.B.T

    y = np.linalg.solve(chol_cond, (w - cond_mean).T)
    log_ratio = 0.5 * ((w * w).sum(axis=1) - (y * y).sum(axis=0) - logdet_cond)
    return {
        "x": x.sum(axis=0),
        "xx": x.T @ x,
        "x0": x0.sum(axis=0),
        "x0x0": x0.T @ x0,
        "ls": float(log_ratio.sum()),
        "ls2": float((log_ratio * log_ratio).sum()),
    }


def _fsum_arrays(arrays):
    stacked = np.stack(arrays)
    flat = stacked.reshape(len(arrays), -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(arrays[0].shape)


def simulate(sys: LinearSystem, config: SimConfig) -> MomentReport:
    """Sample the closed loop under the strategy and report terminal moments.

    Draws the initial state from ``config.init`` and the stacked noise from
    the strategy's conditional law, iterates the state recursion, and
    estimates the supply as the average conditional log-density ratio of the
    drawn noise against the white reference (an unbiased estimator for
    Gaussian strategies).
    """
    strat = config.strategy
    if strat.gain.shape[1] != sys.n or strat.noise_dim != sys.m * config.horizon:
        raise DimensionError(
            f"strategy (noise dim {strat.noise_dim}, state dim "
            f"{strat.gain.shape[1]}) does not match system (n={sys.n}, "
            f"m={sys.m}) at horizon {config.horizon}"
        )

    count = config.sample_count
    sizes = [BLOCK] * (count // BLOCK)
    if count % BLOCK:
        sizes.append(count % BLOCK)
    blocks = [_block_sums(sys, config, i, s) for i, s in enumerate(sizes)]

    sum_x = _fsum_arrays([b["x"] for b in blocks])
    sum_xx = _fsum_arrays([b["xx"] for b in blocks])
    sum_x0 = _fsum_arrays([b["x0"] for b in blocks])
    sum_x0x0 = _fsum_arrays([b["x0x0"] for b in blocks])
    sum_ls = math.fsum(b["ls"] for b in blocks)
    sum_ls2 = math.fsum(b["ls2"] for b in blocks)

    mean = sum_x / count
    cov = (sum_xx - count * np.outer(mean, mean)) / (count - 1)
    cov = 0.5 * (cov + cov.T)
    init_mean = sum_x0 / count
    init_cov = (sum_x0x0 - count * np.outer(init_mean, init_mean)) / (count - 1)
    init_cov = 0.5 * (init_cov + init_cov.T)
    supply = sum_ls / count
    var_ls = max((sum_ls2 - count * supply * supply) / (count - 1), 0.0)
    return MomentReport(
        mean=mean,
        cov=cov,
        mean_se=np.sqrt(np.clip(np.diag(cov), 0.0, None) / count),
        supply=supply,
        supply_se=math.sqrt(var_ls / count),
        sample_count=count,
        init_mean=init_mean,
        init_cov=init_cov,
    )
