"""Exact finite-state engine: the ground-truth oracle for the general theory.

Everything here is computed by full enumeration over the atoms of the joint
law of (initial state, noise word), so identities hold to machine precision:
the nominal kernel and its invariant law, conditional supplies, the
balance/dissipation decomposition, the Markovization operator, and the
one-step minimum-supply bridge solved as an I-projection by iterative
proportional fitting.

Desk-scale by design: enumeration is guarded at ``ATOM_GUARD`` joint atoms.

Model file format (whitespace separated, ``#`` comments): a header ``nx nw``,
then ``nx * nw`` lines ``x w f(x,w)``, then the ``nw`` reference noise
masses, then the ``nx`` initial state masses.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .entropy import FiniteDist, FiniteJoint, finite_cond_relent, finite_relent, product_masses
from .errors import ConvergenceError, DimensionError, ParameterError

ATOM_GUARD = 10_000_000
NORM_TOL = 1e-12


@dataclass(eq=False)
class FiniteChainModel:
    """Deterministic transition table plus reference noise and initial law."""

    f_table: np.ndarray
    noise: FiniteDist
    init: FiniteDist

    def __post_init__(self):
        table = np.asarray(self.f_table, dtype=np.int64).copy()
        if table.ndim != 2:
            raise DimensionError("f_table must be (nx, nw)")
        nx, nw = table.shape
        if table.min(initial=0) < 0 or table.max(initial=0) >= nx:
            raise ValueError("f_table entries must be state indices in [0, nx)")
        if self.noise.size != nw or self.init.size != nx:
            raise DimensionError(
                f"f_table is {table.shape} but |W|={self.noise.size}, |X|={self.init.size}"
            )
        table.flags.writeable = False
        self.f_table = table

    @property
    def nx(self) -> int:
        return self.f_table.shape[0]

    @property
    def nw(self) -> int:
        return self.f_table.shape[1]


@dataclass(eq=False)
class StrategyTable:
    """Noise strategy as stepwise conditional mass tables.

    ``tables[k]`` has shape ``(nx,) + (nw,)*k + (nw,)``: the law of the k-th
    noise letter given the initial state and the first k letters, normalized
    over the last axis.
    """

    tables: list

    def __post_init__(self):
        tables = [np.asarray(t, dtype=float).copy() for t in self.tables]
        if not tables:
            raise ParameterError("strategy needs at least one step")
        nx = tables[0].shape[0]
        nw = tables[0].shape[-1]
        for k, t in enumerate(tables):
            if t.shape != (nx,) + (nw,) * (k + 1):
                raise DimensionError(
                    f"step {k} table has shape {t.shape}, expected {(nx,) + (nw,) * (k + 1)}"
                )
            sums = t.sum(axis=-1)
            if np.abs(sums - 1.0).max() > NORM_TOL or t.min() < -NORM_TOL:
                raise ValueError(f"step {k} conditional slices are not normalized")
            np.clip(t, 0.0, None, out=t)
            t.flags.writeable = False
        self.tables = tables

    @property
    def horizon(self) -> int:
        return len(self.tables)

    @classmethod
    def nominal(cls, model: FiniteChainModel, horizon: int) -> "StrategyTable":
        tabs = []
        for k in range(horizon):
            shape = (model.nx,) + (model.nw,) * k + (1,)
            tabs.append(np.tile(model.noise.masses, shape))
        return cls(tabs)

    def truncated(self, horizon: int) -> "StrategyTable":
        if not 1 <= horizon <= self.horizon:
            raise ParameterError(f"cannot truncate horizon {self.horizon} to {horizon}")
        return StrategyTable(self.tables[:horizon])

    def is_markov_at(self, model: FiniteChainModel, split: int, tol: float = 1e-12) -> bool:
        """Whether the future noise block depends on history only through the
        state at ``split``, on histories of positive probability."""
        if not 0 < split < self.horizon:
            raise ParameterError(f"split must be in (0, {self.horizon})")
        joint = _joint_full(model, self)
        states = _state_maps(model, self.horizon)
        prefix_mass = joint.sum(axis=tuple(range(split + 1, self.horizon + 1)))
        future = _future_block(self, split)
        flat_future = future.reshape(prefix_mass.size, -1)
        flat_state = states[split].reshape(-1)
        flat_mass = prefix_mass.reshape(-1)
        for x in range(model.nx):
            rows = flat_future[(flat_state == x) & (flat_mass > 0)]
            if rows.shape[0] > 1 and np.abs(rows - rows[0]).max() > tol:
                return False
        return True

    def is_markov(self, model: FiniteChainModel, tol: float = 1e-12) -> bool:
        return all(self.is_markov_at(model, s, tol) for s in range(1, self.horizon))


def _future_block(strategy: StrategyTable, split: int) -> np.ndarray:
    """Joint conditional mass of letters ``split..t-1`` given the history up
    to ``split``: shape ``(nx,)+(nw,)*split + (nw,)*(t-split)``."""
    t = strategy.horizon
    block = strategy.tables[split]
    for k in range(split + 1, t):
        block = block[..., None] * strategy.tables[k]
    return block


def _state_maps(model: FiniteChainModel, horizon: int) -> list:
    """states[k] over (x0, w_0..w_{k-1}) giving the state index at time k."""
    states = [np.arange(model.nx)]
    for _ in range(horizon):
        states.append(model.f_table[states[-1]])
    return states


def _joint_full(model: FiniteChainModel, strategy: StrategyTable) -> np.ndarray:
    """Joint mass over (x0, w_0..w_{t-1})."""
    t = strategy.horizon
    atoms = model.nx * model.nw**t
    if atoms > ATOM_GUARD:
        raise ParameterError(f"{atoms} joint atoms exceed the enumeration guard")
    joint = model.init.masses
    for k in range(t):
        joint = joint[..., None] * strategy.tables[k]
    return joint


def nominal_kernel(model: FiniteChainModel) -> np.ndarray:
    """Markov transition matrix of the state chain under the reference noise."""
    kernel = np.zeros((model.nx, model.nx))
    rows = np.repeat(np.arange(model.nx), model.nw)
    np.add.at(kernel, (rows, model.f_table.reshape(-1)), np.tile(model.noise.masses, model.nx))
    return kernel


def invariant_dist(
    model: FiniteChainModel, tol: float = 1e-13, max_iter: int = 200_000
) -> FiniteDist:
    """Invariant state law under the reference noise, by power iteration.

    Starts from the model's initial law.  If plain iteration stagnates on a
    cycle, it switches to the half-lazy kernel (I + G)/2, whose fixed points
    coincide with those of G and whose iterates converge to the limit of the
    Cesaro averages.  Emits a warning when the invariant law is not unique
    (unit eigenvalue of the kernel with multiplicity above one) or when the
    cycle fallback fired.
    """
    kernel = nominal_kernel(model)
    p = model.init.masses.copy()
    plain_converged = False
    for _ in range(min(max_iter, 20_000)):
        q = p @ kernel
        if np.abs(q - p).sum() < tol:
            p = q
            plain_converged = True
            break
        p = q
    if not plain_converged:
        lazy = 0.5 * (np.eye(model.nx) + kernel)
        for _ in range(max_iter):
            q = p @ lazy
            if np.abs(q - p).sum() < 0.5 * tol:
                p = q
                break
            p = q
    candidate = np.clip(p, 0.0, None)
    candidate /= candidate.sum()

    unit_mult = int(np.sum(np.abs(np.linalg.eigvals(kernel) - 1.0) < 1e-9))
    if unit_mult > 1 or not plain_converged:
        warnings.warn(
            "invariant law may not be unique; returning the iteration limit",
            RuntimeWarning,
            stacklevel=2,
        )
    return FiniteDist(candidate)


def propagate(model: FiniteChainModel, strategy: StrategyTable, start: int, stop: int):
    """Exact state laws ``P_start..P_stop`` and the joint of (state at
    ``start``, letters ``start..stop-1``)."""
    if not 0 <= start < stop <= strategy.horizon:
        raise ParameterError(
            f"need 0 <= start < stop <= horizon, got ({start}, {stop}, {strategy.horizon})"
        )
    work = strategy if stop == strategy.horizon else strategy.truncated(stop)
    joint = _joint_full(model, work)
    states = _state_maps(model, stop)
    dists = []
    for k in range(start, stop + 1):
        axes = tuple(range(k + 1, stop + 1))
        mass_k = joint.sum(axis=axes) if axes else joint
        pk = np.bincount(
            states[k].reshape(-1), weights=mass_k.reshape(-1), minlength=model.nx
        )
        dists.append(FiniteDist(pk / pk.sum()))
    word = model.nw ** (stop - start)
    flat = joint.reshape(-1, word)
    q = np.zeros((model.nx, word))
    np.add.at(q, states[start].reshape(-1), flat)
    q /= q.sum()
    return dists, FiniteJoint(q.reshape((model.nx,) + (model.nw,) * (stop - start)))


def supply(model: FiniteChainModel, strategy: StrategyTable, start: int, stop: int) -> float:
    """Conditional relative-entropy supply over ``[start, stop)``."""
    _, joint = propagate(model, strategy, start, stop)
    return finite_cond_relent(joint, model.noise, stop - start)


def balance_terms(model: FiniteChainModel, strategy: StrategyTable, stop: int | None = None):
    """Supply, storage gain, and dissipation over ``[0, stop)``.

    The three satisfy ``supply = storage_gain + dissipation`` exactly, with
    the dissipation a posterior divergence computed by exact Bayes on the
    enumerated joint.
    """
    t = strategy.horizon if stop is None else stop
    p_star = invariant_dist(model)
    work = strategy if t == strategy.horizon else strategy.truncated(t)
    joint = _joint_full(model, work)
    states = _state_maps(model, t)

    dists, q0t = propagate(model, work, 0, t)
    total = finite_cond_relent(q0t, model.noise, t)
    gain = finite_relent(dists[-1], p_star) - finite_relent(dists[0], p_star)

    nominal = p_star.masses.reshape((model.nx,) + (1,) * t) * product_masses(
        model.noise, t
    )
    p_t = dists[-1].masses
    end = states[t]
    mask = joint > 0.0
    if np.any(nominal[mask] == 0.0):
        dissipation = math.inf
    else:
        ratio = (joint[mask] / p_t[end][mask]) * (
            p_star.masses[end][mask] / nominal[mask]
        )
        dissipation = max(float((joint[mask] * np.log(ratio)).sum()), 0.0)
    return total, gain, dissipation


def markovize(strategy: StrategyTable, model: FiniteChainModel, split: int) -> StrategyTable:
    """Replace history dependence after ``split`` by state dependence.

    Preserves the joint laws on both sides of the split and all state laws;
    the supply of the result is the sum of the two block supplies, never more
    than the original.  Idempotent.
    """
    t = strategy.horizon
    if not 0 < split < t:
        raise ParameterError(f"split must be in (0, {t})")
    dists, q = propagate(model, strategy, split, t)
    p_split = dists[0].masses
    fut = t - split
    word = model.nw**fut
    cond = np.empty((model.nx, word))
    ref = product_masses(model.noise, fut).reshape(-1)
    for x in range(model.nx):
        if p_split[x] > 0.0:
            cond[x] = q.masses.reshape(model.nx, word)[x] / p_split[x]
        else:
            cond[x] = ref
    cond = cond.reshape((model.nx,) + (model.nw,) * fut)

    # Stepwise conditionals of the block law, indexed by the state at split.
    margs = [cond]
    for _ in range(fut - 1):
        margs.append(margs[-1].sum(axis=-1))
    margs = margs[::-1]  # margs[j]: mass of first j+1 future letters

    state_at_split = _state_maps(model, split)[split]
    new_tables = list(strategy.tables[:split])
    prev = np.ones((model.nx,))
    for j in range(fut):
        num = margs[j]
        denom = prev[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(denom > 0.0, num / np.where(denom > 0, denom, 1.0), 0.0)
        dead = denom[..., 0] <= 0.0
        if np.any(dead):
            step[dead] = model.noise.masses
        new_tables.append(step[state_at_split])
        prev = num
    return StrategyTable(new_tables)


class OneStepResult(NamedTuple):
    supply: float
    joint: FiniteJoint | None
    certificate: int | None


def _ipf_bridge(
    model: FiniteChainModel,
    phi: FiniteDist,
    psi: FiniteDist,
    steps: int,
    tol: float = 1e-11,
    max_iter: int = 50_000,
):
    """I-projection of ``phi x R^steps`` onto the set with state marginal
    ``phi`` and terminal push-forward ``psi``.

    Alternates terminal-marginal scaling with conditional renormalization;
    scaling factors are constant on transition fibers, so the reference
    proportions within each fiber are preserved throughout.
    """
    if phi.size != model.nx or psi.size != model.nx:
        raise DimensionError("endpoint laws must live on the state alphabet")
    end = _state_maps(model, steps)[steps].reshape(model.nx, -1)
    ref = product_masses(model.noise, steps).reshape(-1)
    word = ref.size

    support = (phi.masses[:, None] > 0) & (ref[None, :] > 0)
    reach = np.zeros(model.nx, dtype=bool)
    reach[np.unique(end[support])] = True
    bad = np.nonzero((psi.masses > 0) & ~reach)[0]
    if bad.size:
        return math.inf, None, int(bad[0])

    q = phi.masses[:, None] * ref[None, :]
    target = psi.masses
    defect = math.inf
    window = 512
    checkpoint = math.inf
    stalled = False
    for it in range(max_iter):
        push = np.bincount(end.reshape(-1), weights=q.reshape(-1), minlength=model.nx)
        defect = float(np.abs(push - target).max())
        if defect < tol:
            break
        if it % window == 0:
            # A plateau above tolerance means the target sits outside the
            # push-forward cone (deficit form of infeasibility).
            if defect > 1e3 * tol and defect > 0.97 * checkpoint:
                stalled = True
                break
            checkpoint = defect
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(push > 0.0, target / np.where(push > 0, push, 1.0), 0.0)
        q *= factor[end]
        marg = q.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            fix = np.where(marg > 0.0, phi.masses / np.where(marg > 0, marg, 1.0), 0.0)
        q *= fix[:, None]
    if defect >= tol:
        if stalled or defect > 1e-6:
            push = np.bincount(end.reshape(-1), weights=q.reshape(-1), minlength=model.nx)
            worst = int(np.argmax(np.where(psi.masses > push, psi.masses - push, 0.0)))
            return math.inf, None, worst
        raise ConvergenceError(
            f"push-forward defect {defect:.3e} above tolerance", last=q
        )
    total = q.sum()
    joint = FiniteJoint((q / total).reshape((model.nx,) + (model.nw,) * steps))
    value = finite_cond_relent(joint, model.noise, steps)
    return value, joint, None


def one_step_min_supply(
    model: FiniteChainModel, phi: FiniteDist, psi: FiniteDist
) -> OneStepResult:
    """Minimum one-step supply to move the state law from ``phi`` to ``psi``.

    Returns ``(supply, joint, certificate)``: the optimizing joint over
    (state, letter), or +inf with an unreachable terminal state of positive
    target mass when no admissible move exists.
    """
    value, joint, certificate = _ipf_bridge(model, phi, psi, steps=1)
    return OneStepResult(value, joint, certificate)


def min_supply_steps(
    model: FiniteChainModel, phi: FiniteDist, psi: FiniteDist, steps: int
) -> OneStepResult:
    """Exact multi-step minimum by direct I-projection (verification aid)."""
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    value, joint, certificate = _ipf_bridge(model, phi, psi, steps=steps)
    return OneStepResult(value, joint, certificate)


# ---------------------------------------------------------------------------
# model file I/O and fuzzing helpers (shared by the CLI oracle command)


def load_chain_model(path) -> FiniteChainModel:
    """Parse the plain-text tabular model format."""
    tokens: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            body = line.split("#", 1)[0]
            tokens.extend(body.split())
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'nx nw' header")
    try:
        nx, nw = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed header {tokens[:2]!r}") from exc
    need = 2 + 3 * nx * nw + nw + nx
    if len(tokens) != need:
        raise ValueError(f"{path}: expected {need} tokens, found {len(tokens)}")
    pos = 2
    table = np.full((nx, nw), -1, dtype=np.int64)
    for _ in range(nx * nw):
        x, w, y = (int(tokens[pos + i]) for i in range(3))
        pos += 3
        if not (0 <= x < nx and 0 <= w < nw and 0 <= y < nx):
            raise ValueError(f"{path}: transition ({x},{w})->{y} out of range")
        if table[x, w] != -1:
            raise ValueError(f"{path}: duplicate transition for ({x},{w})")
        table[x, w] = y
    if (table < 0).any():
        raise ValueError(f"{path}: transition table incomplete")
    noise = np.array([float(tokens[pos + i]) for i in range(nw)])
    pos += nw
    init = np.array([float(tokens[pos + i]) for i in range(nx)])
    for name, masses in (("noise", noise), ("initial", init)):
        if masses.min() < 0 or abs(masses.sum() - 1.0) > 1e-9:
            raise ValueError(f"{path}: {name} masses are not a distribution")
    return FiniteChainModel(
        f_table=table,
        noise=FiniteDist(noise / noise.sum()),
        init=FiniteDist(init / init.sum()),
    )


def _irreducible(table: np.ndarray) -> bool:
    nx = table.shape[0]
    adj = np.zeros((nx, nx), dtype=bool)
    for x in range(nx):
        adj[x, table[x]] = True
    closure = np.eye(nx, dtype=bool)
    for _ in range(nx):
        closure = closure | (closure @ adj)
    return bool(closure.all())


def random_model(rng: np.random.Generator, nx: int, nw: int) -> FiniteChainModel:
    """Random ergodic model with full-support masses.

    Irreducibility keeps the invariant law unique and fully supported (so
    relative entropies against it stay finite); a self-loop makes the chain
    aperiodic, so plain power iteration converges.
    """
    while True:
        table = rng.integers(0, nx, size=(nx, nw))
        table[:, 0] = rng.permutation(nx)
        has_loop = bool((table == np.arange(nx)[:, None]).any())
        if has_loop and _irreducible(table):
            break
    noise = rng.uniform(0.2, 1.0, size=nw)
    init = rng.uniform(0.2, 1.0, size=nx)
    return FiniteChainModel(
        f_table=table,
        noise=FiniteDist(noise / noise.sum()),
        init=FiniteDist(init / init.sum()),
    )


def random_strategy(
    rng: np.random.Generator, model: FiniteChainModel, horizon: int
) -> StrategyTable:
    """Random fully history-dependent admissible strategy."""
    tabs = []
    for k in range(horizon):
        shape = (model.nx,) + (model.nw,) * k + (model.nw,)
        raw = rng.uniform(0.2, 1.0, size=shape)
        tabs.append(raw / raw.sum(axis=-1, keepdims=True))
    return StrategyTable(tabs)


class CheckResult(NamedTuple):
    name: str
    residual: float
    ok: bool


def identity_suite(
    model: FiniteChainModel, rng: np.random.Generator, horizon: int = 3
) -> list[CheckResult]:
    """Run the exact-identity battery on one model; used by the CLI oracle."""
    if horizon < 2:
        raise ParameterError("identity suite needs horizon >= 2")
    out = []
    p_star = invariant_dist(model)
    kernel = nominal_kernel(model)
    res = float(np.abs(p_star.masses @ kernel - p_star.masses).sum())
    out.append(CheckResult("invariant_residual", res, res < 1e-12))

    strat = random_strategy(rng, model, horizon)
    total, gain, dissipation = balance_terms(model, strat)
    res = abs(total - gain - dissipation)
    out.append(CheckResult("balance_identity", res, res < 1e-10))
    out.append(CheckResult("dissipation_sign", min(dissipation, 0.0), dissipation >= -1e-14))

    split = horizon // 2 or 1
    gap = supply(model, strat, 0, horizon) - (
        supply(model, strat, 0, split) + supply(model, strat, split, horizon)
    )
    out.append(CheckResult("superadditivity", min(gap, 0.0), gap >= -1e-10))

    marked = markovize(strat, model, split)
    d_old, _ = propagate(model, strat, 0, horizon)
    d_new, _ = propagate(model, marked, 0, horizon)
    res = max(
        float(np.abs(a.masses - b.masses).max()) for a, b in zip(d_old, d_new)
    )
    out.append(CheckResult("markovize_distributions", res, res < 1e-12))
    drop = supply(model, strat, 0, horizon) - supply(model, marked, 0, horizon)
    out.append(CheckResult("markovize_supply_drop", min(drop, 0.0), drop >= -1e-10))

    twice = markovize(marked, model, split)
    res = max(
        float(np.abs(a - b).max()) for a, b in zip(marked.tables, twice.tables)
    )
    out.append(CheckResult("markovize_idempotent", res, res < 1e-10))
    return out
