"""Robustness index for one-step reachable linear systems.

The index is the minimum supply rate an uncertain noise needs to hold the
system in a steady state whose weighted second moment is ``gamma`` times the
nominal one.  It solves a coupled matrix/scalar system: a stationarity
equation for the steady covariance at a given multiplier, and a trace
constraint selecting the multiplier.  The solution branch is tracked by
homotopy continuation from the nominal point, parameterized by the trace
ratio itself; the multiplier rides along as an unknown, which stays well
conditioned even where the multiplier-to-ratio map is exponentially flat.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DefinitenessError,
    ParameterError,
    UnreachableError,
)
from .matgauss import (
    LinearSystem,
    check_symmetric,
    dlyap_inf,
    pd_eig,
    pd_inverse,
    pd_sqrt_pair,
    sym_eig,
)

FIX_TOL = 1e-11
LAM_TOL = 1e-10
LN2 = math.log(2.0)


def sigma_func(z):
    """Scalar spectral kernel ``-2 / (1 + sqrt(1 + 4 z))`` for ``z >= 0``.

    This is the derivative of ``ln(1 + sqrt(1 + 4 z)) - sqrt(1 + 4 z)``.
    """
    z = np.asarray(z, dtype=float)
    out = -2.0 / (1.0 + np.sqrt(1.0 + 4.0 * z))
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class RobustnessProblem:
    """System, PD weight, and target moment inflation ``gamma >= 1``.

    Requires a full-row-rank input matrix so the one-step Gramian is PD.
    """

    sys: LinearSystem
    weight: np.ndarray
    gamma: float

    def __post_init__(self):
        self.weight = check_symmetric(self.weight)
        pd_eig(self.weight)
        if self.weight.shape[0] != self.sys.n:
            raise ParameterError("weight order must match the state dimension")
        gram1 = self.sys.B @ self.sys.B.T
        try:
            pd_eig(gram1)
        except DefinitenessError as exc:
            raise ParameterError(
                "B must have full row rank (PD one-step Gramian)"
            ) from exc
        if self.gamma < 1.0:
            raise ParameterError(f"gamma must be >= 1, got {self.gamma!r}")
        if not self.sys.stable:
            raise ParameterError("state matrix must be asymptotically stable")


@dataclass(eq=False)
class RobustnessSolution:
    index: float
    multiplier: float
    state_cov: np.ndarray
    steps: int
    fixed_point_iters: int
    converged: bool
    gamma_attained: float
    mean_condition_ok: bool


def _balanced_terms(a, sigma, g1_half, g1_ihalf):
    """U, V of the one-step bridge at (sigma -> sigma) plus spectral data of
    W = V^{1/2} U V^{1/2} (same spectrum as U V)."""
    u = g1_ihalf @ a @ sigma @ a.T @ g1_ihalf
    v = g1_ihalf @ sigma @ g1_ihalf
    u = 0.5 * (u + u.T)
    v = 0.5 * (v + v.T)
    v_half, v_ihalf = pd_sqrt_pair(v)
    w_mat = v_half @ u @ v_half
    w, q = sym_eig(0.5 * (w_mat + w_mat.T))
    w = np.clip(w, 0.0, None)
    return u, v, v_half, v_ihalf, w, q


def jtilde(alpha, sigma, sys: LinearSystem) -> float:
    """Supply rate to hold the system at a Gaussian state ``N(alpha, sigma)``.

    Matches the one-step bridge minimum with equal endpoint distributions.
    """
    a = sys.A
    gram1 = sys.B @ sys.B.T
    g1_w, g1_q = pd_eig(gram1)
    g1_inv = (g1_q / g1_w) @ g1_q.T
    g1_half = (g1_q * np.sqrt(g1_w)) @ g1_q.T
    g1_ihalf = (g1_q / np.sqrt(g1_w)) @ g1_q.T

    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    sigma = check_symmetric(sigma)
    sig_w, _ = pd_eig(sigma)

    n = sys.n
    r = (np.eye(n) - a) @ alpha
    mean_term = float(r @ g1_inv @ r)
    _, _, _, _, w, _ = _balanced_terms(a, sigma, g1_half, g1_ihalf)
    s = np.sqrt(1.0 + 4.0 * w)
    val = 0.5 * (
        mean_term
        + float(np.log(g1_w).sum())
        - n * LN2
        + float(((a.T @ g1_inv @ a + g1_inv) * sigma).sum())
        - float(np.log(sig_w).sum())
        + float(np.log1p(s).sum())
        - float(s.sum())
    )
    return max(val, 0.0)


def _precision_matrix(lam, sigma, prob, g1_half, g1_ihalf):
    """Inverse of the stationarity right-hand side at (lam, sigma)."""
    a = prob.sys.A
    u, _, v_half, v_ihalf, w, q = _balanced_terms(a, sigma, g1_half, g1_ihalf)
    sw = sigma_func(w)
    # V sigma(M) and sigma(M) U are symmetric: both are congruences of
    # functions of the symmetric W.
    v_sigma = v_half @ ((q * sw) @ q.T) @ v_half
    sigma_u = v_ihalf @ ((q * (sw * w)) @ q.T) @ v_ihalf
    g1_inv = g1_ihalf @ g1_ihalf
    mat = (
        a.T @ g1_inv @ a
        + g1_inv
        + a.T @ g1_ihalf @ v_sigma @ g1_ihalf @ a
        + g1_ihalf @ sigma_u @ g1_ihalf
        - lam * prob.weight
    )
    return 0.5 * (mat + mat.T)


def _rhs_or_none(lam, sigma, prob, g1_half, g1_ihalf):
    """Inverse of the precision matrix, or None when it is not PD."""
    try:
        mat = _precision_matrix(lam, sigma, prob, g1_half, g1_ihalf)
    except DefinitenessError:
        return None
    w, q = np.linalg.eigh(mat)
    if w[0] <= 0.0:
        return None
    rhs = (q / w) @ q.T
    return 0.5 * (rhs + rhs.T)


def _newton_polish(lam, prob, sigma, g1_half, g1_ihalf, max_iter=60):
    """Damped Newton on the symmetric residual ``Sigma - RHS(Sigma)``.

    Finishes every solve: near the definiteness breakdown the fixed-point
    map contracts arbitrarily slowly, so a small update there does not mean
    a small error, while the Newton step does track the true error even
    when ``I - dRHS`` is nearly singular.  Convergence is declared when the
    accepted step is negligible.
    """
    n = prob.sys.n
    iu = np.triu_indices(n)
    step_tol = 1e-12

    def unpack(vec):
        s = np.zeros((n, n))
        s[iu] = vec
        return s + np.triu(s, 1).T

    def residual(s):
        rhs = _rhs_or_none(lam, s, prob, g1_half, g1_ihalf)
        if rhs is None or np.linalg.eigvalsh(s)[0] <= 0.0:
            return None
        return (s - rhs)[iu]

    vec = sigma[iu].copy()
    res = residual(unpack(vec))
    if res is None:
        raise ConvergenceError(
            f"stationarity right-hand side lost definiteness at lambda={lam!r}",
            last=sigma,
            iterations=0,
        )
    evals = 1
    for _ in range(max_iter):
        scale = max(np.linalg.norm(vec), 1.0)
        # gates the stagnation exits below; genuine stagnation only happens
        # at the floating-point floor of the residual evaluation
        floor = np.linalg.norm(res) <= 1e-11 * scale
        if np.abs(res).max() < 1e-15 * scale:
            return unpack(vec), evals
        dim = vec.size
        jac = np.empty((dim, dim))
        for j in range(dim):
            h = 1e-7 * (1.0 + abs(vec[j]))
            probe = vec.copy()
            probe[j] += h
            res_j = residual(unpack(probe))
            evals += 1
            if res_j is None:
                res_j = res  # one-sided fallback keeps the column finite
            jac[:, j] = (res_j - res) / h
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        before = np.linalg.norm(res)
        size = 1.0
        accepted = False
        for _ in range(40):
            cand = vec + size * step
            res_new = residual(unpack(cand))
            evals += 1
            if res_new is not None and np.linalg.norm(res_new) <= before:
                vec, res = cand, res_new
                accepted = True
                break
            size *= 0.5
        if not accepted:
            if floor:
                return unpack(vec), evals  # stagnant at the noise floor
            raise ConvergenceError(
                f"stationarity solve stalled at lambda={lam!r}",
                last=unpack(vec),
                iterations=evals,
            )
        if size * np.linalg.norm(step) <= step_tol * scale:
            return unpack(vec), evals
        if floor and np.linalg.norm(res) > 0.5 * before:
            return unpack(vec), evals  # contraction gone; noise floor reached
    raise ConvergenceError(
        f"stationarity solve did not converge at lambda={lam!r}",
        last=unpack(vec),
        iterations=evals,
    )


def _sigma_fixed_point(lam, prob, warm_start, damping=0.5, tol=FIX_TOL, max_iter=80):
    g1_half, g1_ihalf = pd_sqrt_pair(prob.sys.B @ prob.sys.B.T)
    sigma = np.array(warm_start, dtype=float)
    start = sigma
    res_prev = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        rhs = _rhs_or_none(lam, sigma, prob, g1_half, g1_ihalf)
        if rhs is None:
            sigma = start  # definiteness lost on this path; retry from the start
            break
        res = np.linalg.norm(sigma - rhs)
        if res > 1.2 * res_prev and it > 2:
            sigma = start  # map is expansive here; Newton from the start instead
            break
        res_prev = min(res_prev, res)
        new = (1.0 - damping) * sigma + damping * rhs
        rel = np.linalg.norm(new - sigma) / max(np.linalg.norm(new), 1e-300)
        sigma = new
        if rel < tol:
            break
    polished, evals = _newton_polish(lam, prob, sigma, g1_half, g1_ihalf)
    return polished, it + evals


def solve_sigma(lam: float, prob: RobustnessProblem, warm_start=None) -> np.ndarray:
    """Solve the stationary-covariance equation at multiplier ``lam``.

    Damped fixed-point iteration from ``warm_start`` (nominal Gramian by
    default), switching to a safeguarded Newton solve on the same residual
    when the plain map is expansive around the solution branch.  Raises
    ``ConvergenceError`` carrying the last iterate when the right-hand side
    loses definiteness or iteration stalls.
    """
    if warm_start is None:
        warm_start = dlyap_inf(prob.sys)
    sigma, _ = _sigma_fixed_point(lam, prob, warm_start)
    return sigma


def sigma_residual(lam: float, prob: RobustnessProblem, sigma) -> float:
    """Frobenius residual of the stationarity equation at (lam, sigma)."""
    g1_half, g1_ihalf = pd_sqrt_pair(prob.sys.B @ prob.sys.B.T)
    mat = _precision_matrix(lam, sigma, prob, g1_half, g1_ihalf)
    rhs = pd_inverse(mat)
    return float(np.linalg.norm(sigma - rhs) / max(np.linalg.norm(sigma), 1e-300))


def _mean_condition_ok(lam, prob) -> bool:
    n = prob.sys.n
    eye_a = np.eye(n) - prob.sys.A
    inv = np.linalg.inv(eye_a)
    mat = prob.weight @ inv @ (prob.sys.B @ prob.sys.B.T) @ inv.T
    rho = float(np.abs(np.linalg.eigvals(mat)).max())
    return lam < 1.0 / rho


def _trace_target_solve(gamma_target, lam, sigma, probe, tr_den, max_iter=80):
    """Joint Newton on (Sigma, lam): stationarity plus the trace constraint.

    Treating the multiplier as an unknown keeps the solve well conditioned
    even where the multiplier-to-ratio map is exponentially flat (strongly
    stable systems near the multiplier asymptote).
    """
    n = probe.sys.n
    g1_half, g1_ihalf = pd_sqrt_pair(probe.sys.B @ probe.sys.B.T)
    iu = np.triu_indices(n)
    q = iu[0].size

    def unpack(vec):
        s = np.zeros((n, n))
        s[iu] = vec[:q]
        return s + np.triu(s, 1).T, vec[q]

    def residual(vec):
        sig, lam_v = unpack(vec)
        rhs = _rhs_or_none(lam_v, sig, probe, g1_half, g1_ihalf)
        if rhs is None or np.linalg.eigvalsh(sig)[0] <= 0.0:
            return None
        out = np.empty(q + 1)
        out[:q] = (sig - rhs)[iu]
        out[q] = float((probe.weight * sig).sum()) / tr_den - gamma_target
        return out

    vec = np.concatenate([sigma[iu], [lam]])
    res = residual(vec)
    if res is None:
        raise ConvergenceError(
            f"no admissible start for ratio {gamma_target!r}", last=sigma
        )
    evals = 1
    for _ in range(max_iter):
        scale = max(np.linalg.norm(vec), 1.0)
        floor = np.linalg.norm(res) <= 1e-11 * scale
        if np.abs(res).max() < 1e-15 * scale:
            return (*unpack(vec), evals)
        jac = np.empty((q + 1, q + 1))
        for j in range(q + 1):
            h = 1e-7 * (1.0 + abs(vec[j]))
            probe_vec = vec.copy()
            probe_vec[j] += h
            res_j = residual(probe_vec)
            evals += 1
            if res_j is None:
                res_j = res
            jac[:, j] = (res_j - res) / h
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        before = np.linalg.norm(res)
        size = 1.0
        accepted = False
        for _ in range(40):
            cand = vec + size * step
            res_new = residual(cand)
            evals += 1
            if res_new is not None and np.linalg.norm(res_new) <= before:
                vec, res = cand, res_new
                accepted = True
                break
            size *= 0.5
        if not accepted:
            if floor:
                return (*unpack(vec), evals)
            raise ConvergenceError(
                f"trace-constrained solve stalled at ratio {gamma_target!r}",
                last=unpack(vec)[0],
                iterations=evals,
            )
        if size * np.linalg.norm(step) <= 1e-12 * scale:
            return (*unpack(vec), evals)
        if floor and np.linalg.norm(res) > 0.5 * before:
            return (*unpack(vec), evals)
    raise ConvergenceError(
        f"trace-constrained solve did not converge at ratio {gamma_target!r}",
        last=unpack(vec)[0],
        iterations=evals,
    )


def robustness_sweep(
    sys: LinearSystem, weight, gammas
) -> list[RobustnessSolution]:
    """Index values along a gamma sweep that shares one continuation path.

    The branch of stationary covariances is tracked in the trace ratio
    itself, starting from the nominal point (multiplier 0, covariance equal
    to the invariant Gramian, ratio 1): a linear predictor steps the ratio
    forward adaptively and a joint Newton corrector re-solves the
    stationarity and trace equations at each step, with the multiplier as
    an unknown.  Targets are visited in ascending order and the results
    returned in the requested order.  Raises ``UnreachableError`` with the
    largest attained ratio if the branch cannot be continued.
    """
    if not gammas:
        return []
    order = sorted(range(len(gammas)), key=lambda i: gammas[i])
    probe = RobustnessProblem(
        sys=sys, weight=weight, gamma=max(float(gammas[order[-1]]), 1.0)
    )
    gamma_inf = dlyap_inf(sys)
    tr_den = float((probe.weight * gamma_inf).sum())

    def finish(lam, sig, g, steps, fp_iters, converged):
        ok = _mean_condition_ok(lam, probe)
        if not ok:
            warnings.warn(
                "multiplier exceeds the mean-decoupling bound; the zero-mean "
                "restriction may not be optimal",
                RuntimeWarning,
                stacklevel=3,
            )
        return RobustnessSolution(
            index=jtilde(np.zeros(sys.n), sig, sys) if g > 1.0 else 0.0,
            multiplier=lam,
            state_cov=sig,
            steps=steps,
            fixed_point_iters=fp_iters,
            converged=converged,
            gamma_attained=g,
            mean_condition_ok=ok,
        )

    results: dict[int, RobustnessSolution] = {}
    path = [(1.0, 0.0, gamma_inf), (1.0, 0.0, gamma_inf)]
    dg = 0.5

    for idx in order:
        gamma_target = float(gammas[idx])
        if gamma_target < 1.0:
            raise ParameterError(f"gamma must be >= 1, got {gamma_target!r}")
        if gamma_target == 1.0:
            results[idx] = finish(0.0, gamma_inf, 1.0, 0, 0, True)
            continue
        steps = 0
        fp_iters = 0
        while True:
            g_cur, lam_cur, sig_cur = path[-1]
            if abs(g_cur - gamma_target) <= LAM_TOL:
                break
            g_next = min(g_cur + dg, gamma_target)
            g_prev, lam_prev, sig_prev = path[-2]
            if g_cur > g_prev:  # linear predictor along the path
                w = (g_next - g_cur) / (g_cur - g_prev)
                lam_guess = lam_cur + w * (lam_cur - lam_prev)
                sig_guess = sig_cur + w * (sig_cur - sig_prev)
            else:
                lam_guess, sig_guess = lam_cur, sig_cur
            try:
                sig_new, lam_new, evals = _trace_target_solve(
                    g_next, lam_guess, sig_guess, probe, tr_den
                )
            except ConvergenceError:
                dg *= 0.5
                if dg < 1e-12:
                    raise UnreachableError(
                        f"gamma={gamma_target!r} unattainable; largest "
                        f"attained ratio {g_cur!r}",
                        max_gamma=g_cur,
                    ) from None
                continue
            steps += 1
            fp_iters += evals
            path.append((g_next, lam_new, sig_new))
            if evals < 40:
                dg = min(dg * 1.5, 1.0)
        g_fin, lam_fin, sig_fin = path[-1]
        g_att = float((probe.weight * sig_fin).sum()) / tr_den
        results[idx] = finish(
            lam_fin, sig_fin, g_att, steps, fp_iters,
            abs(g_att - gamma_target) <= LAM_TOL,
        )

    lam_path = [lam for _, lam, _ in path]
    if any(b < a - 1e-12 for a, b in zip(lam_path, lam_path[1:])):
        warnings.warn(
            "multiplier is not monotone along the continuation path; the "
            "multiplier-to-ratio relation folds back for this system",
            RuntimeWarning,
            stacklevel=2,
        )
    return [results[i] for i in range(len(gammas))]


def robustness_index(prob: RobustnessProblem) -> RobustnessSolution:
    """Index value at the problem's gamma via multiplier continuation."""
    return robustness_sweep(prob.sys, prob.weight, [prob.gamma])[0]


def z_1d(a: float, gamma: float):
    """Closed-form 1-D index: returns ``(Z, riccati_sol)``.

    ``a`` is the scalar state coefficient with ``|a| < 1``; ``gamma`` the
    variance ratio.  At ``gamma == 1`` the index is exactly zero and the
    Riccati solution exactly one.
    """
    a = float(a)
    gamma = float(gamma)
    if not abs(a) < 1.0:
        raise ParameterError(f"|a| must be < 1, got {a!r}")
    if gamma < 1.0:
        raise ParameterError(f"gamma must be >= 1, got {gamma!r}")
    if gamma == 1.0:
        return 0.0, 1.0
    one = 1.0 - a * a
    sol = 2.0 * gamma / (one + math.sqrt(one * one + 4.0 * a * a * gamma * gamma))
    z = 0.5 * (
        (1.0 + a * a) / one * gamma
        - math.sqrt(1.0 + (2.0 * a * gamma / one) ** 2)
        - math.log(sol)
    )
    return max(z, 0.0), sol
