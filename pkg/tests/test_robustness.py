import numpy as np
import pytest

from entropy_bridge import (
    GaussianDist,
    LinearSystem,
    RobustnessProblem,
    dlyap_inf,
    jtilde,
    min_supply,
    robustness_index,
    sigma_func,
    solve_sigma,
    z_1d,
)
from entropy_bridge.errors import ConvergenceError, ParameterError
from entropy_bridge.robustness import _sigma_fixed_point, sigma_residual

from helpers import one_step_reachable_system, rand_pd

GOLD_Z = 0.07945475428217375
GOLD_LAMBDA = 0.1819995318353087

SYS_1D = LinearSystem([[0.5]], [[1.0]])


def test_sigma_func_values():
    assert sigma_func(0.0) == -1.0
    assert sigma_func(2.0) == -0.5


def test_sigma_func_is_derivative_of_its_potential():
    def potential(z):
        s = np.sqrt(1.0 + 4.0 * z)
        return np.log1p(s) - s

    for z in (0.1, 1.0, 10.0):
        h = 1e-6 * max(z, 1.0)
        fd = (potential(z + h) - potential(z - h)) / (2 * h)
        assert abs(fd - sigma_func(z)) < 1e-6


def test_jtilde_zero_at_invariant_law():
    rng = np.random.default_rng(2)
    sys = one_step_reachable_system(rng, 2)
    gamma = dlyap_inf(sys)
    assert jtilde(np.zeros(2), gamma, sys) <= 1e-12


def test_jtilde_scalar_gold():
    assert jtilde([0.0], [[8.0 / 3.0]], SYS_1D) == pytest.approx(GOLD_Z, abs=1e-13)


def test_jtilde_mean_term_coefficient():
    # the mean adds (1-A)/(1+A) * alpha^2 / Gamma / 2 in one dimension
    a = 0.5
    gamma = dlyap_inf(SYS_1D)[0, 0]
    sigma = [[8.0 / 3.0]]
    for alpha in (0.5, 1.0, 2.0):
        gap = jtilde([alpha], sigma, SYS_1D) - jtilde([0.0], sigma, SYS_1D)
        expect = 0.5 * (1 - a) / (1 + a) * alpha**2 / gamma
        assert gap == pytest.approx(expect, abs=1e-12)


def test_jtilde_matches_one_step_bridge():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(1, 4))
        sys = one_step_reachable_system(rng, n)
        sigma = rand_pd(rng, n)
        alpha = rng.standard_normal(n)
        dist = GaussianDist(alpha, sigma)
        assert jtilde(alpha, sigma, sys) == pytest.approx(
            min_supply(sys, 1, dist, dist).supply, abs=1e-10
        )


def test_solve_sigma_nominal_point():
    rng = np.random.default_rng(6)
    for n in (1, 2, 3):
        sys = one_step_reachable_system(rng, n)
        prob = RobustnessProblem(sys=sys, weight=np.eye(n), gamma=1.0)
        gamma = dlyap_inf(sys)
        sig = solve_sigma(0.0, prob)
        assert np.linalg.norm(sig - gamma) <= 1e-9 * np.linalg.norm(gamma)
        assert sigma_residual(0.0, prob, sig) < 1e-9


def test_solve_sigma_matches_scalar_algebra():
    # scalar rearrangement: lambda as an explicit function of the solution
    a = 0.5
    prob = RobustnessProblem(sys=SYS_1D, weight=np.eye(1), gamma=2.0)
    gamma = dlyap_inf(SYS_1D)[0, 0]
    for ratio in (1.2, 1.7, 2.0, 3.0):
        target = ratio * gamma
        m_val = a * a * target * target
        lam = a * a + 1.0 - 1.0 / target + 2.0 * a * a * target * sigma_func(m_val)
        sig = solve_sigma(lam, prob, warm_start=np.array([[target * 0.8]]))
        assert sig[0, 0] == pytest.approx(target, rel=1e-9)
        assert sigma_residual(lam, prob, sig) < 1e-9


def test_solve_sigma_warm_start_helps():
    prob = RobustnessProblem(sys=SYS_1D, weight=np.eye(1), gamma=2.0)
    lam = GOLD_LAMBDA
    target = np.array([[2 * 4.0 / 3.0]])
    _, cold = _sigma_fixed_point(lam, prob, dlyap_inf(SYS_1D))
    _, warm = _sigma_fixed_point(lam, prob, target)
    assert warm <= cold + 5


def test_solve_sigma_nonconvergence_carries_iterate():
    prob = RobustnessProblem(sys=SYS_1D, weight=np.eye(1), gamma=2.0)
    with pytest.raises(ConvergenceError) as info:
        solve_sigma(50.0, prob)  # far beyond the definiteness breakdown
    assert info.value.last is not None


def test_robustness_index_gamma_one_exact():
    prob = RobustnessProblem(sys=SYS_1D, weight=np.eye(1), gamma=1.0)
    sol = robustness_index(prob)
    assert sol.index == 0.0
    assert sol.multiplier == 0.0
    assert sol.converged


def test_robustness_index_scalar_gold():
    prob = RobustnessProblem(sys=SYS_1D, weight=np.eye(1), gamma=2.0)
    sol = robustness_index(prob)
    z_ref, sol_ref = z_1d(0.5, 2.0)
    assert abs(sol.index - z_ref) <= 1e-9
    assert sol.index == pytest.approx(GOLD_Z, abs=1e-9)
    assert sol.multiplier == pytest.approx(GOLD_LAMBDA, abs=1e-7)
    assert sol_ref == pytest.approx(1.3860009363293828, abs=1e-12)
    assert sol.converged
    assert sol.mean_condition_ok


def test_z_1d_gamma_one_is_exact_zero():
    for a in (0.1, 0.5, 0.9, -0.7):
        z, riccati = z_1d(a, 1.0)
        assert z == 0.0
        assert riccati == 1.0


def test_z_1d_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        z_1d(1.0, 2.0)
    with pytest.raises(ParameterError):
        z_1d(0.5, 0.5)


def test_z_1d_monotone_in_stability_margin():
    vals = [z_1d(a, 2.0)[0] for a in np.arange(0.1, 0.95, 0.1)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_robustness_index_cross_check_grid():
    from entropy_bridge.robustness import robustness_sweep

    gammas = [float(g) for g in range(1, 11)]
    for a10 in range(1, 10):
        a = a10 / 10.0
        sols = robustness_sweep(LinearSystem([[a]], [[1.0]]), np.eye(1), gammas)
        for gamma, sol in zip(gammas, sols):
            z_ref, _ = z_1d(a, gamma)
            assert abs(sol.index - z_ref) <= 1e-9
            assert abs(sol.gamma_attained - gamma) <= 1e-10
            assert sol.converged


def test_robustness_index_multivariable_kkt():
    # stationarity: the supply-rate gradient balances the trace constraint
    rng = np.random.default_rng(11)
    sys = one_step_reachable_system(rng, 2)
    weight = rand_pd(rng, 2, 0.5)
    prob = RobustnessProblem(sys=sys, weight=weight, gamma=1.8)
    sol = robustness_index(prob)
    assert sol.converged
    sig = sol.state_cov
    lam = sol.multiplier
    for _ in range(4):
        d = rng.standard_normal((2, 2))
        d = d + d.T
        h = 1e-5
        fd = (
            jtilde(np.zeros(2), sig + h * d, sys)
            - jtilde(np.zeros(2), sig - h * d, sys)
        ) / (2 * h)
        assert abs(fd - 0.5 * lam * float((weight * d).sum())) < 1e-5


def test_robustness_index_nondecreasing_in_gamma():
    rng = np.random.default_rng(15)
    sys = one_step_reachable_system(rng, 2)
    prob_gammas = (1.0, 1.5, 2.0, 3.0, 5.0)
    vals = []
    for g in prob_gammas:
        prob = RobustnessProblem(sys=sys, weight=np.eye(2), gamma=g)
        vals.append(robustness_index(prob).index)
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_sweep_matches_single_solves():
    from entropy_bridge.robustness import robustness_sweep

    rng = np.random.default_rng(19)
    sys = one_step_reachable_system(rng, 2)
    weight = np.eye(2)
    gammas = [2.5, 1.0, 1.5, 4.0]
    sols = robustness_sweep(sys, weight, gammas)
    assert [round(s.gamma_attained, 6) for s in sols] == [2.5, 1.0, 1.5, 4.0]
    for gamma, sol in zip(gammas, sols):
        single = robustness_index(
            RobustnessProblem(sys=sys, weight=weight, gamma=gamma)
        )
        assert sol.index == pytest.approx(single.index, abs=1e-8)
        assert sol.converged


def test_problem_validation():
    with pytest.raises(ParameterError):
        RobustnessProblem(sys=SYS_1D, weight=np.eye(1), gamma=0.5)
    tall = LinearSystem(np.diag([0.5, 0.5]), np.array([[1.0], [0.5]]))
    with pytest.raises(ParameterError):
        RobustnessProblem(sys=tall, weight=np.eye(2), gamma=2.0)
    unstable = LinearSystem([[1.1]], [[1.0]])
    with pytest.raises(ParameterError):
        RobustnessProblem(sys=unstable, weight=np.eye(1), gamma=2.0)
