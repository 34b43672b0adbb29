"""Shared random-instance generators and independent oracles."""

import math

import numpy as np

from entropy_bridge import GaussianDist, LinearSystem


def rand_stable_system(rng, n, m, rho_lo=0.3, rho_hi=0.9):
    """Random stable system with the spectral radius rescaled into range."""
    a = rng.standard_normal((n, n))
    rho = np.abs(np.linalg.eigvals(a)).max()
    target = rng.uniform(rho_lo, rho_hi)
    a = a * (target / rho)
    b = rng.standard_normal((n, m))
    return LinearSystem(a, b)


def one_step_reachable_system(rng, n, extra=0, rho_lo=0.3, rho_hi=0.9):
    """Stable system with a well-conditioned full-row-rank input matrix.

    Conditioning keeps supplies O(1) so absolute tolerances in identity
    checks stay meaningful.
    """
    a = rng.standard_normal((n, n))
    a *= rng.uniform(rho_lo, rho_hi) / np.abs(np.linalg.eigvals(a)).max()
    m = n + extra
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((m, m)))
    svals = np.zeros((n, m))
    svals[:n, :n] = np.diag(rng.uniform(0.6, 1.6, n))
    return LinearSystem(a, q1 @ svals @ q2.T)


def rand_pd(rng, n, scale=1.0):
    g = rng.standard_normal((n, n))
    return scale * (g @ g.T + 0.3 * n * np.eye(n))


def rand_gaussian(rng, n, mean_scale=1.0, cov_scale=1.0):
    return GaussianDist(mean_scale * rng.standard_normal(n), rand_pd(rng, n, cov_scale))


def oracle_bridge_1d(a, b, alpha, sig, beta, th):
    """One-step scalar bridge minimum by constrained scan.

    The mean condition pins the noise mean, the covariance condition pins the
    conditional variance given the gain; the supply is then minimized over
    the gain by a dense scan plus golden-section refinement.  Independent of
    the solver under test.
    """
    ew = (beta - a * alpha) / b

    def supply_of(k):
        l_var = (th - (a + b * k) ** 2 * sig) / b**2
        if l_var <= 0:
            return math.inf
        return 0.5 * (ew**2 + k**2 * sig + l_var - math.log(l_var) - 1.0)

    ks = np.linspace(-3, 3, 4001)
    vals = [supply_of(k) for k in ks]
    i = int(np.argmin(vals))
    lo, hi = ks[max(i - 1, 0)], ks[min(i + 1, len(ks) - 1)]
    golden = (math.sqrt(5) - 1) / 2
    for _ in range(120):
        c = hi - golden * (hi - lo)
        d = lo + golden * (hi - lo)
        if supply_of(c) < supply_of(d):
            hi = d
        else:
            lo = c
    return supply_of(0.5 * (lo + hi))
