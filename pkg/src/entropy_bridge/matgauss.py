"""Dense symmetric linear algebra underpinning the whole toolkit.

Eigendecomposition based primitives (PSD square roots, PD inverses),
reachability Gramians for discrete-time linear systems, and the closed-form
solution of the algebraic Riccati equation ``X + X U X = V`` with
``U >= 0``, ``V > 0``.

Matrix functions are only ever evaluated on symmetric matrices: a product
such as ``U @ V`` is never diagonalized directly.  Instead the symmetric
similarity ``W = V^{1/2} U V^{1/2}`` (same spectrum as ``U @ V`` because
``V > 0``) carries all spectral computations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DefinitenessError,
    DimensionError,
    ParameterError,
    StabilityError,
    SymmetryError,
)

# Tolerances, scaled as follows (double precision headroom at n <= 50):
#   symmetry defect       <= SYM_RTOL * ||S||_F
#   PD eigenvalue floor    > PD_RTOL * trace(S)/n
#   PSD clamp window       [-CLAMP_RTOL * lam_max, 0) -> 0
#   full-rank decision     lam_min > RANK_RTOL * lam_max
SYM_RTOL = 1e-10
PD_RTOL = 1e-12
CLAMP_RTOL = 1e-10
RANK_RTOL = 1e-9


def _as_square(mat) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(mat, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def check_symmetric(mat, rtol: float = SYM_RTOL) -> np.ndarray:
    """Validate symmetry of ``mat`` and return it as a float array."""
    arr = _as_square(mat)
    defect = float(np.abs(arr - arr.T).max()) if arr.size else 0.0
    if defect > rtol * np.linalg.norm(arr):
        raise SymmetryError(
            f"symmetry defect {defect:.3e} exceeds {rtol:.1e} * ||S||_F"
        )
    return arr


def sym_eig(mat, rtol: float = SYM_RTOL):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(w, Q)`` with eigenvalues ``w`` ascending and ``Q`` orthonormal,
    so that ``Q @ diag(w) @ Q.T`` reconstructs the input.
    """
    arr = check_symmetric(mat, rtol)
    return np.linalg.eigh(0.5 * (arr + arr.T))


def spectral_radius(mat) -> float:
    return float(np.abs(np.linalg.eigvals(_as_square(mat))).max())


def sqrt_psd(mat, clamp_rtol: float = CLAMP_RTOL) -> np.ndarray:
    """Symmetric PSD square root, clamping roundoff-negative eigenvalues.

    Eigenvalues in ``[-clamp_rtol * lam_max, 0)`` are clamped to zero;
    anything below that window raises ``DefinitenessError``.
    """
    w, q = sym_eig(mat)
    lam_max = max(float(w[-1]), 0.0) if w.size else 0.0
    floor = -clamp_rtol * lam_max
    if w.size and w[0] < floor:
        raise DefinitenessError(
            f"matrix is not PSD: smallest eigenvalue {w[0]:.3e} < {floor:.3e}"
        )
    w = np.clip(w, 0.0, None)
    root = (q * np.sqrt(w)) @ q.T
    return 0.5 * (root + root.T)


def pd_eig(mat, rtol: float = PD_RTOL):
    """Eigendecomposition of a positive definite matrix.

    Raises ``DefinitenessError`` unless every eigenvalue exceeds
    ``rtol * trace/n``.
    """
    w, q = sym_eig(mat)
    n = w.size
    scale = float(np.trace(np.atleast_2d(mat))) / max(n, 1)
    if n == 0 or w[0] <= rtol * max(scale, 0.0) or scale <= 0.0:
        lam = w[0] if n else float("nan")
        raise DefinitenessError(f"matrix is not PD: smallest eigenvalue {lam:.3e}")
    return w, q


def pd_inverse(mat) -> np.ndarray:
    w, q = pd_eig(mat)
    inv = (q / w) @ q.T
    return 0.5 * (inv + inv.T)


def pd_sqrt_pair(mat):
    """Return ``(S^{1/2}, S^{-1/2})`` for a PD matrix ``S``."""
    w, q = pd_eig(mat)
    r = np.sqrt(w)
    half = (q * r) @ q.T
    ihalf = (q / r) @ q.T
    return 0.5 * (half + half.T), 0.5 * (ihalf + ihalf.T)


def logdet_pd(mat) -> float:
    w, _ = pd_eig(mat)
    return float(np.log(w).sum())


@dataclass(frozen=True)
class LinearSystem:
    """State/input matrices of ``x' = A x + B w`` with cached stability facts."""

    A: np.ndarray
    B: np.ndarray
    spectral_radius: float = field(init=False)
    stable: bool = field(init=False)

    def __post_init__(self):
        a = _as_square(self.A)
        b = np.asarray(self.B, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise DimensionError(
                f"B has shape {b.shape}, expected ({a.shape[0]}, m)"
            )
        a = a.copy()
        b = b.copy()
        a.flags.writeable = False
        b.flags.writeable = False
        rho = float(np.abs(np.linalg.eigvals(a)).max())
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "spectral_radius", rho)
        object.__setattr__(self, "stable", rho < 1.0)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class GramianSet:
    """Finite-horizon reachability data: block row H, Gramian, rank facts.

    ``tau`` is the minimal steering horizon (least t with a PD Gramian),
    or ``None`` when the pair is unreachable.
    """

    horizon: int
    H: np.ndarray
    gram: np.ndarray
    full_rank: bool
    tau: int | None


def _gram_is_pd(gram: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    return bool(w[-1] > 0.0 and w[0] > RANK_RTOL * w[-1])


def gramians(sys: LinearSystem, horizon: int) -> GramianSet:
    """Reachability Gramian of ``sys`` over ``horizon`` steps.

    ``H`` is the block row ``[A^{t-1}B ... AB B]``; the Gramian follows the
    recurrence ``G_{t+1} = A G_t A^T + B B^T``.  The minimal steering horizon
    is scanned over ``t = 1..n`` (Cayley-Hamilton bound).
    """
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    a, b = sys.A, sys.B
    bbt = b @ b.T

    blocks = [b]
    for _ in range(horizon - 1):
        blocks.append(a @ blocks[-1])
    h = np.hstack(blocks[::-1])

    gram = np.zeros_like(bbt)
    tau = None
    for t in range(1, horizon + 1):
        gram = a @ gram @ a.T + bbt
        gram = 0.5 * (gram + gram.T)
        if tau is None and t <= sys.n and _gram_is_pd(gram):
            tau = t
    if tau is None and horizon < sys.n:
        g = gram.copy()
        for t in range(horizon + 1, sys.n + 1):
            g = a @ g @ a.T + bbt
            g = 0.5 * (g + g.T)
            if _gram_is_pd(g):
                tau = t
                break
    return GramianSet(
        horizon=horizon,
        H=h,
        gram=gram,
        full_rank=_gram_is_pd(gram),
        tau=tau,
    )


def dlyap_inf(sys: LinearSystem, rtol: float = 1e-14) -> np.ndarray:
    """Infinite-horizon reachability Gramian ``G = A G A^T + B B^T``.

    Solved by the squaring/doubling iteration, which converges geometrically
    for a stable ``A``.  PD iff the pair is reachable.
    """
    if not sys.stable:
        raise StabilityError(
            f"spectral radius {sys.spectral_radius:.6f} >= 1; no invariant Gramian"
        )
    q = sys.B @ sys.B.T
    m = sys.A.copy()
    for _ in range(128):
        q_next = q + m @ q @ m.T
        q_next = 0.5 * (q_next + q_next.T)
        if np.linalg.norm(q_next - q) <= rtol * max(np.linalg.norm(q_next), 1e-300):
            return q_next
        q = q_next
        m = m @ m
    return q


def riccati_closed_form(u, v):
    """Unique PD solution of ``X + X U X = V`` plus two spectral scalars.

    Returns ``(sol, trace_sqrt, logdet_factor)`` where
    ``trace_sqrt = Tr sqrt(I + 4 U V)`` and
    ``logdet_factor = ln det(I + sqrt(I + 4 U V))``.

    All spectral work happens on the symmetric ``W = V^{1/2} U V^{1/2}``,
    which shares its spectrum with ``U @ V``; the solution is
    ``2 V^{1/2} (I + sqrt(I + 4 W))^{-1} V^{1/2}``.
    """
    u = check_symmetric(u)
    v = check_symmetric(v)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch: {u.shape} vs {v.shape}")
    wu = np.linalg.eigvalsh(0.5 * (u + u.T))
    if wu.size and wu[0] < -CLAMP_RTOL * max(float(wu[-1]), 0.0):
        raise DefinitenessError(f"U is not PSD: smallest eigenvalue {wu[0]:.3e}")
    v_half, _ = pd_sqrt_pair(v)

    w_mat = v_half @ u @ v_half
    w, q = sym_eig(0.5 * (w_mat + w_mat.T))
    w = np.clip(w, 0.0, None)
    s = np.sqrt(1.0 + 4.0 * w)

    trace_sqrt = float(s.sum())
    logdet_factor = float(np.log1p(s).sum())
    inner = (q / (1.0 + s)) @ q.T
    sol = 2.0 * v_half @ inner @ v_half
    return 0.5 * (sol + sol.T), trace_sqrt, logdet_factor
