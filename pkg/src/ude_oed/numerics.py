"""Dense small-matrix linear algebra and ODE integration primitives.

Everything here is pure: no global state, safe to call from parallel
scenario runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, IntegrationFailureError, SingularMatrixError

__all__ = [
    "TimeGrid",
    "Spectrum",
    "OdeSolution",
    "integrate",
    "sym_eig",
    "spd_inverse",
    "symmetrize",
    "gauss_legendre_nodes",
]

# Relative threshold below which a symmetric matrix counts as singular.
# FIM scales vary across models, so the check is always relative to the
# largest eigenvalue.
PD_RELATIVE_THRESHOLD = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part 0.5*(A + A^T)."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes partitioning [t_start, t_end]."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InputError("time grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise InputError("time grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t_start: float, t_end: float, n_intervals: int) -> "TimeGrid":
        if n_intervals < 1:
            raise InputError("n_intervals must be >= 1")
        return cls(np.linspace(float(t_start), float(t_end), n_intervals + 1))

    @property
    def t_start(self) -> float:
        return float(self.nodes[0])

    @property
    def t_end(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.nodes)

    def interval_of(self, t: float) -> int:
        """Index of the interval containing t (right-open, last is closed)."""
        k = int(np.searchsorted(self.nodes, t, side="right")) - 1
        return min(max(k, 0), self.n_intervals - 1)


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues sorted descending; column k of ``eigenvectors`` pairs with
    ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return q @ np.diag(self.eigenvalues) @ q.T


# ---------------------------------------------------------------------------
# Adaptive Dormand-Prince 5(4) integration with cubic Hermite dense output
# ---------------------------------------------------------------------------

# Butcher tableau of the Dormand-Prince 5(4) pair.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# 5th-order minus embedded 4th-order weights: local error estimate.
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_MIN_STEP_FRACTION = 1e-13
_MAX_REJECTS = 60


@dataclass
class _Segment:
    """One accepted step with endpoint slopes for cubic Hermite evaluation."""

    t0: float
    t1: float
    y0: np.ndarray
    y1: np.ndarray
    f0: np.ndarray
    f1: np.ndarray

    def at(self, t: float) -> np.ndarray:
        h = self.t1 - self.t0
        s = (t - self.t0) / h
        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return h00 * self.y0 + (h10 * h) * self.f0 + h01 * self.y1 + (h11 * h) * self.f1


@dataclass
class OdeSolution:
    """States at the grid nodes plus interval-wise dense output."""

    grid: TimeGrid
    states: np.ndarray  # (n_nodes, n_dim)
    segments: list = field(repr=False, default_factory=list)
    n_steps: int = 0

    def at(self, t: float) -> np.ndarray:
        """Evaluate the dense solution at time t inside the horizon."""
        segs = self.segments
        if not segs:
            raise InputError("solution has no dense segments")
        if t <= segs[0].t0:
            return segs[0].y0.copy()
        if t >= segs[-1].t1:
            return segs[-1].y1.copy()
        lo, hi = 0, len(segs) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if segs[mid].t1 < t:
                lo = mid + 1
            else:
                hi = mid
        return segs[lo].at(t)

    def segments_in(self, t_lo: float, t_hi: float):
        """Accepted-step segments covering [t_lo, t_hi] (grid-aligned calls)."""
        for seg in self.segments:
            if seg.t1 <= t_lo + 1e-14 * max(1.0, abs(t_lo)):
                continue
            if seg.t0 >= t_hi - 1e-14 * max(1.0, abs(t_hi)):
                break
            yield seg


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(
    rhs,
    x0: np.ndarray,
    grid: TimeGrid,
    tol: float = 1e-8,
    fixed_steps: int | None = None,
    first_step: float | None = None,
) -> OdeSolution:
    """Integrate x' = rhs(t, x) across the grid with a DP 5(4) pair.

    Steps never cross grid nodes, so piecewise-constant forcing aligned
    with the grid stays smooth within every step.  ``fixed_steps`` forces
    that many equal (non-adaptive) steps per grid interval; used by the
    order-of-convergence checks.
    """
    if not (0.0 < tol <= 1e-2):
        raise InputError("tol must lie in (0, 1e-2]")
    y = np.array(x0, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise InputError("non-finite initial state")
    n_nodes = grid.nodes.size
    states = np.empty((n_nodes, y.size))
    states[0] = y
    segments: list[_Segment] = []
    atol = 1e-2 * tol
    span = grid.t_end - grid.t_start
    h = first_step if first_step is not None else min(span / 100.0, grid.deltas.min())
    n_steps = 0
    k = np.empty((7, y.size))

    for j in range(grid.n_intervals):
        t = float(grid.nodes[j])
        t_stop = float(grid.nodes[j + 1])
        if fixed_steps is not None:
            h = (t_stop - t) / fixed_steps
        f_now = np.asarray(rhs(t, y), dtype=float)
        rejects = 0
        while t < t_stop - 1e-14 * max(1.0, abs(t_stop)):
            h = min(h, t_stop - t)
            if h < _MIN_STEP_FRACTION * span:
                raise IntegrationFailureError(
                    f"step size underflow at t={t:.6g}", t_failure=t
                )
            k[0] = f_now
            for s in range(1, 7):
                ys = y + h * (k[:s].T @ _DP_A[s])
                k[s] = rhs(t + _DP_C[s] * h, ys)
            y_new = y + h * (k.T @ _DP_B5)
            if fixed_steps is None:
                err = h * (k.T @ _DP_E)
                err_norm = _error_norm(err, y, y_new, tol, atol)
                if not np.isfinite(err_norm):
                    err_norm = 10.0
                if err_norm > 1.0:
                    rejects += 1
                    if rejects > _MAX_REJECTS:
                        raise IntegrationFailureError(
                            f"too many rejected steps at t={t:.6g}", t_failure=t
                        )
                    h *= max(0.2, 0.9 * err_norm ** -0.2)
                    continue
                factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            else:
                factor = 1.0
            f_new = k[6].copy()  # FSAL stage equals rhs(t+h, y_new)
            segments.append(_Segment(t, t + h, y.copy(), y_new.copy(), k[0].copy(), f_new))
            t += h
            y = y_new
            f_now = f_new
            n_steps += 1
            rejects = 0
            if fixed_steps is None:
                h *= factor
        states[j + 1] = y

    return OdeSolution(grid=grid, states=states, segments=segments, n_steps=n_steps)


# ---------------------------------------------------------------------------
# Symmetric eigenproblems via cyclic Jacobi rotations
# ---------------------------------------------------------------------------


def sym_eig(s: np.ndarray, max_sweeps: int = 60) -> Spectrum:
    """Full eigendecomposition of a symmetric matrix.

    Cyclic Jacobi rotations: slower than LAPACK but transparent and robust
    for the <= ~200 dimensional matrices handled here.
    """
    a = np.asarray(s, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    n = a.shape[0]
    a = symmetrize(a)
    if n == 1:
        return Spectrum(a[0].copy(), np.ones((1, 1)))
    q = np.eye(n)
    amax = np.max(np.abs(a))
    if amax == 0.0:
        return Spectrum(np.zeros(n), q)
    stop = 1e-15 * amax

    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = a[p, r]
                mag = abs(apq)
                if mag <= stop:
                    continue
                off = max(off, mag)
                app = a[p, p]
                aqq = a[r, r]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0:
                    t_rot = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t_rot = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t_rot * t_rot)
                sn = t_rot * c
                col_p = a[:, p].copy()
                col_q = a[:, r].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, r] = sn * col_p + c * col_q
                row_p = a[p].copy()
                row_q = a[r].copy()
                a[p] = c * row_p - sn * row_q
                a[r] = sn * row_p + c * row_q
                a[p, r] = 0.0
                a[r, p] = 0.0
                vp = q[:, p].copy()
                vq = q[:, r].copy()
                q[:, p] = c * vp - sn * vq
                q[:, r] = sn * vp + c * vq
        if off <= stop:
            break

    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals)[::-1]
    return Spectrum(eigvals[order], q[:, order])


def spd_inverse(s: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via its spectrum.

    Raises SingularMatrixError when the smallest eigenvalue falls below the
    relative PD threshold; callers treat that as the signal that a
    dimension-reduction strategy is required.
    """
    spec = sym_eig(s)
    lam_max = float(spec.eigenvalues[0])
    lam_min = float(spec.eigenvalues[-1])
    if lam_max <= 0.0 or lam_min <= PD_RELATIVE_THRESHOLD * lam_max:
        raise SingularMatrixError(
            f"matrix not positive definite (lambda_min={lam_min:.3e}, "
            f"lambda_max={lam_max:.3e})",
            smallest_eigenvalue=lam_min,
        )
    q = spec.eigenvectors
    inv = (q / spec.eigenvalues) @ q.T
    return symmetrize(inv)


# ---------------------------------------------------------------------------
# Quadrature nodes for Gramian integrals
# ---------------------------------------------------------------------------

# 5-point Gauss-Legendre rule on [-1, 1]: exact through degree 9, well
# beyond the cubic Hermite dense output it integrates.
_GL5_X = np.array(
    [
        -0.9061798459386640,
        -0.5384693101056831,
        0.0,
        0.5384693101056831,
        0.9061798459386640,
    ]
)
_GL5_W = np.array(
    [
        0.2369268850561891,
        0.4786286704993665,
        0.5688888888888889,
        0.4786286704993665,
        0.2369268850561891,
    ]
)


def gauss_legendre_nodes(t_lo: float, t_hi: float) -> tuple[np.ndarray, np.ndarray]:
    """5-point Gauss-Legendre nodes and weights on [t_lo, t_hi]."""
    half = 0.5 * (t_hi - t_lo)
    mid = 0.5 * (t_hi + t_lo)
    return mid + half * _GL5_X, half * _GL5_W
