"""Sampling and control optimization plus information-gain diagnostics.

The relaxed sampling problem minimizes a convex criterion of the
weight-assembled FIM over the box [0,1] intersected with per-observable
measurement-time budgets.  It is solved by projected gradient descent
with exact gradients and exact Euclidean projection (clip plus bisection
on the budget shift, separable per observable row).

Controls are improved in an outer block-coordinate loop: propagate
sensitivities under the current controls (refreshing the spectral
reduction basis), optimize the sampling inside, then take a bounded
Nelder-Mead step on the piecewise-constant control values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fim as fim_mod
from . import sensitivity as sens_mod
from .errors import DesignInfeasibleError, InputError, RankError, SingularMatrixError
from .numerics import Spectrum, TimeGrid
from .models.base import UdeModel

__all__ = [
    "SamplingDesign",
    "ControlDesign",
    "OedSolution",
    "InfoGainCurves",
    "DesignConfig",
    "uniform_budget_design",
    "project_design",
    "optimize_sampling",
    "optimize_controls",
    "interval_gains",
    "info_gain",
    "gamma_curves",
    "rotated_local_gains",
    "kkt_report",
    "KktReport",
]

_ACTIVE = 1e-3  # weights within this of {0, 1} count as binary


@dataclass
class SamplingDesign:
    """Relaxed sampling weights per observable and grid interval."""

    w: np.ndarray  # (n_y, N) in [0, 1]
    grid: TimeGrid
    budgets: np.ndarray  # measurement budget per observable, time units

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.budgets = np.asarray(self.budgets, dtype=float)
        if self.w.ndim != 2 or self.w.shape[1] != self.grid.n_intervals:
            raise InputError("weight matrix must be (n_y, N)")
        if self.budgets.size != self.w.shape[0]:
            raise InputError("one budget per observable required")
        if np.any(self.w < -1e-12) or np.any(self.w > 1 + 1e-12):
            raise InputError("weights must lie in [0, 1]")
        used = self.w @ self.grid.deltas
        if np.any(used > self.budgets + 1e-9):
            raise InputError("sampling design exceeds its measurement budget")

    @property
    def n_y(self) -> int:
        return self.w.shape[0]

    def budget_used(self) -> np.ndarray:
        return self.w @ self.grid.deltas

    def binary_fraction(self) -> float:
        w = self.w
        return float(np.mean((w <= _ACTIVE) | (w >= 1.0 - _ACTIVE)))


@dataclass
class ControlDesign:
    """Piecewise-constant controls on the sampling grid."""

    values: np.ndarray  # (n_u, N)
    grid: TimeGrid
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != self.grid.n_intervals:
            raise InputError("control values must cover every grid interval")
        for k, (lo, hi) in enumerate(self.bounds):
            if np.any(self.values[k] < lo - 1e-12) or np.any(self.values[k] > hi + 1e-12):
                raise InputError(f"control channel {k} violates its bounds")

    @property
    def n_u(self) -> int:
        return self.values.shape[0]

    def as_function(self):
        nodes = self.grid.nodes
        values = self.values
        n_last = self.grid.n_intervals - 1

        def control(t: float) -> np.ndarray:
            k = int(np.searchsorted(nodes, t, side="right")) - 1
            return values[:, min(max(k, 0), n_last)]

        return control

    @classmethod
    def zero(cls, model: UdeModel, grid: TimeGrid) -> "ControlDesign":
        vals = np.zeros((model.n_u, grid.n_intervals))
        for k, (lo, hi) in enumerate(model.control_bounds):
            vals[k] = min(max(0.0, lo), hi)
        return cls(vals, grid, tuple(model.control_bounds))

    @classmethod
    def from_pieces(
        cls, pieces: np.ndarray, model: UdeModel, grid: TimeGrid, n_pieces: int
    ) -> "ControlDesign":
        pieces = np.asarray(pieces, dtype=float).reshape(model.n_u, n_pieces)
        n = grid.n_intervals
        if n % n_pieces:
            raise InputError("control pieces must evenly divide the grid intervals")
        rep = n // n_pieces
        return cls(np.repeat(pieces, rep, axis=1), grid, tuple(model.control_bounds))


@dataclass
class InfoGainCurves:
    """Pointwise information-gain diagnostics along the horizon."""

    times: np.ndarray
    trace_gain: np.ndarray  # (n_y, n_nodes): tr(Pi^i(t)) / n_p
    n_p: int
    local_matrices: np.ndarray | None = None  # (n_y, n_nodes, n_r, n_r)
    global_matrices: np.ndarray | None = None


@dataclass
class OedSolution:
    """Best design found for one scenario."""

    w_star: SamplingDesign
    u_star: ControlDesign
    phi_star: float
    mu_star: np.ndarray  # budget multiplier per observable
    strategy: sens_mod.ReductionStrategy
    spectrum: Spectrum
    criterion: str
    interval_gains: np.ndarray  # (n_y, N) criterion-specific average gains
    trajectory: sens_mod.SensitivityTrajectory = field(repr=False, default=None)
    atoms: fim_mod.GramianAtoms = field(repr=False, default=None)
    reduction: sens_mod.ReductionMatrix | None = field(repr=False, default=None)
    sweeps: int = 0
    local_optimum_flag: bool = False


@dataclass
class DesignConfig:
    """Knobs of the design optimizer."""

    integration_tol: float = 1e-8
    sampling_max_iter: int = 5000
    sampling_rel_tol: float = 1e-8
    control_pieces: int | None = None  # defaults to 12 (Lotka) / 8 (urethane)
    nm_restarts: int = 3
    nm_max_evals: int = 150
    outer_sweeps: int = 50
    outer_rel_tol: float = 1e-6
    seed: int = 0


def uniform_budget_design(
    grid: TimeGrid, budgets: np.ndarray, n_y: int | None = None
) -> SamplingDesign:
    """Budget-proportional uniform weights: the equidistant reference design."""
    budgets = np.asarray(budgets, dtype=float)
    n_y = budgets.size if n_y is None else n_y
    span = grid.t_end - grid.t_start
    w = np.tile(np.minimum(budgets / span, 1.0)[:, np.newaxis], (1, grid.n_intervals))
    return SamplingDesign(w=w, grid=grid, budgets=budgets)


def _project_row(w_row: np.ndarray, deltas: np.ndarray, budget: float) -> np.ndarray:
    """Exact Euclidean projection onto {0 <= w <= 1, sum w*dt <= budget}.

    The budget usage of the shifted clip is piecewise linear in the shift,
    with breakpoints where entries hit a bound; the exact shift is found on
    the bracketing segment.
    """
    clipped = np.clip(w_row, 0.0, 1.0)
    if clipped @ deltas <= budget + 1e-15:
        return clipped
    # shifts at which entry j leaves the interior of [0, 1]
    knots = np.concatenate([w_row / deltas, (w_row - 1.0) / deltas])
    knots = np.unique(knots[knots > 0.0])
    usage = np.clip(w_row[None, :] - knots[:, None] * deltas[None, :], 0.0, 1.0) @ deltas
    idx = int(np.searchsorted(-usage, -budget, side="left"))
    if idx >= knots.size:
        return np.zeros_like(w_row)
    lo = 0.0 if idx == 0 else float(knots[idx - 1])
    hi = float(knots[idx])
    u_lo = float(clipped @ deltas) if idx == 0 else float(usage[idx - 1])
    u_hi = float(usage[idx])
    # usage is linear on [lo, hi]: interpolate to the exact shift
    if u_hi >= u_lo - 1e-300:
        shift = hi
    else:
        shift = lo + (u_lo - budget) * (hi - lo) / (u_lo - u_hi)
    return np.clip(w_row - shift * deltas, 0.0, 1.0)


def project_design(w: np.ndarray, grid: TimeGrid, budgets: np.ndarray) -> np.ndarray:
    """Row-separable projection onto the feasible sampling polytope."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    budgets = np.asarray(budgets, dtype=float)
    out = np.empty_like(w)
    for i in range(w.shape[0]):
        out[i] = _project_row(w[i], grid.deltas, float(budgets[i]))
    return out


def interval_gains(atoms: fim_mod.GramianAtoms, w: np.ndarray, crit: str) -> np.ndarray:
    """Criterion-specific interval-average information gains.

    These are the discrete counterparts of the pointwise optimality
    quantities: trace of the global gain for A (normalized by the reduced
    dimension), the determinant pairing for D.  At an optimal design the
    gains of measured intervals dominate the budget multiplier.
    """
    grad = fim_mod.criterion_gradient_w(atoms, w, crit)
    gains = -grad / atoms.grid.deltas[np.newaxis, :]
    if crit == "D":
        gains = gains * atoms.n_r
    return gains


def _extract_multipliers(w: np.ndarray, gains: np.ndarray, deltas, budgets) -> np.ndarray:
    """Budget multipliers from the marginal gains at the solution.

    Fractional intervals sit exactly at the multiplier; for fully binary
    rows any value between the best unmeasured and worst measured gain is
    consistent, and the midpoint is reported.  Slack budgets get zero.
    """
    n_y = w.shape[0]
    mu = np.zeros(n_y)
    for i in range(n_y):
        used = float(w[i] @ deltas)
        if used < budgets[i] - 1e-6 * max(1.0, budgets[i]):
            continue
        frac = (w[i] > _ACTIVE) & (w[i] < 1.0 - _ACTIVE)
        if np.any(frac):
            mu[i] = float(np.mean(gains[i][frac]))
            continue
        active = w[i] >= 1.0 - _ACTIVE
        inactive = w[i] <= _ACTIVE
        lo = float(np.max(gains[i][inactive])) if np.any(inactive) else 0.0
        hi = float(np.min(gains[i][active])) if np.any(active) else lo
        mu[i] = max(0.0, 0.5 * (lo + hi))
    return mu


def optimize_sampling(
    atoms: fim_mod.GramianAtoms,
    budgets: np.ndarray,
    crit: str,
    max_iter: int = 5000,
    rel_tol: float = 1e-8,
    w_init: np.ndarray | None = None,
    strategy_name: str = "",
) -> tuple[SamplingDesign, np.ndarray]:
    """Projected-gradient solution of the relaxed sampling problem."""
    grid = atoms.grid
    budgets = np.asarray(budgets, dtype=float)
    deltas = grid.deltas
    if w_init is None:
        w = uniform_budget_design(grid, budgets, atoms.n_y).w
    else:
        w = project_design(w_init, grid, budgets)
    try:
        phi = fim_mod.criterion(fim_mod.assemble_fim(atoms, w), crit)
    except SingularMatrixError as exc:
        raise DesignInfeasibleError(
            f"design infeasible: FIM singular at the uniform probe "
            f"(lambda_min={exc.smallest_eigenvalue:.3e})",
            strategy=strategy_name,
        ) from exc

    grad = fim_mod.criterion_gradient_w(atoms, w, crit)
    step = 0.1 * max(abs(phi), 1e-30) / max(float(np.max(np.abs(grad))), 1e-30) ** 2
    step = min(step, 1e6)
    for _ in range(max_iter):
        pg = w - project_design(w - grad, grid, budgets)
        if np.linalg.norm(pg) <= rel_tol * max(abs(phi), 1e-300):
            break
        trial_step = step
        improved = False
        for _ in range(60):
            w_new = project_design(w - trial_step * grad, grid, budgets)
            direction = w_new - w
            if not np.any(direction):
                break
            try:
                phi_new = fim_mod.criterion(fim_mod.assemble_fim(atoms, w_new), crit)
            except SingularMatrixError:
                # candidate left the positive definite region: backtrack
                trial_step *= 0.5
                continue
            if phi_new <= phi + 1e-4 * float(np.sum(grad * direction)):
                improved = True
                break
            trial_step *= 0.5
        if not improved:
            break
        grad_new = fim_mod.criterion_gradient_w(atoms, w_new, crit)
        dw = (w_new - w).ravel()
        dg = (grad_new - grad).ravel()
        denom = float(dw @ dg)
        step = float(dw @ dw) / denom if denom > 1e-300 else trial_step * 2.0
        step = min(max(step, 1e-30), 1e12)
        w, phi, grad = w_new, phi_new, grad_new

    design = SamplingDesign(w=w, grid=grid, budgets=budgets)
    gains = interval_gains(atoms, w, crit)
    mu = _extract_multipliers(w, gains, deltas, budgets)
    return design, mu


# ---------------------------------------------------------------------------
# Bounded Nelder-Mead over piecewise-constant control values
# ---------------------------------------------------------------------------


def _reflect_into_box(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    out = x.copy()
    over = out > hi
    out[over] = 2 * hi[over] - out[over]
    under = out < lo
    out[under] = 2 * lo[under] - out[under]
    return np.clip(out, lo, hi)


def _nelder_mead(f, x0, lo, hi, max_evals: int):
    n = x0.size
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    span = hi - lo
    pts = [np.clip(x0, lo, hi)]
    for k in range(n):
        step = 0.25 * span[k] if span[k] > 0 else 0.1
        xk = pts[0].copy()
        xk[k] = xk[k] + step if xk[k] + step <= hi[k] else xk[k] - step
        pts.append(np.clip(xk, lo, hi))
    evals = [f(p) for p in pts]
    n_evals = len(evals)
    while n_evals < max_evals:
        order = np.argsort(evals)
        pts = [pts[i] for i in order]
        evals = [evals[i] for i in order]
        if abs(evals[-1] - evals[0]) <= 1e-10 * max(abs(evals[0]), 1e-30):
            break
        centroid = np.mean(pts[:-1], axis=0)
        xr = _reflect_into_box(centroid + alpha * (centroid - pts[-1]), lo, hi)
        fr = f(xr)
        n_evals += 1
        if fr < evals[0]:
            xe = _reflect_into_box(centroid + gamma * (xr - centroid), lo, hi)
            fe = f(xe)
            n_evals += 1
            if fe < fr:
                pts[-1], evals[-1] = xe, fe
            else:
                pts[-1], evals[-1] = xr, fr
        elif fr < evals[-2]:
            pts[-1], evals[-1] = xr, fr
        else:
            xc = _reflect_into_box(centroid + rho * (pts[-1] - centroid), lo, hi)
            fc = f(xc)
            n_evals += 1
            if fc < evals[-1]:
                pts[-1], evals[-1] = xc, fc
            else:
                for i in range(1, len(pts)):
                    pts[i] = _reflect_into_box(pts[0] + sigma * (pts[i] - pts[0]), lo, hi)
                    evals[i] = f(pts[i])
                    n_evals += 1
    best = int(np.argmin(evals))
    return pts[best], evals[best]


def default_control_pieces(model: UdeModel) -> int:
    return 8 if model.name.startswith("urethane") else 12


def _build_reduction(model, theta, strategy, traj_complete_atoms=None):
    free_labels = tuple(model.p_names[i] for i in model.free_p)
    if strategy.kind == "outer":
        return None
    fim_complete = None
    if strategy.kind in ("svd", "psvd", "tsvd"):
        if traj_complete_atoms is None:
            raise InputError("spectral strategies need a complete-pass FIM")
        full_w = np.ones((traj_complete_atoms.n_y, traj_complete_atoms.n_intervals))
        fim_complete = fim_mod.assemble_fim(traj_complete_atoms, full_w).matrix
    return sens_mod.reduction_matrix(
        strategy,
        theta if theta is not None else np.empty(0),
        model.n_free_p,
        model.ann,
        fim_complete=fim_complete,
        p_labels=free_labels,
    )


def optimize_controls(
    model: UdeModel,
    p_hat: np.ndarray,
    theta: np.ndarray | None,
    strategy: sens_mod.ReductionStrategy,
    crit: str,
    w_policy: str,
    u_policy: str,
    grid: TimeGrid,
    config: DesignConfig | None = None,
    u_init: np.ndarray | None = None,
) -> OedSolution:
    """Block-coordinate design optimization over sampling and controls.

    ``w_policy`` is "optimized" or "equidistant", ``u_policy`` is
    "optimized" or "zero".  ``u_init`` optionally seeds the control search
    with per-piece values (defaults to zero clipped into the bounds).  The
    spectral reduction basis is refreshed once per outer sweep (whenever
    the controls changed), never inside the control line search.  Returns
    the best design found; the problem is nonconvex in the controls, so
    this is a locally optimal candidate.
    """
    cfg = config or DesignConfig()
    if w_policy not in ("optimized", "equidistant"):
        raise InputError("w_policy must be 'optimized' or 'equidistant'")
    if u_policy not in ("optimized", "zero"):
        raise InputError("u_policy must be 'optimized' or 'zero'")
    n_pieces = cfg.control_pieces or default_control_pieces(model)
    if grid.n_intervals % n_pieces:
        raise InputError("control pieces must divide the number of grid intervals")

    lo = np.repeat([b[0] for b in model.control_bounds], n_pieces).astype(float)
    hi = np.repeat([b[1] for b in model.control_bounds], n_pieces).astype(float)
    if u_init is not None:
        u_pieces = np.asarray(u_init, dtype=float).ravel()
        if u_pieces.size != model.n_u * n_pieces:
            raise InputError("u_init must give one value per control piece")
        if np.any(u_pieces < lo - 1e-12) or np.any(u_pieces > hi + 1e-12):
            raise InputError("u_init violates the control bounds")
        u_pieces = np.clip(u_pieces, lo, hi)
    else:
        u_pieces = np.clip(np.zeros(model.n_u * n_pieces), lo, hi)
    bounds_collapsed = bool(np.all(hi - lo <= 0))
    optimize_u = u_policy == "optimized" and model.n_u > 0 and not bounds_collapsed
    strat_name = sens_mod.strategy_tag(strategy)

    def refresh(u_vec):
        if strategy.kind not in ("svd", "psvd", "tsvd"):
            return _build_reduction(model, theta, strategy)
        controls = ControlDesign.from_pieces(u_vec, model, grid, n_pieces)
        traj_c = sens_mod.propagate(
            model,
            p_hat,
            theta,
            controls.as_function(),
            grid,
            sens_mod.ReductionStrategy("complete"),
            _build_reduction(model, theta, sens_mod.ReductionStrategy("complete")),
            tol=cfg.integration_tol,
        )
        return _build_reduction(model, theta, strategy, fim_mod.gramian_atoms(traj_c, model))

    def evaluate(u_vec, reduction, tol=None):
        controls = ControlDesign.from_pieces(u_vec, model, grid, n_pieces)
        traj = sens_mod.propagate(
            model, p_hat, theta, controls.as_function(), grid, strategy,
            reduction, tol=tol or cfg.integration_tol,
        )
        atoms = fim_mod.gramian_atoms(traj, model)
        if w_policy == "optimized":
            design, mu = optimize_sampling(
                atoms,
                model.budgets,
                crit,
                max_iter=cfg.sampling_max_iter,
                rel_tol=cfg.sampling_rel_tol,
                strategy_name=strat_name,
            )
            phi = fim_mod.criterion(fim_mod.assemble_fim(atoms, design.w), crit)
        else:
            design = uniform_budget_design(grid, model.budgets, model.n_y)
            try:
                phi = fim_mod.criterion(fim_mod.assemble_fim(atoms, design.w), crit)
            except SingularMatrixError as exc:
                raise DesignInfeasibleError(
                    "design infeasible: FIM singular at the equidistant design",
                    strategy=strat_name,
                ) from exc
            mu = np.zeros(model.n_y)
        return phi, design, mu, traj, atoms, controls

    rng = np.random.default_rng(cfg.seed)
    reduction = refresh(u_pieces)
    phi, design, mu, traj, atoms, controls = evaluate(u_pieces, reduction)
    sweeps = 0
    local_flag = False

    if optimize_u:
        # coarser integration inside the control search; the final design is
        # re-evaluated at full tolerance below
        search_tol = max(cfg.integration_tol, 1e-6)
        needs_refresh = strategy.kind in ("svd", "psvd", "tsvd")
        u_best = u_pieces.copy()
        improved_ever = False
        for sweep in range(cfg.outer_sweeps):
            sweeps = sweep + 1
            if sweep > 0:
                reduction = refresh(u_best)

            def objective(u_vec):
                try:
                    return evaluate(u_vec, reduction, tol=search_tol)[0]
                except (SingularMatrixError, DesignInfeasibleError):
                    return np.inf

            phi_ref = objective(u_best)
            candidates = [u_best]
            if sweep == 0:
                for _ in range(max(0, cfg.nm_restarts - 1)):
                    candidates.append(rng.uniform(lo, hi))
            results = [
                _nelder_mead(objective, c, lo, hi, cfg.nm_max_evals)
                for c in candidates
            ]
            phis = [r[1] for r in results]
            k_best = int(np.argmin(phis))
            u_new, phi_new = results[k_best]
            if np.isfinite(phi_new) and phi_new < phi_ref:
                u_best = u_new
                if phi_new < phi_ref * (1.0 - cfg.outer_rel_tol):
                    improved_ever = True
                    # without a basis refresh the objective is unchanged, so
                    # further sweeps cannot make progress
                    if needs_refresh:
                        continue
            break
        local_flag = not improved_ever
        if needs_refresh:
            reduction = refresh(u_best)
        phi, design, mu, traj, atoms, controls = evaluate(u_best, reduction)

    gains = interval_gains(atoms, design.w, crit)
    spectrum = fim_mod.checked_spectrum(fim_mod.assemble_fim(atoms, design.w).matrix)
    if w_policy == "optimized" and design.binary_fraction() < 0.9:
        warnings.warn(
            f"relaxed sampling is only {design.binary_fraction():.0%} binary "
            f"for {strat_name}; expected a mostly bang-bang solution",
            stacklevel=2,
        )
    return OedSolution(
        w_star=design,
        u_star=controls,
        phi_star=phi,
        mu_star=mu,
        strategy=strategy,
        spectrum=spectrum,
        criterion=crit,
        interval_gains=gains,
        trajectory=traj,
        atoms=atoms,
        reduction=reduction,
        sweeps=sweeps,
        local_optimum_flag=local_flag,
    )


# ---------------------------------------------------------------------------
# Information gain
# ---------------------------------------------------------------------------


def info_gain(
    traj: sens_mod.SensitivityTrajectory,
    model: UdeModel,
    fim_matrix: np.ndarray,
    t_nodes: np.ndarray,
    keep_matrices: bool = False,
) -> InfoGainCurves:
    """Local and global information gain along the trajectory.

    The local gain is the observability Gramian integrand; the global
    gain sandwiches it between inverse FIMs.  Singular FIMs raise.
    """
    spec = fim_mod.checked_spectrum(np.asarray(fim_matrix, dtype=float))
    f_inv = (spec.eigenvectors / spec.eigenvalues) @ spec.eigenvectors.T
    t_nodes = np.asarray(t_nodes, dtype=float)
    n_y = model.n_y
    n_p = spec.dim
    trace_gain = np.empty((n_y, t_nodes.size))
    local = np.empty((n_y, t_nodes.size, traj.n_r, traj.n_r)) if keep_matrices else None
    glob = np.empty_like(local) if keep_matrices else None
    for k, t in enumerate(t_nodes):
        x, g = traj.state_and_sens_at(float(t))
        m = model.observe_jac(x) @ g  # (n_y, n_r)
        for i in range(n_y):
            v = f_inv @ m[i]
            trace_gain[i, k] = float(v @ v) / n_p
            if keep_matrices:
                local[i, k] = np.outer(m[i], m[i])
                glob[i, k] = np.outer(v, v)
    return InfoGainCurves(
        times=t_nodes,
        trace_gain=trace_gain,
        n_p=n_p,
        local_matrices=local,
        global_matrices=glob,
    )


def rotated_local_gains(
    traj: sens_mod.SensitivityTrajectory,
    model: UdeModel,
    vectors: np.ndarray,
    t_nodes: np.ndarray,
) -> np.ndarray:
    """Local gain matrices rotated into a spectral basis: (n_y, nodes, n_t, n_t)."""
    t_nodes = np.asarray(t_nodes, dtype=float)
    n_t = vectors.shape[1]
    out = np.empty((model.n_y, t_nodes.size, n_t, n_t))
    for k, t in enumerate(t_nodes):
        x, g = traj.state_and_sens_at(float(t))
        m = (model.observe_jac(x) @ g) @ vectors  # (n_y, n_t)
        for i in range(model.n_y):
            out[i, k] = np.outer(m[i], m[i])
    return out


def gamma_curves(
    spectrum: Spectrum | np.ndarray,
    p_rotated: np.ndarray,
    n_s: int,
    crit: str,
) -> tuple[float, np.ndarray]:
    """Scaled global-gain curves for a truncation level of the spectral ladder.

    ``spectrum`` holds the n_t strictly positive eigenvalues defining the
    ladder; ``p_rotated`` the local gains in that eigenbasis, shaped
    (n_y, n_nodes, n_t, n_t).  Returns the scaling factor and the scaled
    curve per observable; curves at different truncation levels are
    directly comparable and converge monotonically to the full-ladder
    reference.
    """
    lam = spectrum.eigenvalues if isinstance(spectrum, Spectrum) else np.asarray(spectrum)
    lam = np.asarray(lam, dtype=float)
    n_t = lam.size
    if not (1 <= n_s <= n_t):
        raise RankError(f"truncation level {n_s} outside [1, {n_t}]")
    if np.any(lam <= 0):
        raise RankError("ladder eigenvalues must be strictly positive")
    if p_rotated.shape[-1] != n_t or p_rotated.shape[-2] != n_t:
        raise InputError("rotated gains do not match the ladder dimension")
    lam_s = lam[:n_s]
    p_block = p_rotated[..., :n_s, :n_s]
    inv = 1.0 / lam_s
    if crit == "A":
        gamma = n_s / n_t
        # trace(F^-1 P F^-1) with diagonal F
        trace = np.einsum("k,iykk->iy", inv**2, p_block)
        return float(gamma), (gamma / n_s) * trace
    if crit == "D":
        log_lam = np.log(lam)
        gamma = float(
            np.exp(
                (1.0 / n_s - 1.0 / n_t) * np.sum(log_lam[:n_s])
                - np.sum(log_lam[n_s:]) / n_t
            )
        )
        phi_d = float(np.exp(-np.sum(log_lam[:n_s]) / n_s))
        # sum_kl F_kl Pi_kl with diagonal F: sum_k lambda_k^-1 P_kk
        pairing = np.einsum("k,iykk->iy", inv, p_block)
        return gamma, gamma * phi_d * pairing
    raise InputError("gamma curves are defined for the A and D criteria")


# ---------------------------------------------------------------------------
# Optimality (KKT) verification of sampling designs
# ---------------------------------------------------------------------------


@dataclass
class KktObservableReport:
    mu: float
    n_active: int
    n_inactive: int
    n_fractional: int
    worst_active_gap: float  # min over active of (gain - mu); >= -tol when optimal
    worst_inactive_gap: float  # max over inactive of (gain - mu); <= tol when optimal
    passed: bool
    inconclusive: bool


@dataclass
class KktReport:
    per_observable: list[KktObservableReport]
    passed: bool
    inconclusive: bool


def kkt_report(solution: OedSolution, curves: InfoGainCurves | None = None) -> KktReport:
    """Check the sampling optimality conditions on an optimized design.

    Measured intervals must carry gain at least the budget multiplier,
    unmeasured ones at most; heavily fractional rows are reported as
    inconclusive rather than failed.
    """
    w = solution.w_star.w
    gains = solution.interval_gains
    reports = []
    for i in range(w.shape[0]):
        mu = float(solution.mu_star[i])
        tol = 1e-4 * max(1.0, mu)
        active = w[i] >= 1.0 - _ACTIVE
        inactive = w[i] <= _ACTIVE
        frac = ~(active | inactive)
        worst_active = float(np.min(gains[i][active] - mu)) if np.any(active) else 0.0
        worst_inactive = float(np.max(gains[i][inactive] - mu)) if np.any(inactive) else 0.0
        inconclusive = float(np.mean(frac)) > 0.25
        passed = bool(worst_active >= -tol and worst_inactive <= tol)
        reports.append(
            KktObservableReport(
                mu=mu,
                n_active=int(np.sum(active)),
                n_inactive=int(np.sum(inactive)),
                n_fractional=int(np.sum(frac)),
                worst_active_gap=worst_active,
                worst_inactive_gap=worst_inactive,
                passed=passed,
                inconclusive=inconclusive,
            )
        )
    return KktReport(
        per_observable=reports,
        passed=all(r.passed or r.inconclusive for r in reports),
        inconclusive=any(r.inconclusive for r in reports),
    )
