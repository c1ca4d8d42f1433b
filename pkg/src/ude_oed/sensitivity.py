"""Forward sensitivity propagation with dimension reduction.

The augmented system integrates the states together with the sensitivity
matrix G of the states with respect to the free parameter vector
q = (free mechanistic parameters, network weights).  A reduction maps q
linearly into a low-dimensional surrogate space; the reduced sensitivity
ODE is forced by (df/dq) A and its solution equals the full sensitivity
right-multiplied by A.  Reduced systems are integrated directly; the
multiplication identity is exercised by tests, not production paths.

Supported reductions:

* ``complete``        -- no reduction (A = identity)
* ``outer``           -- one artificial scalar multiplying the network output
* ``lump``            -- one scalar multiplying all weights inside the network
* ``lump_layerwise``  -- one scalar per layer
* ``svd``             -- leading eigenvectors of the full-parameter FIM
* ``psvd``            -- mechanistic rows kept, eigenvectors of the weight block
* ``tsvd``            -- weights gated by the positive support of eigenvectors
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ann as ann_mod
from .errors import ConfigError, InputError, RankError
from .numerics import OdeSolution, TimeGrid, integrate, sym_eig
from .models.base import UdeModel

__all__ = [
    "ReductionStrategy",
    "ReductionMatrix",
    "SensitivityTrajectory",
    "reduction_matrix",
    "build_augmented_system",
    "propagate",
    "strategy_from_tag",
    "strategy_tag",
]

_KINDS = ("complete", "outer", "lump", "lump_layerwise", "svd", "psvd", "tsvd")
_NEEDS_NS = ("svd", "psvd", "tsvd")
_TAGS = {
    "complete": "c",
    "outer": "o",
    "lump": "l",
    "lump_layerwise": "ll",
    "svd": "svd",
    "psvd": "psvd",
    "tsvd": "tsvd",
}
_KIND_BY_TAG = {v: k for k, v in _TAGS.items()}


@dataclass(frozen=True)
class ReductionStrategy:
    kind: str
    n_s: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown reduction kind {self.kind!r}")
        if self.kind in _NEEDS_NS:
            if self.n_s is None or self.n_s < 1:
                raise ConfigError(f"{self.kind} needs a positive subspace dimension")
        elif self.n_s is not None:
            raise ConfigError(f"{self.kind} takes no subspace dimension")

    def reduced_dim(self, n_free_p: int, n_layers: int, n_theta: int) -> int:
        if self.kind == "complete":
            return n_free_p + n_theta
        if self.kind in ("outer", "lump"):
            return n_free_p + 1
        if self.kind == "lump_layerwise":
            return n_free_p + n_layers
        if self.kind == "svd":
            return self.n_s
        # psvd / tsvd keep the mechanistic rows
        return n_free_p + self.n_s


def strategy_tag(strategy: ReductionStrategy) -> str:
    tag = _TAGS[strategy.kind]
    if strategy.kind in _NEEDS_NS:
        tag += str(strategy.n_s)
    return tag


def strategy_from_tag(tag: str) -> ReductionStrategy:
    if tag in _KIND_BY_TAG:
        return ReductionStrategy(_KIND_BY_TAG[tag])
    for prefix in ("psvd", "tsvd", "svd"):
        if tag.startswith(prefix):
            digits = tag[len(prefix):]
            if digits.isdigit() and int(digits) > 0:
                return ReductionStrategy(_KIND_BY_TAG[prefix], int(digits))
            break
    raise ConfigError(f"unknown reduction tag {tag!r}")


@dataclass
class ReductionMatrix:
    """Linear map A from the free parameter space to the reduced space."""

    matrix: np.ndarray  # (n_free_p + n_theta, n_r)
    labels: list[str]
    strategy: ReductionStrategy

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]


def _positive_spectrum(fim: np.ndarray, n_s: int, what: str):
    spec = sym_eig(fim)
    lam = spec.eigenvalues
    lam_max = float(lam[0]) if lam.size else 0.0
    n_pos = int(np.sum(lam > 1e-12 * max(lam_max, 0.0))) if lam_max > 0 else 0
    if n_s > n_pos:
        raise RankError(
            f"{what}: requested {n_s} directions but only {n_pos} eigenvalues "
            f"exceed the positivity threshold"
        )
    return spec


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive.

    Eigenvector signs are arbitrary; the positive-support gating needs a
    deterministic convention.
    """
    out = vectors.copy()
    for k in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, k])))
        if out[idx, k] < 0:
            out[:, k] = -out[:, k]
    return out


def reduction_matrix(
    strategy: ReductionStrategy,
    theta_bar: np.ndarray,
    n_free_p: int,
    arch: ann_mod.AnnArchitecture | None,
    fim_complete: np.ndarray | None = None,
    p_labels: tuple[str, ...] = (),
) -> ReductionMatrix:
    """Build the reduction map A for every strategy that has one.

    ``fim_complete`` is the FIM over the full free parameter vector from a
    prior complete-sensitivity pass at the linearization point; it is
    required by the spectral strategies and ignored otherwise.
    """
    if strategy.kind == "outer":
        raise ConfigError("the outer-parameter strategy has no reduction matrix")
    n_theta = 0 if arch is None else ann_mod.param_count(arch)
    n_free = n_free_p + n_theta
    theta_bar = np.asarray(theta_bar, dtype=float).ravel() if n_theta else np.empty(0)
    if theta_bar.size != n_theta:
        raise InputError("theta_bar does not match the architecture")
    if not p_labels:
        p_labels = tuple(f"p{k}" for k in range(n_free_p))

    if strategy.kind == "complete":
        labels = list(p_labels) + [f"theta{k}" for k in range(n_theta)]
        return ReductionMatrix(np.eye(n_free), labels, strategy)

    if strategy.kind == "lump":
        a = np.zeros((n_free, n_free_p + 1))
        a[:n_free_p, :n_free_p] = np.eye(n_free_p)
        a[n_free_p:, n_free_p] = theta_bar
        return ReductionMatrix(a, list(p_labels) + ["weights_lumped"], strategy)

    if strategy.kind == "lump_layerwise":
        if arch is None:
            raise ConfigError("layerwise lumping needs a network architecture")
        slices = ann_mod.layer_slices(arch)
        a = np.zeros((n_free, n_free_p + len(slices)))
        a[:n_free_p, :n_free_p] = np.eye(n_free_p)
        for j, sl in enumerate(slices):
            col = np.zeros(n_theta)
            col[sl] = theta_bar[sl]
            a[n_free_p:, n_free_p + j] = col
        labels = list(p_labels) + [f"layer{j + 1}" for j in range(len(slices))]
        return ReductionMatrix(a, labels, strategy)

    if fim_complete is None:
        raise InputError(f"{strategy.kind} needs the complete-pass FIM")
    fim_complete = np.asarray(fim_complete, dtype=float)
    if fim_complete.shape != (n_free, n_free):
        raise InputError(
            f"complete FIM has shape {fim_complete.shape}, expected {(n_free, n_free)}"
        )

    if strategy.kind == "svd":
        spec = _positive_spectrum(fim_complete, strategy.n_s, "svd")
        a = spec.eigenvectors[:, : strategy.n_s].copy()
        labels = [f"mode{k + 1}" for k in range(strategy.n_s)]
        return ReductionMatrix(a, labels, strategy)

    theta_block = fim_complete[n_free_p:, n_free_p:]
    spec = _positive_spectrum(theta_block, strategy.n_s, strategy.kind)

    if strategy.kind == "psvd":
        a = np.zeros((n_free, n_free_p + strategy.n_s))
        a[:n_free_p, :n_free_p] = np.eye(n_free_p)
        a[n_free_p:, n_free_p:] = spec.eigenvectors[:, : strategy.n_s]
        labels = list(p_labels) + [f"mode{k + 1}" for k in range(strategy.n_s)]
        return ReductionMatrix(a, labels, strategy)

    # tsvd: gate the weights by the strictly positive support of each
    # leading eigenvector (deterministic sign convention applied first)
    vectors = _fix_signs(spec.eigenvectors[:, : strategy.n_s])
    a = np.zeros((n_free, n_free_p + strategy.n_s))
    a[:n_free_p, :n_free_p] = np.eye(n_free_p)
    for k in range(strategy.n_s):
        a[n_free_p:, n_free_p + k] = theta_bar * (vectors[:, k] > 0.0)
    labels = list(p_labels) + [f"gated{k + 1}" for k in range(strategy.n_s)]
    return ReductionMatrix(a, labels, strategy)


@dataclass
class SensitivityTrajectory:
    """States and reduced sensitivities along the grid, with dense output."""

    grid: TimeGrid
    states: np.ndarray  # (n_nodes, n_x)
    sens: np.ndarray  # (n_nodes, n_x, n_r)
    labels: list[str]
    strategy: ReductionStrategy
    solution: OdeSolution = field(repr=False, default=None)
    n_x: int = 0

    @property
    def n_r(self) -> int:
        return self.sens.shape[2]

    def state_at(self, t: float) -> np.ndarray:
        return self.solution.at(t)[: self.n_x]

    def sens_at(self, t: float) -> np.ndarray:
        return self.solution.at(t)[self.n_x :].reshape(self.n_x, self.n_r)

    def state_and_sens_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        y = self.solution.at(t)
        return y[: self.n_x], y[self.n_x :].reshape(self.n_x, self.n_r)

    def export_csv(self, path) -> None:
        header = ["t"]
        header += [f"x{i + 1}" for i in range(self.n_x)]
        for i in range(self.n_x):
            for lab in self.labels:
                header.append(f"dx{i + 1}/d({lab})")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for k, t in enumerate(self.grid.nodes):
                row = [repr(float(t))]
                row += [repr(float(v)) for v in self.states[k]]
                row += [repr(float(v)) for v in self.sens[k].ravel()]
                fh.write(",".join(row) + "\n")


def build_augmented_system(
    model: UdeModel,
    p_hat: np.ndarray,
    theta: np.ndarray | None,
    strategy: ReductionStrategy,
    reduction: ReductionMatrix | None,
    control_fn,
):
    """Vector field for the stacked (x, G_reduced) system.

    ``control_fn(t)`` returns the control vector.  Returns (rhs, n_r,
    initial augmented state, labels).
    """
    n_x = model.n_x
    free = list(model.free_p)
    n_fp = len(free)
    n_theta = model.n_theta
    p_hat, theta = model.check_params(p_hat, theta)
    p_labels = tuple(model.p_names[i] for i in free)

    if strategy.kind == "outer":
        if model.ann is None:
            raise ConfigError("outer-parameter strategy needs an embedded network")
        n_r = n_fp + 1
        labels = list(p_labels) + ["ann_outer"]
        a_theta = None
    else:
        if reduction is None:
            raise InputError(f"strategy {strategy.kind} needs a reduction matrix")
        if reduction.matrix.shape[0] != n_fp + n_theta:
            raise InputError("reduction matrix rows do not match the free parameters")
        n_r = reduction.n_columns
        labels = list(reduction.labels)
        a_p = reduction.matrix[:n_fp, :]
        a_theta = reduction.matrix[n_fp:, :] if n_theta else None

    needs_theta = strategy.kind != "outer" and n_theta > 0 and (
        a_theta is not None and np.any(a_theta != 0.0)
    )
    needs_forcing = strategy.kind == "outer"

    dx0_dp = model.dx0_dp(p_hat)[:, free] if n_fp else np.zeros((n_x, 0))
    if strategy.kind == "outer":
        g0 = np.hstack([dx0_dp, np.zeros((n_x, 1))])
    else:
        dx0_dq = np.hstack([dx0_dp, np.zeros((n_x, n_theta))])
        g0 = dx0_dq @ reduction.matrix
    y0 = np.concatenate([model.x0(p_hat), g0.ravel()])

    def rhs(t, y):
        x = y[:n_x]
        g = y[n_x:].reshape(n_x, n_r)
        u = control_fn(t)
        ev = model.rhs_eval(
            x, u, p_hat, theta, with_theta=needs_theta, with_forcing=needs_forcing
        )
        f_pfree = ev.f_p[:, free] if n_fp else np.zeros((n_x, 0))
        if strategy.kind == "outer":
            forcing = np.hstack([f_pfree, ev.ann_forcing[:, np.newaxis]])
        else:
            forcing = f_pfree @ a_p if n_fp else np.zeros((n_x, n_r))
            if needs_theta:
                forcing = forcing + ev.f_theta @ a_theta
        g_dot = ev.f_x @ g + forcing
        return np.concatenate([ev.f, g_dot.ravel()])

    return rhs, n_r, y0, labels


def propagate(
    model: UdeModel,
    p_hat: np.ndarray,
    theta: np.ndarray | None,
    control_fn,
    grid: TimeGrid,
    strategy: ReductionStrategy,
    reduction: ReductionMatrix | None = None,
    tol: float = 1e-8,
) -> SensitivityTrajectory:
    """Integrate states and reduced sensitivities across the grid."""
    rhs, n_r, y0, labels = build_augmented_system(
        model, p_hat, theta, strategy, reduction, control_fn
    )
    sol = integrate(rhs, y0, grid, tol=tol)
    n_x = model.n_x
    n_nodes = grid.nodes.size
    states = sol.states[:, :n_x].copy()
    sens = sol.states[:, n_x:].reshape(n_nodes, n_x, n_r).copy()
    return SensitivityTrajectory(
        grid=grid,
        states=states,
        sens=sens,
        labels=labels,
        strategy=strategy,
        solution=sol,
        n_x=n_x,
    )
