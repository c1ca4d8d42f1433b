"""Sequential evaluation loop: design, synthetic data, estimation, metrics.

One scenario run walks the whole pipeline: pre-train the embedded network
on synthetic mechanistic data, solve the design problem, draw measurement
times from the optimal sampling weights, synthesize noisy measurements
from the ground-truth model, fit mechanistic parameters (Gauss-Newton)
and network weights (Adam) alternatingly, and evaluate uncertainty and
network-error metrics.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import ann as ann_mod
from . import design as des_mod
from . import fim as fim_mod
from . import sensitivity as sens_mod
from .errors import (
    IdentifiabilityError,
    InputError,
    SamplingError,
    SingularMatrixError,
    UdeOedError,
)
from .models import build_model
from .models.base import UdeModel
from .numerics import TimeGrid, integrate, spd_inverse, sym_eig
from .scenarios import parse_scenario
from .design import ControlDesign, DesignConfig, SamplingDesign

__all__ = [
    "Dataset",
    "EstimationResult",
    "AdamConfig",
    "PretrainConfig",
    "ScenarioConfig",
    "ScenarioRunResult",
    "draw_measurement_times",
    "synthesize_dataset",
    "gauss_newton",
    "adam_train",
    "alternating_fit",
    "pretrain_weights",
    "run_scenario",
    "scenario_stream_seed",
]


# ---------------------------------------------------------------------------
# Configuration and result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamConfig:
    step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 2000


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 8000
    step: float = 0.02
    grid_samples: int = 21  # per axis of the training domain
    trajectory_samples: int = 200
    target_mse: float = 2e-5
    domain: tuple[float, float] = (0.0, 2.0)


@dataclass
class ScenarioConfig:
    scenario: str
    model_id: str = "lotka-mech"
    criterion: str = "A"
    n_grid: int = 48
    measurements_per_observable: int | None = None  # default 3 mech / 10 hybrid
    noise_sigma: float = 0.1
    seed: int = 0
    pretrain_seed: int = 0
    replicates: int = 5
    replicate_jitter: float = 0.01
    adam: AdamConfig = field(default_factory=AdamConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    training_tol: float = 1e-6
    design: DesignConfig = field(default_factory=DesignConfig)
    model_config: dict = field(default_factory=dict)
    mc_samples: int = 30
    delta_grid: int = 41

    def __post_init__(self):
        parse_scenario(self.scenario)  # validate before any computation
        if self.replicates < 1:
            raise InputError("replicate count must be >= 1")


@dataclass
class Dataset:
    """Synthetic measurements: per observable, sorted times and values."""

    times: list[np.ndarray]
    values: list[np.ndarray]
    noise_sigma: float
    seed: int | None = None

    @property
    def n_y(self) -> int:
        return len(self.times)

    def n_points(self) -> int:
        return int(sum(t.size for t in self.times))


@dataclass
class EstimationResult:
    p_hat: np.ndarray  # full mechanistic vector, fitted free entries
    p_std: np.ndarray  # std per free parameter
    theta: np.ndarray | None
    covariance: np.ndarray  # (n_free_p, n_free_p)
    residual_norm: float
    rounds: list[float] = field(default_factory=list)  # per-round parameter change
    converged: bool = True
    diverged: bool = False
    theta_replicates: list[np.ndarray] = field(default_factory=list)


@dataclass
class ScenarioRunResult:
    config: ScenarioConfig
    solution: des_mod.OedSolution | None = None
    dataset: Dataset | None = None
    estimation: EstimationResult | None = None
    info_curves: des_mod.InfoGainCurves | None = None
    gamma_ladder: dict | None = None
    report: dict = field(default_factory=dict)
    error: str | None = None


def scenario_stream_seed(base_seed: int, scenario: str) -> int:
    """Stable per-scenario stream id so adding scenarios never perturbs others."""
    digest = hashlib.sha256(scenario.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") ^ (base_seed & 0xFFFFFFFFFFFFFFFF)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *stream]))


# ---------------------------------------------------------------------------
# Measurement drawing and data synthesis
# ---------------------------------------------------------------------------


def draw_measurement_times(
    design: SamplingDesign, counts, rng: np.random.Generator
) -> list[np.ndarray]:
    """Draw measurement times from the relaxed sampling weights.

    Interval weights are treated as probabilities; the requested number of
    intervals is drawn without replacement per observable and each drawn
    interval contributes its midpoint.
    """
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (design.n_y,))
    grid = design.grid
    mids = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    out = []
    for i in range(design.n_y):
        weights = design.w[i].copy()
        positive = np.flatnonzero(weights > 0.0)
        if counts[i] > positive.size:
            raise SamplingError(
                f"observable {i}: asked for {counts[i]} measurements but only "
                f"{positive.size} intervals have positive weight"
            )
        chosen = []
        w_work = weights.copy()
        for _ in range(counts[i]):
            probs = w_work / w_work.sum()
            k = int(rng.choice(w_work.size, p=probs))
            chosen.append(k)
            w_work[k] = 0.0
        out.append(np.sort(mids[np.asarray(chosen, dtype=int)]))
    return out


def _trajectory_solution(model, p_hat, theta, controls: ControlDesign, tol):
    def rhs(t, x):
        return model.rhs(x, controls.as_function()(t), p_hat, theta)

    return integrate(rhs, model.x0(p_hat), controls.grid, tol=tol)


def synthesize_dataset(
    truth_model: UdeModel,
    p_true: np.ndarray,
    theta_true: np.ndarray | None,
    controls: ControlDesign,
    times: list[np.ndarray],
    sigma: float,
    rng: np.random.Generator,
    tol: float = 1e-8,
) -> Dataset:
    """Observe the ground-truth trajectory at the given times plus iid noise."""
    sol = _trajectory_solution(truth_model, p_true, theta_true, controls, tol)
    values = []
    for i, t_i in enumerate(times):
        clean = np.array([truth_model.observe(sol.at(float(t)))[i] for t in t_i])
        noise = sigma * rng.standard_normal(t_i.size) if sigma > 0 else np.zeros(t_i.size)
        values.append(clean + noise)
    return Dataset(times=[np.asarray(t, dtype=float) for t in times], values=values, noise_sigma=sigma)


# ---------------------------------------------------------------------------
# Parameter estimation (Gauss-Newton with Levenberg damping)
# ---------------------------------------------------------------------------


def _p_only_reduction(model: UdeModel) -> sens_mod.ReductionMatrix:
    """Columns for the free mechanistic parameters only (weights frozen)."""
    n_fp = model.n_free_p
    a = np.zeros((n_fp + model.n_theta, n_fp))
    a[:n_fp, :n_fp] = np.eye(n_fp)
    labels = [model.p_names[i] for i in model.free_p]
    return sens_mod.ReductionMatrix(a, labels, sens_mod.ReductionStrategy("complete"))


def _theta_only_reduction(model: UdeModel) -> sens_mod.ReductionMatrix:
    n_th = model.n_theta
    a = np.zeros((model.n_free_p + n_th, n_th))
    a[model.n_free_p :, :] = np.eye(n_th)
    labels = [f"theta{k}" for k in range(n_th)]
    return sens_mod.ReductionMatrix(a, labels, sens_mod.ReductionStrategy("complete"))


def _residuals_and_jacobian(model, dataset, p_hat, theta, controls, reduction, tol):
    traj = sens_mod.propagate(
        model,
        p_hat,
        theta,
        controls.as_function(),
        controls.grid,
        sens_mod.ReductionStrategy("complete"),
        reduction,
        tol=tol,
    )
    sigma = dataset.noise_sigma if dataset.noise_sigma > 0 else 1.0
    res = []
    jac = []
    for i in range(dataset.n_y):
        for t, y_meas in zip(dataset.times[i], dataset.values[i]):
            x, g = traj.state_and_sens_at(float(t))
            h = model.observe(x)
            h_x = model.observe_jac(x)
            res.append((h[i] - y_meas) / sigma)
            jac.append((h_x[i] @ g) / sigma)
    return np.asarray(res), np.asarray(jac)


def gauss_newton(
    model: UdeModel,
    dataset: Dataset,
    theta_fixed: np.ndarray | None,
    p_init: np.ndarray,
    controls: ControlDesign,
    tol: float = 1e-8,
    max_iter: int = 100,
    step_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Weighted least squares over the free mechanistic parameters.

    Returns the fitted full parameter vector, the covariance over the
    free parameters, and an info dict (converged flag, residual norm,
    iterations).
    """
    free = list(model.free_p)
    if not free:
        raise InputError("model has no free mechanistic parameters")
    p_full = np.asarray(p_init, dtype=float).copy()
    reduction = _p_only_reduction(model)
    damping = 0.0
    res, jac = _residuals_and_jacobian(
        model, dataset, p_full, theta_fixed, controls, reduction, tol
    )
    ssr = float(res @ res)
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        jtj = jac.T @ jac
        jtr = jac.T @ res
        try:
            step = -spd_inverse(jtj + damping * np.eye(len(free))) @ jtr
        except SingularMatrixError as exc:
            raise IdentifiabilityError(
                f"rank-deficient residual Jacobian "
                f"(lambda_min={exc.smallest_eigenvalue:.3e})"
            ) from exc
        accepted = False
        for _ in range(15):
            p_try = p_full.copy()
            p_try[free] += step
            res_try, jac_try = _residuals_and_jacobian(
                model, dataset, p_try, theta_fixed, controls, reduction, tol
            )
            ssr_try = float(res_try @ res_try)
            if ssr_try <= ssr + 1e-14:
                accepted = True
                break
            damping = max(1e-4, damping * 10.0 if damping else 1e-4)
            step = -spd_inverse(jtj + damping * np.eye(len(free))) @ jtr
        if not accepted:
            break
        p_full, res, jac, ssr = p_try, res_try, jac_try, ssr_try
        damping /= 3.0
        if damping < 1e-10:
            damping = 0.0
        if np.linalg.norm(step) <= step_tol * max(1.0, np.linalg.norm(p_full[free])):
            converged = True
            break
    try:
        covariance = spd_inverse(jac.T @ jac)
    except SingularMatrixError as exc:
        raise IdentifiabilityError(
            f"rank-deficient Jacobian at the solution "
            f"(lambda_min={exc.smallest_eigenvalue:.3e})"
        ) from exc
    info = {"converged": converged, "residual_norm": float(np.sqrt(ssr)), "iterations": iters}
    return p_full, covariance, info


# ---------------------------------------------------------------------------
# Network training (full-batch Adam on the measurement loss)
# ---------------------------------------------------------------------------


def _theta_loss_and_grad(model, dataset, p_hat, theta, controls, reduction, tol):
    traj = sens_mod.propagate(
        model,
        p_hat,
        theta,
        controls.as_function(),
        controls.grid,
        sens_mod.ReductionStrategy("complete"),
        reduction,
        tol=tol,
    )
    sigma = dataset.noise_sigma if dataset.noise_sigma > 0 else 1.0
    loss = 0.0
    grad = np.zeros(model.n_theta)
    for i in range(dataset.n_y):
        for t, y_meas in zip(dataset.times[i], dataset.values[i]):
            x, g = traj.state_and_sens_at(float(t))
            r = (model.observe(x)[i] - y_meas) / sigma
            loss += r * r
            grad += (2.0 * r / sigma) * (model.observe_jac(x)[i] @ g)
    return loss, grad


def adam_train(
    model: UdeModel,
    dataset: Dataset,
    p_fixed: np.ndarray,
    theta_init: np.ndarray,
    hyper: AdamConfig,
    controls: ControlDesign,
    tol: float = 1e-6,
) -> tuple[np.ndarray, dict]:
    """Train the embedded network on the measurement loss, weights only.

    The gradient per epoch comes from the forward weight-sensitivity
    system (full batch).  Returns the best-loss iterate; a run whose loss
    exceeds ten times the initial loss aborts with the diverged flag.
    """
    theta = np.asarray(theta_init, dtype=float).copy()
    info = {"diverged": False, "epochs_run": 0, "initial_loss": None, "best_loss": None}
    if hyper.epochs == 0:
        return theta, info
    reduction = _theta_only_reduction(model)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta = theta.copy()
    best_loss = np.inf
    initial_loss = None
    # with unit-scaled residuals the loss at the truth is about the number
    # of measurements; divergence means far above both that and the start
    divergence_floor = float(dataset.n_points())
    for epoch in range(1, hyper.epochs + 1):
        loss, grad = _theta_loss_and_grad(
            model, dataset, p_fixed, theta, controls, reduction, tol
        )
        if initial_loss is None:
            initial_loss = loss
            info["initial_loss"] = loss
        if loss < best_loss:
            best_loss = loss
            best_theta = theta.copy()
        if epoch > 1 and loss >= 10.0 * max(initial_loss, divergence_floor):
            info["diverged"] = True
            break
        m = hyper.beta1 * m + (1 - hyper.beta1) * grad
        v = hyper.beta2 * v + (1 - hyper.beta2) * grad * grad
        m_hat = m / (1 - hyper.beta1**epoch)
        v_hat = v / (1 - hyper.beta2**epoch)
        theta = theta - hyper.step * m_hat / (np.sqrt(v_hat) + 1e-8)
        info["epochs_run"] = epoch
    info["best_loss"] = best_loss
    return best_theta, info


def alternating_fit(
    model: UdeModel,
    dataset: Dataset,
    p_init: np.ndarray,
    theta_init: np.ndarray | None,
    controls: ControlDesign,
    config: ScenarioConfig,
) -> EstimationResult:
    """Block-coordinate fit: Gauss-Newton over the mechanistic parameters,
    Adam over the network weights, until the parameters settle.

    Replicate runs restart the whole loop from (optionally jittered)
    initial weights; the final weights are averaged across replicates.
    """
    has_theta = model.ann is not None
    has_free_p = model.n_free_p > 0
    sigma = dataset.noise_sigma

    if not has_theta:
        p_full, cov, info = gauss_newton(
            model, dataset, None, p_init, controls, tol=config.design.integration_tol
        )
        return EstimationResult(
            p_hat=p_full,
            p_std=np.sqrt(np.maximum(np.diag(cov), 0.0)),
            theta=None,
            covariance=cov,
            residual_norm=info["residual_norm"],
            converged=info["converged"],
        )

    jitter_rng = _rng(config.seed, 0xA1)
    theta_runs = []
    p_runs = []
    cov_runs = []
    res_norms = []
    rounds_trace: list[float] = []
    converged_all = True
    diverged_any = False

    for rep in range(config.replicates):
        theta = np.asarray(theta_init, dtype=float).copy()
        if rep > 0 and config.replicate_jitter > 0:
            scale = config.replicate_jitter * max(float(np.std(theta)), 1e-12)
            theta = theta + scale * jitter_rng.standard_normal(theta.size)
        p_full = np.asarray(p_init, dtype=float).copy()
        cov = np.zeros((model.n_free_p, model.n_free_p))
        res_norm = 0.0

        if not has_free_p:
            theta, info = adam_train(
                model, dataset, p_full, theta, config.adam, controls, tol=config.training_tol
            )
            diverged_any |= info["diverged"]
            res_norm = float(np.sqrt(info["best_loss"])) if info["best_loss"] is not None else 0.0
        else:
            for round_idx in range(20):
                p_prev = p_full.copy()
                p_full, cov, gn_info = gauss_newton(
                    model, dataset, theta, p_full, controls,
                    tol=config.design.integration_tol,
                )
                res_norm = gn_info["residual_norm"]
                theta, ad_info = adam_train(
                    model, dataset, p_full, theta, config.adam, controls,
                    tol=config.training_tol,
                )
                diverged_any |= ad_info["diverged"]
                change = np.linalg.norm(p_full[list(model.free_p)] - p_prev[list(model.free_p)])
                rel = change / max(1.0, np.linalg.norm(p_prev[list(model.free_p)]))
                if rep == 0:
                    rounds_trace.append(rel)
                if rel <= 1e-4:
                    break
            else:
                converged_all = False
            # final mechanistic polish against the last weights
            p_full, cov, gn_info = gauss_newton(
                model, dataset, theta, p_full, controls, tol=config.design.integration_tol
            )
            res_norm = gn_info["residual_norm"]
        theta_runs.append(theta)
        p_runs.append(p_full)
        cov_runs.append(cov)
        res_norms.append(res_norm)

    theta_avg = np.mean(theta_runs, axis=0)
    p_avg = np.mean(p_runs, axis=0)
    cov_avg = np.mean(cov_runs, axis=0)
    return EstimationResult(
        p_hat=p_avg,
        p_std=np.sqrt(np.maximum(np.diag(cov_avg), 0.0)),
        theta=theta_avg,
        covariance=cov_avg,
        residual_norm=float(np.mean(res_norms)),
        rounds=rounds_trace,
        converged=converged_all,
        diverged=diverged_any,
        theta_replicates=theta_runs,
    )


# ---------------------------------------------------------------------------
# Network pre-training on synthetic mechanistic data
# ---------------------------------------------------------------------------

_PRETRAIN_CACHE: dict = {}


def pretrain_weights(
    model: UdeModel, seed: int, cfg: PretrainConfig, tol: float = 1e-8
) -> np.ndarray:
    """Initial network weights fitted to the ground-truth replaced term.

    Trains on states sampled from the mechanistic trajectory (no controls)
    plus, for planar networks, a regular grid over the training domain.
    Deterministic per (model, seed, config); cached per process.
    """
    if model.ann is None:
        raise InputError("model has no embedded network")
    key = (
        model.name,
        model.ann.layer_dims,
        model.ann.activations,
        seed,
        cfg.epochs,
        cfg.step,
        cfg.grid_samples,
        cfg.trajectory_samples,
        cfg.target_mse,
        cfg.domain,
    )
    if key in _PRETRAIN_CACHE:
        return _PRETRAIN_CACHE[key].copy()

    truth = model.mechanistic_twin()
    grid = TimeGrid.uniform(model.t_start, model.t_end, 64)
    controls = ControlDesign.zero(truth, grid)
    sol = _trajectory_solution(truth, truth.p_nominal, None, controls, tol)
    t_samples = np.linspace(model.t_start, model.t_end, cfg.trajectory_samples)
    states = np.array([sol.at(float(t)) for t in t_samples])
    inputs = model.ann_input_batch(states)
    if model.ann.input_dim == 2:
        axis = np.linspace(cfg.domain[0], cfg.domain[1], cfg.grid_samples)
        grid_pts = np.array([[a, b] for a in axis for b in axis])
        grid_states = np.zeros((grid_pts.shape[0], model.n_x))
        grid_states[:, list(model.ann_inputs)] = grid_pts
        inputs = np.vstack([inputs, grid_pts])
        targets = np.concatenate(
            [model.ann_target(states), model.ann_target(grid_states)]
        )
    else:
        targets = model.ann_target(states)

    rng = _rng(seed, 0xBEEF)
    theta = ann_mod.init_weights(model.ann, rng)
    targets = targets.reshape(-1, 1)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta = theta.copy()
    best_loss = np.inf
    for epoch in range(1, cfg.epochs + 1):
        loss, grad = ann_mod.mse_and_grad(model.ann, theta, inputs, targets)
        if loss < best_loss:
            best_loss = loss
            best_theta = theta.copy()
        if best_loss <= cfg.target_mse:
            break
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        theta = theta - cfg.step * (m / (1 - 0.9**epoch)) / (
            np.sqrt(v / (1 - 0.999**epoch)) + 1e-8
        )
    _PRETRAIN_CACHE[key] = best_theta.copy()
    return best_theta


# ---------------------------------------------------------------------------
# Scenario runner
# ---------------------------------------------------------------------------


def _default_measurement_count(model: UdeModel) -> int:
    return 3 if model.ann is None else 10


def _network_error(model, theta, domain: tuple[float, float], n_grid: int) -> float:
    """Mean absolute error between the network and the replaced true term."""
    axis = np.linspace(domain[0], domain[1], n_grid)
    pts = np.array([[a, b] for a in axis for b in axis])
    states = np.zeros((pts.shape[0], model.n_x))
    states[:, list(model.ann_inputs)] = pts
    truth = model.ann_target(states)
    pred = ann_mod.batch_forward(model.ann, theta, pts)[:, 0]
    return float(np.mean(np.abs(pred - truth)))


def _mechanistic_interaction_error(
    model, p_fit: np.ndarray, domain: tuple[float, float], n_grid: int
) -> float:
    """Mean absolute interaction-term error from fitted parameter scalings."""
    axis = np.linspace(domain[0], domain[1], n_grid)
    pts = np.array([[a, b] for a in axis for b in axis])
    g = pts[:, 0] * pts[:, 1]
    errs = []
    for idx in model.free_p:
        scale_fit = p_fit[idx]
        scale_true = model.p_nominal[idx]
        errs.append(np.mean(np.abs(scale_fit * g - scale_true * g)))
    return float(np.mean(errs)) if errs else 0.0


def _mc_trajectory_spread(model, estimation, controls, n_samples, rng, tol):
    """Posterior trajectory ensemble: mean/max over time of the state std."""
    free = list(model.free_p)
    t_eval = np.linspace(controls.grid.t_start, controls.grid.t_end, 61)
    ensemble = []
    if free and estimation.covariance.size and np.any(np.diag(estimation.covariance) > 0):
        spec = sym_eig(estimation.covariance)
        factor = spec.eigenvectors * np.sqrt(np.maximum(spec.eigenvalues, 0.0))
        for _ in range(n_samples):
            p_draw = estimation.p_hat.copy()
            p_draw[free] = p_draw[free] + factor @ rng.standard_normal(len(free))
            try:
                sol = _trajectory_solution(model, p_draw, estimation.theta, controls, tol)
            except UdeOedError:
                continue
            ensemble.append(np.array([sol.at(float(t)) for t in t_eval]))
    if len(ensemble) < 2:
        return {"traj_std_mean": 0.0, "traj_std_max": 0.0, "n_samples": len(ensemble)}
    stack = np.stack(ensemble)
    std = stack.std(axis=0)
    return {
        "traj_std_mean": float(std.mean()),
        "traj_std_max": float(std.max()),
        "n_samples": len(ensemble),
    }


def run_scenario(config: ScenarioConfig) -> ScenarioRunResult:
    """Execute the full sequential procedure for one scenario."""
    result = ScenarioRunResult(config=config)
    report: dict = {
        "scenario": config.scenario,
        "model": config.model_id,
        "criterion": config.criterion,
    }
    result.report = report
    try:
        spec = parse_scenario(config.scenario)
        model = build_model(config.model_id, config.model_config)
        grid = TimeGrid.uniform(model.t_start, model.t_end, config.n_grid)

        # step 1: initial weights from synthetic mechanistic data
        theta_bar = None
        if model.ann is not None:
            theta_bar = pretrain_weights(model, config.pretrain_seed, config.pretrain)

        # step 2: solve the design problem
        solution = des_mod.optimize_controls(
            model,
            model.p_nominal,
            theta_bar,
            spec.strategy,
            config.criterion,
            spec.w_policy,
            spec.u_policy,
            grid,
            config.design,
        )
        result.solution = solution
        report["phi"] = solution.phi_star
        report["mu"] = [float(v) for v in solution.mu_star]
        report["binary_fraction"] = solution.w_star.binary_fraction()
        report["budget_used"] = [float(v) for v in solution.w_star.budget_used()]
        report["sweeps"] = solution.sweeps
        report["eigenvalues"] = [float(v) for v in solution.spectrum.eigenvalues]

        # information-gain diagnostics along the optimal design
        t_nodes = np.linspace(grid.t_start, grid.t_end, 4 * config.n_grid + 1)
        fim_matrix = fim_mod.assemble_fim(solution.atoms, solution.w_star.w).matrix
        result.info_curves = des_mod.info_gain(
            solution.trajectory, model, fim_matrix, t_nodes
        )
        if spec.strategy.kind in ("svd", "psvd", "tsvd") and solution.reduction is not None:
            result.gamma_ladder = _gamma_ladder(
                model, solution, config.criterion, t_nodes
            )

        # step 3: draw measurement times, synthesize noisy data
        counts = config.measurements_per_observable or _default_measurement_count(model)
        rng_draw = _rng(config.seed, 0x01)
        times = draw_measurement_times(solution.w_star, counts, rng_draw)
        truth = model.mechanistic_twin() if model.ann is not None else model
        rng_noise = _rng(config.seed, 0x02)
        dataset = synthesize_dataset(
            truth,
            truth.p_nominal,
            None,
            solution.u_star,
            times,
            config.noise_sigma,
            rng_noise,
            tol=config.design.integration_tol,
        )
        dataset.seed = config.seed
        result.dataset = dataset

        # step 4: estimation
        rng_init = _rng(config.seed, 0x03)
        p_init = model.p_nominal.copy()
        for idx in model.free_p:
            p_init[idx] = model.p_nominal[idx] + 0.25 * rng_init.standard_normal()
        estimation = alternating_fit(model, dataset, p_init, theta_bar, solution.u_star, config)
        result.estimation = estimation
        free_names = [model.p_names[i] for i in model.free_p]
        report["p_hat"] = {
            name: {"value": float(estimation.p_hat[idx]), "std": float(estimation.p_std[k])}
            for k, (name, idx) in enumerate(zip(free_names, model.free_p))
        }
        report["residual_norm"] = estimation.residual_norm
        report["estimation_converged"] = estimation.converged
        report["training_diverged"] = estimation.diverged

        # step 5: evaluation metrics
        rng_mc = _rng(config.seed, 0x04)
        report["trajectory_ensemble"] = _mc_trajectory_spread(
            model, estimation, solution.u_star, config.mc_samples, rng_mc,
            config.design.integration_tol,
        )
        if model.ann is not None and estimation.theta_replicates:
            deltas = {}
            if model.ann.input_dim == 2:
                for domain in ((0.0, 2.0), (0.0, 4.0)):
                    key = f"[{domain[0]:g},{domain[1]:g}]^2"
                    per_rep = [
                        _network_error(model, th, domain, config.delta_grid)
                        for th in estimation.theta_replicates
                    ]
                    deltas[key] = float(np.mean(per_rep))
            else:
                sol_truth = _trajectory_solution(
                    truth, truth.p_nominal, None, solution.u_star,
                    config.design.integration_tol,
                )
                t_samples = np.linspace(model.t_start, model.t_end, 101)
                states = np.array([sol_truth.at(float(t)) for t in t_samples])
                per_rep = []
                for th in estimation.theta_replicates:
                    pred = ann_mod.batch_forward(
                        model.ann, th, model.ann_input_batch(states)
                    )[:, 0]
                    per_rep.append(float(np.mean(np.abs(pred - model.ann_target(states)))))
                deltas["trajectory"] = float(np.mean(per_rep))
            report["delta"] = deltas
        elif model.n_free_p:
            report["delta"] = {
                "[0,4]^2": _mechanistic_interaction_error(
                    model, estimation.p_hat, (0.0, 4.0), config.delta_grid
                )
            }
    except UdeOedError as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        report["error"] = result.error
    return result


def _gamma_ladder(model, solution, crit, t_nodes):
    """Scaled information-gain curves for every truncation level."""
    if crit not in ("A", "D"):
        return None
    spectrum = solution.spectrum
    lam = spectrum.eigenvalues
    n_t = int(np.sum(lam > 1e-12 * lam[0]))
    if n_t < 1:
        return None
    # ladder in the eigenbasis of the design FIM of this scenario
    vectors = spectrum.eigenvectors[:, :n_t]
    p_rot = des_mod.rotated_local_gains(solution.trajectory, model, vectors, t_nodes)
    lam_pos = lam[:n_t]
    ladder = {"eigenvalues": lam_pos.tolist(), "n_t": n_t, "levels": {}}
    for n_s in range(1, n_t + 1):
        gamma, curve = des_mod.gamma_curves(lam_pos, p_rot, n_s, crit)
        ladder["levels"][n_s] = {"gamma": gamma, "curves": curve}
    return ladder
