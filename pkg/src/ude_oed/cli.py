"""Scenario runner command line: the package's user-facing surface.

Reads a JSON config, runs every requested scenario (optionally in a
process pool), and emits per-scenario CSV/JSON artifacts plus a run-level
summary table.  All randomness derives from the single ``--seed`` through
per-scenario streams keyed by a hash of the scenario string, so adding a
scenario never perturbs the results of existing ones.

Exit codes: 0 success (including partial per-scenario failures, which are
recorded in the summary), 1 total failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import DesignConfig
from .errors import ConfigError, UdeOedError
from .estimate import (
    AdamConfig,
    PretrainConfig,
    ScenarioConfig,
    ScenarioRunResult,
    run_scenario,
    scenario_stream_seed,
)
from .models import MODEL_IDS
from .scenarios import ScenarioSpec, format_scenario, parse_scenario

__all__ = ["RunManifest", "parse_scenario", "format_scenario", "ScenarioSpec", "run", "main"]

_RUN_KEYS = {
    "model",
    "criterion",
    "scenarios",
    "seed",
    "n_grid",
    "noise_sigma",
    "measurements_per_observable",
    "replicates",
    "replicate_jitter",
    "adam",
    "pretrain",
    "training_tol",
    "design",
    "model_config",
    "mc_samples",
    "delta_grid",
}


@dataclass
class RunManifest:
    """Everything one invocation needs: scenarios, config, output, seed."""

    out_dir: Path
    scenarios: list[str]
    seed: int = 0
    jobs: int = 1
    model_id: str = "lotka-mech"
    criterion: str = "A"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        for s in self.scenarios:
            parse_scenario(s)
        if self.criterion not in ("A", "D", "E"):
            raise ConfigError(f"criterion must be A, D or E, got {self.criterion!r}")
        if self.model_id not in MODEL_IDS:
            raise ConfigError(f"model must be one of {MODEL_IDS}, got {self.model_id!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def _build_scenario_config(manifest: RunManifest, scenario: str) -> ScenarioConfig:
    cfg = manifest.config
    adam = AdamConfig(**cfg.get("adam", {}))
    pretrain_raw = dict(cfg.get("pretrain", {}))
    if "domain" in pretrain_raw:
        pretrain_raw["domain"] = tuple(pretrain_raw["domain"])
    pretrain = PretrainConfig(**pretrain_raw)
    design = DesignConfig(**cfg.get("design", {}))
    return ScenarioConfig(
        scenario=scenario,
        model_id=manifest.model_id,
        criterion=manifest.criterion,
        n_grid=int(cfg.get("n_grid", 48)),
        measurements_per_observable=cfg.get("measurements_per_observable"),
        noise_sigma=float(cfg.get("noise_sigma", 0.1)),
        seed=scenario_stream_seed(manifest.seed, scenario),
        pretrain_seed=manifest.seed,
        replicates=int(cfg.get("replicates", 5)),
        replicate_jitter=float(cfg.get("replicate_jitter", 0.01)),
        adam=adam,
        pretrain=pretrain,
        training_tol=float(cfg.get("training_tol", 1e-6)),
        design=design,
        model_config=dict(cfg.get("model_config", {})),
        mc_samples=int(cfg.get("mc_samples", 30)),
        delta_grid=int(cfg.get("delta_grid", 41)),
    )


# ---------------------------------------------------------------------------
# Artifact writers: comma separated, '.' decimal, LF endings, floats via
# shortest round-trip repr
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sanitize_delta_key(key: str) -> str:
    return (
        key.replace("[", "").replace("]", "").replace("^2", "").replace(",", "_")
        .replace(".", "p")
    )


def _emit_scenario_files(result: ScenarioRunResult, model, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    sol = result.solution
    if sol is not None:
        grid = sol.w_star.grid
        header = ["t_start", "t_end"]
        header += [f"w_{name}" for name in model.observable_names]
        header += [f"u_{k + 1}" for k in range(sol.u_star.n_u)]
        rows = []
        for j in range(grid.n_intervals):
            row = [grid.nodes[j], grid.nodes[j + 1]]
            row += [sol.w_star.w[i, j] for i in range(sol.w_star.n_y)]
            row += [sol.u_star.values[k, j] for k in range(sol.u_star.n_u)]
            rows.append(row)
        _write_csv(out_dir / "design.csv", header, rows)
        paths["design"] = "design.csv"

        _write_csv(
            out_dir / "spectrum.csv",
            ["index", "eigenvalue"],
            [(k + 1, v) for k, v in enumerate(sol.spectrum.eigenvalues)],
        )
        paths["spectrum"] = "spectrum.csv"

        multipliers = {
            "mu": [float(v) for v in sol.mu_star],
            "criterion": sol.criterion,
        }
        if result.gamma_ladder:
            multipliers["gamma"] = {
                str(n_s): float(level["gamma"])
                for n_s, level in result.gamma_ladder["levels"].items()
            }
            multipliers["ladder_eigenvalues"] = result.gamma_ladder["eigenvalues"]
        _write_json(out_dir / "multipliers.json", multipliers)
        paths["multipliers"] = "multipliers.json"

    if result.info_curves is not None:
        curves = result.info_curves
        header = ["t"] + [f"gain_{name}" for name in model.observable_names]
        ladder_cols = []
        if result.gamma_ladder:
            for n_s in sorted(result.gamma_ladder["levels"]):
                for name in model.observable_names:
                    ladder_cols.append((n_s, name))
                    header.append(f"Gamma_{result.config.criterion}_{name}_ns{n_s}")
        rows = []
        for k, t in enumerate(curves.times):
            row = [t] + [curves.trace_gain[i, k] for i in range(curves.trace_gain.shape[0])]
            for n_s, name in ladder_cols:
                i = model.observable_names.index(name)
                row.append(result.gamma_ladder["levels"][n_s]["curves"][i, k])
            rows.append(row)
        _write_csv(out_dir / "infogain.csv", header, rows)
        paths["infogain"] = "infogain.csv"

    if result.dataset is not None:
        rows = []
        for i in range(result.dataset.n_y):
            for t, v in zip(result.dataset.times[i], result.dataset.values[i]):
                rows.append((model.observable_names[i], t, v))
        _write_csv(out_dir / "dataset.csv", ["observable", "t", "value"], rows)
        paths["dataset"] = "dataset.csv"

    report = dict(result.report)
    report["files"] = paths
    _write_json(out_dir / "report.json", report)
    return report


def _run_one(args) -> tuple[str, dict, str | None]:
    manifest_dict, scenario, out_root = args
    manifest = RunManifest(**manifest_dict)
    config = _build_scenario_config(manifest, scenario)
    result = run_scenario(config)
    from .models import build_model

    model = build_model(config.model_id, config.model_config)
    report = _emit_scenario_files(result, model, Path(out_root) / scenario)
    return scenario, report, result.error


def run(manifest: RunManifest) -> int:
    """Execute every scenario and assemble the summary; returns exit status."""
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    manifest_dict = {
        "out_dir": str(manifest.out_dir),
        "scenarios": manifest.scenarios,
        "seed": manifest.seed,
        "jobs": 1,
        "model_id": manifest.model_id,
        "criterion": manifest.criterion,
        "config": manifest.config,
    }
    # run each distinct scenario once (duplicates would race on the same
    # output directory under --jobs); the summary still gets one row per
    # listed scenario
    distinct = list(dict.fromkeys(manifest.scenarios))
    tasks = [(manifest_dict, s, str(manifest.out_dir)) for s in distinct]
    if manifest.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    by_scenario = {scenario: (scenario, report, error) for scenario, report, error in results}
    outcomes = [by_scenario[s] for s in manifest.scenarios]

    # summary: one row per scenario regardless of failures, in list order
    delta_keys: list[str] = []
    p_names: list[str] = []
    for _, report, _ in outcomes:
        for key in report.get("delta", {}):
            if key not in delta_keys:
                delta_keys.append(key)
        for name in report.get("p_hat", {}):
            if name not in p_names:
                p_names.append(name)
    header = ["scenario", "criterion", "phi"]
    header += [f"delta_{_sanitize_delta_key(k)}" for k in delta_keys]
    for name in p_names:
        header += [f"p_{name}", f"p_{name}_std"]
    header.append("error")
    rows = []
    n_failed = 0
    for scenario, report, error in outcomes:
        row = [scenario, manifest.criterion]
        row.append(report.get("phi", "") if "phi" in report else "")
        for key in delta_keys:
            row.append(report.get("delta", {}).get(key, ""))
        for name in p_names:
            entry = report.get("p_hat", {}).get(name)
            row += [entry["value"], entry["std"]] if entry else ["", ""]
        row.append(error or "")
        rows.append(row)
        if error:
            n_failed += 1
    _write_csv(manifest.out_dir / "summary.csv", header, rows)
    if manifest.scenarios and n_failed == len(manifest.scenarios):
        return 1
    return 0


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(cfg) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ude-oed",
        description="Optimal experimental design scenarios for hybrid ODE models",
    )
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--scenario",
        action="append",
        default=None,
        help="scenario string such as w*-u0-svd2 (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="global random seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel scenario workers")
    parser.add_argument("--criterion", choices=["A", "D", "E"], default=None)
    parser.add_argument("--model", choices=list(MODEL_IDS), default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = _load_config(args.config)
        scenarios = args.scenario if args.scenario else list(cfg.get("scenarios", []))
        manifest = RunManifest(
            out_dir=Path(args.out),
            scenarios=scenarios,
            seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
            jobs=args.jobs,
            model_id=args.model or cfg.get("model", "lotka-mech"),
            criterion=args.criterion or cfg.get("criterion", "A"),
            config=cfg,
        )
    except UdeOedError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run(manifest)


if __name__ == "__main__":
    sys.exit(main())
