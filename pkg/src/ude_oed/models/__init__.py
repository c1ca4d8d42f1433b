"""Benchmark models and the model registry used by configuration files."""

from __future__ import annotations

from .. import ann as ann_mod
from ..errors import ConfigError
from .base import RhsEval, UdeModel, observe, rhs_eval
from .lotka import LotkaHybrid, LotkaMechanistic, lotka_hybrid, lotka_mechanistic
from .urethane import (
    UrethaneConstants,
    UrethaneHybrid,
    UrethaneMechanistic,
    urethane_hybrid,
    urethane_mechanistic,
)

__all__ = [
    "RhsEval",
    "UdeModel",
    "observe",
    "rhs_eval",
    "LotkaHybrid",
    "LotkaMechanistic",
    "lotka_hybrid",
    "lotka_mechanistic",
    "UrethaneConstants",
    "UrethaneHybrid",
    "UrethaneMechanistic",
    "urethane_hybrid",
    "urethane_mechanistic",
    "MODEL_IDS",
    "build_model",
]

MODEL_IDS = ("lotka-mech", "lotka-hybrid", "urethane")


def build_model(model_id: str, config: dict | None = None) -> UdeModel:
    """Instantiate a benchmark model from its id plus optional config keys.

    Recognized keys: ``ann`` ({"dims": [...], "activations": [...]}),
    ``free_parameters`` (names), ``budgets``, ``control_bounds``,
    ``horizon`` ([t0, tf]), ``urethane_constants`` (field dict).
    """
    config = dict(config or {})
    arch = None
    if "ann" in config and config["ann"]:
        spec = config["ann"]
        try:
            arch = ann_mod.AnnArchitecture(
                tuple(spec["dims"]), tuple(spec["activations"])
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad ann config: {exc}") from exc

    if model_id == "lotka-mech":
        model = LotkaMechanistic()
    elif model_id == "lotka-hybrid":
        model = LotkaHybrid(arch=arch) if arch else LotkaHybrid()
    elif model_id == "urethane":
        constants = None
        if "urethane_constants" in config and config["urethane_constants"]:
            try:
                constants = UrethaneConstants(**config["urethane_constants"])
            except TypeError as exc:
                raise ConfigError(f"bad urethane constants: {exc}") from exc
        model = UrethaneHybrid(constants=constants, arch=arch)
    else:
        raise ConfigError(f"unknown model id {model_id!r}; choose from {MODEL_IDS}")

    if "free_parameters" in config and config["free_parameters"] is not None:
        names = list(config["free_parameters"])
        try:
            model.free_p = tuple(model.p_names.index(n) for n in names)
        except ValueError as exc:
            raise ConfigError(
                f"unknown free parameter for {model_id}: {exc}; "
                f"available: {model.p_names}"
            ) from exc
    if "budgets" in config and config["budgets"] is not None:
        import numpy as np

        budgets = np.asarray(config["budgets"], dtype=float)
        if budgets.size != model.n_y or np.any(budgets <= 0):
            raise ConfigError("budgets must give one positive value per observable")
        model.budgets = budgets
    if "control_bounds" in config and config["control_bounds"] is not None:
        bounds = tuple((float(lo), float(hi)) for lo, hi in config["control_bounds"])
        if len(bounds) != model.n_u or any(hi < lo for lo, hi in bounds):
            raise ConfigError("control_bounds must give [lo, hi] per control channel")
        model.control_bounds = bounds
    if "horizon" in config and config["horizon"] is not None:
        t0, tf = (float(v) for v in config["horizon"])
        if tf <= t0:
            raise ConfigError("horizon end must exceed start")
        model.t_start, model.t_end = t0, tf
    return model
