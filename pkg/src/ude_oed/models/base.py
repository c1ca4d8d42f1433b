"""Hybrid mechanistic/neural ODE model abstraction.

A model combines a mechanistic right-hand side with an optional embedded
feed-forward network and exposes the exact partial derivatives the
variational equations need: d f/d x, d f/d p for the mechanistic
parameters, the network-weight block d f/d theta, and the scalar-proxy
forcing obtained by formally multiplying the network output with an
artificial unit parameter.

Models are immutable after construction and all evaluation methods are
pure, so one instance can be shared across parallel runs.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .. import ann as ann_mod
from ..errors import InputError

__all__ = ["RhsEval", "UdeModel", "rhs_eval", "observe"]


@dataclass
class RhsEval:
    """State derivative and the partials consumed by the sensitivity ODEs."""

    f: np.ndarray  # (n_x,)
    f_x: np.ndarray  # (n_x, n_x)
    f_p: np.ndarray  # (n_x, n_p) for all mechanistic parameters
    f_theta: np.ndarray | None = None  # (n_x, n_theta)
    ann_forcing: np.ndarray | None = None  # (n_x,) scalar-proxy column
    ann_value: np.ndarray | None = None  # (n_U,)


class UdeModel(ABC):
    """Base class for the benchmark models.

    Subclasses set the dimension attributes in ``__init__`` and implement
    the evaluation methods.  ``free_p`` lists indices into ``p_nominal``
    of the mechanistic parameters treated as uncertain.
    """

    name: str
    n_x: int
    n_u: int
    n_y: int
    p_names: tuple[str, ...]
    p_nominal: np.ndarray
    free_p: tuple[int, ...]
    ann: ann_mod.AnnArchitecture | None
    ann_inputs: tuple[int, ...]  # state indices feeding the network
    t_start: float
    t_end: float
    control_bounds: tuple[tuple[float, float], ...]
    budgets: np.ndarray  # measurement budget per observable, time units
    observable_names: tuple[str, ...]

    @property
    def n_p(self) -> int:
        return len(self.p_names)

    @property
    def n_free_p(self) -> int:
        return len(self.free_p)

    @property
    def n_theta(self) -> int:
        return 0 if self.ann is None else ann_mod.param_count(self.ann)

    def x0(self, p_hat: np.ndarray) -> np.ndarray:
        return self._x0.copy()

    def dx0_dp(self, p_hat: np.ndarray) -> np.ndarray:
        # both benchmark models have parameter-free initial values
        return np.zeros((self.n_x, self.n_p))

    @abstractmethod
    def rhs(self, x, u, p_hat, theta) -> np.ndarray:
        """State derivative only (fast path for plain trajectories)."""

    @abstractmethod
    def rhs_eval(
        self, x, u, p_hat, theta, with_theta: bool = False, with_forcing: bool = False
    ) -> RhsEval:
        """Derivative plus exact partials; optional blocks stay None."""

    @abstractmethod
    def observe(self, x) -> np.ndarray:
        """Observation vector (n_y,)."""

    @abstractmethod
    def observe_jac(self, x) -> np.ndarray:
        """State Jacobian of the observations, (n_y, n_x)."""

    #: optional per-input divisor bringing network inputs to order one
    ann_input_scale: np.ndarray | None = None

    def ann_input(self, x: np.ndarray) -> np.ndarray:
        sel = np.asarray(x, dtype=float)[list(self.ann_inputs)]
        if self.ann_input_scale is not None:
            sel = sel / self.ann_input_scale
        return sel

    def embed_input_jacobian(self, du_dsel: np.ndarray) -> np.ndarray:
        """Lift dU/d(network input) to dU/dx over the full state."""
        if self.ann_input_scale is not None:
            du_dsel = du_dsel / self.ann_input_scale[np.newaxis, :]
        full = np.zeros((du_dsel.shape[0], self.n_x))
        full[:, list(self.ann_inputs)] = du_dsel
        return full

    def ann_input_batch(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        sel = states[:, list(self.ann_inputs)]
        if self.ann_input_scale is not None:
            sel = sel / self.ann_input_scale[np.newaxis, :]
        return sel

    def check_params(self, p_hat, theta) -> tuple[np.ndarray, np.ndarray | None]:
        p_hat = np.asarray(p_hat, dtype=float).ravel()
        if p_hat.size != self.n_p:
            raise InputError(
                f"{self.name}: expected {self.n_p} mechanistic parameters, got {p_hat.size}"
            )
        if self.ann is None:
            return p_hat, None
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.n_theta:
            raise InputError(
                f"{self.name}: expected {self.n_theta} network weights, got {theta.size}"
            )
        return p_hat, theta


def rhs_eval(model: UdeModel, x, u, p_hat, theta=None, with_theta=True, with_forcing=False):
    """Module-level convenience wrapper around ``model.rhs_eval``."""
    return model.rhs_eval(x, u, p_hat, theta, with_theta=with_theta, with_forcing=with_forcing)


def observe(model: UdeModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Observation vector and its state Jacobian."""
    return model.observe(x), model.observe_jac(x)
