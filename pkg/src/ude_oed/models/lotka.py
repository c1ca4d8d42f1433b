"""Predator-prey benchmark with a fishing control.

Mechanistic form:

    x1' =  x1 - p1*x1*x2 - p2*u*x1
    x2' = -x2 + p3*x1*x2 - p4*u*x2

The hybrid variant replaces the interaction term x1*x2 with a network
U(x) whose strictly positive softplus output encodes the prior knowledge
that the interaction is positive for positive populations.
"""

from __future__ import annotations

import numpy as np

from .. import ann as ann_mod
from ..errors import ConfigError
from .base import RhsEval, UdeModel

__all__ = ["LotkaMechanistic", "LotkaHybrid", "lotka_mechanistic", "lotka_hybrid"]

DEFAULT_HYBRID_ARCH = ann_mod.AnnArchitecture((2, 10, 10, 1), ("tanh", "tanh", "softplus"))


class LotkaMechanistic(UdeModel):
    def __init__(self, free_p: tuple[int, ...] = (0, 2)):
        self.name = "lotka-mech"
        self.n_x = 2
        self.n_u = 1
        self.n_y = 2
        self.p_names = ("p1", "p2", "p3", "p4")
        self.p_nominal = np.array([1.0, 0.4, 1.0, 0.2])
        self.free_p = tuple(free_p)
        self.ann = None
        self.ann_inputs = ()
        self.t_start = 0.0
        self.t_end = 12.0
        self.control_bounds = ((0.0, 1.0),)
        self.budgets = np.array([4.0, 4.0])
        self.observable_names = ("x1", "x2")
        self._x0 = np.array([0.7, 0.5])

    def rhs(self, x, u, p_hat, theta=None):
        x1, x2 = x
        uu = u[0]
        p1, p2, p3, p4 = p_hat
        return np.array(
            [
                x1 - p1 * x1 * x2 - p2 * uu * x1,
                -x2 + p3 * x1 * x2 - p4 * uu * x2,
            ]
        )

    def rhs_eval(self, x, u, p_hat, theta=None, with_theta=False, with_forcing=False):
        x1, x2 = x
        uu = u[0]
        p1, p2, p3, p4 = p_hat
        f = np.array(
            [
                x1 - p1 * x1 * x2 - p2 * uu * x1,
                -x2 + p3 * x1 * x2 - p4 * uu * x2,
            ]
        )
        f_x = np.array(
            [
                [1.0 - p1 * x2 - p2 * uu, -p1 * x1],
                [p3 * x2, -1.0 + p3 * x1 - p4 * uu],
            ]
        )
        f_p = np.array(
            [
                [-x1 * x2, -uu * x1, 0.0, 0.0],
                [0.0, 0.0, x1 * x2, -uu * x2],
            ]
        )
        return RhsEval(f=f, f_x=f_x, f_p=f_p)

    def observe(self, x):
        return np.asarray(x, dtype=float).copy()

    def observe_jac(self, x):
        return np.eye(2)


class LotkaHybrid(UdeModel):
    def __init__(
        self,
        arch: ann_mod.AnnArchitecture | None = None,
        free_p: tuple[int, ...] = (),
    ):
        arch = arch or DEFAULT_HYBRID_ARCH
        if arch.input_dim != 2 or arch.output_dim != 1:
            raise ConfigError("hybrid interaction network must map R^2 -> R")
        self.name = "lotka-hybrid"
        self.n_x = 2
        self.n_u = 1
        self.n_y = 2
        self.p_names = ("p2", "p4")
        self.p_nominal = np.array([0.4, 0.2])
        self.free_p = tuple(free_p)
        self.ann = arch
        self.ann_inputs = (0, 1)
        self.t_start = 0.0
        self.t_end = 12.0
        self.control_bounds = ((0.0, 1.0),)
        self.budgets = np.array([4.0, 4.0])
        self.observable_names = ("x1", "x2")
        self._x0 = np.array([0.7, 0.5])
        # the network output enters the two states with opposite signs
        self._u_sign = np.array([[-1.0], [1.0]])

    def mechanistic_twin(self) -> LotkaMechanistic:
        """Ground-truth model that generates synthetic data."""
        return LotkaMechanistic()

    def ann_target(self, states: np.ndarray) -> np.ndarray:
        """Interaction term the network is meant to approximate."""
        states = np.atleast_2d(states)
        return states[:, 0] * states[:, 1]

    def rhs(self, x, u, p_hat, theta=None):
        x1, x2 = x
        uu = u[0]
        p2, p4 = p_hat
        uval = ann_mod.forward(self.ann, theta, x)[0]
        return np.array(
            [
                x1 - uval - p2 * uu * x1,
                -x2 + uval - p4 * uu * x2,
            ]
        )

    def rhs_eval(self, x, u, p_hat, theta=None, with_theta=False, with_forcing=False):
        x1, x2 = x
        uu = u[0]
        p2, p4 = p_hat
        uval, du_dx, du_dth = ann_mod.value_and_jacobians(self.ann, theta, x)
        f = np.array(
            [
                x1 - uval[0] - p2 * uu * x1,
                -x2 + uval[0] - p4 * uu * x2,
            ]
        )
        f_x = np.array(
            [
                [1.0 - p2 * uu, 0.0],
                [0.0, -1.0 - p4 * uu],
            ]
        )
        f_x += self._u_sign @ du_dx
        f_p = np.array(
            [
                [-uu * x1, 0.0],
                [0.0, -uu * x2],
            ]
        )
        out = RhsEval(f=f, f_x=f_x, f_p=f_p, ann_value=uval)
        if with_theta:
            out.f_theta = self._u_sign @ du_dth
        if with_forcing:
            out.ann_forcing = (self._u_sign @ uval).ravel()
        return out

    def observe(self, x):
        return np.asarray(x, dtype=float).copy()

    def observe_jac(self, x):
        return np.eye(2)


def lotka_mechanistic() -> LotkaMechanistic:
    """Nominal predator-prey model, uncertain (p1, p3)."""
    return LotkaMechanistic()


def lotka_hybrid(arch: ann_mod.AnnArchitecture | None = None, free_p=()) -> LotkaHybrid:
    """Predator-prey model with the interaction term replaced by a network."""
    return LotkaHybrid(arch=arch, free_p=free_p)
