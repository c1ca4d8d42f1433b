"""Urethane batch reaction benchmark.

Species: isocyanate A reacts with butanol B to the value product urethane
C, with downstream product allophanate D (reversible), by-product
isocyanurate E (trimerization of A), and solvent L.  Mole numbers of the
six species plus the reactor temperature form the state.  In the hybrid
variant the trimerization rate is replaced by a network of the six mole
numbers; the steric factor and activation energy of the first reaction
stay as uncertain mechanistic parameters.

Physical constants are configurable inputs.  The defaults below are
plausible placeholder values, NOT literature data; the molar masses obey
the reaction stoichiometry exactly (M_C = M_A + M_B, M_D = M_A + M_C,
M_E = 3 M_A) so that total mass is conserved without feeds.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .. import ann as ann_mod
from ..errors import ConfigError, DomainError
from .base import RhsEval, UdeModel

__all__ = [
    "UrethaneConstants",
    "UrethaneMechanistic",
    "UrethaneHybrid",
    "urethane_hybrid",
    "urethane_mechanistic",
]

# state indices
_C, _D, _E, _A, _B, _L, _T = range(7)

DEFAULT_HYBRID_ARCH = ann_mod.AnnArchitecture((6, 10, 10, 1), ("tanh", "tanh", "softplus"))


@dataclass(frozen=True)
class UrethaneConstants:
    """Physical constants; placeholder defaults, all configurable.

    Units: molar masses g/mol, densities g/L, steric factors L/(mol h)
    except k_ref4 in L^2/(mol^2 h)-equivalent through the squared
    concentration, energies/enthalpy J/mol, temperatures K,
    gas constant J/(mol K).
    """

    m_a: float = 119.12
    m_b: float = 74.12
    m_c: float = 193.24
    m_d: float = 312.36
    m_e: float = 357.36
    m_l: float = 78.13
    rho_a: float = 1095.0
    rho_b: float = 810.0
    rho_c: float = 1415.0
    rho_d: float = 1528.0
    rho_e: float = 1451.0
    rho_l: float = 1101.0
    k_ref1: float = 5.0e-3
    k_ref2: float = 8.0e-4
    k_ref4: float = 8.0e-4
    e_a1: float = 35240.0
    e_a2: float = 85000.0
    e_a4: float = 35000.0
    k_c2: float = 0.17
    delta_h2: float = -17031.0
    t_ref: float = 363.16
    gas_constant: float = 8.314

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "delta_h2" and v <= 0:
                raise ConfigError(f"urethane constant {f.name} must be positive")

    @property
    def molar_masses(self) -> np.ndarray:
        # ordered as the mole-number states (C, D, E, A, B, L)
        return np.array([self.m_c, self.m_d, self.m_e, self.m_a, self.m_b, self.m_l])

    @property
    def specific_volumes(self) -> np.ndarray:
        return self.molar_masses / np.array(
            [self.rho_c, self.rho_d, self.rho_e, self.rho_a, self.rho_b, self.rho_l]
        )


class _UrethaneBase(UdeModel):
    """Shared mechanics of the mechanistic and hybrid variants."""

    def __init__(self, constants: UrethaneConstants | None, free_p: tuple[int, ...]):
        self.constants = constants or UrethaneConstants()
        self.n_x = 7
        self.n_u = 2
        self.n_y = 3
        self.p_names = ("k_ref1", "e_a1")
        self.p_nominal = np.array([self.constants.k_ref1, self.constants.e_a1])
        self.free_p = tuple(free_p)
        self.t_start = 0.0
        self.t_end = 80.0
        self.control_bounds = ((0.0, 0.01), (0.0, 0.01))
        self.budgets = np.array([4.0, 4.0, 4.0])
        self.observable_names = ("mass_pct_A", "mass_pct_C", "mass_pct_E")
        self._x0 = np.array([0.0, 0.0, 0.0, 0.1, 0.05, 0.0, 300.0])
        # fixed linear heating profile 300 K -> 400 K over the horizon
        self.temperature_rate = 100.0 / 80.0

    # -- shared kinetics ---------------------------------------------------

    def _volume(self, x) -> float:
        v = float(self.constants.specific_volumes @ x[:6])
        if v <= 0.0:
            raise DomainError(f"non-positive reaction volume V={v:.3e} L")
        return v

    def _arrhenius(self, temp: float, p_hat):
        c = self.constants
        rr = c.gas_constant
        inv_diff = 1.0 / temp - 1.0 / c.t_ref
        k_ref1, e_a1 = p_hat
        k1 = k_ref1 * np.exp(-e_a1 / rr * inv_diff)
        k2 = c.k_ref2 * np.exp(-c.e_a2 / rr * inv_diff)
        k4 = c.k_ref4 * np.exp(-c.e_a4 / rr * inv_diff)
        k_c = c.k_c2 * np.exp(-c.delta_h2 / rr * inv_diff)
        k3 = k2 / k_c
        return k1, k2, k3, k4

    def _net_rates(self, x, p_hat):
        """Volume-scaled reaction rates R_i = V * r_i and the volume."""
        v = self._volume(x)
        k1, k2, k3, k4 = self._arrhenius(x[_T], p_hat)
        r1 = k1 * x[_A] * x[_B] / v
        r2 = k2 * x[_A] * x[_C] / v
        r3 = k3 * x[_D]
        r4 = k4 * x[_A] ** 2 / v
        return v, (k1, k2, k3, k4), (r1, r2, r3, r4)

    def reference_trimerization_rate(self, states: np.ndarray) -> np.ndarray:
        """Trimerization rate at the reference temperature per state row."""
        states = np.atleast_2d(states)
        out = np.empty(states.shape[0])
        for i, row in enumerate(states):
            v = float(self.constants.specific_volumes @ row[:6])
            if v <= 0:
                raise DomainError("non-positive volume in rate evaluation")
            out[i] = self.constants.k_ref4 * row[_A] ** 2 / v
        return out

    # -- observation: mass percentages of A, C, E ---------------------------

    def observe(self, x):
        masses = self.constants.molar_masses * np.asarray(x, dtype=float)[:6]
        total = masses.sum()
        if total <= 0.0:
            raise DomainError("total mass is zero, mass percentages undefined")
        return 100.0 * masses[[_A, _C, _E]] / total

    def observe_jac(self, x):
        mm = self.constants.molar_masses
        n = np.asarray(x, dtype=float)[:6]
        masses = mm * n
        total = masses.sum()
        if total <= 0.0:
            raise DomainError("total mass is zero, mass percentages undefined")
        jac = np.zeros((3, 7))
        for row, sp in enumerate((_A, _C, _E)):
            jac[row, :6] = -100.0 * masses[sp] * mm / total**2
            jac[row, sp] += 100.0 * mm[sp] / total
        return jac

    # -- assembly helpers ----------------------------------------------------

    def _rate_partials(self, x, p_hat, v, ks, rates):
        """d R_i / d x and d R_1 / d p_hat."""
        c = self.constants
        rr = c.gas_constant
        temp = x[_T]
        k1, k2, k3, k4 = ks
        r1, r2, r3, r4 = rates
        vs = c.specific_volumes  # dV/dn per species (C, D, E, A, B, L)
        inv_t2 = 1.0 / temp**2

        d1 = np.zeros(7)
        d1[:6] = -r1 * vs / v
        d1[_A] += k1 * x[_B] / v
        d1[_B] += k1 * x[_A] / v
        d1[_T] = r1 * (p_hat[1] / rr) * inv_t2

        d2 = np.zeros(7)
        d2[:6] = -r2 * vs / v
        d2[_A] += k2 * x[_C] / v
        d2[_C] += k2 * x[_A] / v
        d2[_T] = r2 * (c.e_a2 / rr) * inv_t2

        d3 = np.zeros(7)
        d3[_D] = k3
        d3[_T] = r3 * ((c.e_a2 - c.delta_h2) / rr) * inv_t2

        d4 = np.zeros(7)
        d4[:6] = -r4 * vs / v
        d4[_A] += 2.0 * k4 * x[_A] / v
        d4[_T] = r4 * (c.e_a4 / rr) * inv_t2

        # only R1 carries the uncertain parameters
        dr1_dp = np.array([r1 / p_hat[0], -r1 * (1.0 / temp - 1.0 / c.t_ref) / rr])
        return d1, d2, d3, d4, dr1_dp

    def _assemble(self, x, u, rates, trimer, d1, d2, d3, d_tr, dr1_dp):
        r1, r2, r3, _ = rates
        f = np.array(
            [
                r1 - r2 + r3,
                r2 - r3,
                trimer,
                -r1 - r2 + r3 - 3.0 * trimer + u[0],
                -r1 + u[1],
                u[0] + u[1],
                self.temperature_rate,
            ]
        )
        f_x = np.zeros((7, 7))
        f_x[_C] = d1 - d2 + d3
        f_x[_D] = d2 - d3
        f_x[_E] = d_tr
        f_x[_A] = -d1 - d2 + d3 - 3.0 * d_tr
        f_x[_B] = -d1
        f_p = np.zeros((7, 2))
        f_p[_C] = dr1_dp
        f_p[_A] = -dr1_dp
        f_p[_B] = -dr1_dp
        return f, f_x, f_p


class UrethaneMechanistic(_UrethaneBase):
    """Fully mechanistic reaction model, including the trimerization rate."""

    def __init__(self, constants: UrethaneConstants | None = None, free_p=(0, 1)):
        super().__init__(constants, free_p)
        self.name = "urethane-mech"
        self.ann = None
        self.ann_inputs = ()

    def rhs(self, x, u, p_hat, theta=None):
        _, _, rates = self._net_rates(x, p_hat)
        r1, r2, r3, r4 = rates
        return np.array(
            [
                r1 - r2 + r3,
                r2 - r3,
                r4,
                -r1 - r2 + r3 - 3.0 * r4 + u[0],
                -r1 + u[1],
                u[0] + u[1],
                self.temperature_rate,
            ]
        )

    def rhs_eval(self, x, u, p_hat, theta=None, with_theta=False, with_forcing=False):
        v, ks, rates = self._net_rates(x, p_hat)
        d1, d2, d3, d4, dr1_dp = self._rate_partials(x, p_hat, v, ks, rates)
        f, f_x, f_p = self._assemble(x, u, rates, rates[3], d1, d2, d3, d4, dr1_dp)
        return RhsEval(f=f, f_x=f_x, f_p=f_p)


class UrethaneHybrid(_UrethaneBase):
    """Reaction model with the trimerization rate replaced by a network."""

    def __init__(
        self,
        constants: UrethaneConstants | None = None,
        arch: ann_mod.AnnArchitecture | None = None,
        free_p=(0, 1),
    ):
        super().__init__(constants, free_p)
        arch = arch or DEFAULT_HYBRID_ARCH
        if arch.input_dim != 6 or arch.output_dim != 1:
            raise ConfigError("urethane rate network must map the 6 mole numbers to R")
        self.name = "urethane"
        self.ann = arch
        self.ann_inputs = (0, 1, 2, 3, 4, 5)
        # mole numbers are O(0.1); feed the network order-one inputs so the
        # hidden layers operate in their nonlinear range
        self.ann_input_scale = np.full(6, 0.1)

    def mechanistic_twin(self) -> UrethaneMechanistic:
        return UrethaneMechanistic(self.constants, free_p=self.free_p)

    def ann_target(self, states: np.ndarray) -> np.ndarray:
        return self.reference_trimerization_rate(states)

    def rhs(self, x, u, p_hat, theta=None):
        v, _, rates = self._net_rates(x, p_hat)
        r1, r2, r3, _ = rates
        uval = ann_mod.forward(self.ann, theta, self.ann_input(x))[0]
        trimer = v * uval
        return np.array(
            [
                r1 - r2 + r3,
                r2 - r3,
                trimer,
                -r1 - r2 + r3 - 3.0 * trimer + u[0],
                -r1 + u[1],
                u[0] + u[1],
                self.temperature_rate,
            ]
        )

    def rhs_eval(self, x, u, p_hat, theta=None, with_theta=False, with_forcing=False):
        v, ks, rates = self._net_rates(x, p_hat)
        d1, d2, d3, _, dr1_dp = self._rate_partials(x, p_hat, v, ks, rates)
        uval, du_dsel, du_dth = ann_mod.value_and_jacobians(
            self.ann, theta, self.ann_input(x)
        )
        # d(V*U)/dx = U * dV/dx + V * dU/dx
        d_tr = np.zeros(7)
        d_tr[:6] = uval[0] * self.constants.specific_volumes
        d_tr += v * self.embed_input_jacobian(du_dsel)[0]
        trimer = v * uval[0]
        f, f_x, f_p = self._assemble(x, u, rates, trimer, d1, d2, d3, d_tr, dr1_dp)
        out = RhsEval(f=f, f_x=f_x, f_p=f_p, ann_value=uval)
        sign = np.zeros((7, 1))
        sign[_E, 0] = v
        sign[_A, 0] = -3.0 * v
        if with_theta:
            out.f_theta = sign @ du_dth
        if with_forcing:
            out.ann_forcing = (sign @ uval).ravel()
        return out


def urethane_hybrid(
    constants: UrethaneConstants | None = None,
    arch: ann_mod.AnnArchitecture | None = None,
) -> UrethaneHybrid:
    """Urethane reaction with a learned trimerization rate."""
    return UrethaneHybrid(constants=constants, arch=arch)


def urethane_mechanistic(constants: UrethaneConstants | None = None) -> UrethaneMechanistic:
    """Fully mechanistic urethane reaction (synthetic ground truth)."""
    return UrethaneMechanistic(constants=constants)
