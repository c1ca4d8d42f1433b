"""Fisher information: per-interval Gramian atoms, criteria, gradients.

The FIM is linear in the sampling weights: F(w) = sum_ij w_ij * atom_ij,
where atom_ij integrates the observability Gramian of observable i over
grid interval j.  Criteria and their exact weight gradients are evaluated
from the eigendecomposition, in log space for the determinant so that
ill-conditioned spectra of overparameterized weight blocks stay finite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEigenvalueWarning, InputError, SingularMatrixError
from .numerics import (
    PD_RELATIVE_THRESHOLD,
    Spectrum,
    TimeGrid,
    gauss_legendre_nodes,
    sym_eig,
    symmetrize,
)
from .sensitivity import SensitivityTrajectory
from .models.base import UdeModel

__all__ = [
    "GramianAtoms",
    "Fim",
    "gramian_atoms",
    "assemble_fim",
    "criterion",
    "criterion_gradient_w",
    "checked_spectrum",
    "CRITERIA",
]

CRITERIA = ("A", "D", "E")


@dataclass
class GramianAtoms:
    """Observability Gramian increments, indexed (observable, interval)."""

    grid: TimeGrid
    atoms: np.ndarray  # (n_y, N, n_r, n_r)
    labels: list[str]

    @property
    def n_y(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_r(self) -> int:
        return self.atoms.shape[2]


@dataclass
class Fim:
    """Assembled Fisher information matrix and the weights that made it."""

    matrix: np.ndarray
    w_used: np.ndarray

    def export_text(self, path) -> None:
        spec = sym_eig(self.matrix)
        lam = spec.eigenvalues
        cond = float(lam[0] / lam[-1]) if lam[-1] > 0 else float("inf")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"dim {self.matrix.shape[0]}\n")
            fh.write("eigenvalues " + " ".join(repr(float(v)) for v in lam) + "\n")
            fh.write(f"condition {repr(cond)}\n")
            for row in self.matrix:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def gramian_atoms(traj: SensitivityTrajectory, model: UdeModel) -> GramianAtoms:
    """Integrate (h_x G)^T (h_x G) per observable over every grid interval.

    Quadrature: 5-point Gauss-Legendre on every accepted integrator step
    inside the interval, matching the order of the dense output.
    """
    if model.n_y != len(model.observable_names):
        raise InputError("observable names inconsistent with n_y")
    grid = traj.grid
    n_y = model.n_y
    n_r = traj.n_r
    n_x = traj.n_x
    atoms = np.zeros((n_y, grid.n_intervals, n_r, n_r))
    nodes = grid.nodes
    for j in range(grid.n_intervals):
        acc = np.zeros((n_y, n_r, n_r))
        for seg in traj.solution.segments_in(nodes[j], nodes[j + 1]):
            t_lo = max(seg.t0, nodes[j])
            t_hi = min(seg.t1, nodes[j + 1])
            if t_hi <= t_lo:
                continue
            ts, ws = gauss_legendre_nodes(t_lo, t_hi)
            for t, wq in zip(ts, ws):
                y = seg.at(t)
                x = y[:n_x]
                g = y[n_x:].reshape(n_x, n_r)
                h_x = model.observe_jac(x)
                m = h_x @ g  # (n_y, n_r)
                acc += wq * m[:, :, np.newaxis] * m[:, np.newaxis, :]
        atoms[:, j] = acc
    return GramianAtoms(grid=grid, atoms=atoms, labels=list(traj.labels))


def _check_weights(atoms: GramianAtoms, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (atoms.n_y, atoms.n_intervals):
        raise InputError(
            f"weights have shape {w.shape}, expected "
            f"{(atoms.n_y, atoms.n_intervals)}"
        )
    if np.any(w < -1e-12) or np.any(w > 1.0 + 1e-12):
        raise InputError("sampling weights must lie in [0, 1]")
    return np.clip(w, 0.0, 1.0)


def assemble_fim(atoms: GramianAtoms, w: np.ndarray) -> Fim:
    """Weighted sum of atoms; exactly linear in the weights."""
    w = _check_weights(atoms, w)
    f = np.einsum("ij,ijkl->kl", w, atoms.atoms)
    return Fim(matrix=symmetrize(f), w_used=w.copy())


def checked_spectrum(f: np.ndarray) -> Spectrum:
    """Eigendecomposition with the positive-definiteness gate.

    Raises SingularMatrixError (reporting the smallest eigenvalue) when
    the matrix fails the relative threshold; that failure is the expected
    behavior for the unreduced FIM of an overparameterized network.
    """
    f = np.asarray(f, dtype=float)
    spec = sym_eig(f)
    lam_max = float(spec.eigenvalues[0]) if spec.dim else 0.0
    lam_min = float(spec.eigenvalues[-1]) if spec.dim else 0.0
    if lam_max <= 0.0 or lam_min <= PD_RELATIVE_THRESHOLD * lam_max:
        raise SingularMatrixError(
            f"FIM not positive definite (lambda_min={lam_min:.3e}, "
            f"lambda_max={lam_max:.3e})",
            smallest_eigenvalue=lam_min,
        )
    return spec


def _as_matrix(f) -> np.ndarray:
    return f.matrix if isinstance(f, Fim) else np.asarray(f, dtype=float)


def criterion(f, crit: str, n_p: int | None = None) -> float:
    """Design criterion of the inverse FIM.

    A: mean of inverse eigenvalues; D: determinant root, evaluated in log
    space; E: inverse smallest eigenvalue.  ``n_p`` defaults to the matrix
    dimension (the effective parameter count after reduction).
    """
    f = _as_matrix(f)
    if crit not in CRITERIA:
        raise InputError(f"criterion must be one of {CRITERIA}")
    spec = checked_spectrum(f)
    lam = spec.eigenvalues
    n_p = int(n_p) if n_p is not None else lam.size
    if crit == "A":
        return float(np.sum(1.0 / lam) / n_p)
    if crit == "D":
        return float(np.exp(-np.sum(np.log(lam)) / n_p))
    return float(1.0 / lam[-1])


def criterion_gradient_w(atoms: GramianAtoms, w: np.ndarray, crit: str) -> np.ndarray:
    """Exact gradient of the criterion with respect to every weight.

    A: -(1/n_p) tr(F^-1 A_ij F^-1); D: -(phi_D/n_p) tr(F^-1 A_ij);
    E: -(v_min^T A_ij v_min)/lambda_min^2 (a subgradient when the smallest
    eigenvalue is nearly multiple; a warning flags that case).
    """
    if crit not in CRITERIA:
        raise InputError(f"criterion must be one of {CRITERIA}")
    w = _check_weights(atoms, w)
    f = assemble_fim(atoms, w).matrix
    spec = checked_spectrum(f)
    lam = spec.eigenvalues
    q = spec.eigenvectors
    n_p = lam.size
    if crit == "A":
        weight = (q / lam**2) @ q.T  # F^-2
        return -np.einsum("kl,ijkl->ij", weight, atoms.atoms) / n_p
    if crit == "D":
        phi_d = float(np.exp(-np.sum(np.log(lam)) / n_p))
        f_inv = (q / lam) @ q.T
        return -(phi_d / n_p) * np.einsum("kl,ijkl->ij", f_inv, atoms.atoms)
    if lam.size > 1 and (lam[-2] - lam[-1]) <= 1e-8 * lam[0]:
        warnings.warn(
            "smallest eigenvalue nearly multiple; E-criterion gradient is a subgradient",
            DegenerateEigenvalueWarning,
        )
    v = q[:, -1]
    quad = np.einsum("k,ijkl,l->ij", v, atoms.atoms, v)
    return -quad / lam[-1] ** 2
