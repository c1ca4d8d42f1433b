import numpy as np
import pytest

from ude_oed import design as des
from ude_oed import estimate as est
from ude_oed import fim as fim_mod
from ude_oed import sensitivity as sens
from ude_oed.models import lotka_hybrid, lotka_mechanistic
from ude_oed.numerics import TimeGrid


@pytest.fixture(scope="session")
def lotka_theta():
    """Deterministic pre-trained interaction network for the hybrid model."""
    model = lotka_hybrid()
    return est.pretrain_weights(model, 7, est.PretrainConfig())


@pytest.fixture(scope="session")
def grid48():
    return TimeGrid.uniform(0.0, 12.0, 48)


@pytest.fixture(scope="session")
def hybrid_complete(lotka_theta, grid48):
    """Complete-sensitivity pass of the weights-only hybrid model, u = 0."""
    model = lotka_hybrid()
    strat = sens.ReductionStrategy("complete")
    red = sens.reduction_matrix(strat, lotka_theta, 0, model.ann)
    traj = sens.propagate(
        model, model.p_nominal, lotka_theta, lambda t: np.zeros(1), grid48,
        strat, red, tol=1e-10,
    )
    atoms = fim_mod.gramian_atoms(traj, model)
    fim_full = fim_mod.assemble_fim(atoms, np.ones((2, 48))).matrix
    return {"model": model, "traj": traj, "atoms": atoms, "fim": fim_full, "theta": lotka_theta}


@pytest.fixture(scope="session")
def mech_atoms(grid48):
    """Gramian atoms of the mechanistic model under zero controls."""
    model = lotka_mechanistic()
    strat = sens.ReductionStrategy("complete")
    red = sens.reduction_matrix(strat, np.empty(0), 2, None, p_labels=("p1", "p3"))
    traj = sens.propagate(
        model, model.p_nominal, None, lambda t: np.zeros(1), grid48, strat, red,
        tol=1e-10,
    )
    atoms = fim_mod.gramian_atoms(traj, model)
    return {"model": model, "traj": traj, "atoms": atoms}


@pytest.fixture()
def zero_control(grid48):
    return des.ControlDesign.zero(lotka_mechanistic(), grid48)
