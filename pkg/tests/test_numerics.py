import numpy as np
import pytest

from ude_oed.errors import InputError, IntegrationFailureError, SingularMatrixError
from ude_oed.numerics import TimeGrid, integrate, spd_inverse, sym_eig, symmetrize
from ude_oed.models import lotka_mechanistic


def lotka_rhs(t, x):
    return np.array([x[0] - x[0] * x[1], -x[1] + x[0] * x[1]])


class TestIntegrate:
    def test_exponential_decay(self):
        grid = TimeGrid.uniform(0.0, 1.0, 4)
        sol = integrate(lambda t, y: -y, np.array([1.0]), grid, tol=1e-8)
        assert abs(sol.states[-1, 0] - np.exp(-1.0)) <= 1e-7
        assert sol.states[0, 0] == 1.0

    def test_constant_solution(self):
        grid = TimeGrid.uniform(0.0, 5.0, 7)
        sol = integrate(lambda t, y: np.zeros_like(y), np.array([0.7, 0.5]), grid)
        assert np.all(sol.states == np.array([0.7, 0.5]))

    def test_lotka_richardson_self_consistency(self):
        grid = TimeGrid.uniform(0.0, 12.0, 12)
        x0 = np.array([0.7, 0.5])
        coarse = integrate(lotka_rhs, x0, grid, fixed_steps=340)
        fine = integrate(lotka_rhs, x0, grid, fixed_steps=680)
        assert np.max(np.abs(coarse.states - fine.states)) <= 1e-6

    def test_convergence_order_at_least_four(self):
        grid = TimeGrid.uniform(0.0, 12.0, 12)
        x0 = np.array([0.7, 0.5])
        ref = integrate(lotka_rhs, x0, grid, tol=1e-12).states[-1]
        err_h = np.max(np.abs(integrate(lotka_rhs, x0, grid, fixed_steps=24).states[-1] - ref))
        err_h2 = np.max(np.abs(integrate(lotka_rhs, x0, grid, fixed_steps=48).states[-1] - ref))
        assert err_h / err_h2 >= 2.0**4

    def test_dense_output_matches_nodes(self):
        grid = TimeGrid.uniform(0.0, 2.0, 5)
        sol = integrate(lambda t, y: -y, np.array([1.0]), grid, tol=1e-9)
        for k, t in enumerate(grid.nodes):
            assert abs(sol.at(float(t))[0] - sol.states[k, 0]) <= 1e-12

    def test_blow_up_raises_with_time(self):
        grid = TimeGrid.uniform(0.0, 1.0, 1)
        with pytest.raises(IntegrationFailureError) as err:
            integrate(lambda t, y: y**2, np.array([1.5]), grid, tol=1e-8)
        assert 0.0 < err.value.t_failure <= 1.0

    def test_tolerance_validation(self):
        grid = TimeGrid.uniform(0.0, 1.0, 1)
        with pytest.raises(InputError):
            integrate(lambda t, y: -y, np.array([1.0]), grid, tol=0.5)


class TestTimeGrid:
    def test_strictly_increasing_required(self):
        with pytest.raises(InputError):
            TimeGrid(np.array([0.0, 1.0, 1.0]))

    def test_uniform_properties(self):
        grid = TimeGrid.uniform(0.0, 12.0, 48)
        assert grid.n_intervals == 48
        assert grid.t_start == 0.0 and grid.t_end == 12.0
        assert np.allclose(grid.deltas, 0.25)

    def test_interval_lookup(self):
        grid = TimeGrid.uniform(0.0, 4.0, 4)
        assert grid.interval_of(0.5) == 0
        assert grid.interval_of(1.0) == 1
        assert grid.interval_of(4.0) == 3


class TestSymEig:
    def test_identity(self):
        spec = sym_eig(np.eye(2))
        assert np.allclose(spec.eigenvalues, [1.0, 1.0])

    def test_diagonal_sorted_descending(self):
        spec = sym_eig(np.diag([1.0, 4.0]))
        assert np.allclose(spec.eigenvalues, [4.0, 1.0])
        assert abs(abs(spec.eigenvectors[1, 0]) - 1.0) <= 1e-12

    def test_random_psd_reconstruction(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(5, 5))
        s = b.T @ b
        spec = sym_eig(s)
        assert np.max(np.abs(spec.reconstruct() - s)) <= 1e-8 * np.max(np.abs(s))
        assert np.all(spec.eigenvalues >= -1e-10 * np.max(np.abs(s)))

    def test_orthonormal_eigenvectors(self):
        rng = np.random.default_rng(2)
        s = symmetrize(rng.normal(size=(8, 8)))
        q = sym_eig(s).eigenvectors
        assert np.max(np.abs(q.T @ q - np.eye(8))) <= 1e-10

    def test_indefinite_reconstruction(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            s = symmetrize(rng.normal(size=(6, 6)))
            spec = sym_eig(s)
            assert np.max(np.abs(spec.reconstruct() - s)) <= 1e-8 * np.max(np.abs(s))
            assert np.all(np.diff(spec.eigenvalues) <= 1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            sym_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))


class TestSpdInverse:
    def test_identity(self):
        assert np.allclose(spd_inverse(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        assert np.allclose(spd_inverse(np.diag([4.0, 1.0])), np.diag([0.25, 1.0]))

    def test_rank_deficient_raises(self):
        with pytest.raises(SingularMatrixError) as err:
            spd_inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert abs(err.value.smallest_eigenvalue) <= 1e-12

    def test_inverse_residual(self):
        rng = np.random.default_rng(4)
        b = rng.normal(size=(7, 7))
        s = b.T @ b + 0.1 * np.eye(7)
        inv = spd_inverse(s)
        spec = sym_eig(s)
        cond = spec.eigenvalues[0] / spec.eigenvalues[-1]
        assert np.max(np.abs(s @ inv - np.eye(7))) <= 1e-8 * cond

    def test_inverse_spectrum_reciprocal(self):
        rng = np.random.default_rng(5)
        b = rng.normal(size=(6, 6))
        s = b.T @ b + 0.5 * np.eye(6)
        lam = sym_eig(s).eigenvalues
        lam_inv = sym_eig(spd_inverse(s)).eigenvalues
        assert np.allclose(np.sort(lam_inv), np.sort(1.0 / lam), atol=1e-8)


def test_lotka_adaptive_consistency():
    model = lotka_mechanistic()
    grid = TimeGrid.uniform(0.0, 12.0, 12)

    def rhs(t, x):
        return model.rhs(x, np.zeros(1), model.p_nominal)

    a = integrate(rhs, model.x0(model.p_nominal), grid, tol=1e-8)
    b = integrate(rhs, model.x0(model.p_nominal), grid, tol=1e-10)
    assert np.max(np.abs(a.states - b.states)) <= 1e-6
