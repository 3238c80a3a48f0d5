import numpy as np
import pytest

from koopctrl import edmd, lifting, sim
from koopctrl.errors import (
    DimensionMismatchError,
    InsufficientDataError,
    WrongKindError,
)


def random_bilinear(rng, big_n, spectral=0.6):
    a = rng.normal(size=(big_n, big_n))
    a *= spectral / max(np.abs(np.linalg.eigvals(a)).max(), 1e-9)
    b0 = rng.normal(size=(big_n, 1))
    b1 = rng.normal(size=(big_n, big_n)) * 0.3
    return a, b0, b1


class TestDataset:
    def test_length_bookkeeping(self):
        ds = edmd.Dataset(np.zeros((8, 2)), np.zeros(7), 0.01, n_warmup=3)
        assert ds.length == 4
        assert ds.n == 2

    def test_rejects_inconsistent_lengths(self):
        with pytest.raises(DimensionMismatchError):
            edmd.Dataset(np.zeros((5, 2)), np.zeros(5), 0.01)

    def test_rejects_nan(self):
        states = np.zeros((4, 1))
        states[2, 0] = np.nan
        with pytest.raises(Exception):
            edmd.Dataset(states, np.zeros(3), 0.01)

    def test_csv_round_trip(self):
        rng = np.random.default_rng(0)
        ds = edmd.Dataset(rng.normal(size=(9, 2)), rng.normal(size=8), 0.01,
                          n_warmup=2, seed=4, source="test")
        text = edmd.dataset_to_csv(ds)
        back = edmd.dataset_from_csv(text, 0.01, n_warmup=2, seed=4, source="test")
        assert np.array_equal(back.states, ds.states)
        assert np.array_equal(back.inputs, ds.inputs)

    def test_csv_negative_warmup_indices(self):
        ds = edmd.Dataset(np.zeros((5, 1)), np.zeros(4), 0.01, n_warmup=2)
        lines = edmd.dataset_to_csv(ds).strip().splitlines()
        assert lines[1].startswith("-2,")
        assert lines[-1].startswith("2,")


class TestBuildDataMatrices:
    def test_single_sample_by_hand(self):
        # x0=2, u0=3, x1=1 with scalar degree-1 lifting
        ds = edmd.Dataset(np.array([[2.0], [1.0]]), np.array([3.0]), 0.1)
        spec = lifting.LiftingSpec.monomial(1, 1)
        z, z_plus, u, y, x_plus = edmd.build_data_matrices(ds, spec)
        assert np.array_equal(z, [[2.0]])
        assert np.array_equal(z_plus, [[1.0]])
        assert np.array_equal(u, [3.0])
        assert np.array_equal(y, [[2.0], [3.0], [6.0]])
        assert np.array_equal(x_plus, [[1.0]])

    def test_zero_input_zeroes_y_blocks(self):
        rng = np.random.default_rng(1)
        ds = edmd.Dataset(rng.normal(size=(11, 2)), np.zeros(10), 0.1)
        spec = lifting.LiftingSpec.monomial(2, 2)
        _, _, _, y, _ = edmd.build_data_matrices(ds, spec)
        big_n = spec.dimension
        assert np.all(y[big_n:] == 0)

    def test_benchmark_shapes(self, vdp_dataset, delay_spec):
        z, z_plus, u, y, x_plus = edmd.build_data_matrices(vdp_dataset, delay_spec)
        assert z.shape == (32, 2000)
        assert z_plus.shape == (32, 2000)
        assert y.shape == (65, 2000)
        assert x_plus.shape == (2, 2000)

    def test_delay_needs_warmup(self):
        ds = edmd.Dataset(np.zeros((10, 1)), np.zeros(9), 0.1, n_warmup=1)
        with pytest.raises(InsufficientDataError):
            edmd.build_data_matrices(ds, lifting.LiftingSpec.delay(1, 5, 0))

    def test_delay_columns_use_shifted_windows(self):
        rng = np.random.default_rng(2)
        states = rng.normal(size=(8, 1))
        inputs = rng.normal(size=7)
        ds = edmd.Dataset(states, inputs, 0.1, n_warmup=2)
        spec = lifting.LiftingSpec.delay(1, 2, 1)
        z, z_plus, _, _, _ = edmd.build_data_matrices(ds, spec)
        first = lifting.delay_lift(states[0:3], inputs[1:2], spec)
        assert np.array_equal(z[:, 0], first)
        second = lifting.delay_lift(states[1:4], inputs[2:3], spec)
        assert np.array_equal(z_plus[:, 0], second)


class TestFitFull:
    def test_exact_recovery(self):
        rng = np.random.default_rng(3)
        big_n, length = 4, 60
        a, b0, b1 = random_bilinear(rng, big_n)
        z = rng.normal(size=(big_n, length))
        u = rng.normal(size=length)
        y = np.vstack([z, u[None, :], z * u[None, :]])
        z_plus = a @ z + b0 @ u[None, :] + b1 @ (z * u[None, :])
        ar, b0r, b1r = edmd.fit_full(z_plus, y)
        scale = np.linalg.norm(np.hstack([a, b0, b1]))
        assert np.linalg.norm(ar - a) <= 1e-8 * scale
        assert np.linalg.norm(b0r - b0) <= 1e-8 * scale
        assert np.linalg.norm(b1r - b1) <= 1e-8 * scale

    def test_zero_successors(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=(3, 20))
        u = rng.normal(size=20)
        y = np.vstack([z, u[None, :], z * u[None, :]])
        a, b0, b1 = edmd.fit_full(np.zeros((3, 20)), y)
        assert np.all(a == 0) and np.all(b0 == 0) and np.all(b1 == 0)

    def test_scalar_least_squares(self):
        # z+ = 0.5 z with u = 0: regression recovers A = 0.5 exactly
        z = np.array([[1.0, 2.0, -1.0, 0.5]])
        u = np.zeros(4)
        y = np.vstack([z, u[None, :], z * u[None, :]])
        a, b0, b1 = edmd.fit_full(0.5 * z, y)
        assert a[0, 0] == pytest.approx(0.5, abs=1e-12)
        assert b0[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_normal_equation_orthogonality(self, vdp_dataset, monomial_spec):
        _, z_plus, _, y, _ = edmd.build_data_matrices(vdp_dataset, monomial_spec)
        a, b0, b1 = edmd.fit_full(z_plus, y)
        residual = z_plus - np.hstack([a, b0, b1]) @ y
        bound = 1e-6 * np.linalg.norm(z_plus) * np.linalg.norm(y)
        assert np.linalg.norm(residual @ y.T) <= bound

    def test_perturbation_never_improves(self, vdp_dataset, monomial_spec):
        _, z_plus, _, y, _ = edmd.build_data_matrices(vdp_dataset, monomial_spec)
        a, b0, b1 = edmd.fit_full(z_plus, y)
        coef = np.hstack([a, b0, b1])
        base = np.linalg.norm(z_plus - coef @ y)
        rng = np.random.default_rng(5)
        for _ in range(10):
            delta = rng.normal(size=coef.shape)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert np.linalg.norm(z_plus - (coef + delta) @ y) >= base


class TestFitStructured:
    def test_linear_system_recovery(self):
        # x+ = a x + b u identified through a delay lifting with dx=1, du=0
        a_true, b_true = 0.85, 0.4
        rng = np.random.default_rng(6)
        length = 40
        states = [np.array([0.3]), np.array([0.3 * a_true])]
        inputs = [0.0]
        for _ in range(length):
            u = rng.uniform(-1, 1)
            inputs.append(u)
            states.append(a_true * states[-1] + b_true * u)
        ds = edmd.Dataset(np.array(states), np.array(inputs), 0.1, n_warmup=1)
        spec = lifting.LiftingSpec.delay(1, 1, 0)
        _, _, _, y, x_plus = edmd.build_data_matrices(ds, spec)
        model = edmd.fit_structured(x_plus, y, spec)
        assert model.structured
        assert model.a[0, 0] == pytest.approx(a_true, abs=1e-8)
        assert model.a[0, 1] == pytest.approx(0.0, abs=1e-8)
        assert model.b0[0, 0] == pytest.approx(b_true, abs=1e-8)

    def test_bottom_rows_are_known_blocks(self, vdp_dataset, delay_spec):
        model = edmd.fit_dataset(vdp_dataset, delay_spec)
        known = lifting.structure_matrices(delay_spec)
        n = delay_spec.n
        assert np.array_equal(model.a[n:], known.a_known)
        assert np.array_equal(model.b0[n:], known.b0_known)
        assert np.array_equal(model.b1[n:], known.b1_known)

    def test_benchmark_dimensions(self, vdp_dataset, delay_spec):
        _, _, _, y, x_plus = edmd.build_data_matrices(vdp_dataset, delay_spec)
        assert x_plus.shape[0] == 2 and y.shape[0] == 65
        model = edmd.fit_structured(x_plus, y, delay_spec)
        assert model.a.shape == (32, 32)
        assert model.b0.shape == (32, 1)
        assert model.b1.shape == (32, 32)

    def test_wrong_kind(self):
        with pytest.raises(WrongKindError):
            edmd.fit_structured(np.zeros((1, 4)), np.zeros((3, 4)),
                                lifting.LiftingSpec.monomial(1, 1))


class TestResiduals:
    def test_report_consistency_on_fit(self):
        rng = np.random.default_rng(7)
        spec = lifting.LiftingSpec.monomial(1, 2)
        states = [np.array([0.2])]
        inputs = rng.uniform(-1, 1, size=30)
        for u in inputs:
            states.append(0.8 * states[-1] + 0.1 * u)
        ds = edmd.Dataset(np.array(states), inputs, 0.1)
        model = edmd.fit_dataset(ds, spec, structured=False)
        report = edmd.residuals(model, ds)
        assert report.l_hat == pytest.approx(report.gains.max())
        norms = np.linalg.norm(report.residuals, axis=0)
        assert report.rms == pytest.approx(np.sqrt(np.mean(norms ** 2)))
        assert report.gains.size + report.n_excluded == 30

    def test_exact_model_zero_residuals(self):
        rng = np.random.default_rng(8)
        spec = lifting.LiftingSpec.monomial(1, 1)
        a = np.array([[0.9]])
        b0 = np.array([[0.2]])
        b1 = np.array([[0.05]])
        states = [np.array([0.5])]
        inputs = rng.uniform(-1, 1, size=25)
        for u in inputs:
            z = states[-1]
            states.append(a[0, 0] * z + u * (b0[0, 0] + b1[0, 0] * z))
        ds = edmd.Dataset(np.array(states), inputs, 0.1)
        model = edmd.BilinearModel(a, b0, b1, spec)
        report = edmd.residuals(model, ds)
        assert report.l_hat <= 1e-10
        assert np.abs(report.residuals).max() <= 1e-10

    def test_structured_residuals_vanish_below_top_rows(self, vdp_dataset, delay_spec):
        model = edmd.fit_dataset(vdp_dataset, delay_spec)
        report = edmd.residuals(model, vdp_dataset)
        assert np.all(report.residuals[delay_spec.n:] == 0.0)
        assert np.any(report.residuals[:delay_spec.n] != 0.0)

    def test_scalar_gain_by_hand(self):
        # model z+ = z on data (1, 2): eps = 2 - 1 = 1, gain 1
        spec = lifting.LiftingSpec.monomial(1, 1)
        model = edmd.BilinearModel(np.array([[1.0]]), np.zeros((1, 1)),
                                   np.zeros((1, 1)), spec)
        ds = edmd.Dataset(np.array([[1.0], [2.0]]), np.zeros(1), 0.1)
        report = edmd.residuals(model, ds)
        assert report.l_hat == pytest.approx(1.0)
        assert report.gains[0] == pytest.approx(1.0)

    def test_zero_norm_samples_excluded(self):
        spec = lifting.LiftingSpec.monomial(1, 1)
        model = edmd.BilinearModel(np.array([[1.0]]), np.zeros((1, 1)),
                                   np.zeros((1, 1)), spec)
        ds = edmd.Dataset(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 0.0]), 0.1)
        report = edmd.residuals(model, ds)
        assert report.n_excluded == 1
        assert report.gains.size == 1
        assert report.assumption_violated  # z=0 moved to z=1 with eps != 0


class TestModelJson:
    def test_round_trip(self, monomial_model):
        back = edmd.BilinearModel.from_json(monomial_model.to_json())
        assert np.array_equal(back.a, monomial_model.a)
        assert np.array_equal(back.b0, monomial_model.b0)
        assert np.array_equal(back.b1, monomial_model.b1)
        assert back.spec == monomial_model.spec
        assert back.structured == monomial_model.structured

    def test_step_matches_matrices(self, monomial_model):
        rng = np.random.default_rng(9)
        z = rng.normal(size=monomial_model.dimension)
        u = 0.37
        expected = monomial_model.a @ z + u * (monomial_model.b0[:, 0]
                                               + monomial_model.b1 @ z)
        assert np.allclose(monomial_model.step(z, u), expected)
