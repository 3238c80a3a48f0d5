import numpy as np
import pytest

from koopctrl import lifting
from koopctrl.errors import (
    DimensionMismatchError,
    HistoryLengthError,
    WrongKindError,
)


class TestSpec:
    def test_monomial_dimension_benchmark(self):
        # n=2, degree 5: C(7,5) - 1 = 20
        assert lifting.LiftingSpec.monomial(2, 5).dimension == 20

    def test_delay_dimension_benchmark(self):
        assert lifting.LiftingSpec.delay(2, 15, 0).dimension == 32

    def test_delay_dimension_formula(self):
        # n(1 + dx + du) + du
        assert lifting.LiftingSpec.delay(1, 1, 1).dimension == 4
        assert lifting.LiftingSpec.delay(3, 4, 2).dimension == 23

    def test_rejects_du_greater_than_dx(self):
        with pytest.raises(ValueError):
            lifting.LiftingSpec.delay(2, 1, 2)

    def test_rejects_zero_degree(self):
        with pytest.raises(ValueError):
            lifting.LiftingSpec.monomial(2, 0)

    def test_json_round_trip(self):
        for spec in (lifting.LiftingSpec.monomial(3, 4),
                     lifting.LiftingSpec.delay(2, 5, 3)):
            assert lifting.LiftingSpec.from_json(spec.to_json()) == spec

    def test_dimension_function(self):
        spec = lifting.LiftingSpec.monomial(2, 2)
        assert lifting.dimension(spec) == 5


class TestMonomialLift:
    def test_zero_maps_to_zero(self):
        assert np.all(lifting.monomial_lift(np.zeros(2), 5) == 0)

    def test_degree_two_by_hand(self):
        # order x1, x2, x1^2, x1 x2, x2^2
        z = lifting.monomial_lift([2.0, 3.0], 2)
        assert np.array_equal(z, [2.0, 3.0, 4.0, 6.0, 9.0])

    def test_state_is_leading_block(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=3)
            z = lifting.monomial_lift(x, 4)
            assert np.array_equal(z[:3], x)

    def test_dimension_matches_spec(self):
        for n, d in [(1, 3), (2, 5), (3, 2), (4, 3)]:
            spec = lifting.LiftingSpec.monomial(n, d)
            z = lifting.monomial_lift(np.ones(n), d)
            assert z.size == spec.dimension

    def test_ordering_stable(self):
        e1 = lifting.monomial_exponents(2, 3)
        e2 = lifting.monomial_exponents(2, 3)
        assert np.array_equal(e1, e2)
        # graded: degrees ascend
        degrees = e1.sum(axis=1)
        assert np.all(np.diff(degrees) >= 0)


class TestDelayLift:
    def test_scalar_example_by_hand(self):
        spec = lifting.LiftingSpec.delay(1, 1, 1)
        z = lifting.delay_lift([[3.0], [2.0]], [5.0], spec)
        assert np.array_equal(z, [2.0, 3.0, 5.0, 15.0])

    def test_zero_history_maps_to_zero(self):
        spec = lifting.LiftingSpec.delay(2, 3, 2)
        z = lifting.delay_lift(np.zeros((4, 2)), np.zeros(2), spec)
        assert np.all(z == 0)
        assert z.size == spec.dimension

    def test_stacking_order(self):
        # x_k first, then newest-to-oldest states, inputs, products
        spec = lifting.LiftingSpec.delay(1, 2, 2)
        x_hist = np.array([[1.0], [2.0], [3.0]])  # x_{k-2}, x_{k-1}, x_k
        u_hist = np.array([10.0, 20.0])           # u_{k-2}, u_{k-1}
        z = lifting.delay_lift(x_hist, u_hist, spec)
        assert np.array_equal(z, [3.0, 2.0, 1.0, 20.0, 10.0, 40.0, 10.0])

    def test_wrong_history_length(self):
        spec = lifting.LiftingSpec.delay(2, 3, 1)
        with pytest.raises(HistoryLengthError):
            lifting.delay_lift(np.zeros((3, 2)), np.zeros(1), spec)
        with pytest.raises(HistoryLengthError):
            lifting.delay_lift(np.zeros((4, 2)), np.zeros(2), spec)

    def test_wrong_kind(self):
        with pytest.raises(WrongKindError):
            lifting.delay_lift(np.zeros((2, 2)), np.zeros(0),
                               lifting.LiftingSpec.monomial(2, 2))


class TestStructureMatrices:
    def test_scalar_with_input_history(self):
        spec = lifting.LiftingSpec.delay(1, 2, 1)
        # z = (x_k, x_{k-1}, x_{k-2}, u_{k-1}, x_{k-1} u_{k-1}), N = 5
        known = lifting.structure_matrices(spec)
        assert known.a_known.shape == (4, 5)
        expect_a = np.zeros((4, 5))
        expect_a[0, 0] = 1.0  # new x_{k-1} <- x_k
        expect_a[1, 1] = 1.0  # new x_{k-2} <- x_{k-1}
        assert np.array_equal(known.a_known, expect_a)
        assert np.array_equal(known.b0_known.ravel(), [0, 0, 1, 0])
        expect_b1 = np.zeros((4, 5))
        expect_b1[3, 0] = 1.0  # new x_{k-1} u_{k-1} <- u_k * x_k
        assert np.array_equal(known.b1_known, expect_b1)

    def test_benchmark_du_zero(self):
        spec = lifting.LiftingSpec.delay(2, 15, 0)
        known = lifting.structure_matrices(spec)
        assert known.a_known.shape == (30, 32)
        assert np.array_equal(known.a_known, np.hstack([np.eye(30), np.zeros((30, 2))]))
        assert np.all(known.b0_known == 0)
        assert np.all(known.b1_known == 0)

    def test_entries_are_unit(self):
        for n, dx, du in [(1, 2, 1), (2, 4, 2), (3, 3, 3), (2, 15, 0)]:
            known = lifting.structure_matrices(lifting.LiftingSpec.delay(n, dx, du))
            for m in (known.a_known, known.b0_known, known.b1_known):
                assert set(np.unique(m)) <= {0.0, 1.0}
            # shift rows route exactly one source
            assert np.all(known.a_known.sum(axis=1) <= 1.0)

    def test_wrong_kind(self):
        with pytest.raises(WrongKindError):
            lifting.structure_matrices(lifting.LiftingSpec.monomial(2, 3))

    @pytest.mark.parametrize("n,dx,du", [(1, 1, 1), (1, 3, 2), (2, 2, 1),
                                         (2, 15, 0), (3, 4, 4)])
    def test_shift_consistency_on_random_trajectory(self, n, dx, du):
        # bottom N-n rows of z_{k+1} equal A_k z_k + u_k (B0_k + B1_k z_k)
        # exactly, for any trajectory
        spec = lifting.LiftingSpec.delay(n, dx, du)
        known = lifting.structure_matrices(spec)
        rng = np.random.default_rng(n * 100 + dx * 10 + du)
        steps = dx + 6
        xs = rng.normal(size=(steps + 1, n))
        us = rng.normal(size=steps)
        for k in range(dx, steps):
            z_now = lifting.delay_lift(xs[k - dx:k + 1], us[k - du:k], spec)
            z_next = lifting.delay_lift(xs[k + 1 - dx:k + 2], us[k + 1 - du:k + 1], spec)
            predicted = known.a_known @ z_now + us[k] * (
                known.b0_known.ravel() + known.b1_known @ z_now)
            assert np.array_equal(z_next[n:], predicted)


class TestRecoverState:
    def test_monomial_round_trip(self):
        rng = np.random.default_rng(3)
        spec = lifting.LiftingSpec.monomial(3, 3)
        for _ in range(10):
            x = rng.normal(size=3)
            z = lifting.monomial_lift(x, 3)
            assert np.array_equal(lifting.recover_state(z, spec), x)

    def test_delay_round_trip(self):
        spec = lifting.LiftingSpec.delay(2, 3, 1)
        rng = np.random.default_rng(4)
        x_hist = rng.normal(size=(4, 2))
        z = lifting.delay_lift(x_hist, rng.normal(size=1), spec)
        assert np.array_equal(lifting.recover_state(z, spec), x_hist[-1])

    def test_basis_vector(self):
        spec = lifting.LiftingSpec.monomial(2, 2)
        z = np.zeros(spec.dimension)
        z[0] = 1.0
        assert np.array_equal(lifting.recover_state(z, spec), [1.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            lifting.recover_state(np.zeros(3), lifting.LiftingSpec.monomial(2, 2))
