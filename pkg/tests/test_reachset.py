import math

import numpy as np
import pytest

from mildsolve import (
    StateVector,
    VerificationError,
    bilinear_field,
    certify_hidden_contraction,
    compactness_diagnostic,
    constant_field,
    convolution_compactness_check,
    counterexample_report,
    default_certificate,
    diagonal_semigroup,
    evaluation_set,
    field_value_cloud,
    gamma_approximation,
    gronwall_radius,
    sample_reachset,
    semigroup_orbit,
    state_cloud,
)
from mildsolve.reachset import ReachSetSample, _heat_system


class TestSampleReachset:
    def test_seed_determinism(self):
        sg = diagonal_semigroup([0.0])
        f = bilinear_field([[1.0]])
        xi0 = StateVector([1.0])
        cert = certify_hidden_contraction(1.0, 1.0, 0.0, 1.0, 1.0)
        a = sample_reachset(xi0, 1.0, 1.0, 1.0, 8, 3, [f], sg, cert, 64)
        b = sample_reachset(xi0, 1.0, 1.0, 1.0, 8, 3, [f], sg, cert, 64)
        assert np.array_equal(a.endpoints.points, b.endpoints.points)

    def test_scalar_bilinear_hoelder_envelope(self):
        # endpoints equal xi0 exp(int u); |int_0^t u| <= sqrt(t) |u|_2 <= r sqrt(T)
        sg = diagonal_semigroup([0.0])
        f = bilinear_field([[1.0]])
        xi0 = StateVector([1.0])
        cert = default_certificate(2.0, 1.0, 1.0, 0.0, 1.0, 1.0)
        sample = sample_reachset(xi0, 2.0, 1.0, 1.0, 40, 11, [f], sg, cert, 256)
        vals = sample.endpoints.points[:, 0]
        assert vals.max() <= math.exp(1.0) * (1 + 1e-6)
        assert vals.min() >= math.exp(-1.0) * (1 - 1e-6)

    def test_endpoints_inside_gronwall_ball(self):
        sg = diagonal_semigroup([0.0])
        f = bilinear_field([[1.0]])
        xi0 = StateVector([1.0])
        cert = default_certificate(1.0, 1.0, 1.0, 0.0, 1.0, 1.0)
        sample = sample_reachset(xi0, 1.0, 1.0, 1.0, 60, 5, [f], sg, cert, 128)
        radius = gronwall_radius(xi0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0)
        assert np.abs(sample.endpoints.points - 1.0).max() < radius

    def test_zero_control_orbit_is_a_valid_sample(self):
        # the degenerate one-member sample is exactly the semigroup orbit
        from mildsolve import Control
        sg = diagonal_semigroup([-1.0, -4.0])
        xi0 = StateVector([1.0, 1.0])
        orbit = semigroup_orbit(sg, xi0, 1.0, 32)
        sample = ReachSetSample(xi0, 1.0, 1.0, 1.0,
                                [Control(1.0, np.zeros((1, 32)))], [orbit],
                                evaluation_set([orbit]))
        assert np.array_equal(sample.endpoints.points, orbit.states)

    def test_ball_violation_rejected(self):
        from mildsolve import Control
        sg = diagonal_semigroup([0.0])
        xi0 = StateVector([1.0])
        orbit = semigroup_orbit(sg, xi0, 1.0, 8)
        with pytest.raises(ValueError, match="radius"):
            ReachSetSample(xi0, 1.0, 1.0, 1.0, [Control(1.0, np.full((1, 8), 5.0))],
                           [orbit], evaluation_set([orbit]))


class TestCompactnessDiagnostic:
    def test_row_schema_and_determinism(self):
        kwargs = dict(dims=[2, 4], eps_ladder=[0.5, 0.25], p=1.0, r=1.0, T=1.0,
                      count=10, seed=2, n_t=32, xi0_scale=0.5, cloud_budget=200)
        rep1 = compactness_diagnostic(**kwargs)
        rep2 = compactness_diagnostic(**kwargs)
        assert rep1.rows == rep2.rows
        assert len(rep1.rows) == 4
        for row in rep1.rows:
            assert set(row) == {"n", "p", "eps", "n_reach", "n_ball", "sample_size"}
            assert row["n_reach"] >= 1 and row["n_ball"] >= 1

    def test_scalar_reach_covering_respects_interval_bound(self):
        rep = compactness_diagnostic(dims=[1], eps_ladder=[0.05], p=1.0, r=1.0,
                                     T=1.0, count=50, seed=7, n_t=64,
                                     xi0_scale=1.0, cloud_budget=2000)
        sg, f, xi0 = _heat_system(1, 1.0)
        cert = default_certificate(1.0, 1.0, 1.0, 0.0, 1.0, 1.0)
        sample = sample_reachset(xi0, 1.0, 1.0, 1.0, 50, 7, [f], sg, cert, 64,
                                 tol=1e-4)
        vals = sample.endpoints.points[:, 0]
        diameter = vals.max() - vals.min()
        assert rep.rows[0]["n_reach"] <= math.ceil(diameter / 0.1) + 1

    def test_invalid_ladders_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            compactness_diagnostic([4, 2], [0.5], 1.0, 1.0, 1.0, 2, 0)
        with pytest.raises(ValueError, match="decreasing"):
            compactness_diagnostic([2, 4], [0.1, 0.5], 1.0, 1.0, 1.0, 2, 0)


class TestCounterexample:
    def test_dyadic_family_report(self):
        rep = counterexample_report(n_max=16, n_t=64)
        assert rep.spike_indices == [1, 2, 4, 8, 16]
        assert rep.max_closed_form_error <= 1e-9
        assert rep.packing_size == 5
        assert rep.eval_covering_size <= 3

    def test_first_spike_is_identity_ramp(self):
        from mildsolve import Control, picard_solve, spike_control
        sg = diagonal_semigroup([0.0])
        f = constant_field([1.0])
        cert = certify_hidden_contraction(1.0, 1.0, 0.0, 0.0, 1.0)
        res = picard_solve(StateVector([0.0]), spike_control(1, 64), [f], sg, cert)
        assert np.allclose(res.trajectory.states[:, 0], res.trajectory.times,
                           atol=1e-14)

    def test_fourth_spike_saturates(self):
        from mildsolve import picard_solve, spike_control
        sg = diagonal_semigroup([0.0])
        f = constant_field([1.0])
        cert = certify_hidden_contraction(1.0, 1.0, 0.0, 0.0, 1.0)
        res = picard_solve(StateVector([0.0]), spike_control(4, 64), [f], sg, cert)
        t = res.trajectory.times
        assert np.allclose(res.trajectory.states[:, 0], np.minimum(4 * t, 1.0),
                           atol=1e-14)

    def test_misaligned_grid_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            counterexample_report(n_max=8, n_t=100)

    def test_packing_grows_while_covering_stays_bounded(self):
        # the dichotomy: trajectory packing tracks the dyadic depth, state
        # covering stays below ceil(1/(2 eps)) + 1 throughout
        for depth in (2, 3, 4, 5):
            rep = counterexample_report(n_max=2 ** depth, n_t=128)
            assert rep.packing_size == depth + 1
            assert rep.eval_covering_size <= math.ceil(1 / (2 * 0.25)) + 1


class TestGammaApproximation:
    def test_identity_semigroup_error_below_delta(self):
        sg = diagonal_semigroup([0.0])
        cloud = state_cloud(np.linspace(0, 1, 101)[:, None])
        table = gamma_approximation(sg, cloud, 1.0, 0.1, seed=1)
        assert table.verified_max_error < table.delta <= 0.1 + 1e-12

    def test_single_point_cloud(self):
        sg = diagonal_semigroup([-1.0])
        table = gamma_approximation(sg, state_cloud([[0.7]]), 1.0, 0.05, seed=1)
        assert table.n_state_cells == 1
        assert table.verified_max_error < 0.05
        # one-column table: values are the semigroup orbit of the center
        for i in range(1, table.n_time_cells + 1):
            t = i * 1.0 / table.n_time_cells
            assert table.values[i - 1, 0, 0] == pytest.approx(0.7 * math.exp(-t))

    def test_scalar_decay_grid(self):
        sg = diagonal_semigroup([-1.0])
        cloud = state_cloud(np.linspace(0, 1, 101)[:, None])
        table = gamma_approximation(sg, cloud, 1.0, 0.1, seed=1)
        assert table.verified_max_error < 0.1

    def test_cells_partition_and_cover(self):
        sg = diagonal_semigroup([-1.0])
        cloud = state_cloud(np.linspace(0, 1, 101)[:, None])
        table = gamma_approximation(sg, cloud, 1.0, 0.1, seed=1)
        # time cells partition (0, T]; first cell closed at 0
        assert table.time_cell(0.0) == 1
        assert table.time_cell(1.0) == table.n_time_cells
        n_cells = table.n_time_cells
        for i in range(1, n_cells + 1):
            interior = (i - 0.5) / n_cells
            assert table.time_cell(interior) == i
        # every cloud point belongs to exactly one state cell (first match)
        j = table.state_cell(cloud.points)
        assert np.all(j >= 1)
        assert table.values.shape == (table.n_time_cells, table.n_state_cells, 1)

    def test_determinism(self):
        sg = diagonal_semigroup([-2.0])
        cloud = state_cloud(np.linspace(0, 1, 33)[:, None])
        t1 = gamma_approximation(sg, cloud, 1.0, 0.1, seed=3)
        t2 = gamma_approximation(sg, cloud, 1.0, 0.1, seed=3)
        assert t1.delta == t2.delta
        assert np.array_equal(t1.values, t2.values)


class TestConvolutionCheck:
    def _sample(self, field, sg, xi0, p, r, count, n_t, seed):
        cert = default_certificate(p, r, sg.class_M, sg.class_mu,
                                   field.lipschitz_L, 1.0)
        return sample_reachset(xi0, p, r, 1.0, count, seed, [field], sg, cert, n_t)

    def test_constant_field_identity_semigroup_exact(self):
        # Gamma(t, xi) = xi and f = b: reconstruction equals the quadrature
        sg = diagonal_semigroup([0.0])
        f = constant_field([1.0])
        xi0 = StateVector([0.0])
        sample = self._sample(f, sg, xi0, 1.0, 1.0, 10, 64, seed=9)
        cloud = field_value_cloud(sample, [f])
        table = gamma_approximation(sg, cloud, 1.0, 0.05, seed=2)
        report = convolution_compactness_check(sample, table, [f], sg)
        assert report.max_reconstruction_error <= 1e-12
        assert report.max_coefficient <= report.max_l1_norm + 1e-12

    def test_zero_control_reconstructs_zero(self):
        from mildsolve import Control
        sg = diagonal_semigroup([0.0])
        f = constant_field([1.0])
        xi0 = StateVector([0.0])
        orbit = semigroup_orbit(sg, xi0, 1.0, 32)
        sample = ReachSetSample(xi0, 1.0, 1.0, 1.0,
                                [Control(1.0, np.zeros((1, 32)))], [orbit],
                                evaluation_set([orbit]))
        cloud = field_value_cloud(sample, [f])
        table = gamma_approximation(sg, cloud, 1.0, 0.05, seed=2)
        report = convolution_compactness_check(sample, table, [f], sg)
        assert report.max_coefficient == 0.0
        assert report.max_reconstruction_error == 0.0

    def test_heat_bilinear_reconstruction(self):
        dim, n_t, eps = 8, 64, 0.2
        sg, f, xi0 = _heat_system(dim, 0.5)
        sample = self._sample(f, sg, xi0, 1.0, 1.0, 20, n_t, seed=21)
        cloud = field_value_cloud(sample, [f])
        lag_grid = np.linspace(0.0, 1.0, n_t + 1)
        table = gamma_approximation(sg, cloud, 1.0, eps / 2, seed=4,
                                    extra_verify_times=lag_grid)
        report = convolution_compactness_check(sample, table, [f], sg)
        assert report.max_reconstruction_error < eps / 2 + 10.0 / n_t
        assert report.max_coefficient <= 1.0 + 1e-12

    def test_uncovered_field_values_rejected(self):
        sg = diagonal_semigroup([0.0])
        f = constant_field([1.0])
        xi0 = StateVector([0.0])
        sample = self._sample(f, sg, xi0, 1.0, 1.0, 5, 32, seed=9)
        stranger = state_cloud([[40.0]])
        table = gamma_approximation(sg, stranger, 1.0, 0.05, seed=2)
        with pytest.raises(ValueError, match="cover"):
            convolution_compactness_check(sample, table, [f], sg)


def test_verification_error_type():
    assert issubclass(VerificationError, RuntimeError)
