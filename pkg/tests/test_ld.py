import math

import numpy as np
import pytest

from ldbench import dynamics as dyn
from ldbench import ld
from ldbench.errors import ContractError, FieldQualityError, UndefinedNormalizationError
from ldbench.integrate import EvolutionOperator, rollout, wrap_reference


class ConstantVelocityOperator(EvolutionOperator):
    """Synthetic operator translating states by v * dt per stride."""

    kind = "synthetic"

    def __init__(self, v, dt=0.1):
        super().__init__(dt)
        self.v = np.asarray(v, dtype=float)

    def _stride(self, states, active, direction):
        states += direction * self.v * self.dt


class DivergeAbove(EvolutionOperator):
    kind = "synthetic"

    def __init__(self, threshold, dt=0.1):
        super().__init__(dt)
        self.threshold = threshold

    def _stride(self, states, active, direction):
        bad = states[:, 0] > self.threshold
        states[bad] = 1e12
        states[~bad, 1] += direction * self.dt


def harmonic_closed_form(omega, c, energy):
    return (
        8.0
        * (2.0 * omega) ** (c / 2)
        / (c * math.sqrt(math.pi))
        * math.gamma((c + 1) / 2)
        / math.gamma(c / 2)
        * energy ** (c / 2)
    )


def small_grid(count=9):
    return ld.GridSpec(
        axes=(("q", -1.2, 1.2, count), ("p", -0.6, 0.6, count)),
        section_map="duffing_qp",
    )


class TestLdPoint:
    def test_fixed_point_gives_zero(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        total, f, b = ld.ld_point(op, np.array([0.0, 0.0]), ld.LdConfig(tau=2.0))
        assert total == 0.0 and f == 0.0 and b == 0.0

    def test_harmonic_asymptote_c1(self):
        tau = 100 * np.pi
        dt = tau / 3142
        cfg = ld.LdConfig(tau=tau, dt=dt, c=1.0)
        op = wrap_reference(dyn.harmonic(1.0), dt)
        total, _, _ = ld.ld_point(op, np.array([-1.0, 0.0]), cfg)
        target = 8.0 / np.pi
        assert abs(total / tau - target) / target < 0.01

    def test_tau_convergence_on_regular_orbit(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        s0 = np.array([1.2, 0.0])
        norm = {}
        for tau in (20.0, 40.0):
            total, _, _ = ld.ld_point(op, s0, ld.LdConfig(tau=tau, dt=0.1, c=0.7))
            norm[tau] = total / tau
        assert abs(norm[40.0] - norm[20.0]) / norm[20.0] < 0.01

    def test_mismatched_stride_rejected(self):
        op = wrap_reference(dyn.duffing(), 0.2)
        with pytest.raises(ContractError):
            ld.ld_point(op, np.array([1.0, 0.0]), ld.LdConfig(tau=2.0, dt=0.1))

    def test_additivity_exact(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        total, f, b = ld.ld_point(op, np.array([0.9, 0.3]), ld.LdConfig(tau=3.0))
        assert total == f + b

    def test_time_translation_invariance(self):
        op = wrap_reference(dyn.harmonic(1.0), 0.1)
        cfg = ld.LdConfig(tau=25.1, dt=0.1, c=0.7)
        base = np.array([-1.0, 0.0])
        ld0 = ld.ld_point(op, base, cfg)[0]
        shifted = rollout(op, dyn.PhaseState.from_vector(base), 7).states[-1]
        ld7 = ld.ld_point(op, shifted, cfg)[0]
        assert abs(ld7 - ld0) / ld0 < 1e-3


class TestLdField:
    def test_constant_velocity_gives_constant_field(self):
        op = ConstantVelocityOperator([0.3, -0.2])
        field = ld.ld_field(op, small_grid(5), ld.LdConfig(tau=1.0))
        assert np.ptp(field.values) < 1e-12
        assert np.all(field.values > 0)

    def test_total_is_fwd_plus_bwd(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        field = ld.ld_field(op, small_grid(5), ld.LdConfig(tau=1.0))
        np.testing.assert_array_equal(field.values, field.fwd + field.bwd)

    def test_positivity(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        field = ld.ld_field(op, small_grid(7), ld.LdConfig(tau=1.0))
        assert np.all(field.values >= 0)

    def test_fwd_of_flow_equals_bwd_of_reversed_flow(self):
        class Reversed(type(wrap_reference(dyn.duffing(), 0.1))):
            def _stride(self, states, active, direction):
                super()._stride(states, active, -direction)

        op = wrap_reference(dyn.duffing(), 0.1)
        rev = Reversed(dyn.duffing(), 0.1)
        cfg = ld.LdConfig(tau=1.0)
        grid = small_grid(5)
        a = ld.ld_field(op, grid, cfg)
        b = ld.ld_field(rev, grid, cfg)
        np.testing.assert_array_equal(a.fwd, b.bwd)

    def test_chunking_invariance(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        cfg = ld.LdConfig(tau=1.0)
        grid = small_grid(6)
        a = ld.ld_field(op, grid, cfg, chunk=7)
        b = ld.ld_field(op, grid, cfg, chunk=1000)
        np.testing.assert_array_equal(a.values, b.values)

    def test_divergent_nodes_marked_missing(self):
        op = DivergeAbove(threshold=0.9)
        grid = ld.GridSpec(axes=(("q", -1.0, 1.05, 41), ("p", -0.5, 0.5, 5)))
        field = ld.ld_field(op, grid, ld.LdConfig(tau=1.0), max_missing_fraction=0.2)
        assert field.n_missing > 0
        assert np.all(np.isnan(field.values[-1]))

    def test_too_many_missing_raises(self):
        op = DivergeAbove(threshold=-2.0)  # everything diverges
        with pytest.raises(FieldQualityError):
            ld.ld_field(op, small_grid(5), ld.LdConfig(tau=1.0))

    def test_isoenergy_alignment_harmonic(self):
        op = wrap_reference(dyn.harmonic(1.0), 0.1)
        grid = ld.GridSpec(axes=(("q", 0.2, 1.2, 12), ("p", 0.2, 1.2, 12)))
        cfg = ld.LdConfig(tau=25.1, dt=0.1, c=0.7)
        field = ld.ld_field(op, grid, cfg)
        states = grid.node_states()
        h = dyn.hamiltonian_batch(dyn.harmonic(1.0), states)
        corr = np.corrcoef(field.values.ravel(), h ** (cfg.c / 2))[0, 1]
        assert corr > 0.9999

    def test_nls_polar_section(self):
        op = wrap_reference(dyn.nls3(0.95), 0.1)
        grid = ld.GridSpec(
            axes=(("eta", 0.1, 0.9, 4), ("phi", -3.0, 3.0, 4)),
            section_map="nls_eta_phi",
        )
        field = ld.ld_field(op, grid, ld.LdConfig(tau=1.0))
        assert field.n_missing == 0
        assert np.all(field.values > 0)


class TestMultiField:
    def test_matches_individual_fields(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        grid = small_grid(5)
        multi = ld.ld_field_multi(op, grid, 0.1, taus=[1.0, 2.0], cs=[0.7, 1.0])
        for (tau, c), field in multi.items():
            single = ld.ld_field(op, grid, ld.LdConfig(tau=tau, dt=0.1, c=c))
            np.testing.assert_array_equal(field.values, single.values)


class TestNormalizedLd:
    def test_identity_at_tau_one(self):
        assert ld.normalized_ld(3.5, tau=1.0) == 3.5

    def test_halves_at_tau_two(self):
        assert ld.normalized_ld(3.5, tau=2.0) == 1.75

    def test_field_normalization(self):
        op = ConstantVelocityOperator([0.5, 0.0])
        field = ld.ld_field(op, small_grid(5), ld.LdConfig(tau=2.0))
        normed = ld.normalized_ld(field)
        np.testing.assert_allclose(normed.values * 2.0, field.values)


class TestTrajectoryError:
    def test_same_operator_zero(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        e_hat, e = ld.trajectory_error(op, op, np.array([1.1, 0.2]), ld.LdConfig(tau=1.0))
        assert e_hat == 0.0 and e == 0.0

    def test_symmetry_in_operators(self):
        a = ConstantVelocityOperator([0.3, 0.1])
        b = ConstantVelocityOperator([0.1, -0.2])
        cfg = ld.LdConfig(tau=1.0)
        u0 = np.array([0.0, 0.0])
        ea = ld._error_batch(a, b, u0[None, :], cfg)[0]
        eb = ld._error_batch(b, a, u0[None, :], cfg)[0]
        assert ea == pytest.approx(eb, rel=1e-15)

    def test_hand_computed_linear_discrepancy(self):
        # velocity gap dv: |Delta(t_k)| = k*dt*|dv| per component, both sides
        a = ConstantVelocityOperator([0.5, 0.0])
        b = ConstantVelocityOperator([0.2, 0.0])
        cfg = ld.LdConfig(tau=0.5, dt=0.1, c=0.7)
        dv = 0.3
        n = cfg.n_steps
        expected = 2 * sum(
            cfg.dt * (k * cfg.dt * dv) ** cfg.c for k in range(n)
        )
        got = ld._error_batch(a, b, np.zeros((1, 2)), cfg)[0]
        assert got == pytest.approx(expected, rel=1e-12)

    def test_fixed_point_normalization_error(self):
        op = wrap_reference(dyn.duffing(), 0.1)
        other = ConstantVelocityOperator([0.1, 0.0])
        with pytest.raises(UndefinedNormalizationError):
            ld.trajectory_error(other, op, np.array([0.0, 0.0]), ld.LdConfig(tau=1.0))


class TestSubsampledOperator:
    def test_matches_native_coarse_stride(self):
        from ldbench.integrate import SubsampledOperator

        base = wrap_reference(dyn.duffing(), 0.1)
        sub = ld.ld_field(
            SubsampledOperator(base, 2), small_grid(7), ld.LdConfig(tau=2.0, dt=0.2)
        )
        native = ld.ld_field(
            wrap_reference(dyn.duffing(), 0.2), small_grid(7), ld.LdConfig(tau=2.0, dt=0.2)
        )
        mask = native.values > 0
        rel = np.abs(sub.values[mask] - native.values[mask]) / native.values[mask]
        assert np.max(rel) < 1e-9

    def test_round_trip_through_wrapper(self):
        from ldbench import sympnets as sn
        from ldbench.integrate import SubsampledOperator

        params = sn.init_sympnet(2, 5, 1, seed=1)
        params.a[:] = np.random.default_rng(0).normal(0, 0.4, params.a.shape)
        wrapper = SubsampledOperator(sn.SymplecticNetOperator(params, dt=0.1), 4)
        s0 = dyn.PhaseState.from_vector([0.5, -0.2])
        back = wrapper.step_backward(wrapper.step_forward(s0))
        assert np.max(np.abs(back.to_vector() - s0.to_vector())) < 1e-13


class TestFieldCsv:
    def test_round_trip(self, tmp_path):
        op = wrap_reference(dyn.duffing(), 0.1)
        field = ld.ld_field(op, small_grid(5), ld.LdConfig(tau=1.0))
        path = tmp_path / "field.csv"
        field.write_csv(path, manifest_extra={"seed": 7})
        back = ld.LdField.read_csv(path)
        np.testing.assert_array_equal(back.values, field.values)
        np.testing.assert_array_equal(back.fwd, field.fwd)
        assert back.grid == field.grid
        assert back.cfg == field.cfg
        header = path.read_text().splitlines()[0]
        assert header == "axis1,axis2,ld_total,ld_fwd,ld_bwd"
