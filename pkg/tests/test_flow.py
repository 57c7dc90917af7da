"""
Tests for the CondOT path, the VD-ODE update and trajectory integration
"""

import logging

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from holoflow.errors import ConfigError, IntegrationError, StructureError
from holoflow.flow import FlowConfig, cfm_loss, integrate, interpolate, vd_coefficients, vd_ode_step
from holoflow.geometry import rmsd
from holoflow.structures import concat_state


def random_state(rng, n_protein=4, fragments=(3,), t=0.0):
    return concat_state(rng.normal(scale=4.0, size=(n_protein, 3)),
                        [rng.normal(scale=2.0, size=(k, 3)) for k in fragments], t=t)


class TestFlowConfig:
    """Sampler constants."""

    def test_defaults(self):
        config = FlowConfig()
        assert config.steps == 40
        assert config.eta == 1.0
        assert config.clamp_lo == 1e-6
        assert config.clamp_hi == pytest.approx(1 - 1e-6)

    def test_zero_steps(self):
        with pytest.raises(ConfigError):
            FlowConfig(steps=0)

    def test_bad_clamp(self):
        with pytest.raises(ConfigError):
            FlowConfig(clamp_lo=0.5, clamp_hi=0.4)

    def test_bad_eta(self):
        with pytest.raises(ConfigError):
            FlowConfig(eta=0.0)


class TestInterpolate:
    """x_t = (1 - t) x0 + t x1."""

    def test_endpoints(self, rng):
        x0 = random_state(rng)
        x1 = random_state(rng, t=1.0)
        np.testing.assert_array_equal(interpolate(x0, x1, 0.0).coords, x0.coords)
        np.testing.assert_array_equal(interpolate(x0, x1, 1.0).coords, x1.coords)

    def test_midpoint(self, rng):
        x0 = random_state(rng)
        x1 = random_state(rng)
        middle = interpolate(x0, x1, 0.5)
        np.testing.assert_allclose(middle.coords, (x0.coords + x1.coords) / 2)
        assert middle.time == 0.5

    def test_partition_mismatch(self, rng):
        with pytest.raises(StructureError):
            interpolate(random_state(rng), random_state(rng, fragments=(2, 1)), 0.5)

    def test_time_out_of_range(self, rng):
        x0 = random_state(rng)
        with pytest.raises(StructureError):
            interpolate(x0, x0, 1.5)


class TestCFMLoss:
    """Endpoint regression loss."""

    def test_zero_for_exact_prediction(self, rng):
        target = rng.normal(size=(5, 3))
        assert cfm_loss(target, target) == 0.0

    def test_known_value(self):
        assert cfm_loss(np.zeros((2, 3)), np.ones((2, 3)) * 2.0) == pytest.approx(4.0)

    def test_shape_mismatch(self):
        with pytest.raises(StructureError):
            cfm_loss(np.zeros((2, 3)), np.zeros((3, 3)))


class TestVDCoefficients:
    """Clamped convex update weights."""

    def test_first_step(self):
        a, b = vd_coefficients(0, FlowConfig())
        assert a == pytest.approx(39 / 40)
        assert b == pytest.approx(1 / 40)

    def test_last_step_is_clamped(self):
        a, b = vd_coefficients(39, FlowConfig())
        assert a == 1e-6
        assert b == pytest.approx(1 - 1e-6)

    def test_coefficients_sum_to_one_before_clamping(self):
        config = FlowConfig(steps=10)
        for n in range(9):
            a, b = vd_coefficients(n, config)
            assert a + b == pytest.approx(1.0)

    def test_eta_scales_both(self):
        a, b = vd_coefficients(0, FlowConfig(steps=4, eta=0.5))
        assert a == pytest.approx(0.375)
        assert b == pytest.approx(0.125)

    def test_step_out_of_range(self):
        with pytest.raises(IntegrationError) as info:
            vd_coefficients(40, FlowConfig())
        assert info.value.step == 40

    def test_step_time_stamp(self, rng):
        state = random_state(rng)
        moved = vd_ode_step(state, state.coords, 9, FlowConfig())
        assert moved.time == pytest.approx(0.25)
        np.testing.assert_allclose(moved.coords, state.coords)


class TestIntegrate:
    """Sampler runs from t = 0 to t = 1."""

    def test_oracle_field_tracks_straight_path(self, rng):
        x0 = random_state(rng)
        x1 = random_state(rng, t=1.0)
        config = FlowConfig(align_each_step=False)
        trajectory = integrate(lambda state, t: x1.coords, x0, config)
        assert len(trajectory.frames) == 41
        for frame in trajectory.frames:
            expected = interpolate(x0, x1, frame.time).coords
            np.testing.assert_allclose(frame.state.coords, expected, atol=1e-5)
        deviation = np.linalg.norm(trajectory.final.coords - x1.coords)
        assert deviation <= 1e-6 * np.linalg.norm(x0.coords - x1.coords)

    def test_frame_times(self, rng):
        trajectory = integrate(lambda state, t: state.coords, random_state(rng), FlowConfig(steps=8))
        assert [f.time for f in trajectory.frames] == pytest.approx([n / 8 for n in range(9)])
        assert [f.step for f in trajectory.frames] == list(range(9))
        assert trajectory.final.time == 1.0

    def test_inputs_not_mutated(self, rng):
        x0 = random_state(rng)
        before = x0.coords.copy()
        integrate(lambda state, t: np.zeros_like(state.coords), x0, FlowConfig(steps=5))
        np.testing.assert_array_equal(x0.coords, before)

    def test_aligned_run_lands_on_prediction(self, rng):
        x0 = random_state(rng, n_protein=6)
        target = random_state(rng, n_protein=6).coords
        trajectory = integrate(lambda state, t: target, x0, FlowConfig())
        assert rmsd(trajectory.final.coords, target) < 1e-4

    def test_rotating_the_prior_does_not_change_the_result(self, rng):
        x0 = random_state(rng, n_protein=6)
        target = random_state(rng, n_protein=6).coords
        rotation = Rotation.random(random_state=rng).as_matrix()
        turned = x0.with_coords(x0.coords @ rotation.T)
        a = integrate(lambda state, t: target, x0, FlowConfig()).final.coords
        b = integrate(lambda state, t: target, turned, FlowConfig()).final.coords
        np.testing.assert_allclose(a, b, atol=1e-4)

    @pytest.mark.parametrize("align", [False, True])
    def test_contracts_toward_fixed_prediction(self, rng, align):
        x0 = random_state(rng, n_protein=6)
        target = random_state(rng, n_protein=6).coords
        trajectory = integrate(lambda state, t: target, x0, FlowConfig(align_each_step=align))
        distances = [np.linalg.norm(f.state.coords - target) for f in trajectory.frames]
        for before, after in zip(distances, distances[1:]):
            assert after <= before + 1e-9

    def test_single_step_lands_on_prediction(self, rng):
        x0 = random_state(rng)
        target = random_state(rng).coords
        final = integrate(lambda state, t: target, x0, FlowConfig(steps=1, align_each_step=False)).final
        assert final.time == 1.0
        assert np.abs(final.coords - target).max() <= 1e-6 * np.abs(x0.coords - target).max() + 1e-12

    def test_equivariant_field_rotates_every_frame(self, rng):
        def field(state, t):
            neighbours = np.roll(state.coords, -1, axis=0)
            return state.coords + (0.2 + 0.5 * t) * (neighbours - state.coords)

        x0 = random_state(rng, n_protein=6)
        rotation = Rotation.random(random_state=rng).as_matrix()
        plain = integrate(field, x0, FlowConfig(steps=10))
        turned = integrate(field, x0.with_coords(x0.coords @ rotation.T), FlowConfig(steps=10))
        for a, b in zip(plain.frames, turned.frames):
            np.testing.assert_allclose(b.state.coords, a.state.coords @ rotation.T, atol=1e-6)

    def test_non_finite_prediction(self, rng):
        def field(state, t):
            return np.full_like(state.coords, np.nan) if t >= 0.5 else state.coords

        with pytest.raises(IntegrationError) as info:
            integrate(field, random_state(rng), FlowConfig(steps=4))
        assert info.value.step == 2

    def test_misshaped_prediction(self, rng):
        with pytest.raises(IntegrationError, match="shape"):
            integrate(lambda state, t: np.zeros((2, 3)), random_state(rng), FlowConfig(steps=3))

    def test_small_protein_skips_alignment(self, rng, caplog):
        x0 = random_state(rng, n_protein=2)
        config = FlowConfig(steps=2, align_protein_only=True)
        with caplog.at_level(logging.WARNING, logger="holoflow.flow"):
            trajectory = integrate(lambda state, t: state.coords, x0, config)
        assert len(trajectory.frames) == 3
        assert "skipping per-step alignment" in caplog.text

    def test_seed_and_config_recorded(self, rng):
        trajectory = integrate(lambda state, t: state.coords, random_state(rng), FlowConfig(steps=2), seed=99)
        assert trajectory.seed == 99
        assert trajectory.config["steps"] == 2
