"""
Tests for the endpoint network, its gradients and checkpoints
"""

import numpy as np
import pytest

from holoflow.errors import CheckpointError, ConfigError, NetworkError
from holoflow.fieldnet import (
    N_FEATURES,
    PARAMETER_NAMES,
    FieldNetwork,
    FieldParams,
    TrainConfig,
    TrainingSample,
    dump_params,
    forward,
    gradients,
    group_average_matrix,
    init_field,
    load_params,
    loss_terms,
    parameter_shapes,
    parse_params,
    predict_affinity,
    save_params,
    structure_loss,
    time_embedding,
)
from holoflow.structures import concat_state


def small_state(rng, t=0.4):
    return concat_state(rng.normal(scale=3.0, size=(3, 3)), [rng.normal(size=(2, 3))], t=t)


class TestParameters:
    """Shapes, initialization and validation."""

    def test_shapes(self):
        params = init_field(width=8, seed=1)
        for name, shape in parameter_shapes(8).items():
            assert params[name].shape == shape
        assert params.width == 8
        assert params["w1"].shape[1] == N_FEATURES

    def test_init_bounds(self):
        params = init_field(width=16, seed=0)
        assert np.abs(params["w1"]).max() <= 1.0 / np.sqrt(N_FEATURES)
        assert np.abs(params["w2"]).max() <= 1.0 / np.sqrt(16)

    def test_init_is_seeded(self):
        a, b = init_field(8, seed=3), init_field(8, seed=3)
        for name in PARAMETER_NAMES:
            np.testing.assert_array_equal(a[name], b[name])

    def test_zero_width(self):
        with pytest.raises(ConfigError):
            init_field(width=0)

    def test_wrong_shape(self):
        params = init_field(width=4)
        with pytest.raises(NetworkError, match="w3"):
            params.replace("w3", np.zeros((3, 5)))

    def test_missing_tensor(self):
        tensors = dict(init_field(width=4).tensors)
        del tensors["ba2"]
        with pytest.raises(NetworkError, match="missing"):
            FieldParams(tensors)

    def test_non_finite_parameter(self):
        params = init_field(width=4)
        bad = params["b1"].copy()
        bad[0] = np.inf
        with pytest.raises(NetworkError):
            params.replace("b1", bad)


class TestForward:
    """Trunk and affinity head."""

    def test_group_average_matrix(self):
        averaging = group_average_matrix(np.array([0, 0, 1]))
        np.testing.assert_allclose(averaging, [[0.5, 0.5, 0], [0.5, 0.5, 0], [0, 0, 1]])

    def test_time_embedding(self):
        np.testing.assert_allclose(time_embedding(0.0), [0, 0, 0, 0, 1, 1, 1, 1], atol=1e-15)

    def test_output_shape(self, rng):
        state = small_state(rng)
        coords, embedding = forward(init_field(8), state, 0.4)
        assert coords.shape == state.coords.shape
        assert embedding.shape == (8,)

    def test_translation_equivariance(self, rng):
        params = init_field(8, seed=2)
        state = small_state(rng)
        shift = np.array([4.0, -1.0, 2.5])
        a, _ = forward(params, state, 0.3)
        b, _ = forward(params, state.with_coords(state.coords + shift), 0.3)
        np.testing.assert_allclose(b, a + shift, atol=1e-10)

    def test_permutation_equivariance_within_protein(self, rng):
        params = init_field(8, seed=2)
        state = small_state(rng)
        order = np.array([2, 0, 1, 3, 4])
        a, _ = forward(params, state, 0.6)
        b, _ = forward(params, state.with_coords(state.coords[order]), 0.6)
        np.testing.assert_allclose(b, a[order], atol=1e-12)

    def test_field_network_call(self, rng):
        params = init_field(8)
        state = small_state(rng)
        network = FieldNetwork(params)
        np.testing.assert_array_equal(network(state, 0.2), forward(params, state, 0.2)[0])
        assert network.affinity(state) == predict_affinity(params, state)

    def test_non_finite_activation_names_layer(self, rng):
        params = init_field(4)
        # h1 = 0 and h2 = tanh(10) in every unit, so each output sums four terms near 1e308
        for name in ("w1", "b1", "w2", "u2"):
            params = params.replace(name, np.zeros_like(params[name]))
        params = params.replace("b2", np.full(4, 10.0))
        huge = params.replace("w3", np.full((3, 4), 1e308))
        with np.errstate(over="ignore"), pytest.raises(NetworkError) as info:
            forward(huge, small_state(rng), 0.5)
        assert info.value.layer == "output"

    def test_affinity_translation_invariant(self, rng):
        params = init_field(8, seed=6)
        state = small_state(rng, t=1.0)
        moved = state.with_coords(state.coords + np.array([-3.0, 8.0, 0.5]))
        assert predict_affinity(params, moved) == pytest.approx(predict_affinity(params, state), abs=1e-12)

    def test_affinity_invariant_to_fragment_order(self, rng):
        params = init_field(8, seed=6)
        state = small_state(rng, t=1.0)
        swapped = state.with_coords(state.coords[[0, 1, 2, 4, 3]])
        assert predict_affinity(params, swapped) == pytest.approx(predict_affinity(params, state), abs=1e-12)


class TestStructureLoss:
    """Superposition-aware structure losses."""

    def test_rigid_copy_has_zero_loss(self, rng):
        from scipy.spatial.transform import Rotation

        target = rng.normal(size=(6, 3))
        rotated = target @ Rotation.random(random_state=rng).as_matrix().T + 3.0
        loss, grad = structure_loss(rotated, target)
        assert loss == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(grad, 0.0, atol=1e-10)

    def test_clamped_error(self):
        target = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        predicted = target.copy()
        predicted[0] += 100.0
        loss, _ = structure_loss(predicted, target, kind="clamped-aligned-error", clamp=10.0)
        assert loss <= 10.0

    def test_config_rejects_unknown_loss(self):
        with pytest.raises(ConfigError):
            TrainConfig(structure_loss="fape")


def finite_difference(params, batch, config, h=1e-5):
    numeric = {}
    for name in PARAMETER_NAMES:
        grad = np.zeros_like(params[name])
        for index in np.ndindex(params[name].shape):
            plus = params[name].copy()
            minus = params[name].copy()
            plus[index] += h
            minus[index] -= h
            up = loss_terms(params.replace(name, plus), batch, config, frozen=params).total
            down = loss_terms(params.replace(name, minus), batch, config, frozen=params).total
            grad[index] = (up - down) / (2 * h)
        numeric[name] = grad
    return numeric


class TestGradients:
    """Reverse-mode gradients against central differences."""

    @pytest.fixture
    def batch(self, rng):
        return [
            TrainingSample(state=small_state(rng, t=0.3), target=rng.normal(scale=3.0, size=(5, 3)), affinity=6.5),
            TrainingSample(state=small_state(rng, t=0.8), target=rng.normal(scale=3.0, size=(5, 3)), affinity=4.0),
        ]

    def test_matches_finite_differences(self, batch):
        params = init_field(8, seed=4)
        config = TrainConfig(lambda_x=0.2, lambda_b=0.1)
        analytic, terms = gradients(params, batch, config)
        numeric = finite_difference(params, batch, config)
        for name in PARAMETER_NAMES:
            error = np.linalg.norm(analytic[name] - numeric[name])
            assert error <= 1e-4 * np.linalg.norm(numeric[name]) + 1e-7, name
        assert terms.total == pytest.approx(loss_terms(params, batch, config).total)

    def test_affinity_does_not_reach_trunk(self, batch):
        params = init_field(8, seed=4)
        only_affinity = TrainConfig(lambda_x=0.0, lambda_b=1.0)
        grads, _ = gradients(params, batch, only_affinity)
        for name in ("w1", "b1", "w2", "u2", "b2", "w3", "b3"):
            assert np.all(grads[name] == 0.0)
        assert np.any(grads["wa1"] != 0.0)

    def test_unlabelled_rows_skip_head(self, rng):
        params = init_field(8, seed=4)
        batch = [TrainingSample(state=small_state(rng), target=rng.normal(size=(5, 3)))]
        grads, terms = gradients(params, batch, TrainConfig())
        assert terms.affinity == 0.0
        assert np.all(grads["wa2"] == 0.0)

    def test_descent_step_lowers_loss(self, batch):
        params = init_field(8, seed=4)
        config = TrainConfig(lambda_x=1.0, lambda_b=0.1)
        grads, before = gradients(params, batch, config)
        after = loss_terms(params.updated(grads, 1e-3), batch, config)
        assert after.total < before.total

    def test_empty_batch(self):
        with pytest.raises(NetworkError):
            gradients(init_field(4), [], TrainConfig())


class TestCheckpoints:
    """Binary checkpoint format."""

    def test_round_trip_is_exact(self):
        params = init_field(8, seed=5)
        again = parse_params(dump_params(params))
        for name in PARAMETER_NAMES:
            assert np.array_equal(again[name], params[name])

    def test_dump_is_deterministic(self):
        assert dump_params(init_field(4, seed=1)) == dump_params(init_field(4, seed=1))

    def test_header(self):
        assert dump_params(init_field(4)).startswith(b"holoflow-field 1\n")

    def test_wrong_magic(self):
        data = dump_params(init_field(4)).replace(b"holoflow-field", b"other-format", 1)
        with pytest.raises(CheckpointError, match="not a holoflow checkpoint"):
            parse_params(data)

    def test_wrong_version(self):
        data = dump_params(init_field(4)).replace(b"holoflow-field 1", b"holoflow-field 9", 1)
        with pytest.raises(CheckpointError, match="version"):
            parse_params(data)

    def test_truncated_blob(self):
        data = dump_params(init_field(4))
        with pytest.raises(CheckpointError, match="bytes"):
            parse_params(data[:-8])

    def test_save_and_load(self, tmp_path):
        params = init_field(4, seed=2)
        path = tmp_path / "field.ckpt"
        save_params(params, path)
        np.testing.assert_array_equal(load_params(path)["wa1"], params["wa1"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_params(tmp_path / "absent.ckpt")
