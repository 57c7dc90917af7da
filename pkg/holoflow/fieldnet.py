"""
Endpoint-prediction network with hand-derived gradients.

The trunk maps a complex state at time t to a predicted t = 1 state:

    F  = per-atom features (translation invariant)
    H1 = tanh(F W1^T + b1)
    G  = A H1                     A averages rows within each group
    H2 = tanh(H1 W2^T + G U2^T + b2)
    X̂  = X + H2 W3^T + b3

Groups are the protein (group 0) and each ligand fragment (group f + 1), so
the trunk is permutation-equivariant within the protein and within every
fragment, and translation-equivariant because features only see centred
coordinates. Rotation equivariance is not built in.

The affinity head pools H2 over ligand rows of the predicted structure and
reads out one scalar. Its input is computed from a detached forward pass, so
affinity gradients never reach the trunk.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN_WIDTH,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SIGMA,
    LAMBDA_B,
    LAMBDA_X,
    STRUCTURE_LOSS_CLAMP,
    STRUCTURE_LOSSES,
    TIME_FREQUENCIES,
)
from .errors import CheckpointError, ConfigError, GeometryError, NetworkError
from .geometry import kabsch
from .structures import ComplexState

logger = logging.getLogger(__name__)

N_FEATURES = 3 + 2 + 3 + 1 + 2 * TIME_FREQUENCIES
TRUNK_PARAMETERS = ("w1", "b1", "w2", "u2", "b2", "w3", "b3")
HEAD_PARAMETERS = ("wa1", "ba1", "wa2", "ba2")
PARAMETER_NAMES = TRUNK_PARAMETERS + HEAD_PARAMETERS


def parameter_shapes(width: int) -> Dict[str, Tuple[int, ...]]:
    """Tensor shapes of a network with hidden width `width`."""
    return {
        "w1": (width, N_FEATURES),
        "b1": (width,),
        "w2": (width, width),
        "u2": (width, width),
        "b2": (width,),
        "w3": (3, width),
        "b3": (3,),
        "wa1": (width, width),
        "ba1": (width,),
        "wa2": (1, width),
        "ba2": (1,),
    }


def _fan_in(name: str, width: int) -> int:
    return N_FEATURES if name in ("w1", "b1") else width


@dataclass(frozen=True)
class FieldParams:
    """
    Weights of the trunk and the affinity head.

    Attributes:
        tensors: Parameter name -> float64 array, shapes per parameter_shapes
    """
    tensors: Dict[str, np.ndarray]

    def __post_init__(self):
        tensors = {name: np.asarray(value, dtype=float) for name, value in self.tensors.items()}
        if set(tensors) != set(PARAMETER_NAMES):
            missing = sorted(set(PARAMETER_NAMES) - set(tensors))
            extra = sorted(set(tensors) - set(PARAMETER_NAMES))
            raise NetworkError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
        width = tensors["b1"].shape[0] if tensors["b1"].ndim == 1 else 0
        if width < 1:
            raise NetworkError("hidden width must be at least 1", layer="b1")
        for name, shape in parameter_shapes(width).items():
            if tensors[name].shape != shape:
                raise NetworkError(f"expected shape {shape}, got {tensors[name].shape}", layer=name)
            if not np.all(np.isfinite(tensors[name])):
                raise NetworkError("non-finite parameter", layer=name)
        object.__setattr__(self, "tensors", {name: tensors[name] for name in PARAMETER_NAMES})

    @property
    def width(self) -> int:
        return self.tensors["b1"].shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def updated(self, gradients: Dict[str, np.ndarray], learning_rate: float) -> "FieldParams":
        """Plain gradient-descent step."""
        return FieldParams({name: self.tensors[name] - learning_rate * gradients[name] for name in PARAMETER_NAMES})

    def replace(self, name: str, value: np.ndarray) -> "FieldParams":
        tensors = dict(self.tensors)
        tensors[name] = value
        return FieldParams(tensors)


def init_field(width: int = DEFAULT_HIDDEN_WIDTH, seed: int = 0) -> FieldParams:
    """
    Fresh parameters, each drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Raises:
        ConfigError: If width < 1
    """
    if width < 1:
        raise ConfigError(f"hidden width must be >= 1, got {width}")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(width).items():
        bound = 1.0 / np.sqrt(_fan_in(name, width))
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return FieldParams(tensors)


# ============================================================================
# Forward pass
# ============================================================================

def group_average_matrix(groups: np.ndarray) -> np.ndarray:
    """Symmetric matrix whose (i, j) entry is 1/|g| when rows i and j share group g."""
    same = groups[:, None] == groups[None, :]
    counts = same.sum(axis=1)
    return same / counts[:, None]


def time_embedding(t: float) -> np.ndarray:
    """(sin 2πkt, cos 2πkt) for k = 1 .. TIME_FREQUENCIES."""
    k = np.arange(1, TIME_FREQUENCIES + 1)
    return np.concatenate([np.sin(2 * np.pi * k * t), np.cos(2 * np.pi * k * t)])


def atom_features(coords: np.ndarray, n_protein: int, averaging: np.ndarray, t: float) -> np.ndarray:
    """N x N_FEATURES matrix of per-atom inputs."""
    centered = coords - coords.mean(axis=0)
    n = coords.shape[0]
    kind = np.zeros((n, 2))
    kind[:n_protein, 0] = 1.0
    kind[n_protein:, 1] = 1.0
    radius = np.linalg.norm(centered, axis=1, keepdims=True)
    clock = np.broadcast_to(time_embedding(t), (n, 2 * TIME_FREQUENCIES))
    return np.hstack([centered, kind, averaging @ centered, radius, clock])


@dataclass
class ForwardPass:
    """Intermediate activations kept for the backward pass."""
    features: np.ndarray
    averaging: np.ndarray
    h1: np.ndarray
    pooled_h1: np.ndarray
    h2: np.ndarray
    coords: np.ndarray
    embedding: np.ndarray


def _check_finite(values: np.ndarray, layer: str):
    if not np.all(np.isfinite(values)):
        raise NetworkError("non-finite activations", layer=layer)


def _pool(h2: np.ndarray, n_protein: int) -> np.ndarray:
    rows = h2[n_protein:] if h2.shape[0] > n_protein else h2
    return rows.mean(axis=0)


def forward_pass(params: FieldParams, state: ComplexState, t: float) -> ForwardPass:
    """
    Run the trunk and keep every activation.

    Raises:
        NetworkError: If an activation is non-finite; names the layer
    """
    averaging = group_average_matrix(state.group_ids())
    features = atom_features(state.coords, state.n_protein, averaging, t)
    h1 = np.tanh(features @ params["w1"].T + params["b1"])
    _check_finite(h1, "h1")
    pooled = averaging @ h1
    h2 = np.tanh(h1 @ params["w2"].T + pooled @ params["u2"].T + params["b2"])
    _check_finite(h2, "h2")
    coords = state.coords + h2 @ params["w3"].T + params["b3"]
    _check_finite(coords, "output")
    return ForwardPass(features, averaging, h1, pooled, h2, coords, _pool(h2, state.n_protein))


def forward(params: FieldParams, state: ComplexState, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted t = 1 coordinates and the pooled ligand embedding."""
    result = forward_pass(params, state, t)
    return result.coords, result.embedding


def affinity_head(params: FieldParams, embedding: np.ndarray) -> Tuple[float, np.ndarray]:
    """Scalar readout and its hidden activation."""
    hidden = np.tanh(params["wa1"] @ embedding + params["ba1"])
    value = float(params["wa2"][0] @ hidden + params["ba2"][0])
    if not np.isfinite(value):
        raise NetworkError("non-finite affinity", layer="affinity")
    return value, hidden


def predict_affinity(params: FieldParams, state: ComplexState) -> float:
    """Affinity (pK scale) of a complex treated as a t = 1 structure."""
    _, embedding = forward(params, state, 1.0)
    return affinity_head(params, embedding)[0]


class FieldNetwork:
    """Endpoint predictor backed by fixed parameters; safe to share across threads."""

    def __init__(self, params: FieldParams):
        self.params = params

    def __call__(self, state: ComplexState, t: float) -> np.ndarray:
        return forward(self.params, state, t)[0]

    def affinity(self, state: ComplexState) -> float:
        return predict_affinity(self.params, state)


# ============================================================================
# Losses and gradients
# ============================================================================

@dataclass(frozen=True)
class TrainConfig:
    """
    Training options.

    Attributes:
        lambda_x: Weight of the structure loss
        lambda_b: Weight of the affinity loss
        sigma: Noise (Å) added to both endpoints of each training path
        learning_rate: Gradient-descent step size
        epochs: Passes over the dataset
        batch_size: (prior, t) draws per row per update
        seed: Root seed for initialization and sampling
        structure_loss: 'aligned-mse' or 'clamped-aligned-error'
        clamp: Per-atom error clamp (Å) of the clamped loss
        affinity_start_epoch: First epoch in which the affinity term is on
        hidden_width: Trunk width when training from scratch
        protein_prior: Protein prior of the training paths
        center_mode: Ligand prior centre of the training paths
    """
    lambda_x: float = LAMBDA_X
    lambda_b: float = LAMBDA_B
    sigma: float = DEFAULT_SIGMA
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    structure_loss: str = "aligned-mse"
    clamp: float = STRUCTURE_LOSS_CLAMP
    affinity_start_epoch: int = 0
    hidden_width: int = DEFAULT_HIDDEN_WIDTH
    protein_prior: str = "template"
    center_mode: str = "ca_centroid"

    def __post_init__(self):
        if self.lambda_x < 0 or self.lambda_b < 0:
            raise ConfigError("loss weights must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.structure_loss not in STRUCTURE_LOSSES:
            raise ConfigError(f"unknown structure loss {self.structure_loss!r}; choose from {STRUCTURE_LOSSES}")
        if not self.clamp > 0:
            raise ConfigError(f"clamp must be positive, got {self.clamp}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrainingSample:
    """
    One regression example.

    Attributes:
        state: Interpolated state x_t (its time field is t)
        target: True t = 1 coordinates
        affinity: Measured affinity, or None when unlabelled
    """
    state: ComplexState
    target: np.ndarray
    affinity: Optional[float] = None


@dataclass(frozen=True)
class LossTerms:
    """Batch-mean structure loss (Å²), affinity squared error and weighted total."""
    structure: float
    affinity: float
    total: float


def _aligned_target(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    try:
        return kabsch(target, predicted).apply(target)
    except GeometryError:
        return target


def structure_loss(predicted: np.ndarray, target: np.ndarray, kind: str = "aligned-mse",
                   clamp: float = STRUCTURE_LOSS_CLAMP) -> Tuple[float, np.ndarray]:
    """
    Structure loss and its gradient with respect to the prediction.

    'aligned-mse' superposes the target onto the prediction and takes the
    mean squared deviation over atoms and coordinates; at the optimal
    superposition the rotation's own derivative vanishes, so the gradient is
    exact. 'clamped-aligned-error' averages per-atom distances clamped at
    `clamp`; its gradient treats the superposition as fixed.
    """
    aligned = _aligned_target(predicted, target)
    residual = predicted - aligned
    n = predicted.shape[0]
    if kind == "aligned-mse":
        return float(np.mean(residual ** 2)), 2.0 * residual / residual.size
    errors = np.linalg.norm(residual, axis=1)
    active = (errors > 0) & (errors < clamp)
    grad = np.zeros_like(residual)
    grad[active] = residual[active] / (errors[active, None] * n)
    return float(np.mean(np.minimum(errors, clamp))), grad


def _affinity_weight(config: TrainConfig, affinity_weight: Optional[float]) -> float:
    return config.lambda_b if affinity_weight is None else affinity_weight


def _sample_terms(params: FieldParams, frozen: FieldParams, sample: TrainingSample, config: TrainConfig):
    result = forward_pass(params, sample.state, sample.state.time)
    loss, grad = structure_loss(result.coords, np.asarray(sample.target, dtype=float),
                                config.structure_loss, config.clamp)
    head = None
    if sample.affinity is not None:
        # the affinity branch only sees the frozen trunk: its prediction, embedded at t = 1
        detached = result.coords if frozen is params else forward(frozen, sample.state, sample.state.time)[0]
        _, embedding = forward(frozen, sample.state.with_coords(detached, time=1.0), 1.0)
        predicted, hidden = affinity_head(params, embedding)
        head = (predicted - float(sample.affinity), embedding, hidden)
    return result, loss, grad, head


def loss_terms(params: FieldParams, batch: Sequence[TrainingSample], config: TrainConfig,
               frozen: Optional[FieldParams] = None, affinity_weight: Optional[float] = None) -> LossTerms:
    """
    Batch loss λ_X · structure + λ_B · affinity squared error.

    Args:
        frozen: Parameters that produce and embed the structure seen by the
                affinity head (defaults to `params`); holding them fixed
                while perturbing `params` reproduces the stop-gradient
                boundary of gradients()
        affinity_weight: Overrides λ_B
    """
    if not batch:
        raise NetworkError("empty batch")
    frozen = frozen or params
    structure = affinity = 0.0
    for sample in batch:
        _, loss, _, head = _sample_terms(params, frozen, sample, config)
        structure += loss
        if head is not None:
            affinity += head[0] ** 2
    structure /= len(batch)
    affinity /= len(batch)
    total = config.lambda_x * structure + _affinity_weight(config, affinity_weight) * affinity
    if not np.isfinite(total):
        raise NetworkError("non-finite loss")
    return LossTerms(structure=structure, affinity=affinity, total=total)


def gradients(params: FieldParams, batch: Sequence[TrainingSample], config: TrainConfig,
              affinity_weight: Optional[float] = None) -> Tuple[Dict[str, np.ndarray], LossTerms]:
    """
    Exact reverse-mode gradients of loss_terms(params, batch, config, frozen=params).

    Trunk gradients come from the structure term only; head gradients from
    the affinity term only.

    Raises:
        NetworkError: Empty batch or non-finite loss
    """
    if not batch:
        raise NetworkError("empty batch")
    lambda_b = _affinity_weight(config, affinity_weight)
    grads = {name: np.zeros_like(params[name]) for name in PARAMETER_NAMES}
    scale = 1.0 / len(batch)
    structure = affinity = 0.0
    for sample in batch:
        result, loss, grad, head = _sample_terms(params, params, sample, config)
        structure += loss
        d_out = config.lambda_x * scale * grad
        grads["w3"] += d_out.T @ result.h2
        grads["b3"] += d_out.sum(axis=0)
        d_z2 = (d_out @ params["w3"]) * (1.0 - result.h2 ** 2)
        grads["w2"] += d_z2.T @ result.h1
        grads["u2"] += d_z2.T @ result.pooled_h1
        grads["b2"] += d_z2.sum(axis=0)
        d_h1 = d_z2 @ params["w2"] + result.averaging @ (d_z2 @ params["u2"])
        d_z1 = d_h1 * (1.0 - result.h1 ** 2)
        grads["w1"] += d_z1.T @ result.features
        grads["b1"] += d_z1.sum(axis=0)
        if head is not None:
            error, embedding, hidden = head
            affinity += error ** 2
            d_value = 2.0 * lambda_b * scale * error
            grads["wa2"][0] += d_value * hidden
            grads["ba2"][0] += d_value
            d_hidden = d_value * params["wa2"][0] * (1.0 - hidden ** 2)
            grads["wa1"] += np.outer(d_hidden, embedding)
            grads["ba1"] += d_hidden
    structure *= scale
    affinity *= scale
    total = config.lambda_x * structure + lambda_b * affinity
    if not np.isfinite(total):
        raise NetworkError("non-finite loss")
    return grads, LossTerms(structure=structure, affinity=affinity, total=total)


# ============================================================================
# Checkpoints
# ============================================================================

def dump_params(params: FieldParams) -> bytes:
    """
    Serialize parameters.

    Layout: a text line '<magic> <version>', a JSON line listing
    [name, shape] pairs, then every tensor as little-endian float64 in the
    listed order.
    """
    layout = {"width": params.width, "tensors": [[name, list(params[name].shape)] for name in PARAMETER_NAMES]}
    header = f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n{json.dumps(layout)}\n".encode("utf-8")
    blob = b"".join(np.ascontiguousarray(params[name], dtype="<f8").tobytes() for name in PARAMETER_NAMES)
    return header + blob


def parse_params(data: bytes) -> FieldParams:
    """
    Inverse of dump_params.

    Raises:
        CheckpointError: Wrong magic or version, malformed layout, or a blob
            of the wrong length
    """
    parts = data.split(b"\n", 2)
    if len(parts) != 3:
        raise CheckpointError("truncated checkpoint header")
    magic_line, layout_line, blob = parts
    try:
        magic, version = magic_line.decode("utf-8").split()
        layout = json.loads(layout_line)
        entries: List[Tuple[str, Tuple[int, ...]]] = [(name, tuple(shape)) for name, shape in layout["tensors"]]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"malformed checkpoint header ({e})") from None
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a holoflow checkpoint (magic {magic!r})")
    if version != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {version}")
    expected = 8 * sum(int(np.prod(shape)) for _, shape in entries)
    if len(blob) != expected:
        raise CheckpointError(f"tensor blob has {len(blob)} bytes, expected {expected}")
    values = np.frombuffer(blob, dtype="<f8")
    tensors = {}
    offset = 0
    for name, shape in entries:
        size = int(np.prod(shape))
        tensors[name] = values[offset:offset + size].reshape(shape).astype(float)
        offset += size
    try:
        return FieldParams(tensors)
    except NetworkError as e:
        raise CheckpointError(f"invalid parameters: {e}") from None


def save_params(params: FieldParams, path: Union[str, Path]):
    Path(path).write_bytes(dump_params(params))
    logger.info("wrote checkpoint %s (width %d)", path, params.width)


def load_params(path: Union[str, Path]) -> FieldParams:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    return parse_params(data)
