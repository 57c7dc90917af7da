"""
Flow-matching core: CondOT interpolation, the CFM regression loss, the
clamped VD-ODE update and trajectory integration.

A field (endpoint predictor) is any callable ``field(state, t)`` returning
the predicted t = 1 coordinates for every row of `state`. Integration never
mutates its inputs; each step produces a new ComplexState.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .config import CLAMP_LOWER, CLAMP_UPPER, DEFAULT_ETA, DEFAULT_STEPS
from .errors import ConfigError, GeometryError, IntegrationError, StructureError
from .geometry import kabsch
from .structures import ComplexState, Frame, Trajectory

logger = logging.getLogger(__name__)

Field = Callable[[ComplexState, float], np.ndarray]


@dataclass(frozen=True)
class FlowConfig:
    """
    Sampler constants.

    Attributes:
        steps: Number of integration steps i
        eta: Step scale η of the VD-ODE update
        clamp_lo: Lower clamp bound of both update coefficients
        clamp_hi: Upper clamp bound of both update coefficients
        align_each_step: Superpose x_n onto the prediction before each update
        align_protein_only: Fit that superposition on protein rows only
    """
    steps: int = DEFAULT_STEPS
    eta: float = DEFAULT_ETA
    clamp_lo: float = CLAMP_LOWER
    clamp_hi: float = CLAMP_UPPER
    align_each_step: bool = True
    align_protein_only: bool = False

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if not 0.0 < self.clamp_lo < self.clamp_hi < 1.0:
            raise ConfigError(
                f"clamp bounds must satisfy 0 < lo < hi < 1, got ({self.clamp_lo}, {self.clamp_hi})"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def interpolate(x0: ComplexState, x1: ComplexState, t: float) -> ComplexState:
    """
    CondOT path point (1 - t) x0 + t x1.

    Raises:
        StructureError: If the partitions differ or t is outside [0, 1]
    """
    if not x0.same_partition(x1):
        raise StructureError("cannot interpolate between states with different partitions")
    if not 0.0 <= t <= 1.0:
        raise StructureError(f"t = {t} outside [0, 1]")
    return x0.with_coords((1.0 - t) * x0.coords + t * x1.coords, time=t)


def cfm_loss(predicted: np.ndarray, target: np.ndarray) -> float:
    """Mean squared deviation over atoms and coordinates (Å²)."""
    predicted = np.asarray(predicted, dtype=float)
    target = np.asarray(target, dtype=float)
    if predicted.shape != target.shape:
        raise StructureError(f"shape mismatch: {predicted.shape} vs {target.shape}")
    return float(np.mean((predicted - target) ** 2))


def vd_coefficients(n: int, config: FlowConfig) -> Tuple[float, float]:
    """
    Clamped (a, b) of step n.

    With t = n / i and s = (n + 1) / i, the raw coefficients are
    r = (1 - s) / (1 - t) scaled by η, and (1 - r) scaled by η.
    """
    if not 0 <= n < config.steps:
        raise IntegrationError(f"step index outside [0, {config.steps})", n)
    t = n / config.steps
    s = (n + 1) / config.steps
    ratio = (1.0 - s) / (1.0 - t)
    a = float(np.clip(ratio * config.eta, config.clamp_lo, config.clamp_hi))
    b = float(np.clip((1.0 - ratio) * config.eta, config.clamp_lo, config.clamp_hi))
    return a, b


def vd_ode_step(state: ComplexState, predicted: np.ndarray, n: int, config: FlowConfig) -> ComplexState:
    """One VD-ODE update x_{n+1} = a x_n + b x̂1, stamped with time (n + 1) / i."""
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape != state.coords.shape:
        raise IntegrationError(f"prediction shape {predicted.shape} does not match state {state.coords.shape}", n)
    a, b = vd_coefficients(n, config)
    return state.with_coords(a * state.coords + b * predicted, time=(n + 1) / config.steps)


def _align_onto(state: ComplexState, predicted: np.ndarray, config: FlowConfig, n: int) -> ComplexState:
    rows = slice(0, state.n_protein) if config.align_protein_only else slice(None)
    try:
        transform = kabsch(state.coords[rows], predicted[rows])
    except GeometryError as e:
        logger.warning("step %d: skipping per-step alignment (%s)", n, e)
        return state
    return state.with_coords(transform.apply(state.coords))


def integrate(field: Field, x0: ComplexState, config: Optional[FlowConfig] = None,
              seed: Optional[int] = None) -> Trajectory:
    """
    Run the sampler from a prior state to t = 1.

    For n = 0 .. i-1 the field predicts x̂1 from (x_n, n/i); if per-step
    alignment is on, x_n is rigidly superposed onto x̂1 first; then the
    VD-ODE update produces x_{n+1}. Frame 0 is x0 and frame n holds x_n.

    Args:
        field: Endpoint predictor
        x0: Prior sample at t = 0
        config: Sampler constants (defaults when omitted)
        seed: Recorded in the trajectory header

    Raises:
        IntegrationError: If the field returns non-finite or misshaped
            coordinates; carries the step index
    """
    config = config or FlowConfig()
    state = x0.with_coords(x0.coords, time=0.0)
    frames = [Frame(step=0, time=0.0, state=state)]
    for n in range(config.steps):
        t = n / config.steps
        predicted = np.asarray(field(state, t), dtype=float)
        if predicted.shape != state.coords.shape:
            raise IntegrationError(
                f"field returned shape {predicted.shape}, expected {state.coords.shape}", n
            )
        if not np.all(np.isfinite(predicted)):
            raise IntegrationError("field returned non-finite coordinates", n)
        if config.align_each_step:
            state = _align_onto(state, predicted, config, n)
        state = vd_ode_step(state, predicted, n, config)
        frames.append(Frame(step=n + 1, time=state.time, state=state))
        logger.debug("step %d: t=%.4f", n + 1, state.time)
    return Trajectory(frames=tuple(frames), config=config.to_dict(), seed=seed)
