"""Projected gradient ascent with adaptive step size and multiple starts."""
import logging

from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .utils import ConfigurationError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

# An objective returns its value and ascent direction at a point
Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]
# A retraction maps a point back onto the constraint set
Retraction = Callable[[np.ndarray], np.ndarray]
Distance = Callable[[np.ndarray, np.ndarray], float]

STEP_GROWTH = 1.2
STEP_CAP = 1e8


@dataclass(frozen=True)
class GdParams:
    """
    Settings of the projected gradient ascent.

    Attributes
    ----------
    learning_rate : float
        The initial step size, relative to the scale of the objective.
    max_iter : int
        Iteration budget per start.
    tol : float
        Convergence threshold on the relative objective change.
    restarts : int
        Number of starting points tried per component.
    seed : int
        Seed of the random starting points.
    step_tol : float
        Convergence threshold on the distance between consecutive iterates.
    max_halvings : int
        Consecutive step halvings allowed before the iterate is declared stationary.
    """

    learning_rate: float = 0.05
    max_iter: int = 2000
    tol: float = 1e-9
    restarts: int = 3
    seed: int = 0
    step_tol: float = 1e-8
    max_halvings: int = 30

    def __post_init__(self):
        for name in ("learning_rate", "tol", "step_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("max_iter", "restarts", "max_halvings"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be unsigned, got {self.seed}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, state: Mapping[str, Any]) -> "GdParams":
        return cls(**{k: v for k, v in state.items() if k in cls.__dataclass_fields__})


@dataclass
class AscentResult:
    """The outcome of one ascent run."""

    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    residual: float
    trace: List[float] = field(default_factory=list)
    halvings: int = 0


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))


def projected_ascent(objective: Objective, retract: Retraction, x0: np.ndarray, params: GdParams,
                     scale: float = 1.0, distance: Distance = euclidean) -> AscentResult:
    """
    Maximize ``objective`` over the set ``retract`` projects onto.

    Each step moves to ``retract(x + (lr / scale) * direction)``. A step that lowers the
    objective is rejected and halves ``lr``; an accepted step grows it by ``STEP_GROWTH``.
    The run converges when the relative objective change is at most ``params.tol`` and the
    iterate moved by at most ``params.step_tol``. Exhausting ``params.max_halvings``
    consecutive halvings means no representable step improves the objective, which is
    also reported as converged.

    The objective trace holds the starting value and the value after each accepted step,
    and is therefore non-decreasing.
    """
    x = retract(np.asarray(x0, dtype=np.float64))
    value, direction = objective(x)
    trace = [value]
    lr = params.learning_rate
    halvings = 0
    total_halvings = 0
    floor = 1e-12 * scale if scale > 0 else np.finfo(float).tiny
    residual = np.inf
    converged = False
    iteration = 0
    for iteration in range(1, params.max_iter + 1):
        candidate = retract(x + (lr / scale) * direction)
        cand_value, cand_direction = objective(candidate)
        if not np.isfinite(cand_value) or cand_value < value:
            lr /= 2.0
            halvings += 1
            total_halvings += 1
            if halvings > params.max_halvings:
                converged = True
                logger.debug("Step size exhausted after %d iterations at %0.6g", iteration, value)
                break
            continue
        halvings = 0
        step = distance(candidate, x)
        change = abs(cand_value - value) / max(abs(cand_value), floor)
        x, value, direction = candidate, cand_value, cand_direction
        trace.append(value)
        residual = step
        lr = min(lr * STEP_GROWTH, STEP_CAP)
        if change <= params.tol and step <= params.step_tol:
            converged = True
            break
    return AscentResult(x, float(value), iteration, converged, float(residual), trace, total_halvings)


def best_of_starts(objective: Objective, retract: Retraction, starts: Sequence[np.ndarray], params: GdParams,
                   scale: float = 1.0, distance: Distance = euclidean) -> Tuple[int, AscentResult]:
    """
    Run :func:`projected_ascent` from every start and keep the best final objective.

    Ties keep the earlier start.

    Returns
    -------
    index : int
    result : :class:`AscentResult`
    """
    best: Optional[AscentResult] = None
    best_index = -1
    for i, start in enumerate(starts):
        result = projected_ascent(objective, retract, start, params, scale, distance)
        logger.debug(
            "Start %d: value %0.8g after %d iterations (converged=%r)", i, result.value, result.iterations,
            result.converged)
        if best is None or result.value > best.value:
            best, best_index = result, i
    return best_index, best


def unit_normalize(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x)
    if norm == 0:
        return x
    return x / norm


def central_difference(value: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """The gradient of ``value`` at ``x`` by central differences."""
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (value(x + e) - value(x - e)) / (2 * step)
    return grad
