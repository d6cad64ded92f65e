"""
Stream model, privacy parameters, randomness and Laplace noise shared by every mechanism.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

logger = logging.getLogger(__name__)


class DPStreamError(Exception):
    """Base class for every error raised by dpstream and the harness."""


class ParameterError(DPStreamError, ValueError):
    """A parameter is outside its valid range."""


class StateError(DPStreamError, RuntimeError):
    """An operation is not allowed in the object's current state."""


class InputError(DPStreamError, ValueError):
    """A mechanism was fed an update it cannot accept."""


class StreamFormatError(DPStreamError, ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class HarnessError(DPStreamError):
    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class UpdateKind(str, Enum):
    INSERT_ELEMENT = "insert_element"
    DELETE_ELEMENT = "delete_element"
    INSERT_EDGE = "insert_edge"
    DELETE_EDGE = "delete_edge"
    NOOP = "noop"


class StreamKind(str, Enum):
    ELEMENTS = "elements"
    GRAPH = "graph"


@dataclass(frozen=True)
class Update:
    """One stream update. Edge endpoints are stored with u < v."""

    kind: UpdateKind
    u: Optional[int] = None
    v: Optional[int] = None

    def __post_init__(self):
        if self.kind == UpdateKind.NOOP:
            return
        if self.u is None or self.u < 0:
            raise ParameterError(f"update {self.kind.value} needs a nonnegative id")
        if self.is_edge:
            if self.v is None or self.v < 0:
                raise ParameterError("edge update needs two nonnegative endpoints")
            if self.u == self.v:
                raise ParameterError(f"self-loop ({self.u}, {self.v}) is not allowed")
            if self.u > self.v:
                a, b = self.v, self.u
                object.__setattr__(self, "u", a)
                object.__setattr__(self, "v", b)

    @classmethod
    def insert(cls, item: int) -> "Update":
        return cls(UpdateKind.INSERT_ELEMENT, item)

    @classmethod
    def delete(cls, item: int) -> "Update":
        return cls(UpdateKind.DELETE_ELEMENT, item)

    @classmethod
    def insert_edge(cls, u: int, v: int) -> "Update":
        return cls(UpdateKind.INSERT_EDGE, u, v)

    @classmethod
    def delete_edge(cls, u: int, v: int) -> "Update":
        return cls(UpdateKind.DELETE_EDGE, u, v)

    @classmethod
    def noop(cls) -> "Update":
        return cls(UpdateKind.NOOP)

    @property
    def is_noop(self) -> bool:
        return self.kind == UpdateKind.NOOP

    @property
    def is_edge(self) -> bool:
        return self.kind in (UpdateKind.INSERT_EDGE, UpdateKind.DELETE_EDGE)

    @property
    def is_delete(self) -> bool:
        return self.kind in (UpdateKind.DELETE_ELEMENT, UpdateKind.DELETE_EDGE)

    @property
    def sign(self) -> int:
        if self.is_noop:
            return 0
        return -1 if self.is_delete else 1

    @property
    def item(self) -> int:
        if self.kind not in (UpdateKind.INSERT_ELEMENT, UpdateKind.DELETE_ELEMENT):
            raise InputError(f"{self.kind.value} update has no element id")
        return self.u

    @property
    def edge(self) -> Tuple[int, int]:
        if not self.is_edge:
            raise InputError(f"{self.kind.value} update has no edge")
        return (self.u, self.v)


@dataclass(frozen=True)
class UpdateStream:
    """A stream of exactly `horizon` updates over ids < `universe`.

    For graph streams `universe` is the vertex count n.
    """

    horizon: int
    universe: int
    kind: StreamKind
    updates: Tuple[Update, ...]

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        if self.universe < 1:
            raise ParameterError(f"universe size must be positive, got {self.universe}")
        object.__setattr__(self, "updates", tuple(self.updates))
        if len(self.updates) != self.horizon:
            raise ParameterError(
                f"stream has {len(self.updates)} updates but horizon {self.horizon}"
            )
        for position, update in enumerate(self.updates, start=1):
            if update.is_noop:
                continue
            if update.is_edge != (self.kind == StreamKind.GRAPH):
                raise ParameterError(
                    f"update {position} ({update.kind.value}) does not belong in a {self.kind.value} stream"
                )
            largest = update.v if update.is_edge else update.u
            if largest >= self.universe:
                raise ParameterError(
                    f"update {position} uses id {largest} outside universe {self.universe}"
                )

    @classmethod
    def padded(
        cls,
        updates: Sequence[Update],
        universe: int,
        kind: StreamKind,
        horizon: Optional[int] = None,
    ) -> "UpdateStream":
        """Build a stream, filling it with no-ops up to `horizon` (default: its own length)."""
        updates = list(updates)
        horizon = horizon if horizon is not None else max(len(updates), 1)
        if len(updates) > horizon:
            raise ParameterError(f"{len(updates)} updates do not fit horizon {horizon}")
        updates.extend(Update.noop() for _ in range(horizon - len(updates)))
        return cls(horizon, universe, kind, tuple(updates))

    def __iter__(self) -> Iterator[Update]:
        return iter(self.updates)

    def __len__(self) -> int:
        return self.horizon

    def __getitem__(self, index: int) -> Update:
        return self.updates[index]

    @property
    def incremental(self) -> bool:
        return not any(update.is_delete for update in self.updates)


class NoiseMode(str, Enum):
    STANDARD = "standard"
    OFF = "off"


class PrivacyBudget(BaseModel):
    """Privacy and accuracy parameters of one mechanism instance."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0)
    delta: float = Field(default=0.0, ge=0, lt=1)
    beta: float = Field(default=0.1, gt=0, lt=1)
    noise_mode: NoiseMode = NoiseMode.STANDARD

    @classmethod
    def create(cls, **kwargs) -> "PrivacyBudget":
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ParameterError(f"invalid privacy budget: {str(e)}") from e

    def scaled(self, factor: float) -> "PrivacyBudget":
        """Same budget with epsilon multiplied by `factor`; delta is split too when factor < 1."""
        return PrivacyBudget.create(
            epsilon=self.epsilon * factor,
            delta=self.delta * factor if factor <= 1 else self.delta,
            beta=self.beta,
            noise_mode=self.noise_mode,
        )

    @property
    def noise_off(self) -> bool:
        return self.noise_mode == NoiseMode.OFF


class RandomSource:
    """Seeded PCG64 generator. The same seed gives the same draws on every platform."""

    def __init__(self, seed: Union[int, np.random.SeedSequence]):
        if isinstance(seed, np.random.SeedSequence):
            self._sequence = seed
            self.seed = int(seed.entropy)
        else:
            if seed < 0 or seed >= 2**64:
                raise ParameterError(f"seed must fit in 64 bits, got {seed}")
            self._sequence = np.random.SeedSequence(seed)
            self.seed = int(seed)
        self._generator = np.random.Generator(np.random.PCG64(self._sequence))

    def uniforms(self, size: Optional[int] = None) -> Union[float, np.ndarray]:
        """Uniform draws strictly inside (0, 1), on a 2^-53 grid offset by half a step."""
        raw = self._generator.integers(0, 2**53, size=size, dtype=np.int64)
        values = (raw + 0.5) / 2.0**53
        return float(values) if size is None else values

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniforms()

    def spawn(self, count: int) -> List["RandomSource"]:
        return [RandomSource(child) for child in self._sequence.spawn(count)]

    @property
    def generator(self) -> np.random.Generator:
        return self._generator


def laplace_from_uniform(
    u: Union[float, np.ndarray], scale: float
) -> Union[float, np.ndarray]:
    """Inverse CDF of Lap(scale) evaluated at u in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    values = np.where(
        u < 0.5, scale * np.log(2.0 * u), -scale * np.log(2.0 - 2.0 * u)
    )
    values = values + 0.0
    return float(values) if values.ndim == 0 else values


def sample_laplace(
    scale: float,
    rng: RandomSource,
    noise_mode: NoiseMode = NoiseMode.STANDARD,
    size: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """Draw Laplace noise with the given scale; exact zeros when noise is off.

    Args:
        scale: Laplace scale b (variance 2b^2)
        rng: Source of the uniform draws
        noise_mode: NoiseMode.OFF returns zeros without consuming randomness
        size: None for a scalar, otherwise the number of draws

    Returns:
        float or np.ndarray: The noise sample(s)
    """
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be positive, got {scale}")
    if noise_mode == NoiseMode.OFF:
        return 0.0 if size is None else np.zeros(size)
    return laplace_from_uniform(rng.uniforms(size), scale)


def prefix_frequencies(stream: UpdateStream, t: int) -> np.ndarray:
    """Signed frequency vector f^t of an element stream after its first t updates."""
    if stream.kind != StreamKind.ELEMENTS:
        raise ParameterError("prefix_frequencies needs an element stream")
    if not 1 <= t <= stream.horizon:
        raise ParameterError(f"step {t} outside [1, {stream.horizon}]")
    frequencies = np.zeros(stream.universe, dtype=np.int64)
    for update in stream.updates[:t]:
        if not update.is_noop:
            frequencies[update.item] += update.sign
    return frequencies


def edge_frequencies(stream: UpdateStream, t: int) -> Dict[Tuple[int, int], int]:
    """Signed per-edge frequencies of a graph stream after its first t updates."""
    if stream.kind != StreamKind.GRAPH:
        raise ParameterError("edge_frequencies needs a graph stream")
    if not 1 <= t <= stream.horizon:
        raise ParameterError(f"step {t} outside [1, {stream.horizon}]")
    frequencies: Counter = Counter()
    for update in stream.updates[:t]:
        if not update.is_noop:
            frequencies[update.edge] += update.sign
    return dict(frequencies)


class ContinualMechanism(Protocol):
    """Anything that consumes a stream one update at a time and releases an output."""

    def step(self, update: Update) -> object:
        ...

    def release(self) -> object:
        ...
