"""Finite-alphabet distributions, channels and information measures.

Everything is in bits. Distributions and channels are immutable wrappers
around read-only float64 arrays; every constructor validates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PROB_TOL = 1e-9
ALGEBRA_TOL = 1e-12
ZERO_PROB = 1e-12
MAX_CHANNEL_ENTRIES = 2**26


class ResourceLimitError(RuntimeError):
    """An enumeration or table would exceed the configured memory budget."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


def _check_simplex(arr: np.ndarray, what: str) -> None:
    if arr.size == 0 or arr.shape[-1] == 0:
        raise ValueError(f"{what}: alphabet size must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: non-finite entries")
    if np.any(arr < -PROB_TOL) or np.any(arr > 1 + PROB_TOL):
        raise ValueError(f"{what}: entries must lie in [0, 1]")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > PROB_TOL):
        raise ValueError(f"{what}: entries must sum to 1 (got {sums})")


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Probability mass function over ``{0, ..., len-1}``."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("ProbVector: expected a one-dimensional array")
        _check_simplex(arr, "ProbVector")
        object.__setattr__(self, "probs", _frozen(np.clip(arr, 0.0, 1.0)))

    def __len__(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, size: int) -> "ProbVector":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point(cls, size: int, index: int) -> "ProbVector":
        arr = np.zeros(size)
        arr[index] = 1.0
        return cls(arr)

    def to_json(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, data: dict | str) -> "ProbVector":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(np.asarray(data["probs"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic matrix; ``matrix[x, y] = P(y | x)``."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.matrix, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("Channel: expected a non-empty 2-D array")
        _check_simplex(arr, "Channel row")
        object.__setattr__(self, "matrix", _frozen(np.clip(arr, 0.0, 1.0)))

    @property
    def input_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def output_size(self) -> int:
        return self.matrix.shape[1]

    @property
    def rows(self) -> list[ProbVector]:
        return [ProbVector(row) for row in self.matrix]

    @classmethod
    def identity(cls, size: int) -> "Channel":
        return cls(np.eye(size))

    @classmethod
    def constant(cls, input_size: int, output: ProbVector) -> "Channel":
        return cls(np.tile(output.probs, (input_size, 1)))

    def output_distribution(self, input: ProbVector) -> ProbVector:
        if len(input) != self.input_size:
            raise ValueError(
                f"input has {len(input)} symbols, channel expects {self.input_size}"
            )
        return ProbVector(input.probs @ self.matrix)

    def to_json(self) -> dict:
        return {"rows": self.matrix.tolist()}

    @classmethod
    def from_json(cls, data: dict | str) -> "Channel":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(np.asarray(data["rows"], dtype=np.float64))


def binary_entropy(p: float) -> float:
    """Binary entropy ``H_b(p)`` in bits, with ``0 log 0 = 0``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"binary_entropy: p={p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def binary_convolution(a: float, b: float) -> float:
    """Crossover of BSC(a) followed by BSC(b)."""
    return a * (1.0 - b) + (1.0 - a) * b


def entropy_array(p: np.ndarray, axis=None) -> np.ndarray | float:
    """Shannon entropy of a (possibly unnormalized-free) probability array.

    ``axis=None`` treats the whole array as one joint distribution.
    """
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=axis)


def entropy(p: ProbVector) -> float:
    return float(entropy_array(p.probs))


def mutual_information_joint(joint: np.ndarray) -> float:
    """I(A;B) for a 2-D joint table ``joint[a, b]``."""
    joint = np.asarray(joint, dtype=np.float64)
    value = (
        entropy_array(joint.sum(axis=1))
        + entropy_array(joint.sum(axis=0))
        - entropy_array(joint)
    )
    return max(float(value), 0.0)


def conditional_mutual_information(joint: np.ndarray) -> float:
    """I(A;B|C) for a 3-D joint table ``joint[a, b, c]``."""
    joint = np.asarray(joint, dtype=np.float64)
    value = (
        entropy_array(joint.sum(axis=1))
        + entropy_array(joint.sum(axis=0))
        - entropy_array(joint)
        - entropy_array(joint.sum(axis=(0, 1)))
    )
    return max(float(value), 0.0)


def mutual_information(input: ProbVector, ch: Channel) -> float:
    """I(X;Y) for input distribution ``input`` sent through ``ch``."""
    if len(input) != ch.input_size:
        raise ValueError(
            f"input has {len(input)} symbols, channel expects {ch.input_size}"
        )
    output = input.probs @ ch.matrix
    value = entropy_array(output) - float(input.probs @ entropy_array(ch.matrix, axis=1))
    return max(float(value), 0.0)


def compose(first: Channel, second: Channel) -> Channel:
    """Cascade ``first`` (A->B) then ``second`` (B->C)."""
    if first.output_size != second.input_size:
        raise ValueError(
            f"cannot compose: first outputs {first.output_size} symbols, "
            f"second expects {second.input_size}"
        )
    return Channel(first.matrix @ second.matrix)


def bsc(p: float) -> Channel:
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"bsc: crossover {p} outside [0, 0.5]")
    return Channel(np.array([[1.0 - p, p], [p, 1.0 - p]]))


def binary_erasure(e: float) -> Channel:
    """BEC(e) with output alphabet ``(0, 1, erasure)``."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"binary_erasure: erasure probability {e} outside [0, 1]")
    return Channel(np.array([[1.0 - e, 0.0, e], [0.0, 1.0 - e, e]]))


def product_channel(ch: Channel, k: int) -> Channel:
    """k independent uses of ``ch`` on the same input.

    Output ``(y_1, ..., y_k)`` is indexed lexicographically with ``y_1``
    most significant.
    """
    if k < 1:
        raise ValueError(f"product_channel: k must be >= 1, got {k}")
    if ch.input_size * ch.output_size**k > MAX_CHANNEL_ENTRIES:
        raise ResourceLimitError(
            f"product_channel: {ch.output_size}**{k} outputs exceed the memory budget"
        )
    m = ch.matrix
    out = m
    for _ in range(k - 1):
        out = (out[:, :, None] * m[:, None, :]).reshape(ch.input_size, -1)
    return Channel(out)


class BayesInversion(NamedTuple):
    output_marginal: ProbVector
    reverse: Channel
    undefined_outputs: tuple[int, ...]


def bayes_invert(input: ProbVector, ch: Channel) -> BayesInversion:
    """Reverse channel ``P(x|y)`` and output marginal ``P(y)``.

    Outputs with zero probability get a uniform reverse row and are listed
    in ``undefined_outputs``.
    """
    if len(input) != ch.input_size:
        raise ValueError(
            f"input has {len(input)} symbols, channel expects {ch.input_size}"
        )
    joint = input.probs[:, None] * ch.matrix
    py = joint.sum(axis=0)
    dead = py < ZERO_PROB
    rev = np.empty((ch.output_size, ch.input_size))
    rev[~dead] = (joint[:, ~dead] / py[~dead]).T
    rev[dead] = 1.0 / ch.input_size
    return BayesInversion(
        ProbVector(py / py.sum()),
        Channel(rev),
        tuple(int(i) for i in np.flatnonzero(dead)),
    )
