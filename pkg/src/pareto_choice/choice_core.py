"""Choice tasks, choice masks and the Pareto machinery behind predictions.

Dominance is oriented towards maximization: a point dominates another when it
is at least as large in every utility coordinate and strictly larger in one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np


class InvalidArgument(ValueError):
    """Raised when inputs violate an operation's preconditions."""


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgument(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgument(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite values")
    return arr


def as_mask(bits, m: int | None = None) -> np.ndarray:
    """Validate a 0/1 vector and return it as an int8 array."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise InvalidArgument(f"choice mask must be 1-d, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidArgument("choice mask entries must be exactly 0 or 1")
    if m is not None and arr.shape[0] != m:
        raise InvalidArgument(f"choice mask has length {arr.shape[0]}, expected {m}")
    return arr.astype(np.int8)


@dataclass(frozen=True)
class ChoiceTask:
    """A query set of ``m`` objects, each described by ``d`` real features."""

    features: np.ndarray
    task_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "features", _as_matrix(self.features, "features"))

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass
class Dataset:
    """Observed choices ``(task, mask)`` that all share the task size ``m``.

    Tasks are stored stacked: ``features`` has shape ``(N, m, d)`` and
    ``choices`` has shape ``(N, m)``.
    """

    features: np.ndarray
    choices: np.ndarray
    task_ids: list[str] = field(default_factory=list)
    problem: str = ""
    seed: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.choices = np.asarray(self.choices).astype(np.int8)
        if self.features.ndim != 3:
            raise InvalidArgument(f"features must have shape (N, m, d), got {self.features.shape}")
        n, m, d = self.features.shape
        if n < 1 or m < 1 or d < 1:
            raise InvalidArgument(f"dataset must be non-empty, got shape {self.features.shape}")
        if self.choices.shape != (n, m):
            raise InvalidArgument(
                f"choices shape {self.choices.shape} does not match features {self.features.shape}"
            )
        if not np.all((self.choices == 0) | (self.choices == 1)):
            raise InvalidArgument("choice masks must be 0/1")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgument("features contain non-finite values")
        if not self.task_ids:
            self.task_ids = [str(i) for i in range(n)]
        elif len(self.task_ids) != n:
            raise InvalidArgument("task_ids length does not match number of tasks")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    def __iter__(self) -> Iterator[tuple[ChoiceTask, np.ndarray]]:
        for i in range(len(self)):
            yield ChoiceTask(self.features[i], self.task_ids[i]), self.choices[i]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.choices[idx],
            [self.task_ids[i] for i in idx],
            problem=self.problem,
            seed=self.seed,
            metadata=dict(self.metadata),
        )

    def positive_rate(self) -> float:
        return float(self.choices.mean())


def dominates(a, b) -> bool:
    """True iff ``a`` dominates ``b``: ``a >= b`` everywhere and ``a > b`` somewhere."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size == 0:
        raise InvalidArgument(f"dimension mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def dominance_matrix(Z: np.ndarray) -> np.ndarray:
    """``D[..., j, i]`` is True iff point ``j`` dominates point ``i``.

    Works on a single ``(m, d')`` embedding or a stack ``(B, m, d')``.
    """
    zj = Z[..., :, None, :]
    zi = Z[..., None, :, :]
    return np.all(zj >= zi, axis=-1) & np.any(zj > zi, axis=-1)


def pareto_front(Z) -> np.ndarray:
    """Mask of points not dominated by any other point of ``Z``."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[0] == 0 or Z.shape[1] == 0:
        raise InvalidArgument(f"embedding must be a non-empty (m, d') matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidArgument("embedding contains non-finite values")
    return (~dominance_matrix(Z).any(axis=0)).astype(np.int8)


def pareto_front_batch(Z: np.ndarray) -> np.ndarray:
    """Row-wise :func:`pareto_front` for a stack of embeddings ``(B, m, d')``."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 3 or 0 in Z.shape:
        raise InvalidArgument(f"expected a non-empty (B, m, d') stack, got shape {Z.shape}")
    return (~dominance_matrix(Z).any(axis=-2)).astype(np.int8)


def predict_choice(task: ChoiceTask, params) -> np.ndarray:
    """Predicted choice set: the Pareto front of the embedded task."""
    from .embed_net import forward

    Z, _ = forward(task.features, params, mode="inference")
    return pareto_front(Z)
