"""DTLZ1-7, ZDT1-6 and TP test problems turned into choice datasets.

A task's ground-truth choice set is the set of objects whose objective
vectors are non-dominated under minimization among the task's objects.

Seeding rule: task ``n`` of a dataset generated with seed ``s`` draws all of
its objects from ``np.random.default_rng(SeedSequence(s, spawn_key=(n,)))``,
so tasks can be produced in any order (or in parallel) with identical results.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .choice_core import ChoiceTask, Dataset, InvalidArgument, pareto_front_batch

DTLZ_OBJECTIVES = 5
DEFAULT_FEATURES = 6
ZDT5_BITS = (30, 5)
DTLZ4_ALPHA = 100.0

PROBLEMS = tuple([f"DTLZ{i}" for i in range(1, 8)] + [f"ZDT{i}" for i in range(1, 7)] + ["TP"])


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    feature_dim: int
    objective_dim: int
    binary: bool = False

    def __post_init__(self):
        if self.name not in PROBLEMS:
            raise InvalidArgument(f"unknown problem {self.name!r}; choose from {', '.join(PROBLEMS)}")


def get_problem(name: str) -> ProblemSpec:
    name = name.upper()
    if name not in PROBLEMS:
        raise InvalidArgument(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    if name == "TP":
        return ProblemSpec(name, 2, 2)
    if name == "ZDT5":
        return ProblemSpec(name, sum(ZDT5_BITS), 2, binary=True)
    if name.startswith("ZDT"):
        return ProblemSpec(name, DEFAULT_FEATURES, 2)
    return ProblemSpec(name, DEFAULT_FEATURES, DTLZ_OBJECTIVES)


# ---------------------------------------------------------------------------
# DTLZ family, M objectives over n = M - 1 + k variables in [0, 1]


def _dtlz_g1(xm):
    k = xm.shape[1]
    return 100.0 * (k + ((xm - 0.5) ** 2 - np.cos(20.0 * np.pi * (xm - 0.5))).sum(axis=1))


def _dtlz_g2(xm):
    return ((xm - 0.5) ** 2).sum(axis=1)


def _linear_front(xp, g):
    # DTLZ1 shape: f_i = 0.5 (1+g) x_1 ... x_{M-i} (1 - x_{M-i+1})
    n, mm1 = xp.shape
    M = mm1 + 1
    F = np.empty((n, M))
    for i in range(M):
        f = 0.5 * (1.0 + g)
        f = f * np.prod(xp[:, : M - 1 - i], axis=1)
        if i > 0:
            f = f * (1.0 - xp[:, M - 1 - i])
        F[:, i] = f
    return F


def _spherical_front(theta, g):
    # theta already scaled to [0, pi/2]
    n, mm1 = theta.shape
    M = mm1 + 1
    F = np.empty((n, M))
    for i in range(M):
        f = 1.0 + g
        f = f * np.prod(np.cos(theta[:, : M - 1 - i]), axis=1)
        if i > 0:
            f = f * np.sin(theta[:, M - 1 - i])
        F[:, i] = f
    return F


def _dtlz(name: str, X: np.ndarray, M: int) -> np.ndarray:
    xp, xm = X[:, : M - 1], X[:, M - 1 :]
    if name == "DTLZ1":
        return _linear_front(xp, _dtlz_g1(xm))
    if name == "DTLZ2":
        return _spherical_front(xp * np.pi / 2, _dtlz_g2(xm))
    if name == "DTLZ3":
        return _spherical_front(xp * np.pi / 2, _dtlz_g1(xm))
    if name == "DTLZ4":
        return _spherical_front(xp**DTLZ4_ALPHA * np.pi / 2, _dtlz_g2(xm))
    if name in ("DTLZ5", "DTLZ6"):
        g = _dtlz_g2(xm) if name == "DTLZ5" else (xm**0.1).sum(axis=1)
        theta = (1.0 + 2.0 * g[:, None] * xp) / (2.0 * (1.0 + g[:, None]))
        theta[:, 0] = xp[:, 0]
        return _spherical_front(theta * np.pi / 2, g)
    if name == "DTLZ7":
        k = xm.shape[1]
        g = 1.0 + 9.0 / k * xm.sum(axis=1)
        h = M - (xp / (1.0 + g[:, None]) * (1.0 + np.sin(3.0 * np.pi * xp))).sum(axis=1)
        return np.column_stack([xp, (1.0 + g) * h])
    raise InvalidArgument(f"unknown DTLZ problem {name}")


# ---------------------------------------------------------------------------
# ZDT family, two objectives


def _zdt5_unitation(X):
    first, second = ZDT5_BITS
    return X[:, :first].sum(axis=1), X[:, first : first + second].sum(axis=1)


def _zdt(name: str, X: np.ndarray) -> np.ndarray:
    n = X.shape[1]
    if name == "ZDT5":
        u1, u2 = _zdt5_unitation(X)
        f1 = 1.0 + u1
        g = np.where(u2 < ZDT5_BITS[1], 2.0 + u2, 1.0)
        return np.column_stack([f1, g / f1])
    x1, rest = X[:, 0], X[:, 1:]
    if name == "ZDT4":
        # unit-cube features map onto the published [-5, 5] box
        rest = 10.0 * rest - 5.0
        g = 1.0 + 10.0 * (n - 1) + (rest**2 - 10.0 * np.cos(4.0 * np.pi * rest)).sum(axis=1)
        return np.column_stack([x1, g * (1.0 - np.sqrt(x1 / g))])
    if name == "ZDT6":
        f1 = 1.0 - np.exp(-4.0 * x1) * np.sin(6.0 * np.pi * x1) ** 6
        g = 1.0 + 9.0 * (rest.sum(axis=1) / (n - 1)) ** 0.25
        return np.column_stack([f1, g * (1.0 - (f1 / g) ** 2)])
    g = 1.0 + 9.0 * rest.sum(axis=1) / (n - 1)
    if name == "ZDT1":
        f2 = g * (1.0 - np.sqrt(x1 / g))
    elif name == "ZDT2":
        f2 = g * (1.0 - (x1 / g) ** 2)
    elif name == "ZDT3":
        f2 = g * (1.0 - np.sqrt(x1 / g) - x1 / g * np.sin(10.0 * np.pi * x1))
    else:
        raise InvalidArgument(f"unknown ZDT problem {name}")
    return np.column_stack([x1, f2])


def _tp(X: np.ndarray) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    return np.column_stack([(x1 - 1.0) ** 2 + x2**2, (x1 + 1.0) ** 2 + x2**2])


def _check_domain(spec: ProblemSpec, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != spec.feature_dim:
        raise InvalidArgument(f"{spec.name} expects {spec.feature_dim} features, got shape {X.shape}")
    if spec.binary:
        if not np.all((X == 0) | (X == 1)):
            raise InvalidArgument(f"{spec.name} features must be binary")
    elif not (np.all(np.isfinite(X)) and np.all(X >= 0) and np.all(X <= 1)):
        raise InvalidArgument(f"{spec.name} features must lie in the unit hypercube")


def evaluate_objectives_batch(spec: ProblemSpec, X) -> np.ndarray:
    """Objective vectors (minimization) for each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    _check_domain(spec, X)
    if spec.name == "TP":
        return _tp(X)
    if spec.name.startswith("ZDT"):
        return _zdt(spec.name, X)
    return _dtlz(spec.name, X, spec.objective_dim)


def evaluate_objectives(spec: ProblemSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument("expected a single feature vector")
    return evaluate_objectives_batch(spec, x[None, :])[0]


def sample_objects(spec: ProblemSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.binary:
        return rng.integers(0, 2, size=(n, spec.feature_dim)).astype(np.float64)
    return rng.random((n, spec.feature_dim))


def sample_object(spec: ProblemSpec, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw from the problem's feature domain."""
    return sample_objects(spec, 1, rng)[0]


def label_front(objectives: np.ndarray) -> np.ndarray:
    """Choice masks for stacked objective vectors ``(B, m, M)`` under minimization."""
    return pareto_front_batch(-np.asarray(objectives, dtype=np.float64))


def generate_task(spec: ProblemSpec, m: int, rng: np.random.Generator, task_id: str = ""):
    if m < 1:
        raise InvalidArgument("task size must be at least 1")
    X = sample_objects(spec, m, rng)
    F = evaluate_objectives_batch(spec, X)
    return ChoiceTask(X, task_id), label_front(F[None])[0]


def task_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def generate_dataset(spec: ProblemSpec | str, n_tasks: int, m: int, seed: int) -> Dataset:
    if isinstance(spec, str):
        spec = get_problem(spec)
    if n_tasks < 1:
        raise InvalidArgument("n_tasks must be at least 1")
    if m < 1:
        raise InvalidArgument("task size must be at least 1")
    X = np.stack([sample_objects(spec, m, task_rng(seed, n)) for n in range(n_tasks)])
    F = evaluate_objectives_batch(spec, X.reshape(-1, spec.feature_dim)).reshape(n_tasks, m, -1)
    C = label_front(F)
    sizes = C.sum(axis=1)
    meta = {
        "positive_rate": float(C.mean()),
        "all_chosen_tasks": int((sizes == m).sum()),
        "mean_choice_size": float(sizes.mean()),
    }
    ids = [f"{spec.name}-{seed}-{n}" for n in range(n_tasks)]
    return Dataset(X, C, ids, problem=spec.name, seed=seed, metadata=meta)
