"""Budgeted hyperparameter search over loss weights, peak learning rate and network size.

The default tuner starts with a Latin-hypercube batch and then proposes
points by maximizing expected improvement under a Gaussian-process surrogate.
Loss weights live on a simplex; for the surrogate they are expressed in an
orthonormal basis of the simplex plane so distances are preserved.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np
from scipy import linalg
from scipy.stats import norm, qmc

from .choice_core import InvalidArgument
from .losses import LossWeights

logger = logging.getLogger(__name__)

N_WEIGHTS = 4
DEFAULT_INITIAL = 10


@dataclass(frozen=True)
class SearchSpace:
    """``pinned[k]`` fixes loss weight ``k``; free weights share the remaining mass."""

    pinned: tuple = (None, None, None, None)
    lr_range: tuple[float, float] = (1e-4, 1e-1)
    layers_range: tuple[int, int] = (1, 3)
    units_range: tuple[int, int] = (8, 64)

    def __post_init__(self):
        if len(self.pinned) != N_WEIGHTS:
            raise InvalidArgument("pinned must have one entry per loss weight")
        fixed = [p for p in self.pinned if p is not None]
        if any(p < 0 for p in fixed) or sum(fixed) > 1 + 1e-12:
            raise InvalidArgument("pinned weights must be non-negative and sum to at most 1")
        if len(fixed) == N_WEIGHTS and abs(sum(fixed) - 1) > 1e-9:
            raise InvalidArgument("fully pinned weights must sum to 1")
        lo, hi = self.lr_range
        if not 0 < lo <= hi:
            raise InvalidArgument(f"invalid learning-rate range {self.lr_range}")
        if not 0 <= self.layers_range[0] <= self.layers_range[1]:
            raise InvalidArgument(f"invalid layer range {self.layers_range}")
        if not 1 <= self.units_range[0] <= self.units_range[1]:
            raise InvalidArgument(f"invalid unit range {self.units_range}")

    def pin(self, index: int, value: float) -> "SearchSpace":
        pinned = list(self.pinned)
        pinned[index] = float(value)
        return replace(self, pinned=tuple(pinned))

    @property
    def free(self) -> list[int]:
        return [k for k, p in enumerate(self.pinned) if p is None]

    @property
    def free_mass(self) -> float:
        return 1.0 - sum(p for p in self.pinned if p is not None)

    @property
    def unit_dim(self) -> int:
        return len(self.free) + 3

    def contains(self, conf: "Configuration") -> bool:
        a = np.asarray(conf.alphas)
        ok = np.all(a >= 0) and abs(a.sum() - 1) <= 1e-9
        ok &= all(p is None or a[k] == p for k, p in enumerate(self.pinned))
        ok &= self.lr_range[0] <= conf.max_lr <= self.lr_range[1]
        ok &= self.layers_range[0] <= conf.hidden_layers <= self.layers_range[1]
        ok &= self.units_range[0] <= conf.hidden_units <= self.units_range[1]
        return bool(ok)

    def from_unit(self, u) -> "Configuration":
        """Map a point of the unit cube onto a configuration.

        Free weights are normalized exponentials ``-log(1-u)``, so a uniform
        ``u`` gives a uniform draw on the free simplex.
        """
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0 - 1e-12)
        free = self.free
        alphas = [0.0 if p is None else float(p) for p in self.pinned]
        if free:
            e = -np.log1p(-u[: len(free)]) + 1e-300
            share = e / e.sum() * self.free_mass
            for k, v in zip(free, share):
                alphas[k] = float(v)
            # put any rounding residue on the last free weight
            alphas[free[-1]] = self.free_mass - sum(alphas[k] for k in free[:-1])
            alphas[free[-1]] = max(alphas[free[-1]], 0.0)
        ul, ulay, uunit = u[len(free) :]
        lo, hi = np.log(self.lr_range[0]), np.log(self.lr_range[1])
        lr = float(np.exp(lo + ul * (hi - lo)))
        lr = min(max(lr, self.lr_range[0]), self.lr_range[1])
        return Configuration(
            tuple(alphas),
            lr,
            _int_from_unit(ulay, *self.layers_range),
            _int_from_unit(uunit, *self.units_range),
        )

    def encode(self, conf: "Configuration") -> np.ndarray:
        """Surrogate coordinates: isometric simplex chart, normalized log-lr and sizes."""
        free = self.free
        parts = []
        if len(free) >= 2:
            a = np.array([conf.alphas[k] for k in free]) / max(self.free_mass, 1e-300)
            parts.append(_helmert(len(free)) @ a)
        lo, hi = np.log(self.lr_range[0]), np.log(self.lr_range[1])
        parts.append([(np.log(conf.max_lr) - lo) / (hi - lo) if hi > lo else 0.0])
        for v, (a, b) in ((conf.hidden_layers, self.layers_range), (conf.hidden_units, self.units_range)):
            parts.append([(v - a) / (b - a) if b > a else 0.0])
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def _int_from_unit(u: float, lo: int, hi: int) -> int:
    return int(min(hi, lo + math.floor(u * (hi - lo + 1))))


def _helmert(k: int) -> np.ndarray:
    """Orthonormal ``(k-1, k)`` basis of the sum-zero subspace."""
    H = np.zeros((k - 1, k))
    for i in range(1, k):
        H[i - 1, :i] = 1.0
        H[i - 1, i] = -float(i)
        H[i - 1] /= np.sqrt(i * (i + 1))
    return H


@dataclass(frozen=True)
class Configuration:
    alphas: tuple[float, float, float, float]
    max_lr: float
    hidden_layers: int
    hidden_units: int

    @property
    def weights(self) -> LossWeights:
        return LossWeights.from_sequence(self.alphas)

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "max_lr": self.max_lr,
            "hidden_layers": self.hidden_layers,
            "hidden_units": self.hidden_units,
        }


def sample_config(space: SearchSpace, rng: np.random.Generator) -> Configuration:
    return space.from_unit(rng.random(space.unit_dim))


@dataclass
class Trial:
    index: int
    config: Configuration
    score: float
    wall_clock: float
    seed: int
    proposal: str = "random"
    payload: Any = field(default=None, repr=False, compare=False)


@dataclass
class TuneResult:
    best: Trial
    trials: list[Trial]


class _GP:
    """Zero-mean GP with squared-exponential kernel on standardized targets."""

    LENGTHS = (0.1, 0.2, 0.4, 0.8, 1.6)
    NOISES = (1e-6, 1e-4, 1e-2, 1e-1)

    def __init__(self, X: np.ndarray, y: np.ndarray):
        self.X = X
        self.mu = y.mean()
        self.sd = y.std() if y.std() > 0 else 1.0
        t = (y - self.mu) / self.sd
        best = None
        for ell in self.LENGTHS:
            for noise in self.NOISES:
                K = self._k(X, X, ell) + noise * np.eye(len(X))
                try:
                    cf = linalg.cho_factor(K, lower=True)
                except linalg.LinAlgError:
                    continue
                alpha = linalg.cho_solve(cf, t)
                lml = -0.5 * t @ alpha - np.log(np.diag(cf[0])).sum()
                if best is None or lml > best[0]:
                    best = (lml, ell, cf, alpha)
        if best is None:
            raise linalg.LinAlgError("no kernel setting gave a positive-definite matrix")
        _, self.ell, self.cf, self.alpha = best

    @staticmethod
    def _k(A, B, ell):
        d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-0.5 * d2 / ell**2)

    def predict(self, Xs: np.ndarray):
        Ks = self._k(Xs, self.X, self.ell)
        mean = Ks @ self.alpha
        v = linalg.cho_solve(self.cf, Ks.T)
        var = np.maximum(1.0 - (Ks * v.T).sum(axis=1), 1e-12)
        return mean * self.sd + self.mu, np.sqrt(var) * self.sd


def expected_improvement(mean, std, best, xi: float = 0.01):
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    gain = mean - best - xi
    safe = np.where(std > 0, std, 1.0)
    z = gain / safe
    ei = gain * norm.cdf(z) + safe * norm.pdf(z)
    # a noiseless prediction improves by exactly its positive gain
    return np.where(std > 0, ei, np.maximum(gain, 0.0))


def _propose(space: SearchSpace, trials: list[Trial], rng: np.random.Generator,
             n_random: int = 1000, n_starts: int = 5, n_local: int = 3, n_perturb: int = 20) -> np.ndarray:
    X = np.array([space.encode(t.config) for t in trials])
    y = np.array([t.score for t in trials])
    gp = _GP(X, y)
    best_y = y.max()

    def score(U):
        confs = [space.from_unit(u) for u in U]
        mean, std = gp.predict(np.array([space.encode(c) for c in confs]))
        return expected_improvement(mean, std, best_y)

    U = rng.random((n_random, space.unit_dim))
    ei = score(U)
    starts = np.argsort(-ei, kind="stable")[:n_starts]
    best_u, best_ei = U[starts[0]], ei[starts[0]]
    for s in starts:
        u, cur = U[s], ei[s]
        for _ in range(n_local):
            cand = np.clip(u + 0.05 * rng.standard_normal((n_perturb, space.unit_dim)), 0.0, 1.0 - 1e-12)
            ce = score(cand)
            k = int(np.argmax(ce))
            if ce[k] > cur:
                u, cur = cand[k], ce[k]
        if cur > best_ei:
            best_u, best_ei = u, cur
    return best_u


def tune(space: SearchSpace, budget: int, objective: Callable[[Configuration], Any], seed: int = 0,
         n_initial: int = DEFAULT_INITIAL, method: str = "bo") -> TuneResult:
    """Run exactly ``budget`` objective evaluations and return the best observed trial.

    ``objective(config)`` returns a validation score (higher is better) or a
    ``(score, payload)`` pair; the payload is kept on the trial.  Ties go to
    the earliest trial.  ``method="random"`` skips the surrogate entirely.
    """
    if budget < 1:
        raise InvalidArgument("budget must be at least 1")
    if method not in ("bo", "random"):
        raise InvalidArgument(f"unknown tuning method {method!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    n_init = budget if method == "random" else min(n_initial, budget)
    lhs = qmc.LatinHypercube(d=space.unit_dim, seed=rng).random(n_init)
    trials: list[Trial] = []
    for i in range(budget):
        if i < n_init:
            u, how = lhs[i], "space-filling"
        else:
            try:
                u, how = _propose(space, trials, rng), "ei"
            except linalg.LinAlgError:
                u, how = rng.random(space.unit_dim), "random"
        conf = space.from_unit(u)
        t0 = time.perf_counter()
        out = objective(conf)
        score, payload = out if isinstance(out, tuple) else (out, None)
        score = float(score)
        if not np.isfinite(score):
            score = 0.0
        trials.append(Trial(i, conf, score, time.perf_counter() - t0, seed, how, payload))
        logger.debug("trial %d (%s) score %.4f %s", i, how, score, conf)
    best = trials[0]
    for t in trials[1:]:
        if t.score > best.score:
            best = t
    return TuneResult(best, trials)
