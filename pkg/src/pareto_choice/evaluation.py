"""A-mean scoring, Monte Carlo cross-validation and the MDS ablation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .choice_core import Dataset, InvalidArgument, as_mask, pareto_front_batch
from .embed_net import NetworkParams, forward

logger = logging.getLogger(__name__)


def _confusion(c_true: np.ndarray, c_pred: np.ndarray):
    t = c_true.astype(bool)
    p = c_pred.astype(bool)
    tp = (t & p).sum(axis=-1)
    fn = (t & ~p).sum(axis=-1)
    tn = (~t & ~p).sum(axis=-1)
    fp = (~t & p).sum(axis=-1)
    return tp, fp, tn, fn


def _a_mean_from_counts(tp, fp, tn, fn):
    pos = tp + fn
    neg = tn + fp
    with np.errstate(invalid="ignore", divide="ignore"):
        tpr = np.where(pos > 0, tp / np.maximum(pos, 1), 1.0)
        tnr = np.where(neg > 0, tn / np.maximum(neg, 1), 1.0)
    return (tpr + tnr) / 2.0


def a_mean(c_true, c_pred) -> float:
    """Mean of true-positive and true-negative rate; an empty class scores 1.0."""
    t = as_mask(c_true)
    p = as_mask(c_pred)
    if t.shape != p.shape:
        raise InvalidArgument(f"mask lengths differ: {t.shape[0]} vs {p.shape[0]}")
    return float(_a_mean_from_counts(*_confusion(t, p)))


def a_mean_batch(C_true: np.ndarray, C_pred: np.ndarray) -> np.ndarray:
    if C_true.shape != C_pred.shape:
        raise InvalidArgument(f"mask shapes differ: {C_true.shape} vs {C_pred.shape}")
    return _a_mean_from_counts(*_confusion(C_true, C_pred))


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


@dataclass
class EvalReport:
    per_task: np.ndarray
    mean: float
    std: float
    tp: int
    fp: int
    tn: int
    fn: int
    problem: str = ""
    split: str = ""
    repetition: int | None = None
    seed: int | None = None

    @property
    def n_tasks(self) -> int:
        return len(self.per_task)

    @classmethod
    def from_masks(cls, C_true, C_pred, **kw) -> "EvalReport":
        counts = _confusion(C_true, C_pred)
        scores = _a_mean_from_counts(*counts)
        tp, fp, tn, fn = (int(x.sum()) for x in counts)
        return cls(scores, float(scores.mean()), _std(scores), tp, fp, tn, fn, **kw)


def predict_batch(data: Dataset, params: NetworkParams) -> np.ndarray:
    Z, _ = forward(data.features.reshape(-1, data.d), params, mode="inference")
    return pareto_front_batch(Z.reshape(len(data), data.m, -1))


def evaluate(data: Dataset, params: NetworkParams, split: str = "", repetition: int | None = None) -> EvalReport:
    """Per-task A-mean of the predicted Pareto fronts (inference mode, pure)."""
    if params.input_dim != data.d:
        raise InvalidArgument(f"network expects {params.input_dim} features, data has {data.d}")
    pred = predict_batch(data, params)
    return EvalReport.from_masks(data.choices, pred, problem=data.problem, split=split,
                                 repetition=repetition, seed=data.seed)


def random_baseline_report(data: Dataset, p: float = 0.5, trials: int = 10000, seed: int = 0) -> EvalReport:
    """Score independent Bernoulli(``p``) predictions on ``trials`` task-trials.

    Tasks are cycled through until ``trials`` random predictions have been scored.
    """
    if not 0.0 < p < 1.0:
        raise InvalidArgument("p must lie strictly between 0 and 1")
    if trials < 1:
        raise InvalidArgument("trials must be at least 1")
    rng = np.random.default_rng(seed)
    truth = data.choices[np.arange(trials) % len(data)]
    pred = (rng.random(truth.shape) < p).astype(np.int8)
    return EvalReport.from_masks(truth, pred, problem=data.problem, split="random", seed=seed)


def random_baseline(data: Dataset, p: float = 0.5, trials: int = 10000, seed: int = 0) -> float:
    """Monte-Carlo estimate of the mean A-mean of random Bernoulli(``p``) choices."""
    return random_baseline_report(data, p, trials, seed).mean


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_sizes(n: int, test_frac: float, val_frac: float) -> tuple[int, int, int]:
    if not (0 < test_frac < 1 and 0 < val_frac < 1):
        raise InvalidArgument("fractions must lie in (0, 1)")
    n_test = int(round(n * test_frac))
    rest = n - n_test
    n_val = int(round(rest * val_frac))
    n_train = rest - n_val
    if min(n_test, n_val, n_train) < 1:
        raise InvalidArgument(f"split of {n} tasks leaves an empty part ({n_train}/{n_val}/{n_test})")
    return n_train, n_val, n_test


def make_split(n: int, test_frac: float, val_frac: float, seed: int, repetition: int) -> Split:
    n_train, n_val, n_test = split_sizes(n, test_frac, val_frac)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(repetition,)))
    perm = rng.permutation(n)
    return Split(
        train=np.sort(perm[n_test + n_val :]),
        val=np.sort(perm[n_test : n_test + n_val]),
        test=np.sort(perm[:n_test]),
    )


# fit(train, val, seed) -> (params, info)
FitFn = Callable[[Dataset, Dataset, int], "tuple[NetworkParams, Any]"]


@dataclass
class CVResult:
    reports: list[EvalReport]
    fit_info: list[Any]
    splits: list[Split]
    mean: float
    std: float
    problem: str = ""

    def summary(self) -> dict[str, float]:
        return {"mean_a_mean": self.mean, "std_a_mean": self.std, "reps": len(self.reports)}


def monte_carlo_cv(data: Dataset, reps: int, test_frac: float, val_frac: float, fit: FitFn,
                   seed: int = 0, on_repetition: Callable[[int, EvalReport], None] | None = None) -> CVResult:
    """Repeated random train/validation/test splitting.

    Repetition ``r`` shuffles with ``SeedSequence(seed, spawn_key=(r,))`` and
    trains with seed ``seed * 1000 + r``; ``fit`` receives train and
    validation parts and returns the final parameters, which are scored on
    the test part.
    """
    if reps < 1:
        raise InvalidArgument("reps must be at least 1")
    split_sizes(len(data), test_frac, val_frac)
    reports, infos, splits = [], [], []
    for r in range(reps):
        sp = make_split(len(data), test_frac, val_frac, seed, r)
        params, info = fit(data.subset(sp.train), data.subset(sp.val), seed * 1000 + r)
        rep = evaluate(data.subset(sp.test), params, split="test", repetition=r)
        logger.info("%s rep %d test A-mean %.4f", data.problem, r, rep.mean)
        reports.append(rep)
        infos.append(info)
        splits.append(sp)
        if on_repetition is not None:
            on_repetition(r, rep)
    means = np.array([rp.mean for rp in reports])
    return CVResult(reports, infos, splits, float(means.mean()), _std(means), problem=data.problem)


@dataclass
class AblationResult:
    full: CVResult
    no_mds: CVResult
    paired_diff: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def mean_diff(self) -> float:
        """Mean of (no-MDS minus full) test A-mean over paired repetitions."""
        return float(self.paired_diff.mean())


def ablate_mds(data: Dataset, reps: int, test_frac: float, val_frac: float,
               make_fit: Callable[[bool], FitFn], seed: int = 0) -> AblationResult:
    """Run the CV protocol with and without the MDS term on identical splits.

    ``make_fit(pin_mds)`` must return a fit function whose tuner keeps the MDS
    weight at exactly zero when ``pin_mds`` is True.
    """
    full = monte_carlo_cv(data, reps, test_frac, val_frac, make_fit(False), seed)
    ablated = monte_carlo_cv(data, reps, test_frac, val_frac, make_fit(True), seed)
    diff = np.array([b.mean - a.mean for a, b in zip(full.reports, ablated.reports)])
    return AblationResult(full, ablated, diff)
