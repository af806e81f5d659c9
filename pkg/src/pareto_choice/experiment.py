"""End-to-end protocol: generate a problem, tune + train per CV repetition, score the test split."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .benchmarks import generate_dataset
from .choice_core import Dataset
from .evaluation import AblationResult, CVResult, ablate_mds, evaluate, monte_carlo_cv
from .training import Architecture, TrainConfig, TrainingDiverged, train
from .tuning import Configuration, SearchSpace, TuneResult, tune

logger = logging.getLogger(__name__)

MDS_INDEX = 2


@dataclass(frozen=True)
class Protocol:
    n_tasks: int = 40960
    m: int = 10
    reps: int = 5
    test_frac: float = 0.1
    val_frac: float = 1.0 / 9.0
    budget: int = 60
    n_initial: int = 10
    tune_method: str = "bo"
    output_dim: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)
    space: SearchSpace = field(default_factory=SearchSpace)
    seed: int = 0


DESK = Protocol(n_tasks=2048, reps=3, budget=10, train=TrainConfig(epochs=60))


def config_train(conf: Configuration, base: TrainConfig, output_dim: int, seed: int):
    arch = Architecture(conf.hidden_layers, conf.hidden_units, output_dim)
    cfg = replace(base, max_lr=conf.max_lr, weights=conf.weights, seed=seed)
    return arch, cfg


def make_tuned_fit(space: SearchSpace, budget: int, base: TrainConfig, output_dim: int = 2,
                   n_initial: int = 10, method: str = "bo"):
    """Fit hook for :func:`monte_carlo_cv`: tune on train/val, return the final model.

    The final model is the best configuration trained on the training part
    with the repetition seed.  Training is deterministic, so that model is
    exactly the one produced during the winning trial and is reused as is.
    """

    def fit(train_ds: Dataset, val_ds: Dataset, seed: int):
        def objective(conf: Configuration):
            arch, cfg = config_train(conf, base, output_dim, seed)
            try:
                report = train(train_ds, None, arch, cfg)
            except TrainingDiverged as exc:
                logger.info("trial diverged: %s", exc)
                return 0.0, None
            return evaluate(val_ds, report.params).mean, report.params

        result = tune(space, budget, objective, seed=seed, n_initial=n_initial, method=method)
        if result.best.payload is None:
            raise TrainingDiverged(-1, -1, "every tuning trial diverged")
        params = result.best.payload
        for t in result.trials:
            t.payload = None
        return params, result

    return fit


def protocol_fit(p: Protocol, pin_mds: bool = False):
    space = p.space.pin(MDS_INDEX, 0.0) if pin_mds else p.space
    return make_tuned_fit(space, p.budget, p.train, p.output_dim, p.n_initial, p.tune_method)


@dataclass
class ProblemResult:
    problem: str
    data: Dataset
    full: CVResult
    no_mds: CVResult | None = None

    @property
    def arms(self) -> dict[str, CVResult]:
        out = {"full": self.full}
        if self.no_mds is not None:
            out["no_mds"] = self.no_mds
        return out


def run_problem(problem: str, p: Protocol, ablate: bool = False, data: Dataset | None = None) -> ProblemResult:
    if data is None:
        data = generate_dataset(problem, p.n_tasks, p.m, p.seed)
    if ablate:
        res: AblationResult = ablate_mds(data, p.reps, p.test_frac, p.val_frac,
                                         lambda pin: protocol_fit(p, pin), seed=p.seed)
        return ProblemResult(problem, data, res.full, res.no_mds)
    cv = monte_carlo_cv(data, p.reps, p.test_frac, p.val_frac, protocol_fit(p), seed=p.seed)
    return ProblemResult(problem, data, cv)


def tuned_configs(cv: CVResult) -> list[Configuration]:
    return [info.best.config for info in cv.fit_info if isinstance(info, TuneResult)]
