"""Mini-batch training of the embedding network under the composite loss."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .choice_core import Dataset, InvalidArgument
from .embed_net import AFTER_RELU, NetworkParams, backward, forward, init_params
from .losses import LossBreakdown, LossWeights, pairwise_dist, batch_loss

logger = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, step: int, detail: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}, step {step}: {detail}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class Architecture:
    hidden_layers: int = 1
    hidden_units: int = 32
    output_dim: int = 2
    norm_position: str = AFTER_RELU
    momentum: float = 0.1
    eps: float = 1e-5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    max_lr: float = 1e-2
    base_fraction: float = 0.1
    cycle_epochs: float = 2.0
    cycle_length: int | None = None  # in steps; overrides cycle_epochs
    weights: LossWeights = field(default_factory=LossWeights)
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_momentum: float = 0.0
    dom_chosen_only: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgument("epochs must be at least 1")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be at least 1")
        if not self.max_lr > 0:
            raise InvalidArgument("max_lr must be positive")
        if not 0 < self.base_fraction <= 1:
            raise InvalidArgument("base_fraction must lie in (0, 1]")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidArgument(f"unknown optimizer {self.optimizer!r}")
        if isinstance(self.weights, (tuple, list)):
            object.__setattr__(self, "weights", LossWeights.from_sequence(self.weights))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights.as_array().tolist())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d:
            w = d["weights"]
            d["weights"] = LossWeights.from_sequence(list(w.values()) if isinstance(w, dict) else w)
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    loss: LossBreakdown
    val_a_mean: float | None = None


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    params: NetworkParams
    wall_clock: float
    seed: int
    steps: int


def steps_per_epoch(n_tasks: int, batch_size: int) -> int:
    return max(1, -(-n_tasks // batch_size))


def cyclical_lr(step: int, cfg: TrainConfig, steps_per_epoch: int = 1) -> float:
    """Triangular wave from ``max_lr * base_fraction`` up to ``max_lr`` and back."""
    if step < 0:
        raise InvalidArgument("step must be non-negative")
    cycle = cfg.cycle_length or max(2, int(round(cfg.cycle_epochs * steps_per_epoch)))
    base = cfg.max_lr * cfg.base_fraction
    half = cycle / 2.0
    pos = (step % cycle) / half
    frac = pos if pos <= 1.0 else 2.0 - pos
    return base + (cfg.max_lr - base) * frac


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)


class _SGD:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.mu = cfg.sgd_momentum
        self.buf = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads, lr):
        for k, p in params.items():
            b = self.buf[k]
            b *= self.mu
            b += grads[k]
            p -= lr * b


def make_optimizer(params, cfg: TrainConfig):
    return _Adam(params, cfg) if cfg.optimizer == "adam" else _SGD(params, cfg)


def train_step(params: NetworkParams, Q: np.ndarray, C: np.ndarray, weights: LossWeights,
               dist_Q=None, chosen_only: bool = False):
    """Loss and parameter gradients for one mini-batch ``Q (B, m, d)``, ``C (B, m)``."""
    B, m, d = Q.shape
    Z, trace = forward(Q.reshape(B * m, d), params, mode="train")
    Z = Z.reshape(B, m, -1)
    breakdown, dZ = batch_loss(Q, Z, C, weights, grad=True, chosen_only=chosen_only, dist_Q=dist_Q)
    grads = backward(trace, params, dZ.reshape(B * m, -1))
    return breakdown, grads


def _batches(order: np.ndarray, batch_size: int, m: int) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    # batch statistics need at least two object rows
    if len(batches) > 1 and len(batches[-1]) * m < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(data: Dataset, val: Dataset | None, arch: Architecture, cfg: TrainConfig,
          init: NetworkParams | None = None) -> TrainReport:
    """Fit a fresh network (seeded by ``cfg.seed``) and return the final-epoch parameters."""
    from .evaluation import evaluate

    if val is not None and val.d != data.d:
        raise InvalidArgument("validation set feature dimension differs from training set")
    if len(data) * data.m < 2:
        raise InvalidArgument("training needs at least two object rows")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    if init is not None:
        params = init.copy()
    else:
        params = init_params(data.d, arch.hidden_layers, arch.hidden_units, arch.output_dim, cfg.seed,
                             momentum=arch.momentum, eps=arch.eps, norm_position=arch.norm_position)
    if params.input_dim != data.d:
        raise InvalidArgument(f"network expects {params.input_dim} features, data has {data.d}")
    trainable = params.trainable()
    opt = make_optimizer(trainable, cfg)
    spe = steps_per_epoch(len(data), cfg.batch_size)
    dist_all = pairwise_dist(data.features)
    choices = data.choices.astype(np.float64)

    t0 = time.perf_counter()
    records = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        sums = np.zeros(5)
        count = 0
        for idx in _batches(order, cfg.batch_size, data.m):
            lr = cyclical_lr(step, cfg, spe)
            bd, grads = train_step(params, data.features[idx], choices[idx], cfg.weights,
                                   dist_Q=dist_all[idx], chosen_only=cfg.dom_chosen_only)
            if not np.isfinite(bd.total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(epoch, step)
            opt.step(trainable, grads, lr)
            sums += len(idx) * np.array([bd.po, bd.dom, bd.mds, bd.l2, bd.total])
            count += len(idx)
            step += 1
        mean = sums / count
        val_score = evaluate(val, params).mean if val is not None else None
        records.append(EpochRecord(epoch, LossBreakdown(*mean[:4], total=mean[4]), val_score))
        logger.debug("epoch %d loss %.5f val %s", epoch, mean[4], val_score)
    return TrainReport(records, params, time.perf_counter() - t0, cfg.seed, step)
