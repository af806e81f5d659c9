import numpy as np
import pytest

from pareto_choice.benchmarks import generate_dataset
from pareto_choice.choice_core import Dataset, InvalidArgument
from pareto_choice.embed_net import forward, init_params
from pareto_choice.losses import LossWeights, batch_loss
from pareto_choice.training import (
    Architecture,
    TrainConfig,
    TrainingDiverged,
    cyclical_lr,
    steps_per_epoch,
    train,
    train_step,
)

# recorded with seed 0 on the TP desk dataset (2048 tasks, 1x32, 100 epochs, default config)
TP_FIRST_EPOCH_LOSS = 7.519645214771671
TP_FINAL_EPOCH_LOSS = 5.088181305867004


def _state(p):
    return {k: v.copy() for k, v in p.state().items()}


def test_cyclical_lr_examples():
    cfg = TrainConfig(max_lr=1.0, base_fraction=0.1, cycle_length=100)
    assert cyclical_lr(0, cfg) == pytest.approx(0.1)
    assert cyclical_lr(50, cfg) == pytest.approx(1.0)
    assert cyclical_lr(25, cfg) == pytest.approx(0.55)
    assert cyclical_lr(100, cfg) == pytest.approx(0.1)
    assert cyclical_lr(75, cfg) == pytest.approx(0.55)


def test_cyclical_lr_default_cycle_is_two_epochs():
    cfg = TrainConfig(max_lr=0.01)
    spe = 32
    assert cyclical_lr(0, cfg, spe) == pytest.approx(0.001)
    assert cyclical_lr(spe, cfg, spe) == pytest.approx(0.01)
    assert cyclical_lr(2 * spe, cfg, spe) == pytest.approx(0.001)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        TrainConfig(epochs=0)
    with pytest.raises(InvalidArgument):
        TrainConfig(batch_size=0)
    with pytest.raises(InvalidArgument):
        TrainConfig(max_lr=0.0)
    with pytest.raises(InvalidArgument):
        TrainConfig(optimizer="rmsprop")
    cfg = TrainConfig(epochs=3, weights=LossWeights(0.5, 0.5, 0, 0), optimizer="sgd")
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_one_epoch_full_batch_is_one_step():
    ds = generate_dataset("TP", 16, 5, seed=0)
    rep = train(ds, None, Architecture(1, 8, 2), TrainConfig(epochs=1, batch_size=16))
    assert rep.steps == 1 and len(rep.epochs) == 1
    assert steps_per_epoch(16, 16) == 1 and steps_per_epoch(17, 16) == 2


def test_training_is_deterministic():
    ds = generate_dataset("ZDT1", 128, 10, seed=1)
    val = generate_dataset("ZDT1", 32, 10, seed=2)
    cfg = TrainConfig(epochs=3, batch_size=16, seed=5)
    a = train(ds, val, Architecture(2, 8, 2), cfg)
    b = train(ds, val, Architecture(2, 8, 2), cfg)
    for k, v in a.params.state().items():
        np.testing.assert_array_equal(v, b.params.state()[k])
    assert [e.loss.total for e in a.epochs] == [e.loss.total for e in b.epochs]
    assert [e.val_a_mean for e in a.epochs] == [e.val_a_mean for e in b.epochs]
    c = train(ds, val, Architecture(2, 8, 2), TrainConfig(epochs=3, batch_size=16, seed=6))
    assert c.epochs[-1].loss.total != a.epochs[-1].loss.total


def test_report_contents():
    ds = generate_dataset("TP", 64, 6, seed=0)
    rep = train(ds, None, Architecture(1, 8, 2), TrainConfig(epochs=4, batch_size=8, seed=3))
    assert [e.epoch for e in rep.epochs] == [1, 2, 3, 4]
    assert all(e.val_a_mean is None for e in rep.epochs)
    assert all(np.isfinite(e.loss.total) for e in rep.epochs)
    assert rep.seed == 3 and rep.wall_clock >= 0


def test_sgd_option_trains():
    ds = generate_dataset("TP", 128, 10, seed=0)
    rep = train(ds, None, Architecture(1, 16, 2), TrainConfig(epochs=10, optimizer="sgd", max_lr=0.01))
    assert rep.epochs[-1].loss.total < rep.epochs[0].loss.total


def test_dimension_mismatch():
    ds = generate_dataset("TP", 8, 4, seed=0)
    other = generate_dataset("ZDT1", 8, 4, seed=0)
    with pytest.raises(InvalidArgument):
        train(ds, other, Architecture(), TrainConfig(epochs=1))
    with pytest.raises(InvalidArgument):
        train(ds, None, Architecture(), TrainConfig(epochs=1), init=init_params(6, 1, 4, 2, seed=0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    ds = generate_dataset("TP", 32, 5, seed=0)
    bad = Dataset(ds.features * 1e200, ds.choices, problem="TP")
    with pytest.raises(TrainingDiverged) as exc:
        train(bad, None, Architecture(1, 4, 2), TrainConfig(epochs=2, max_lr=1e3))
    assert exc.value.epoch == 1


@pytest.mark.slow
def test_tp_desk_loss_decreases():
    ds = generate_dataset("TP", 2048, 10, seed=0)
    rep = train(ds, None, Architecture(1, 32, 2), TrainConfig(epochs=100, seed=0))
    first, last = rep.epochs[0].loss.total, rep.epochs[-1].loss.total
    assert last < first
    assert first == pytest.approx(TP_FIRST_EPOCH_LOSS, rel=1e-9)
    assert last == pytest.approx(TP_FINAL_EPOCH_LOSS, rel=1e-9)


def _batch_total(params, Q, C, w):
    B, m, d = Q.shape
    Z, _ = forward(Q.reshape(B * m, d), params, mode="train", update_running=False)
    return batch_loss(Q, Z.reshape(B, m, -1), C, w, grad=False)[0].total


def test_small_step_does_not_increase_batch_loss():
    rng = np.random.default_rng(0)
    ds = generate_dataset("ZDT2", 8, 10, seed=4)
    Q, C = ds.features, ds.choices.astype(float)
    w = LossWeights(0.3, 0.3, 0.2, 0.2)
    for seed in range(10):
        params = init_params(6, int(rng.integers(1, 3)), 16, 2, seed=seed)
        before = _batch_total(params, Q, C, w)
        _, grads = train_step(params.copy(), Q, C, w)
        for name, arr in params.trainable().items():
            arr -= 1e-7 * grads[name]
        assert _batch_total(params, Q, C, w) <= before + 1e-9
